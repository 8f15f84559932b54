#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmt/core/binio.hpp"
#include "mmt/core/errors.hpp"
#include "mmt/core/rng.hpp"
#include "mmt/querygen.hpp"

namespace mmt::retrieval {

using MatF = Eigen::MatrixXf;

struct ImageFeatureGrid {
  MatF values;  // L x D_v, row per spatial cell
  std::string source_id;
};

struct RegionFeatureSet {
  std::vector<std::pair<std::string, Eigen::VectorXf>> regions;  // (region_id, D_v vector)
  std::string parent_image;
};

struct SupplementaryText {
  std::vector<std::string> tokens;
  std::string source_id;
  querygen::SearchQuery matched_query;
};

// ---- feature file container -------------------------------------------------
// "MMTF" | version 0x01 | rows u32 LE | cols u32 LE | rows*cols f32 LE row-major

inline constexpr char kFeatureMagic[4] = {'M', 'M', 'T', 'F'};
inline constexpr unsigned char kFeatureVersion = 0x01;

// Refuse absurd headers before allocating.
inline constexpr std::uint64_t kMaxFeatureElements = 1ULL << 28;

inline void write_feature_payload(std::ostream& out, const MatF& values) {
  binio::write_u32(out, static_cast<std::uint32_t>(values.rows()));
  binio::write_u32(out, static_cast<std::uint32_t>(values.cols()));
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) binio::write_f32(out, values(r, c));
}

inline MatF read_feature_payload(std::istream& in, const std::string& what) {
  const std::uint32_t rows = binio::read_u32(in, what + " row count");
  const std::uint32_t cols = binio::read_u32(in, what + " column count");
  const std::uint64_t total = static_cast<std::uint64_t>(rows) * cols;
  if (total > kMaxFeatureElements)
    throw DimOverflowError(what + ": dimensions overflow (" + std::to_string(rows) + " x " +
                           std::to_string(cols) + ")");
  MatF values(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      values(r, c) = binio::read_f32(in, what + " payload");
  return values;
}

inline void write_feature_file(const ImageFeatureGrid& grid, const std::string& path) {
  if (!grid.values.allFinite()) throw Error("refusing to write non-finite feature grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file: " + path);
  binio::write_magic(out, kFeatureMagic, kFeatureVersion);
  write_feature_payload(out, grid.values);
  if (!out) throw Error("write failed: " + path);
}

inline ImageFeatureGrid read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file: " + path);
  binio::read_magic(in, kFeatureMagic, kFeatureVersion, "feature");
  ImageFeatureGrid grid;
  grid.values = read_feature_payload(in, "feature");
  grid.source_id = path;
  return grid;
}

// ---- manifest-backed local index ---------------------------------------------

/// Maps query terms to ordered item ids; items live as feature files under
/// store_dir as <item_id>.mmtf. Stands in for a live image search engine.
struct RetrievalManifest {
  std::map<std::string, std::vector<std::string>> entries;
  std::vector<std::string> all_items;  // insertion order, duplicates removed
  std::string store_dir;

  static RetrievalManifest load(const std::string& manifest_path,
                                const std::string& store_dir) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error("cannot open manifest: " + manifest_path);
    RetrievalManifest manifest;
    manifest.store_dir = store_dir;
    std::string line;
    int line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(manifest_path + ": corrupt manifest line " + std::to_string(line_no) +
                    ": " + e.what());
      }
      if (!j.contains("term") || !j.contains("item_ids"))
        throw Error(manifest_path + ": manifest line " + std::to_string(line_no) +
                    " missing term/item_ids");
      const std::string term = j["term"].get<std::string>();
      for (const auto& id : j["item_ids"]) {
        const std::string item = id.get<std::string>();
        manifest.entries[term].push_back(item);
        if (seen.insert(item).second) manifest.all_items.push_back(item);
      }
    }
    return manifest;
  }

  std::string item_path(const std::string& item_id) const {
    return store_dir + "/" + item_id + ".mmtf";
  }
};

// ---- image backends ----------------------------------------------------------

struct BackendConfig {
  enum class Kind { local_index, blank, random, fixture };
  Kind kind = Kind::blank;
  int grid_rows = 196;   // L
  int grid_cols = 1024;  // D_v
  std::uint64_t seed = 0;                      // random backend
  std::optional<RetrievalManifest> manifest;   // local_index / random
  std::string fixture_dir;                     // fixture backend
};

inline ImageFeatureGrid blank_grid(int rows, int cols) {
  ImageFeatureGrid g;
  g.values = MatF::Zero(rows, cols);
  g.source_id = "blank";
  return g;
}

namespace detail {

inline ImageFeatureGrid load_checked(const RetrievalManifest& manifest,
                                     const std::string& item_id, int rows, int cols) {
  ImageFeatureGrid g = read_feature_file(manifest.item_path(item_id));
  if (g.values.rows() != rows || g.values.cols() != cols)
    throw Error("feature grid " + item_id + " has shape " + std::to_string(g.values.rows()) +
                "x" + std::to_string(g.values.cols()) + ", expected " + std::to_string(rows) +
                "x" + std::to_string(cols));
  g.source_id = item_id;
  return g;
}

}  // namespace detail

/// Resolve queries to exactly `count` equally-shaped feature grids.
///   local_index: first manifest item per query, blank grid when unmatched.
///   blank:       all-zero grids.
///   random:      grids drawn from the whole store, ignoring query terms.
///   fixture:     grids keyed by (pair_id, query rank) under fixture_dir.
/// Queries cycle when count exceeds their number. Deterministic per call.
inline std::vector<ImageFeatureGrid> retrieve_images(
    const std::vector<querygen::SearchQuery>& queries, int count,
    const BackendConfig& backend, int pair_id = 0) {
  if (count < 1) throw Error("retrieve_images: count must be >= 1");
  std::vector<ImageFeatureGrid> grids;
  grids.reserve(static_cast<std::size_t>(count));

  switch (backend.kind) {
    case BackendConfig::Kind::blank: {
      for (int i = 0; i < count; ++i)
        grids.push_back(blank_grid(backend.grid_rows, backend.grid_cols));
      break;
    }
    case BackendConfig::Kind::local_index: {
      if (!backend.manifest) throw Error("local_index backend requires a manifest");
      if (queries.empty()) throw Error("retrieve_images: no queries");
      for (int i = 0; i < count; ++i) {
        const auto& q = queries[static_cast<std::size_t>(i) % queries.size()];
        const std::string& term = q.terms.front();
        auto it = backend.manifest->entries.find(term);
        if (it == backend.manifest->entries.end() || it->second.empty()) {
          grids.push_back(blank_grid(backend.grid_rows, backend.grid_cols));
        } else {
          grids.push_back(detail::load_checked(*backend.manifest, it->second.front(),
                                               backend.grid_rows, backend.grid_cols));
        }
      }
      break;
    }
    case BackendConfig::Kind::random: {
      if (!backend.manifest || backend.manifest->all_items.empty())
        throw Error("random backend requires a non-empty store");
      Rng rng(mix_seed(backend.seed, static_cast<std::uint64_t>(pair_id)));
      for (int i = 0; i < count; ++i) {
        const auto& item = backend.manifest->all_items[static_cast<std::size_t>(
            rng.next_below(backend.manifest->all_items.size()))];
        grids.push_back(
            detail::load_checked(*backend.manifest, item, backend.grid_rows, backend.grid_cols));
      }
      break;
    }
    case BackendConfig::Kind::fixture: {
      if (queries.empty()) throw Error("retrieve_images: no queries");
      for (int i = 0; i < count; ++i) {
        const auto& q = queries[static_cast<std::size_t>(i) % queries.size()];
        const std::string path = backend.fixture_dir + "/p" + std::to_string(pair_id) + "_r" +
                                 std::to_string(q.rank) + ".mmtf";
        std::ifstream probe(path, std::ios::binary);
        if (!probe) throw Error("fixture grid missing: " + path);
        probe.close();
        ImageFeatureGrid g = read_feature_file(path);
        if (g.values.rows() != backend.grid_rows || g.values.cols() != backend.grid_cols)
          throw Error("fixture grid " + path + " has unexpected shape");
        g.source_id = path;
        grids.push_back(std::move(g));
      }
      break;
    }
  }
  return grids;
}

// ---- supplementary text store -------------------------------------------------

/// Candidate sentences, one per line, tokenized on load.
class TextStore {
 public:
  static TextStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open text store: " + path);
    TextStore store;
    std::string line;
    while (std::getline(in, line)) {
      auto tokens = corpus::tokenize(line);
      if (!tokens.empty()) store.sentences_.push_back(std::move(tokens));
    }
    return store;
  }

  static TextStore from_sentences(std::vector<std::vector<std::string>> sentences) {
    TextStore store;
    store.sentences_ = std::move(sentences);
    return store;
  }

  const std::vector<std::vector<std::string>>& sentences() const { return sentences_; }

 private:
  std::vector<std::vector<std::string>> sentences_;
};

/// First store sentence containing every term of each query; unmatched queries
/// echo their own terms back. Returns exactly `count` texts, cycling queries.
inline std::vector<SupplementaryText> retrieve_supplementary_texts(
    const std::vector<querygen::SearchQuery>& queries, int count, const TextStore& store) {
  if (count < 1) throw Error("retrieve_supplementary_texts: count must be >= 1");
  if (queries.empty()) throw Error("retrieve_supplementary_texts: no queries");
  std::vector<SupplementaryText> texts;
  texts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& q = queries[static_cast<std::size_t>(i) % queries.size()];
    SupplementaryText st;
    st.matched_query = q;
    bool found = false;
    for (std::size_t s = 0; s < store.sentences().size() && !found; ++s) {
      const auto& sent = store.sentences()[s];
      bool contains_all = true;
      for (const auto& term : q.terms) {
        if (std::find(sent.begin(), sent.end(), term) == sent.end()) {
          contains_all = false;
          break;
        }
      }
      if (contains_all) {
        st.tokens = sent;
        st.source_id = "store:" + std::to_string(s);
        found = true;
      }
    }
    if (!found) {
      st.tokens = q.terms;
      st.source_id = "fallback";
    }
    texts.push_back(std::move(st));
  }
  return texts;
}

// ---- region extraction ----------------------------------------------------------

struct RegionProviderConfig {
  enum class Kind { grid_slices, fixture };
  Kind kind = Kind::grid_slices;
  std::string fixture_dir;  // <image id>.regions.mmtf, one region per row
};

/// Exactly `o` region vectors for one image. grid_slices takes the first o
/// grid rows; fixture reads a precomputed o x D_v matrix.
inline RegionFeatureSet extract_regions(const ImageFeatureGrid& image, int o,
                                        const RegionProviderConfig& provider) {
  if (o < 1) throw Error("extract_regions: o must be >= 1");
  RegionFeatureSet set;
  set.parent_image = image.source_id;
  switch (provider.kind) {
    case RegionProviderConfig::Kind::grid_slices: {
      if (image.values.rows() < o)
        throw Error("grid_slices: image has " + std::to_string(image.values.rows()) +
                    " rows, need " + std::to_string(o));
      for (int r = 0; r < o; ++r)
        set.regions.emplace_back(image.source_id + "#" + std::to_string(r),
                                 image.values.row(r).transpose());
      break;
    }
    case RegionProviderConfig::Kind::fixture: {
      const std::string path = provider.fixture_dir + "/" + image.source_id + ".regions.mmtf";
      std::ifstream probe(path, std::ios::binary);
      if (!probe) throw Error("region fixture missing: " + path);
      probe.close();
      ImageFeatureGrid regions = read_feature_file(path);
      if (regions.values.rows() != o)
        throw Error("region fixture " + path + " holds " +
                    std::to_string(regions.values.rows()) + " regions, expected " +
                    std::to_string(o));
      if (regions.values.cols() != image.values.cols())
        throw Error("region fixture " + path + " feature size differs from image grid");
      for (int r = 0; r < o; ++r)
        set.regions.emplace_back(image.source_id + "#" + std::to_string(r),
                                 regions.values.row(r).transpose());
      break;
    }
  }
  return set;
}

}  // namespace mmt::retrieval
