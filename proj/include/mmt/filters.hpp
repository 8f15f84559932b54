#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <string>
#include <vector>

#include "mmt/core/params.hpp"
#include "mmt/core/tape.hpp"
#include "mmt/retrieval.hpp"

namespace mmt::filters {

// ---- image-level filtering ---------------------------------------------------

/// Scores a (pooled text, feature grid) pair; higher means better aligned.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual double score(const Eigen::VectorXd& pooled,
                       const retrieval::ImageFeatureGrid& grid) const = 0;
};

/// Cosine between a fixed projection of the pooled text and the grid's mean
/// row. A weight-free stand-in for an external text-image similarity model.
class CosineScorer : public SimilarityScorer {
 public:
  CosineScorer(int visual_dim, int text_dim, std::uint64_t seed = 7) {
    Rng rng(mix_seed(seed, 0x5c07e5ULL));
    projection_.resize(visual_dim, text_dim);
    for (int r = 0; r < visual_dim; ++r)
      for (int c = 0; c < text_dim; ++c) projection_(r, c) = rng.uniform(-0.1, 0.1);
  }

  explicit CosineScorer(Eigen::MatrixXd projection) : projection_(std::move(projection)) {}

  double score(const Eigen::VectorXd& pooled,
               const retrieval::ImageFeatureGrid& grid) const override {
    if (projection_.cols() != pooled.size())
      throw Error("cosine scorer: pooled text size mismatch");
    if (projection_.rows() != grid.values.cols())
      throw Error("cosine scorer: grid feature size mismatch");
    const Eigen::VectorXd text = projection_ * pooled;
    const Eigen::VectorXd image = grid.values.cast<double>().colwise().mean().transpose();
    const double denom = text.norm() * image.norm();
    if (denom == 0.0) return 0.0;
    return text.dot(image) / denom;
  }

 private:
  Eigen::MatrixXd projection_;
};

/// Precomputed (pair_id, candidate_id) -> score table, loaded from JSON lines.
class FixtureScorer : public SimilarityScorer {
 public:
  static FixtureScorer load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open score table: " + path);
    FixtureScorer scorer;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(path + ": corrupt score table line " + std::to_string(line_no) + ": " +
                    e.what());
      }
      scorer.table_[{j.at("pair_id").get<int>(), j.at("candidate_id").get<std::string>()}] =
          j.at("score").get<double>();
    }
    return scorer;
  }

  void set(int pair_id, const std::string& candidate_id, double score) {
    table_[{pair_id, candidate_id}] = score;
  }

  void set_pair(int pair_id) { current_pair_ = pair_id; }

  double score(const Eigen::VectorXd&,
               const retrieval::ImageFeatureGrid& grid) const override {
    auto it = table_.find({current_pair_, grid.source_id});
    if (it == table_.end())
      throw Error("score table has no entry for pair " + std::to_string(current_pair_) +
                  ", candidate " + grid.source_id);
    return it->second;
  }

 private:
  std::map<std::pair<int, std::string>, double> table_;
  int current_pair_ = 0;
};

/// Keep the m best-scoring candidates, highest first; ties keep the earlier
/// candidate first.
inline std::vector<retrieval::ImageFeatureGrid> filter_images(
    const std::vector<retrieval::ImageFeatureGrid>& candidates,
    const Eigen::VectorXd& pooled, int m, const SimilarityScorer& scorer) {
  if (static_cast<int>(candidates.size()) < m)
    throw Error("filter_images: " + std::to_string(candidates.size()) +
                " candidates but m = " + std::to_string(m));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scores[i] = scorer.score(pooled, candidates[i]);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<retrieval::ImageFeatureGrid> selected;
  selected.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) selected.push_back(candidates[order[static_cast<std::size_t>(i)]]);
  return selected;
}

// ---- region-level filtering ----------------------------------------------------

struct RegionFilterDims {
  int score_dim = 256;   // d_a
  int visual_dim = 1024; // D_v
  int text_dim = 512;    // 2 * encoder hidden
};

template <class S>
struct RegionFilterParams {
  RegionFilterDims dims;
  Parameter<S>* V = nullptr;  // score_dim x 1
  Parameter<S>* W = nullptr;  // score_dim x visual_dim
  Parameter<S>* U = nullptr;  // score_dim x text_dim

  static RegionFilterParams create(ParamStore<S>& store, const RegionFilterDims& dims) {
    RegionFilterParams p;
    p.dims = dims;
    p.V = &store.add("region_filter.V", dims.score_dim, 1);
    p.W = &store.add("region_filter.W", dims.score_dim, dims.visual_dim);
    p.U = &store.add("region_filter.U", dims.score_dim, dims.text_dim);
    return p;
  }
};

/// V' tanh(W a + U c): relevance of one region vector to the pooled text.
template <class S>
Var<S> region_score(Tape<S>& tape, Var<S> region, Var<S> pooled,
                    const RegionFilterParams<S>& params) {
  if (region.rows() != params.dims.visual_dim || region.cols() != 1)
    throw Error("region_score: region vector has wrong shape");
  if (pooled.rows() != params.dims.text_dim || pooled.cols() != 1)
    throw Error("region_score: pooled text vector has wrong shape");
  auto hidden = tanh_v(matmul(leaf(tape, *params.W), region) +
                       matmul(leaf(tape, *params.U), pooled));
  return matmul(transpose(leaf(tape, *params.V)), hidden);  // 1x1
}

/// Plain (no-tape) evaluation of the same formula, for selection loops.
template <class S>
S region_score_value(const Eigen::Matrix<S, Eigen::Dynamic, 1>& region,
                     const Eigen::Matrix<S, Eigen::Dynamic, 1>& pooled,
                     const RegionFilterParams<S>& params) {
  if (region.size() != params.dims.visual_dim)
    throw Error("region_score: region vector has wrong shape");
  if (pooled.size() != params.dims.text_dim)
    throw Error("region_score: pooled text vector has wrong shape");
  MatX<S> hidden = (params.W->value * region + params.U->value * pooled).array().tanh();
  return (params.V->value.transpose() * hidden)(0, 0);
}

/// Keep the o regions whose scores rank highest, score-descending; ties keep
/// input order. Scores only select; attention downstream recomputes weights.
template <class S>
std::vector<Eigen::Matrix<S, Eigen::Dynamic, 1>> filter_regions(
    const std::vector<Eigen::Matrix<S, Eigen::Dynamic, 1>>& regions,
    const Eigen::Matrix<S, Eigen::Dynamic, 1>& pooled, int o,
    const RegionFilterParams<S>& params) {
  if (static_cast<int>(regions.size()) < o)
    throw Error("filter_regions: " + std::to_string(regions.size()) + " regions but o = " +
                std::to_string(o));
  std::vector<std::size_t> order(regions.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<S> scores(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i)
    scores[i] = region_score_value(regions[i], pooled, params);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Eigen::Matrix<S, Eigen::Dynamic, 1>> selected;
  selected.reserve(static_cast<std::size_t>(o));
  for (int i = 0; i < o; ++i) selected.push_back(regions[order[static_cast<std::size_t>(i)]]);
  return selected;
}

}  // namespace mmt::filters
