#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/core/errors.hpp"
#include "mmt/core/rng.hpp"

namespace mmt::corpus {

// Reserved vocabulary ids. Fixed so serialized fixtures stay stable.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReservedCount = 4;

struct SentencePair {
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  int pair_id = 0;
};

struct CorpusSplit {
  std::vector<SentencePair> pairs;
  std::string name;  // train, dev or test
};

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
  return c < 128 && std::ispunct(c) != 0;
}

inline bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    if (c < 0x80) {
      extra = 0;
    } else if ((c >> 5) == 0x6) {
      extra = 1;
    } else if ((c >> 4) == 0xe) {
      extra = 2;
    } else if ((c >> 3) == 0x1e) {
      extra = 3;
    } else {
      return false;
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= s.size()) return false;
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += extra + 1;
  }
  return true;
}

}  // namespace detail

/// Lowercase (ASCII), isolate ASCII punctuation, split on whitespace.
/// A punctuation character stays inside a token only when both neighbours are
/// non-punctuation, so "u.n." becomes [u.n, .] while "2023" stays whole.
inline std::vector<std::string> tokenize(const std::string& raw) {
  std::vector<std::string> tokens;
  std::string chunk;
  auto flush_chunk = [&]() {
    if (chunk.empty()) return;
    std::string current;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      unsigned char c = static_cast<unsigned char>(chunk[i]);
      if (detail::is_ascii_punct(c)) {
        const bool prev_word =
            i > 0 && !detail::is_ascii_punct(static_cast<unsigned char>(chunk[i - 1]));
        const bool next_word =
            i + 1 < chunk.size() &&
            !detail::is_ascii_punct(static_cast<unsigned char>(chunk[i + 1]));
        if (prev_word && next_word) {
          current.push_back(static_cast<char>(c));
        } else {
          if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
          }
          tokens.emplace_back(1, static_cast<char>(c));
        }
      } else {
        current.push_back(static_cast<char>(c));
      }
    }
    if (!current.empty()) tokens.push_back(current);
    chunk.clear();
  };

  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      flush_chunk();
    } else {
      chunk.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush_chunk();
  return tokens;
}

/// Read a line-aligned bilingual file pair. Pairs that tokenize to empty on
/// either side are dropped; remaining pairs are numbered consecutively.
inline CorpusSplit load_parallel_corpus(const std::string& source_path,
                                        const std::string& target_path,
                                        const std::string& name = "train") {
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!detail::valid_utf8(line))
        throw Error(path + ": invalid UTF-8 on line " + std::to_string(lines.size() + 1));
      lines.push_back(line);
    }
    return lines;
  };

  auto src = read_lines(source_path);
  auto tgt = read_lines(target_path);
  if (src.size() != tgt.size())
    throw Error("line count mismatch: " + source_path + " has " +
                std::to_string(src.size()) + " lines, " + target_path + " has " +
                std::to_string(tgt.size()));

  CorpusSplit split;
  split.name = name;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair pair;
    pair.source_tokens = tokenize(src[i]);
    pair.target_tokens = tokenize(tgt[i]);
    if (pair.source_tokens.empty() || pair.target_tokens.empty()) continue;
    pair.pair_id = static_cast<int>(split.pairs.size());
    split.pairs.push_back(std::move(pair));
  }
  return split;
}

class Vocabulary {
 public:
  Vocabulary() {
    add_reserved();
  }

  int id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
      throw Error("vocabulary id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  int add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    int id = size();
    token_to_id_[token] = id;
    id_to_token_.push_back(token);
    return id;
  }

  void save_tsv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write vocabulary file: " + path);
    for (int id = 0; id < size(); ++id) out << id_to_token_[id] << '\t' << id << '\n';
  }

  static Vocabulary load_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw Error(path + ": missing tab on line " + std::to_string(line_no));
      const std::string token = line.substr(0, tab);
      const int id = std::stoi(line.substr(tab + 1));
      if (id < kReservedCount) {
        if (vocab.token_of(id) != token)
          throw Error(path + ": reserved id " + std::to_string(id) + " renamed");
        continue;
      }
      if (id != vocab.size())
        throw Error(path + ": ids must be dense and ascending (line " +
                    std::to_string(line_no) + ")");
      vocab.add(token);
    }
    return vocab;
  }

 private:
  void add_reserved() {
    add("<pad>");
    add("<bos>");
    add("<eos>");
    add("<unk>");
  }

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

enum class Side { source, target };

/// Frequency-sorted vocabulary; ties broken lexicographically. Tokens below
/// min_freq fall back to <unk>.
inline Vocabulary build_vocabulary(const CorpusSplit& split, Side side, int min_freq = 1) {
  if (split.pairs.empty()) throw Error("cannot build vocabulary from empty split");
  if (min_freq < 1) throw Error("min_freq must be >= 1");
  std::map<std::string, long> freq;
  for (const auto& pair : split.pairs) {
    const auto& toks = side == Side::source ? pair.source_tokens : pair.target_tokens;
    for (const auto& t : toks) ++freq[t];
  }
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, count] : entries)
    if (count >= min_freq) vocab.add(token);
  return vocab;
}

inline std::vector<int> encode_tokens(const std::vector<std::string>& tokens,
                                      const Vocabulary& vocab, bool add_bos_eos) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  if (add_bos_eos) ids.push_back(kBos);
  for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
  if (add_bos_eos) ids.push_back(kEos);
  return ids;
}

inline std::vector<std::string> decode_ids(const std::vector<int>& ids,
                                           const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    tokens.push_back(vocab.token_of(id));
  }
  return tokens;
}

struct Batch {
  std::vector<int> pair_indices;                 // indices into split.pairs
  std::vector<std::vector<int>> source_ids;      // un-padded
  std::vector<std::vector<int>> target_ids;      // with BOS/EOS
  std::vector<std::vector<int>> padded_source;   // padded with kPad
  std::vector<std::vector<int>> padded_target;
};

/// One epoch worth of shuffled, padded batches. The permutation depends only
/// on (seed, epoch), so a run can be replayed exactly.
inline std::vector<Batch> make_batches(const CorpusSplit& split,
                                       const Vocabulary& source_vocab,
                                       const Vocabulary& target_vocab, int batch_size,
                                       std::uint64_t seed, int epoch = 0) {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  std::vector<int> order(split.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 0x5157ULL));
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch batch;
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::size_t max_src = 0, max_tgt = 0;
    for (std::size_t k = start; k < end; ++k) {
      const auto& pair = split.pairs[static_cast<std::size_t>(order[k])];
      batch.pair_indices.push_back(order[k]);
      batch.source_ids.push_back(encode_tokens(pair.source_tokens, source_vocab, false));
      batch.target_ids.push_back(encode_tokens(pair.target_tokens, target_vocab, true));
      max_src = std::max(max_src, batch.source_ids.back().size());
      max_tgt = std::max(max_tgt, batch.target_ids.back().size());
    }
    for (std::size_t k = 0; k < batch.source_ids.size(); ++k) {
      auto padded_src = batch.source_ids[k];
      padded_src.resize(max_src, kPad);
      batch.padded_source.push_back(std::move(padded_src));
      auto padded_tgt = batch.target_ids[k];
      padded_tgt.resize(max_tgt, kPad);
      batch.padded_target.push_back(std::move(padded_tgt));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace mmt::corpus
