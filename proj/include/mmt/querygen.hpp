#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmt/core/errors.hpp"
#include "mmt/corpus.hpp"

namespace mmt::querygen {

struct Keyword {
  std::string term;
  double score = 0.0;     // tf-idf
  int first_position = 0;  // first occurrence in the sentence
};

struct SearchQuery {
  std::vector<std::string> terms;
  int rank = 1;  // 1..M
};

using StopwordSet = std::unordered_set<std::string>;

inline StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open stopword file: " + path);
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

/// Document frequencies over a split, one sentence per document.
/// idf(t) = ln((1 + #docs) / (1 + df(t))) + 1, which stays positive and is
/// defined for unseen terms (df = 0).
class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(long doc_count, std::unordered_map<std::string, long> df)
      : doc_count_(doc_count), df_(std::move(df)) {}

  long doc_count() const { return doc_count_; }

  long df(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
  }

  double idf(const std::string& term) const {
    return std::log(static_cast<double>(1 + doc_count_) /
                    static_cast<double>(1 + df(term))) +
           1.0;
  }

 private:
  long doc_count_ = 0;
  std::unordered_map<std::string, long> df_;
};

inline IdfTable compute_idf(const corpus::CorpusSplit& split) {
  if (split.pairs.empty()) throw Error("cannot compute idf over an empty split");
  std::unordered_map<std::string, long> df;
  for (const auto& pair : split.pairs) {
    std::set<std::string> seen(pair.source_tokens.begin(), pair.source_tokens.end());
    for (const auto& t : seen) ++df[t];
  }
  return IdfTable(static_cast<long>(split.pairs.size()), std::move(df));
}

/// Top-m unique non-stopword tokens by tf-idf. tf = count / sentence length.
/// Ties: higher score, then earlier first occurrence, then lexicographic.
inline std::vector<Keyword> extract_keywords(const std::vector<std::string>& sentence,
                                             const IdfTable& idf, int m,
                                             const StopwordSet& stopwords) {
  if (m < 1) throw Error("extract_keywords: m must be >= 1");
  std::vector<Keyword> candidates;
  std::unordered_map<std::string, int> count;
  std::unordered_map<std::string, int> first_pos;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto& tok = sentence[i];
    if (stopwords.count(tok)) continue;
    if (++count[tok] == 1) first_pos[tok] = static_cast<int>(i);
  }
  const double n = static_cast<double>(sentence.size());
  candidates.reserve(count.size());
  for (const auto& [term, c] : count) {
    Keyword kw;
    kw.term = term;
    kw.score = (static_cast<double>(c) / n) * idf.idf(term);
    kw.first_position = first_pos[term];
    candidates.push_back(std::move(kw));
  }
  std::sort(candidates.begin(), candidates.end(), [](const Keyword& a, const Keyword& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.first_position != b.first_position) return a.first_position < b.first_position;
    return a.term < b.term;
  });
  if (static_cast<int>(candidates.size()) > m) candidates.resize(static_cast<std::size_t>(m));
  return candidates;
}

/// Exactly m single-term queries. Scarce keywords cycle from the top; a
/// sentence with no keywords falls back to its first token.
inline std::vector<SearchQuery> generate_queries(const std::vector<Keyword>& keywords,
                                                 int m,
                                                 const std::vector<std::string>& sentence) {
  if (m < 1) throw Error("generate_queries: m must be >= 1");
  if (sentence.empty()) throw Error("generate_queries: empty sentence");
  std::vector<SearchQuery> queries;
  queries.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    SearchQuery q;
    q.rank = k + 1;
    if (keywords.empty()) {
      q.terms = {sentence.front()};
    } else {
      q.terms = {keywords[static_cast<std::size_t>(k) % keywords.size()].term};
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

/// One JSON object per line: {"pair_id": .., "rank": .., "terms": [..]}.
inline void dump_queries(std::ostream& out, int pair_id,
                         const std::vector<SearchQuery>& queries) {
  for (const auto& q : queries) {
    nlohmann::json j;
    j["pair_id"] = pair_id;
    j["rank"] = q.rank;
    j["terms"] = q.terms;
    out << j.dump() << '\n';
  }
}

}  // namespace mmt::querygen
