#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mmt/core/errors.hpp"

namespace mmt::evaluation {

struct BleuReport {
  double score = 0.0;  // in [0, 1]
  std::array<double, 4> precisions{0.0, 0.0, 0.0, 0.0};
  double brevity_penalty = 0.0;
  long hyp_length = 0;
  long ref_length = 0;
};

/// Corpus-level 4-gram BLEU with modified (clipped) precision, single
/// reference. Unsmoothed: any zero precision gives score 0. The optional
/// add-one smoothing adds 1 to numerator and denominator of p_2..p_4.
inline BleuReport bleu_corpus(const std::vector<std::vector<std::string>>& hypotheses,
                              const std::vector<std::vector<std::string>>& references,
                              bool add_one_smoothing = false) {
  if (hypotheses.size() != references.size())
    throw Error("bleu_corpus: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                std::to_string(references.size()) + " references");

  BleuReport report;
  std::array<long, 4> matched{0, 0, 0, 0};
  std::array<long, 4> total{0, 0, 0, 0};

  auto count_ngrams = [](const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::vector<std::string>, long> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
      ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                        tokens.begin() + static_cast<long>(i + n))];
    return counts;
  };

  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    report.hyp_length += static_cast<long>(hyp.size());
    report.ref_length += static_cast<long>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto hyp_counts = count_ngrams(hyp, n);
      auto ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        const long clip = it == ref_counts.end() ? 0 : it->second;
        matched[n - 1] += std::min(count, clip);
      }
      if (hyp.size() >= n) total[n - 1] += static_cast<long>(hyp.size() - n + 1);
    }
  }

  if (report.hyp_length == 0) return report;  // empty hypothesis corpus: score 0

  bool any_zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double num = static_cast<double>(matched[n]);
    double den = static_cast<double>(total[n]);
    if (add_one_smoothing && n > 0) {
      num += 1.0;
      den += 1.0;
    }
    report.precisions[n] = den > 0.0 ? num / den : 0.0;
    if (report.precisions[n] <= 0.0) any_zero = true;
  }

  report.brevity_penalty =
      report.hyp_length > report.ref_length
          ? 1.0
          : std::exp(1.0 - static_cast<double>(report.ref_length) /
                               static_cast<double>(report.hyp_length));
  if (any_zero) {
    report.score = 0.0;
    return report;
  }
  double log_sum = 0.0;
  for (double p : report.precisions) log_sum += 0.25 * std::log(p);
  report.score = report.brevity_penalty * std::exp(log_sum);
  return report;
}

// ---- noise statistics ------------------------------------------------------------

enum class KeywordLabel { entity, non_entity };
enum class ImageLabel { ok, noise };

struct SentenceLabels {
  int pair_id = 0;
  std::vector<KeywordLabel> keyword_labels;
  std::vector<ImageLabel> image_labels;
};

struct NoiseStats {
  long n_sentences = 0;
  long n_half_or_more_nonentity_keywords = 0;
  long n_half_or_more_noise_images = 0;
};

/// A sentence counts when at least half of its labels are non-entity
/// (resp. noise). The boundary is inclusive.
inline NoiseStats noise_statistics(const std::vector<SentenceLabels>& labels) {
  NoiseStats stats;
  stats.n_sentences = static_cast<long>(labels.size());
  for (const auto& sent : labels) {
    if (sent.keyword_labels.empty() || sent.image_labels.empty())
      throw Error("noise_statistics: empty label list for pair " +
                  std::to_string(sent.pair_id));
    const long bad_kw = static_cast<long>(
        std::count(sent.keyword_labels.begin(), sent.keyword_labels.end(),
                   KeywordLabel::non_entity));
    if (2 * bad_kw >= static_cast<long>(sent.keyword_labels.size()))
      ++stats.n_half_or_more_nonentity_keywords;
    const long bad_img = static_cast<long>(std::count(
        sent.image_labels.begin(), sent.image_labels.end(), ImageLabel::noise));
    if (2 * bad_img >= static_cast<long>(sent.image_labels.size()))
      ++stats.n_half_or_more_noise_images;
  }
  return stats;
}

/// JSON lines: {"pair_id": .., "keyword_labels": ["entity"|"non-entity", ..],
///              "image_labels": ["ok"|"noise", ..]}
inline std::vector<SentenceLabels> load_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open label file: " + path);
  std::vector<SentenceLabels> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ": corrupt label line " + std::to_string(line_no) + ": " + e.what());
    }
    SentenceLabels sent;
    sent.pair_id = j.at("pair_id").get<int>();
    for (const auto& k : j.at("keyword_labels")) {
      const std::string v = k.get<std::string>();
      if (v == "entity")
        sent.keyword_labels.push_back(KeywordLabel::entity);
      else if (v == "non-entity")
        sent.keyword_labels.push_back(KeywordLabel::non_entity);
      else
        throw Error(path + ": unknown keyword label '" + v + "' on line " +
                    std::to_string(line_no));
    }
    for (const auto& k : j.at("image_labels")) {
      const std::string v = k.get<std::string>();
      if (v == "ok")
        sent.image_labels.push_back(ImageLabel::ok);
      else if (v == "noise")
        sent.image_labels.push_back(ImageLabel::noise);
      else
        throw Error(path + ": unknown image label '" + v + "' on line " +
                    std::to_string(line_no));
    }
    labels.push_back(std::move(sent));
  }
  return labels;
}

// ---- run reports -------------------------------------------------------------------

struct RunReport {
  std::string condition;
  std::vector<double> per_seed_bleu;  // in [0, 1]
  double macro_average = 0.0;
};

inline RunReport macro_average_report(const std::vector<BleuReport>& per_seed,
                                      const std::string& condition) {
  if (per_seed.empty()) throw Error("macro_average_report: no reports");
  RunReport report;
  report.condition = condition;
  for (const auto& r : per_seed) report.per_seed_bleu.push_back(r.score);
  report.macro_average =
      std::accumulate(report.per_seed_bleu.begin(), report.per_seed_bleu.end(), 0.0) /
      static_cast<double>(report.per_seed_bleu.size());
  return report;
}

/// TSV: one line per seed, then a macro line. Scores are scaled to 0..100.
inline void write_results_tsv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << "condition\tseed\tbleu\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.per_seed_bleu.size(); ++i)
      out << r.condition << '\t' << (i + 1) << '\t' << 100.0 * r.per_seed_bleu[i] << '\n';
    out << r.condition << "\tmacro\t" << 100.0 * r.macro_average << '\n';
  }
}

}  // namespace mmt::evaluation
