#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmt/evaluation.hpp"
#include "support/testutil.hpp"

using namespace mmt::evaluation;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> words) {
  std::vector<std::string> out;
  for (const char* w : words) out.emplace_back(w);
  return out;
}

}  // namespace

TEST_CASE("bleu: identity, clipping and brevity penalty") {
  SECTION("identical corpora of long-enough sentences score 1") {
    auto sent = toks({"a", "b", "c", "d", "e"});
    auto report = bleu_corpus({sent}, {sent});
    REQUIRE(report.score == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(report.brevity_penalty == 1.0);
  }

  SECTION("clipped unigrams and empty higher orders give zero") {
    auto report = bleu_corpus({toks({"a", "a", "a", "a"})}, {toks({"a", "b", "c", "d"})});
    REQUIRE(report.precisions[0] == Catch::Approx(0.25));
    REQUIRE(report.precisions[1] == 0.0);
    REQUIRE(report.score == 0.0);
  }

  SECTION("shorter hypothesis pays the brevity penalty") {
    auto report = bleu_corpus({toks({"a", "b", "c", "d"})}, {toks({"a", "b", "c", "d", "e"})});
    for (int n = 0; n < 4; ++n) REQUIRE(report.precisions[static_cast<std::size_t>(n)] == 1.0);
    REQUIRE(report.brevity_penalty == Catch::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
    REQUIRE(report.score == Catch::Approx(0.7788).margin(5e-5));
  }

  SECTION("count mismatch is an error") {
    REQUIRE_THROWS_AS(bleu_corpus({toks({"a"})}, {}), mmt::Error);
  }

  SECTION("empty hypothesis corpus scores zero") {
    auto report = bleu_corpus({{}, {}}, {toks({"a", "b"}), toks({"c"})});
    REQUIRE(report.score == 0.0);
    REQUIRE(report.hyp_length == 0);
  }
}

TEST_CASE("bleu equals the n-gram counting oracle on random corpora") {
  mmt::Rng rng(2024);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int round = 0; round < 100; ++round) {
    const int n_sent = 1 + static_cast<int>(rng.next_below(10));
    std::vector<std::vector<std::string>> hyps, refs;
    for (int s = 0; s < n_sent; ++s) {
      const int hyp_len = 1 + static_cast<int>(rng.next_below(12));
      const int ref_len = 1 + static_cast<int>(rng.next_below(12));
      std::vector<std::string> hyp, ref;
      for (int t = 0; t < hyp_len; ++t) hyp.push_back(vocab[rng.next_below(vocab.size())]);
      for (int t = 0; t < ref_len; ++t) ref.push_back(vocab[rng.next_below(vocab.size())]);
      hyps.push_back(hyp);
      refs.push_back(ref);
    }
    auto got = bleu_corpus(hyps, refs);
    auto want = testutil::bleu_oracle(hyps, refs);
    REQUIRE(got.score == Catch::Approx(want.score).margin(1e-9));
  }
}

TEST_CASE("bleu is invariant to sentence order") {
  std::vector<std::vector<std::string>> hyps = {toks({"a", "b", "c", "d"}),
                                                toks({"b", "b", "c", "e", "f"}),
                                                toks({"c", "d"})};
  std::vector<std::vector<std::string>> refs = {toks({"a", "b", "c", "e"}),
                                                toks({"b", "c", "c", "e", "f"}),
                                                toks({"c", "d", "e"})};
  auto base = bleu_corpus(hyps, refs);
  std::vector<std::vector<std::string>> hyps2 = {hyps[2], hyps[0], hyps[1]};
  std::vector<std::vector<std::string>> refs2 = {refs[2], refs[0], refs[1]};
  auto permuted = bleu_corpus(hyps2, refs2);
  REQUIRE(base.score == permuted.score);
}

TEST_CASE("bleu stays in [0, 1] and hits 1 only on exact matches") {
  mmt::Rng rng(55);
  const std::vector<std::string> vocab = {"a", "b", "c"};
  for (int round = 0; round < 50; ++round) {
    std::vector<std::vector<std::string>> hyps, refs;
    bool all_equal = true;
    for (int s = 0; s < 3; ++s) {
      std::vector<std::string> ref;
      const int len = 4 + static_cast<int>(rng.next_below(4));
      for (int t = 0; t < len; ++t) ref.push_back(vocab[rng.next_below(vocab.size())]);
      auto hyp = ref;
      if (rng.next_below(2) == 0) {
        hyp[rng.next_below(hyp.size())] = vocab[rng.next_below(vocab.size())];
      }
      all_equal = all_equal && hyp == ref;
      hyps.push_back(hyp);
      refs.push_back(ref);
    }
    auto report = bleu_corpus(hyps, refs);
    REQUIRE(report.score >= 0.0);
    REQUIRE(report.score <= 1.0 + 1e-12);
    if (all_equal) REQUIRE(report.score == Catch::Approx(1.0).epsilon(1e-12));
    if (report.score == 1.0) REQUIRE(hyps == refs);
  }
}

TEST_CASE("add-one smoothing only touches higher-order precisions") {
  auto hyp = toks({"a", "b"});
  auto ref = toks({"a", "b"});
  auto plain = bleu_corpus({hyp}, {ref});
  REQUIRE(plain.score == 0.0);  // no 3-grams or 4-grams at all
  auto smoothed = bleu_corpus({hyp}, {ref}, true);
  REQUIRE(smoothed.score > 0.0);
}

TEST_CASE("noise statistics count inclusive half thresholds") {
  using KL = KeywordLabel;
  using IL = ImageLabel;

  SECTION("two thirds non-entity counts") {
    SentenceLabels s;
    s.keyword_labels = {KL::entity, KL::non_entity, KL::non_entity};
    s.image_labels = {IL::ok};
    auto stats = noise_statistics({s});
    REQUIRE(stats.n_half_or_more_nonentity_keywords == 1);
    REQUIRE(stats.n_half_or_more_noise_images == 0);
  }

  SECTION("exactly half counts") {
    SentenceLabels s;
    s.keyword_labels = {KL::entity, KL::non_entity};
    s.image_labels = {IL::ok, IL::noise};
    auto stats = noise_statistics({s});
    REQUIRE(stats.n_half_or_more_nonentity_keywords == 1);
    REQUIRE(stats.n_half_or_more_noise_images == 1);
  }

  SECTION("empty label lists are an error") {
    SentenceLabels s;
    s.pair_id = 9;
    REQUIRE_THROWS_WITH(noise_statistics({s}), Catch::Matchers::ContainsSubstring("9"));
  }
}

TEST_CASE("noise statistics equal brute-force counting on a 1000-sentence file") {
  // Construct labels so that exactly 27 sentences qualify on keywords and 61
  // on images, then count them both ways.
  mmt::Rng rng(7);
  std::vector<SentenceLabels> labels;
  for (int i = 0; i < 1000; ++i) {
    SentenceLabels s;
    s.pair_id = i;
    const bool kw_noisy = i < 27;
    const bool img_noisy = i < 61;
    const int n_kw = 2 + static_cast<int>(rng.next_below(4));
    const int n_img = 2 + static_cast<int>(rng.next_below(4));
    for (int k = 0; k < n_kw; ++k) {
      const bool non_entity = kw_noisy ? (2 * k < n_kw || k % 2 == 0) : (4 * (k + 1) <= n_kw);
      s.keyword_labels.push_back(non_entity ? KeywordLabel::non_entity : KeywordLabel::entity);
    }
    for (int k = 0; k < n_img; ++k) {
      const bool noisy = img_noisy ? (2 * k < n_img || k % 2 == 0) : (4 * (k + 1) <= n_img);
      s.image_labels.push_back(noisy ? ImageLabel::noise : ImageLabel::ok);
    }
    labels.push_back(std::move(s));
  }

  long expect_kw = 0, expect_img = 0;
  for (const auto& s : labels) {
    long bad = 0;
    for (auto l : s.keyword_labels) bad += l == KeywordLabel::non_entity ? 1 : 0;
    if (2 * bad >= static_cast<long>(s.keyword_labels.size())) ++expect_kw;
    bad = 0;
    for (auto l : s.image_labels) bad += l == ImageLabel::noise ? 1 : 0;
    if (2 * bad >= static_cast<long>(s.image_labels.size())) ++expect_img;
  }

  auto stats = noise_statistics(labels);
  REQUIRE(stats.n_sentences == 1000);
  REQUIRE(stats.n_half_or_more_nonentity_keywords == expect_kw);
  REQUIRE(stats.n_half_or_more_noise_images == expect_img);
  REQUIRE(stats.n_half_or_more_nonentity_keywords == 27);
  REQUIRE(stats.n_half_or_more_noise_images == 61);
}

TEST_CASE("label files parse and validate") {
  namespace fs = std::filesystem;
  auto path = (fs::temp_directory_path() / "mmt_labels_test.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"pair_id": 0, "keyword_labels": ["entity", "non-entity"], "image_labels": ["ok", "noise"]})"
        << "\n";
  }
  auto labels = load_labels(path);
  REQUIRE(labels.size() == 1);
  REQUIRE(labels[0].keyword_labels[1] == KeywordLabel::non_entity);
  REQUIRE(labels[0].image_labels[1] == ImageLabel::noise);

  {
    std::ofstream out(path);
    out << R"({"pair_id": 0, "keyword_labels": ["banana"], "image_labels": ["ok"]})" << "\n";
  }
  REQUIRE_THROWS_WITH(load_labels(path), Catch::Matchers::ContainsSubstring("banana"));
  fs::remove(path);
}

TEST_CASE("macro averages are arithmetic means") {
  BleuReport a, b;
  a.score = 0.10;
  b.score = 0.20;

  auto single = macro_average_report({a}, "text_only");
  REQUIRE(single.macro_average == 0.10);

  auto pair = macro_average_report({a, b}, "text_only");
  REQUIRE(pair.macro_average == Catch::Approx(0.15).margin(1e-15));

  BleuReport s;
  s.score = 0.37;
  auto five = macro_average_report({s, s, s, s, s}, "retrieved_images");
  REQUIRE(five.macro_average == Catch::Approx(0.37).margin(1e-15));

  REQUIRE_THROWS_AS(macro_average_report({}, "x"), mmt::Error);
}

TEST_CASE("results TSV lists per-seed rows and a macro row") {
  RunReport report;
  report.condition = "text_only";
  report.per_seed_bleu = {0.10, 0.20};
  report.macro_average = 0.15;
  std::ostringstream out;
  write_results_tsv(out, {report});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "condition\tseed\tbleu");
  std::getline(in, line);
  REQUIRE(line == "text_only\t1\t10");
  std::getline(in, line);
  REQUIRE(line == "text_only\t2\t20");
  std::getline(in, line);
  REQUIRE(line == "text_only\tmacro\t15");
}
