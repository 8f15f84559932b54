#include <catch_amalgamated.hpp>
#include <cmath>
#include <sstream>

#include "mmt/querygen.hpp"
#include "support/testutil.hpp"

using namespace mmt::querygen;
using mmt::corpus::CorpusSplit;
using mmt::corpus::SentencePair;

namespace {

CorpusSplit split_of(const std::vector<std::vector<std::string>>& docs) {
  CorpusSplit split;
  for (const auto& doc : docs) {
    SentencePair pair;
    pair.source_tokens = doc;
    pair.target_tokens = {"x"};
    pair.pair_id = static_cast<int>(split.pairs.size());
    split.pairs.push_back(pair);
  }
  return split;
}

}  // namespace

TEST_CASE("compute_idf matches the smoothed formula") {
  auto one = compute_idf(split_of({{"a", "b"}}));
  REQUIRE(one.idf("a") == Catch::Approx(1.0).epsilon(1e-12));

  auto both = compute_idf(split_of({{"a"}, {"a"}}));
  REQUIRE(both.df("a") == 2);
  REQUIRE(both.idf("a") == Catch::Approx(1.0).epsilon(1e-12));

  auto halves = compute_idf(split_of({{"a"}, {"b"}}));
  REQUIRE(halves.idf("a") == Catch::Approx(std::log(3.0 / 2.0) + 1.0).epsilon(1e-9));
  REQUIRE(halves.idf("a") == Catch::Approx(1.405465).margin(1e-6));

  CorpusSplit empty;
  REQUIRE_THROWS_AS(compute_idf(empty), mmt::Error);
}

TEST_CASE("idf is defined for unseen terms") {
  auto idf = compute_idf(split_of({{"a"}, {"b"}}));
  REQUIRE(idf.df("zzz") == 0);
  REQUIRE(idf.idf("zzz") == Catch::Approx(std::log(3.0) + 1.0));
  REQUIRE(idf.idf("zzz") > 0.0);
}

TEST_CASE("extract_keywords drops stopwords and breaks ties by position") {
  StopwordSet stops = {"the"};
  auto idf = compute_idf(split_of({{"dog", "runs"}, {"snow", "dog"}}));

  REQUIRE(extract_keywords({"the", "the", "the"}, idf, 3, stops).empty());

  // Equal idf and equal tf: the earlier token wins.
  auto uniform_idf = compute_idf(split_of({{"dog", "runs"}}));
  auto tie = extract_keywords({"dog", "runs"}, uniform_idf, 1, {});
  REQUIRE(tie.size() == 1);
  REQUIRE(tie[0].term == "dog");
  REQUIRE(tie[0].first_position == 0);

  auto idf_same = compute_idf(split_of({{"snow", "dog"}}));
  auto ranked = extract_keywords({"snow", "dog", "snow"}, idf_same, 2, {});
  REQUIRE(ranked.size() == 2);
  REQUIRE(ranked[0].term == "snow");
  REQUIRE(ranked[0].score == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(ranked[1].term == "dog");
  REQUIRE(ranked[1].score == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("extract_keywords equals the brute-force oracle on a random corpus") {
  mmt::Rng rng(123);
  std::vector<std::string> lexicon = {"a", "b", "c", "d", "e", "f", "g", "the", "of"};
  StopwordSet stops = {"the", "of"};
  for (int round = 0; round < 50; ++round) {
    std::vector<std::vector<std::string>> docs;
    const int n_docs = 2 + static_cast<int>(rng.next_below(5));
    for (int d = 0; d < n_docs; ++d) {
      std::vector<std::string> doc;
      const int len = 1 + static_cast<int>(rng.next_below(9));
      for (int t = 0; t < len; ++t) doc.push_back(lexicon[rng.next_below(lexicon.size())]);
      docs.push_back(doc);
    }
    auto idf = compute_idf(split_of(docs));
    const int m = 1 + static_cast<int>(rng.next_below(4));
    for (const auto& doc : docs) {
      auto got = extract_keywords(doc, idf, m, stops);
      auto want = testutil::keywords_oracle(doc, idf, m, stops);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i].term == want[i].term);
        REQUIRE(got[i].score == want[i].score);
        REQUIRE(got[i].first_position == want[i].first_position);
      }
    }
  }
}

TEST_CASE("idf scores do not depend on sentence order") {
  auto a = compute_idf(split_of({{"a", "b"}, {"c"}, {"a"}}));
  auto b = compute_idf(split_of({{"a"}, {"a", "b"}, {"c"}}));
  for (const auto& term : {"a", "b", "c"}) REQUIRE(a.idf(term) == b.idf(term));
}

TEST_CASE("generate_queries yields exactly m queries, cycling scarce keywords") {
  std::vector<Keyword> five;
  for (int i = 0; i < 5; ++i)
    five.push_back(Keyword{"kw" + std::to_string(i), 1.0 - 0.1 * i, i});
  auto queries = generate_queries(five, 5, {"s"});
  REQUIRE(queries.size() == 5);
  for (int i = 0; i < 5; ++i) {
    REQUIRE(queries[static_cast<std::size_t>(i)].rank == i + 1);
    REQUIRE(queries[static_cast<std::size_t>(i)].terms ==
            std::vector<std::string>{"kw" + std::to_string(i)});
  }

  std::vector<Keyword> two = {Keyword{"snow", 0.9, 0}, Keyword{"dog", 0.5, 1}};
  auto cycled = generate_queries(two, 3, {"snow", "dog"});
  REQUIRE(cycled.size() == 3);
  REQUIRE(cycled[0].terms == std::vector<std::string>{"snow"});
  REQUIRE(cycled[1].terms == std::vector<std::string>{"dog"});
  REQUIRE(cycled[2].terms == std::vector<std::string>{"snow"});

  auto fallback = generate_queries({}, 5, {"the"});
  REQUIRE(fallback.size() == 5);
  for (const auto& q : fallback) REQUIRE(q.terms == std::vector<std::string>{"the"});

  REQUIRE_THROWS_AS(generate_queries({}, 5, {}), mmt::Error);
}

TEST_CASE("generate_queries always returns m queries for random sentences") {
  mmt::Rng rng(5);
  std::vector<std::string> lexicon = {"a", "b", "c"};
  auto idf = compute_idf(split_of({{"a", "b", "c"}}));
  for (int round = 0; round < 30; ++round) {
    std::vector<std::string> doc;
    const int len = 1 + static_cast<int>(rng.next_below(5));
    for (int t = 0; t < len; ++t) doc.push_back(lexicon[rng.next_below(lexicon.size())]);
    const int m = 1 + static_cast<int>(rng.next_below(6));
    auto queries = generate_queries(extract_keywords(doc, idf, m, {}), m, doc);
    REQUIRE(static_cast<int>(queries.size()) == m);
    for (int i = 0; i < m; ++i) REQUIRE(queries[static_cast<std::size_t>(i)].rank == i + 1);
  }
}

TEST_CASE("query dump writes one JSON object per query") {
  std::ostringstream out;
  std::vector<SearchQuery> queries = {SearchQuery{{"dog"}, 1}, SearchQuery{{"snow"}, 2}};
  dump_queries(out, 7, queries);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    REQUIRE(j["pair_id"] == 7);
    ++lines;
  }
  REQUIRE(lines == 2);
}
