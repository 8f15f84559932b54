#include <catch_amalgamated.hpp>

#include "mmt/encoders.hpp"
#include "mmt/training.hpp"
#include "support/testutil.hpp"

using namespace mmt::encoders;
using mmt::ParamStore;
using mmt::Rng;
using mmt::Tape;
using mmt::Var;

namespace {

EncoderDims tiny_dims(int vocab = 7) {
  EncoderDims dims;
  dims.vocab_size = vocab;
  dims.embed_dim = 3;
  dims.hidden_dim = 2;
  dims.visual_dim = 4;
  dims.key_dim = 3;
  return dims;
}

struct Fixture {
  ParamStore<double> store;
  EncoderParams<double> params;
  explicit Fixture(std::uint64_t seed = 0, int vocab = 7)
      : params(EncoderParams<double>::create(store, tiny_dims(vocab))) {
    if (seed) {
      Rng rng(seed);
      store.init_uniform(rng, -0.5, 0.5);
    }
  }
};

}  // namespace

TEST_CASE("encode_text produces N x 2h states") {
  Fixture f(21);
  Tape<double> tape;
  auto enc = encode_text(tape, std::vector<int>{4}, f.params);
  REQUIRE(enc.length == 1);
  REQUIRE(enc.states.rows() == 1);
  REQUIRE(enc.states.cols() == 4);
}

TEST_CASE("encode_text with all-zero parameters gives zero states") {
  Fixture f;  // parameters default to zero
  Tape<double> tape;
  auto enc = encode_text(tape, std::vector<int>{4, 5, 6}, f.params);
  REQUIRE(enc.states.value().isZero(0.0));
}

TEST_CASE("reversing the sentence swaps forward and backward roles") {
  Fixture f(33);
  // share weights between directions
  for (const char* suffix : {"Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"}) {
    auto* fwd = f.store.find(std::string("encoder.fwd.") + suffix);
    auto* bwd = f.store.find(std::string("encoder.bwd.") + suffix);
    bwd->value = fwd->value;
  }
  Tape<double> tape;
  auto ab = encode_text(tape, std::vector<int>{4, 5}, f.params);
  auto ba = encode_text(tape, std::vector<int>{5, 4}, f.params);
  const int h = 2;
  // forward states of [a b] equal backward states of [b a], reversed
  for (int pos = 0; pos < 2; ++pos) {
    Eigen::RowVectorXd fwd_part = ab.states.value().row(pos).head(h);
    Eigen::RowVectorXd bwd_part = ba.states.value().row(1 - pos).tail(h);
    REQUIRE(fwd_part.isApprox(bwd_part, 1e-12));
  }
}

TEST_CASE("encode_text rejects out-of-range ids and embedded padding") {
  Fixture f(3);
  Tape<double> tape;
  REQUIRE_THROWS_AS(encode_text(tape, std::vector<int>{99}, f.params), mmt::Error);
  REQUIRE_THROWS_AS(encode_text(tape, std::vector<int>{4, mmt::corpus::kPad, 5}, f.params),
                    mmt::Error);
}

TEST_CASE("appending padding never changes the pooled vector") {
  Fixture f(55);
  Tape<double> tape;
  auto plain = encode_text(tape, std::vector<int>{4, 5, 6}, f.params);
  auto padded = encode_text(tape, std::vector<int>{4, 5, 6, 0, 0}, f.params);
  auto pooled_plain = pool_text(tape, plain);
  auto pooled_padded = pool_text(tape, padded);
  REQUIRE(pooled_plain.value() == pooled_padded.value());  // bitwise
}

TEST_CASE("pool_text averages unmasked rows") {
  Tape<double> tape;
  TextEncoding<double> enc;

  Eigen::MatrixXd single(1, 2);
  single << 1, 3;
  enc.states = tape.constant(single);
  enc.length = 1;
  REQUIRE(pool_text(tape, enc).value() == single.transpose());

  Eigen::MatrixXd rows(2, 2);
  rows << 0, 0, 2, 4;
  enc.states = tape.constant(rows);
  enc.length = 2;
  Eigen::MatrixXd mean(2, 1);
  mean << 1, 2;
  REQUIRE(pool_text(tape, enc).value() == mean);

  Eigen::MatrixXd two(2, 1);
  two << 1, 9;
  enc.states = tape.constant(two);
  REQUIRE(pool_text(tape, enc, {true, false}).value()(0, 0) == 1.0);

  REQUIRE_THROWS_AS(pool_text(tape, enc, {false, false}), mmt::Error);
}

TEST_CASE("attend_over_grids: singleton, zeros, identical pair") {
  Fixture f(77);
  Tape<double> tape;
  Eigen::MatrixXd pooled(4, 1);
  pooled << 0.3, -0.2, 0.5, 0.1;
  auto pooled_var = tape.constant(pooled);

  Rng rng(5);
  auto grid = testutil::random_matrix(rng, 3, 4);

  SECTION("single grid passes through with weight 1") {
    auto fused = attend_over_grids(tape, pooled_var, {grid}, f.params);
    REQUIRE(fused.attention_weights.value()(0, 0) == 1.0);
    REQUIRE(fused.values.value().isApprox(grid, 1e-12));
  }

  SECTION("all-zero grids give a zero output and uniform weights") {
    std::vector<Eigen::MatrixXd> zeros(3, Eigen::MatrixXd::Zero(3, 4));
    auto fused = attend_over_grids(tape, pooled_var, zeros, f.params);
    REQUIRE(fused.values.value().isZero(0.0));
    for (int m = 0; m < 3; ++m)
      REQUIRE(fused.attention_weights.value()(m, 0) == Catch::Approx(1.0 / 3).epsilon(1e-12));
  }

  SECTION("two identical grids average to the same grid") {
    auto fused = attend_over_grids(tape, pooled_var, {grid, grid}, f.params);
    REQUIRE(fused.attention_weights.value()(0, 0) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(fused.attention_weights.value()(1, 0) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(fused.values.value().isApprox(grid, 1e-12));
  }

  SECTION("mismatched grid shapes are rejected") {
    std::vector<Eigen::MatrixXd> bad = {grid, Eigen::MatrixXd::Zero(2, 4)};
    REQUIRE_THROWS_AS(attend_over_grids(tape, pooled_var, bad, f.params), mmt::Error);
  }
}

TEST_CASE("fusion weights sum to 1 and the output is their convex combination") {
  Rng rng(404);
  for (int round = 0; round < 20; ++round) {
    Fixture f(1000 + static_cast<std::uint64_t>(round));
    Tape<double> tape;
    const int m = 1 + static_cast<int>(rng.next_below(4));
    std::vector<Eigen::MatrixXd> grids;
    for (int i = 0; i < m; ++i) grids.push_back(testutil::random_matrix(rng, 3, 4));
    auto pooled = tape.constant(testutil::random_matrix(rng, 4, 1));
    auto fused = attend_over_grids(tape, pooled, grids, f.params);

    const auto& alpha = fused.attention_weights.value();
    REQUIRE(alpha.sum() == Catch::Approx(1.0).margin(1e-6));
    for (int i = 0; i < m; ++i) REQUIRE(alpha(i, 0) >= 0.0);

    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(3, 4);
    for (int i = 0; i < m; ++i) expect += alpha(i, 0) * grids[static_cast<std::size_t>(i)];
    REQUIRE((fused.values.value() - expect).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("fusion weights are permutation-equivariant") {
  Fixture f(88);
  Rng rng(6);
  std::vector<Eigen::MatrixXd> grids;
  for (int i = 0; i < 3; ++i) grids.push_back(testutil::random_matrix(rng, 2, 4));
  Eigen::MatrixXd pooled = testutil::random_matrix(rng, 4, 1);

  Tape<double> tape;
  auto base = attend_over_grids(tape, tape.constant(pooled), grids, f.params);
  std::vector<Eigen::MatrixXd> permuted = {grids[2], grids[0], grids[1]};
  auto perm = attend_over_grids(tape, tape.constant(pooled), permuted, f.params);

  REQUIRE(perm.attention_weights.value()(0, 0) ==
          Catch::Approx(base.attention_weights.value()(2, 0)).epsilon(1e-12));
  REQUIRE(perm.attention_weights.value()(1, 0) ==
          Catch::Approx(base.attention_weights.value()(0, 0)).epsilon(1e-12));
  REQUIRE(perm.values.value().isApprox(base.values.value(), 1e-9));
}

TEST_CASE("hash text provider is deterministic and shaped by tokens") {
  HashTextProvider provider(4);
  auto a = provider.features({"dog", "runs"});
  auto b = provider.features({"dog", "runs"});
  REQUIRE(a == b);
  REQUIRE(a.rows() == 2);
  REQUIRE(a.cols() == 4);
  auto c = provider.features({"runs", "dog"});
  REQUIRE(c.row(0) == a.row(1));
  REQUIRE_THROWS_AS(provider.features({}), mmt::Error);
}

TEST_CASE("pad_text_features pads with zero rows and truncates") {
  Rng rng(1);
  Eigen::MatrixXd two = testutil::random_matrix(rng, 2, 3);
  auto padded = pad_text_features<double>(two, 4);
  REQUIRE(padded.rows() == 4);
  REQUIRE(padded.topRows(2) == two);
  REQUIRE(padded.bottomRows(2).isZero(0.0));

  auto same = pad_text_features<double>(padded, 4);
  REQUIRE(same == padded);

  auto truncated = pad_text_features<double>(padded, 1);
  REQUIRE(truncated.rows() == 1);
  REQUIRE(truncated.row(0) == two.row(0));
}

namespace {
struct ZeroProvider {
  Eigen::MatrixXd features(const std::vector<std::string>& tokens) const {
    return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tokens.size()), 4);
  }
};
struct ThrowingProvider {
  Eigen::MatrixXd features(const std::vector<std::string>&) const {
    throw mmt::Error("provider exploded");
  }
};
}  // namespace

TEST_CASE("encode_supplementary fuses padded text features") {
  Fixture f(99);
  Tape<double> tape;
  Rng rng(9);
  auto pooled = tape.constant(testutil::random_matrix(rng, 4, 1));

  mmt::retrieval::SupplementaryText text;
  text.tokens = {"sushi", "barbecue"};

  SECTION("zero features give a zero fused representation") {
    auto fused = encode_supplementary(tape, pooled, {text}, ZeroProvider{}, f.params, 3);
    REQUIRE(fused.values.value().isZero(0.0));
  }

  SECTION("features are padded to the grid length") {
    HashTextProvider provider(4);
    auto fused = encode_supplementary(tape, pooled, {text}, provider, f.params, 4);
    REQUIRE(fused.values.rows() == 4);
    REQUIRE(fused.values.cols() == 4);
    // single text: weights are [1], so rows 2..3 are the zero padding
    REQUIRE(fused.values.value().bottomRows(2).isZero(0.0));
    REQUIRE(fused.values.value().topRows(2).isApprox(provider.features(text.tokens), 1e-12));
  }

  SECTION("text of exactly L rows is left alone") {
    HashTextProvider provider(4);
    mmt::retrieval::SupplementaryText full;
    full.tokens = {"a", "b", "c"};
    auto fused = encode_supplementary(tape, pooled, {full}, provider, f.params, 3);
    REQUIRE(fused.values.value().isApprox(provider.features(full.tokens), 1e-12));
  }

  SECTION("provider failures propagate") {
    REQUIRE_THROWS_WITH(
        encode_supplementary(tape, pooled, {text}, ThrowingProvider{}, f.params, 3),
        Catch::Matchers::ContainsSubstring("provider exploded"));
  }
}

TEST_CASE("gradients flow correctly through the text encoder") {
  Fixture f(111);
  Eigen::MatrixXd weights;
  Rng wrng(7);
  auto err = mmt::training::gradient_check<double>(f.store, [&](Tape<double>& tape) {
    auto enc = encode_text(tape, std::vector<int>{4, 5, 6}, f.params);
    if (weights.size() == 0) weights = testutil::random_matrix(wrng, 3, 4);
    return sum(cmul(enc.states, tape.constant(weights)));
  });
  REQUIRE(err.max_relative_error < 1e-4);
}

TEST_CASE("gradients flow correctly through fusion and pooling") {
  Fixture f(112);
  Rng rng(8);
  std::vector<Eigen::MatrixXd> grids = {testutil::random_matrix(rng, 3, 4),
                                        testutil::random_matrix(rng, 3, 4)};
  Eigen::MatrixXd weights;
  auto err = mmt::training::gradient_check<double>(f.store, [&](Tape<double>& tape) {
    auto enc = encode_text(tape, std::vector<int>{4, 6}, f.params);
    auto pooled = pool_text(tape, enc);
    auto fused = attend_over_grids(tape, pooled, grids, f.params);
    if (weights.size() == 0) weights = testutil::random_matrix(rng, 3, 4);
    return sum(cmul(fused.values, tape.constant(weights)));
  });
  REQUIRE(err.max_relative_error < 1e-4);
}

TEST_CASE("encoder works at float32") {
  ParamStore<float> store;
  auto params = EncoderParams<float>::create(store, tiny_dims());
  Rng rng(2);
  store.init_uniform(rng, -0.5f, 0.5f);
  Tape<float> tape;
  auto enc = encode_text(tape, std::vector<int>{4, 5}, params);
  REQUIRE(enc.states.rows() == 2);
  auto pooled = pool_text(tape, enc);
  REQUIRE(pooled.value().allFinite());
}
