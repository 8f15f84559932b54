// Scratch debugging harness, not part of the suites.
#include <cstdio>

#include "mmt/decoder.hpp"
#include "mmt/training.hpp"
#include "support/testutil.hpp"

using namespace mmt::decoder;
using mmt::ParamStore;
using mmt::Rng;
using mmt::Tape;
using mmt::Var;

int main() {
  DecoderDims dims;
  dims.vocab_size = 6;
  dims.embed_dim = 3;
  dims.hidden_dim = 2;
  dims.text_dim = 4;
  dims.visual_dim = 3;
  ParamStore<double> store;
  auto params = DecoderParams<double>::create(store, dims);
  auto& states_param = store.add("input.states", 2, 4);
  Rng rng(15);
  store.init_uniform(rng, -0.4, 0.4);
  Eigen::MatrixXd visual = testutil::random_matrix(rng, 3, 3);

  auto build = [&](Tape<double>& tape) {
    auto enh = bidirectional_attention(tape, leaf(tape, states_param), tape.constant(visual),
                                       params);
    auto s0 = tape.constant(Eigen::MatrixXd::Zero(2, 1));
    auto step1 = decode_step(tape, s0, mmt::corpus::kBos, enh, params);
    auto step2 = decode_step(tape, step1.state, 4, enh, params);
    auto p = clamp_min(row_of(step2.distribution, 5), 1e-12);
    return scale(log_v(p), -1.0);
  };

  store.zero_grads();
  {
    Tape<double> tape;
    auto loss = build(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape<double> tape;
    return build(tape).scalar();
  };

  double worst = 0;
  std::string worst_name;
  int wr = 0, wc = 0;
  for (std::size_t g = 0; g < store.count(); ++g) {
    auto& p = store.at(g);
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        const double h = 1e-5;
        p.value(r, c) = saved + h;
        double up = eval();
        p.value(r, c) = saved - h;
        double down = eval();
        p.value(r, c) = saved;
        double numeric = (up - down) / (2 * h);
        double analytic = p.grad(r, c);
        double err = std::abs(analytic - numeric) /
                     std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        if (err > worst) {
          worst = err;
          worst_name = p.name;
          wr = static_cast<int>(r);
          wc = static_cast<int>(c);
        }
      }
  }
  std::printf("worst: %s (%d,%d) err=%.3e\n", worst_name.c_str(), wr, wc, worst);

  // examine that entry across step sizes
  auto& p = *store.find(worst_name);
  const double saved = p.value(wr, wc);
  std::printf("analytic = %.12e\n", p.grad(wr, wc));
  for (double h : {1e-3, 1e-4, 1e-5, 1e-6}) {
    p.value(wr, wc) = saved + h;
    double up = eval();
    p.value(wr, wc) = saved - h;
    double down = eval();
    p.value(wr, wc) = saved;
    std::printf("h=%.0e numeric = %.12e\n", h, (up - down) / (2 * h));
  }
  return 0;
}
