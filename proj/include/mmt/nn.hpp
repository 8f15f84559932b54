#pragma once

#include <string>

#include "mmt/core/params.hpp"
#include "mmt/core/rng.hpp"
#include "mmt/core/tape.hpp"

namespace mmt::nn {

/// Single gated recurrent cell. Convention:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wh x + Uh (r .* h) + bh)
///   h' = z .* h + (1 - z) .* n
template <class S>
struct GruCell {
  Parameter<S>*Wz, *Uz, *bz, *Wr, *Ur, *br, *Wh, *Uh, *bh;
  Eigen::Index input_dim = 0, hidden_dim = 0;

  static GruCell create(ParamStore<S>& store, const std::string& prefix,
                        Eigen::Index input_dim, Eigen::Index hidden_dim) {
    GruCell cell;
    cell.input_dim = input_dim;
    cell.hidden_dim = hidden_dim;
    cell.Wz = &store.add(prefix + ".Wz", hidden_dim, input_dim);
    cell.Uz = &store.add(prefix + ".Uz", hidden_dim, hidden_dim);
    cell.bz = &store.add(prefix + ".bz", hidden_dim, 1);
    cell.Wr = &store.add(prefix + ".Wr", hidden_dim, input_dim);
    cell.Ur = &store.add(prefix + ".Ur", hidden_dim, hidden_dim);
    cell.br = &store.add(prefix + ".br", hidden_dim, 1);
    cell.Wh = &store.add(prefix + ".Wh", hidden_dim, input_dim);
    cell.Uh = &store.add(prefix + ".Uh", hidden_dim, hidden_dim);
    cell.bh = &store.add(prefix + ".bh", hidden_dim, 1);
    return cell;
  }

  Var<S> step(Tape<S>& tape, Var<S> x, Var<S> h) const {
    auto z = sigmoid_v(matmul(leaf(tape, *Wz), x) + matmul(leaf(tape, *Uz), h) +
                       leaf(tape, *bz));
    auto r = sigmoid_v(matmul(leaf(tape, *Wr), x) + matmul(leaf(tape, *Ur), h) +
                       leaf(tape, *br));
    auto n = tanh_v(matmul(leaf(tape, *Wh), x) + matmul(leaf(tape, *Uh), cmul(r, h)) +
                    leaf(tape, *bh));
    auto ones = tape.constant(MatX<S>::Ones(hidden_dim, 1));
    return cmul(z, h) + cmul(ones - z, n);
  }
};

/// Inverted dropout mask as a constant node: entries are 0 or 1/(1-rate).
template <class S>
Var<S> dropout_mask(Tape<S>& tape, Eigen::Index rows, Eigen::Index cols, double rate,
                    Rng& rng) {
  MatX<S> mask(rows, cols);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      mask(r, c) = rng.next_double() < rate ? S(0) : keep_scale;
  return tape.constant(std::move(mask));
}

template <class S>
Var<S> apply_dropout(Tape<S>& tape, Var<S> x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return x;
  return cmul(x, dropout_mask<S>(tape, x.rows(), x.cols(), rate, *rng));
}

}  // namespace mmt::nn
