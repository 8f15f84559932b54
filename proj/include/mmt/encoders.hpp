#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmt/core/params.hpp"
#include "mmt/core/rng.hpp"
#include "mmt/core/tape.hpp"
#include "mmt/corpus.hpp"
#include "mmt/nn.hpp"
#include "mmt/retrieval.hpp"

namespace mmt::encoders {

struct EncoderDims {
  int vocab_size = 0;
  int embed_dim = 128;
  int hidden_dim = 256;   // per direction; states are 2 * hidden_dim wide
  int visual_dim = 1024;  // D_v
  int key_dim = 256;      // d_k for the grid fusion attention
};

template <class S>
struct EncoderParams {
  EncoderDims dims;
  Parameter<S>* embedding = nullptr;  // vocab x embed
  nn::GruCell<S> forward_cell;
  nn::GruCell<S> backward_cell;
  Parameter<S>* W_query = nullptr;  // key_dim x 2*hidden
  Parameter<S>* W_key = nullptr;    // key_dim x visual_dim

  static EncoderParams create(ParamStore<S>& store, const EncoderDims& dims) {
    EncoderParams p;
    p.dims = dims;
    p.embedding = &store.add("encoder.embedding", dims.vocab_size, dims.embed_dim);
    p.forward_cell = nn::GruCell<S>::create(store, "encoder.fwd", dims.embed_dim, dims.hidden_dim);
    p.backward_cell =
        nn::GruCell<S>::create(store, "encoder.bwd", dims.embed_dim, dims.hidden_dim);
    p.W_query = &store.add("encoder.fusion.W_query", dims.key_dim, 2 * dims.hidden_dim);
    p.W_key = &store.add("encoder.fusion.W_key", dims.key_dim, dims.visual_dim);
    return p;
  }
};

/// Recurrent states for the non-pad prefix of one sentence: row n is the
/// concatenation of forward and backward states at position n.
template <class S>
struct TextEncoding {
  Var<S> states;  // N x 2*hidden
  int length = 0;
};

/// Length of the non-pad prefix; rejects pad ids in the middle.
inline int unpadded_length(const std::vector<int>& ids) {
  int n = static_cast<int>(ids.size());
  while (n > 0 && ids[static_cast<std::size_t>(n - 1)] == corpus::kPad) --n;
  for (int i = 0; i < n; ++i)
    if (ids[static_cast<std::size_t>(i)] == corpus::kPad)
      throw Error("encode_text: pad id inside sentence");
  return n;
}

/// Bi-directional gated-recurrent pass over the embeddings of `ids`.
/// Trailing pad ids are ignored entirely, so appending padding cannot change
/// the encoding.
template <class S>
TextEncoding<S> encode_text(Tape<S>& tape, const std::vector<int>& ids,
                            const EncoderParams<S>& params, double dropout_rate = 0.0,
                            bool training = false, Rng* rng = nullptr) {
  const int n = unpadded_length(ids);
  if (n == 0) throw Error("encode_text: empty sentence");
  for (int i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= params.dims.vocab_size)
      throw Error("encode_text: token id " + std::to_string(id) + " out of range");
  }

  auto table = leaf(tape, *params.embedding);
  std::vector<Var<S>> embeddings;
  embeddings.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    embeddings.push_back(transpose(row_of(table, ids[static_cast<std::size_t>(i)])));

  const Eigen::Index hidden = params.dims.hidden_dim;
  std::vector<Var<S>> fwd(static_cast<std::size_t>(n)), bwd(static_cast<std::size_t>(n));
  Var<S> h = tape.constant(MatX<S>::Zero(hidden, 1));
  for (int i = 0; i < n; ++i) {
    h = params.forward_cell.step(tape, embeddings[static_cast<std::size_t>(i)], h);
    fwd[static_cast<std::size_t>(i)] = h;
  }
  h = tape.constant(MatX<S>::Zero(hidden, 1));
  for (int i = n - 1; i >= 0; --i) {
    h = params.backward_cell.step(tape, embeddings[static_cast<std::size_t>(i)], h);
    bwd[static_cast<std::size_t>(i)] = h;
  }

  std::vector<Var<S>> columns;
  columns.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    columns.push_back(vstack(fwd[static_cast<std::size_t>(i)], bwd[static_cast<std::size_t>(i)]));
  Var<S> states = transpose(hstack(columns));  // N x 2*hidden
  states = nn::apply_dropout(tape, states, dropout_rate, training, rng);
  return TextEncoding<S>{states, n};
}

/// Mean of the unmasked rows, as a column vector. `mask` empty means all rows.
template <class S>
Var<S> pool_text(Tape<S>& tape, const TextEncoding<S>& enc,
                 const std::vector<bool>& mask = {}) {
  const Eigen::Index n = enc.states.rows();
  MatX<S> weights = MatX<S>::Zero(n, 1);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool keep = mask.empty() || mask[static_cast<std::size_t>(i)];
    if (keep) {
      weights(i, 0) = S(1);
      ++kept;
    }
  }
  if (kept == 0) throw Error("pool_text: all positions masked");
  weights /= static_cast<S>(kept);
  return matmul(transpose(enc.states), tape.constant(std::move(weights)));
}

template <class S>
struct FusedRepresentation {
  Var<S> values;             // L x D_v
  Var<S> attention_weights;  // M x 1, sums to 1
};

/// Scaled dot-product fusion of M grids: the pooled text is the query, each
/// grid's mean row is its key, and the output is the attention-weighted sum
/// of the grids themselves.
template <class S>
FusedRepresentation<S> attend_over_grids(Tape<S>& tape, Var<S> pooled,
                                         const std::vector<MatX<S>>& grids,
                                         const EncoderParams<S>& params) {
  if (grids.empty()) throw Error("attend_over_grids: need at least one grid");
  const Eigen::Index rows = grids.front().rows(), cols = grids.front().cols();
  for (const auto& g : grids)
    if (g.rows() != rows || g.cols() != cols)
      throw Error("attend_over_grids: grids have mismatched shapes");

  auto wq = leaf(tape, *params.W_query);
  auto wk = leaf(tape, *params.W_key);
  auto query = matmul(wq, pooled);  // key_dim x 1

  const std::size_t m = grids.size();
  std::vector<Var<S>> scores;
  scores.reserve(m);
  std::vector<Var<S>> grid_nodes;
  grid_nodes.reserve(m);
  const S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(params.dims.key_dim));
  for (const auto& g : grids) {
    auto node = tape.constant(g);
    grid_nodes.push_back(node);
    auto mean_row =
        matmul(transpose(node), tape.constant(MatX<S>::Constant(rows, 1, S(1) / static_cast<S>(rows))));
    auto key = matmul(wk, mean_row);
    scores.push_back(scale(matmul(transpose(query), key), inv_sqrt_dk));
  }
  auto alpha = softmax(transpose(hstack(scores)));  // m x 1

  Var<S> fused = scale_by(grid_nodes[0], row_of(alpha, 0));
  for (std::size_t i = 1; i < m; ++i)
    fused = fused + scale_by(grid_nodes[i], row_of(alpha, static_cast<Eigen::Index>(i)));
  return FusedRepresentation<S>{fused, alpha};
}

// ---- supplementary text features ------------------------------------------------

/// Deterministic per-token feature vectors: each token seeds a generator with
/// its own bytes, giving reproducible stand-in features without any weights.
class HashTextProvider {
 public:
  explicit HashTextProvider(int feature_dim) : feature_dim_(feature_dim) {}

  Eigen::MatrixXd features(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) throw Error("text provider: empty token list");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(tokens.size()), feature_dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      Rng rng(fnv1a64(tokens[i]));
      for (int c = 0; c < feature_dim_; ++c)
        out(static_cast<Eigen::Index>(i), c) = rng.uniform(-1.0, 1.0);
    }
    return out;
  }

 private:
  int feature_dim_;
};

/// Zero-pad (or truncate) an N_t x D_v feature matrix to L x D_v.
template <class S>
MatX<S> pad_text_features(const MatX<S>& features, int target_rows) {
  MatX<S> out = MatX<S>::Zero(target_rows, features.cols());
  const Eigen::Index keep = std::min<Eigen::Index>(features.rows(), target_rows);
  out.topRows(keep) = features.topRows(keep);
  return out;
}

/// Supplementary texts enter the same fusion attention as image grids, after
/// their feature matrices are padded to the grid shape.
template <class S, class Provider>
FusedRepresentation<S> encode_supplementary(Tape<S>& tape, Var<S> pooled,
                                            const std::vector<retrieval::SupplementaryText>& texts,
                                            const Provider& provider,
                                            const EncoderParams<S>& params, int grid_rows) {
  if (texts.empty()) throw Error("encode_supplementary: no texts");
  std::vector<MatX<S>> padded;
  padded.reserve(texts.size());
  for (const auto& text : texts) {
    Eigen::MatrixXd feats = provider.features(text.tokens);
    if (feats.cols() != params.dims.visual_dim)
      throw Error("text provider produced feature size " + std::to_string(feats.cols()) +
                  ", expected " + std::to_string(params.dims.visual_dim));
    padded.push_back(pad_text_features<S>(feats.template cast<S>(), grid_rows));
  }
  return attend_over_grids(tape, pooled, padded, params);
}

}  // namespace mmt::encoders
