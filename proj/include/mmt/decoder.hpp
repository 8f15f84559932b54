#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmt/core/params.hpp"
#include "mmt/core/tape.hpp"
#include "mmt/corpus.hpp"
#include "mmt/encoders.hpp"
#include "mmt/nn.hpp"

namespace mmt::decoder {

struct DecoderDims {
  int vocab_size = 0;     // target vocabulary
  int embed_dim = 128;
  int hidden_dim = 256;   // decoder state size, also the pre-logit width
  int text_dim = 512;     // 2 * encoder hidden
  int visual_dim = 1024;  // D_v of the incoming visual rows
};

template <class S>
struct DecoderParams {
  DecoderDims dims;
  Parameter<S>* embedding = nullptr;  // vocab x embed
  // bidirectional attention between text states and visual rows
  Parameter<S>* W_proj = nullptr;     // text_dim x visual_dim, lifts visual rows
  Parameter<S>* W_bilinear = nullptr; // text_dim x text_dim
  Parameter<S>* W_text_mix = nullptr; // text_dim x 2*text_dim
  Parameter<S>* W_vis_mix = nullptr;  // text_dim x 2*text_dim
  // co-attention (one additive attention per modality)
  Parameter<S>*W_att_text, *U_att_text, *v_att_text;
  Parameter<S>*W_att_vis, *U_att_vis, *v_att_vis;
  nn::GruCell<S> cell_token;    // consumes the previous target embedding
  nn::GruCell<S> cell_context;  // consumes [c_t; v_t]
  // output layer
  Parameter<S>*W_out_state, *W_out_text, *W_out_vis, *W_out_embed, *W_logits;
  Parameter<S>* W_init = nullptr;  // hidden x text_dim, builds s_0 from pooled text

  static DecoderParams create(ParamStore<S>& store, const DecoderDims& dims) {
    DecoderParams p;
    p.dims = dims;
    const int H = dims.hidden_dim, T = dims.text_dim;
    p.embedding = &store.add("decoder.embedding", dims.vocab_size, dims.embed_dim);
    p.W_proj = &store.add("decoder.bidir.W_proj", T, dims.visual_dim);
    p.W_bilinear = &store.add("decoder.bidir.W_bilinear", T, T);
    p.W_text_mix = &store.add("decoder.bidir.W_text_mix", T, 2 * T);
    p.W_vis_mix = &store.add("decoder.bidir.W_vis_mix", T, 2 * T);
    p.W_att_text = &store.add("decoder.att_text.W", H, H);
    p.U_att_text = &store.add("decoder.att_text.U", H, T);
    p.v_att_text = &store.add("decoder.att_text.v", H, 1);
    p.W_att_vis = &store.add("decoder.att_vis.W", H, H);
    p.U_att_vis = &store.add("decoder.att_vis.U", H, T);
    p.v_att_vis = &store.add("decoder.att_vis.v", H, 1);
    p.cell_token = nn::GruCell<S>::create(store, "decoder.gru_token", dims.embed_dim, H);
    p.cell_context = nn::GruCell<S>::create(store, "decoder.gru_context", 2 * T, H);
    p.W_out_state = &store.add("decoder.out.W_state", H, H);
    p.W_out_text = &store.add("decoder.out.W_text", H, T);
    p.W_out_vis = &store.add("decoder.out.W_vis", H, T);
    p.W_out_embed = &store.add("decoder.out.W_embed", H, dims.embed_dim);
    p.W_logits = &store.add("decoder.out.W_logits", dims.vocab_size, H);
    p.W_init = &store.add("decoder.W_init", H, T);
    return p;
  }
};

/// Text and visual representations after one cross-modal enhancement pass.
/// visual_enh is absent when the model runs without a visual pathway.
template <class S>
struct EnhancedRepresentations {
  Var<S> text_enh;                   // N x text_dim
  std::optional<Var<S>> visual_enh;  // L' x text_dim
  std::optional<Var<S>> text_to_visual_attention;  // row-softmax over visual rows, N x L'
  std::optional<Var<S>> visual_to_text_attention;  // row-softmax over text rows, L' x N
};

/// Cross-modal enhancement. Visual rows are lifted into text space, a
/// bilinear score matrix couples the modalities, and each side mixes in an
/// attention summary of the other. The visual summary is gated by the lifted
/// row itself, so an all-zero visual input yields an all-zero visual_enh and
/// the text side degrades to tanh(W_text_mix [h; 0]).
template <class S>
EnhancedRepresentations<S> bidirectional_attention(Tape<S>& tape, Var<S> text_states,
                                                   Var<S> visual_values,
                                                   const DecoderParams<S>& params) {
  if (text_states.cols() != params.dims.text_dim)
    throw Error("bidirectional_attention: text states have wrong width");
  if (visual_values.cols() != params.dims.visual_dim)
    throw Error("bidirectional_attention: visual rows have wrong width");

  auto lifted = matmul(visual_values, transpose(leaf(tape, *params.W_proj)));  // L' x T
  auto scores = matmul(matmul(text_states, leaf(tape, *params.W_bilinear)),
                       transpose(lifted));  // N x L'

  auto text_rows = softmax_rows(scores);               // N x L'
  auto text_summary = matmul(text_rows, lifted);       // N x T
  std::vector<Var<S>> text_cat{text_states, text_summary};
  auto text_enh = tanh_v(matmul(hstack(text_cat), transpose(leaf(tape, *params.W_text_mix))));

  auto vis_rows = softmax_rows(transpose(scores));     // L' x N
  auto vis_summary = cmul(lifted, matmul(vis_rows, text_states));  // L' x T
  std::vector<Var<S>> vis_cat{lifted, vis_summary};
  auto visual_enh = tanh_v(matmul(hstack(vis_cat), transpose(leaf(tape, *params.W_vis_mix))));

  EnhancedRepresentations<S> enh;
  enh.text_enh = text_enh;
  enh.visual_enh = visual_enh;
  enh.text_to_visual_attention = text_rows;
  enh.visual_to_text_attention = vis_rows;
  return enh;
}

/// Text-side enhancement with no visual pathway: the cross-modal summary is
/// structurally zero, everything else is shared with the full path.
template <class S>
EnhancedRepresentations<S> text_only_enhancement(Tape<S>& tape, Var<S> text_states,
                                                 const DecoderParams<S>& params) {
  auto zero_summary =
      tape.constant(MatX<S>::Zero(text_states.rows(), params.dims.text_dim));
  std::vector<Var<S>> text_cat{text_states, zero_summary};
  auto text_enh = tanh_v(matmul(hstack(text_cat), transpose(leaf(tape, *params.W_text_mix))));
  EnhancedRepresentations<S> enh;
  enh.text_enh = text_enh;
  return enh;
}

template <class S>
Var<S> initial_state(Tape<S>& tape, Var<S> pooled, const DecoderParams<S>& params) {
  return tanh_v(matmul(leaf(tape, *params.W_init), pooled));
}

namespace detail {

/// Additive attention: weights softmax(v' tanh(W s + U memory_n)) over memory
/// rows; returns (context = memory' weights, weights).
template <class S>
std::pair<Var<S>, Var<S>> additive_attention(Tape<S>& tape, Var<S> state, Var<S> memory,
                                             Parameter<S>& W, Parameter<S>& U,
                                             Parameter<S>& v) {
  auto keys = matmul(memory, transpose(leaf(tape, U)));            // N x H
  auto query = transpose(matmul(leaf(tape, W), state));            // 1 x H
  auto energy = tanh_v(add_rowvec(keys, query));                   // N x H
  auto weights = softmax(matmul(energy, leaf(tape, v)));           // N x 1
  auto context = matmul(transpose(memory), weights);               // T x 1
  return {context, weights};
}

}  // namespace detail

template <class S>
struct StepResult {
  Var<S> state;                              // s_t, hidden x 1
  Var<S> text_context;                       // c_t, text_dim x 1
  Var<S> visual_context;                     // v_t, text_dim x 1
  Var<S> distribution;                       // vocab x 1; pad entry is zero
  Var<S> text_attention;                     // N x 1
  std::optional<Var<S>> visual_attention;    // L' x 1
};

/// One conditional-GRU step: the token cell advances the state, each modality
/// contributes an additive-attention context, the context cell folds both in,
/// and the output layer mixes state, contexts and the previous embedding.
/// The pad entry of the distribution is zeroed and the rest renormalized.
template <class S>
StepResult<S> decode_step(Tape<S>& tape, Var<S> prev_state, int prev_token,
                          const EnhancedRepresentations<S>& enh,
                          const DecoderParams<S>& params, double dropout_rate = 0.0,
                          bool training = false, Rng* rng = nullptr) {
  if (prev_token < 0 || prev_token >= params.dims.vocab_size)
    throw Error("decode_step: token id " + std::to_string(prev_token) + " out of range");

  auto embed = transpose(row_of(leaf(tape, *params.embedding), prev_token));
  auto state1 = params.cell_token.step(tape, embed, prev_state);

  auto [text_ctx, text_weights] = detail::additive_attention(
      tape, state1, enh.text_enh, *params.W_att_text, *params.U_att_text, *params.v_att_text);

  StepResult<S> result;
  Var<S> vis_ctx;
  if (enh.visual_enh) {
    auto [ctx, weights] = detail::additive_attention(tape, state1, *enh.visual_enh,
                                                     *params.W_att_vis, *params.U_att_vis,
                                                     *params.v_att_vis);
    vis_ctx = ctx;
    result.visual_attention = weights;
  } else {
    vis_ctx = tape.constant(MatX<S>::Zero(params.dims.text_dim, 1));
  }

  auto state2 = params.cell_context.step(tape, vstack(text_ctx, vis_ctx), state1);

  auto pre = tanh_v(matmul(leaf(tape, *params.W_out_state), state2) +
                    matmul(leaf(tape, *params.W_out_text), text_ctx) +
                    matmul(leaf(tape, *params.W_out_vis), vis_ctx) +
                    matmul(leaf(tape, *params.W_out_embed), embed));
  pre = nn::apply_dropout(tape, pre, dropout_rate, training, rng);
  auto logits = matmul(leaf(tape, *params.W_logits), pre);

  MatX<S> pad_mask = MatX<S>::Ones(params.dims.vocab_size, 1);
  pad_mask(corpus::kPad, 0) = S(0);
  auto masked = cmul(softmax(logits), tape.constant(std::move(pad_mask)));
  auto dist = scale_by(masked, inv(sum(masked)));

  result.state = state2;
  result.text_context = text_ctx;
  result.visual_context = vis_ctx;
  result.distribution = dist;
  result.text_attention = text_weights;
  return result;
}

/// Greedy decoding from BOS: argmax each step (ties pick the smaller id),
/// stop at EOS or after max_len tokens. Returns ids without BOS/EOS.
template <class S>
std::vector<int> greedy_decode(Tape<S>& tape, Var<S> pooled,
                               const EnhancedRepresentations<S>& enh,
                               const DecoderParams<S>& params, int max_len) {
  if (max_len < 1) throw Error("greedy_decode: max_len must be >= 1");
  std::vector<int> output;
  Var<S> state = initial_state(tape, pooled, params);
  int prev = corpus::kBos;
  for (int t = 0; t < max_len; ++t) {
    auto step = decode_step(tape, state, prev, enh, params);
    const auto& dist = step.distribution.value();
    int best = 0;
    for (Eigen::Index i = 1; i < dist.rows(); ++i)
      if (dist(i, 0) > dist(best, 0)) best = static_cast<int>(i);
    if (best == corpus::kEos) break;
    output.push_back(best);
    state = step.state;
    prev = best;
  }
  return output;
}

}  // namespace mmt::decoder
