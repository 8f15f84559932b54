#pragma once

#include <optional>
#include <vector>

#include "mmt/core/params.hpp"
#include "mmt/core/tape.hpp"
#include "mmt/corpus.hpp"
#include "mmt/decoder.hpp"
#include "mmt/encoders.hpp"
#include "mmt/filters.hpp"
#include "mmt/training.hpp"

namespace mmt::model {

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelDims {
  int source_vocab = 0;
  int target_vocab = 0;
  int embed_dim = 128;
  int hidden_dim = 256;       // per encoder direction and decoder state
  int visual_dim = 1024;      // D_v
  int visual_len = 196;       // L
  int key_dim = 256;          // d_k
  int region_score_dim = 256; // d_a
  int region_keep = 128;      // O, regions kept by the filter
};

/// Per-sentence visual/supplementary input, prepared ahead of the forward
/// pass. The mode decides which pathway the decoder sees.
template <class S>
struct VisualContext {
  enum class Mode { none, grids, regions, texts, grids_and_texts };
  Mode mode = Mode::none;
  std::vector<MatX<S>> grids;          // M grids, L x D_v
  std::vector<VecX<S>> region_pool;    // M*O candidate region vectors
  std::vector<MatX<S>> text_features;  // M padded matrices, L x D_v

  static VisualContext none() { return VisualContext{}; }
};

template <class S>
struct SentenceForward {
  encoders::TextEncoding<S> encoding;
  Var<S> pooled;
  std::optional<encoders::FusedRepresentation<S>> fused_visual;
  std::optional<encoders::FusedRepresentation<S>> fused_text;
  decoder::EnhancedRepresentations<S> enhanced;
};

/// Shared parameter set for every experiment condition: the pathways that a
/// condition does not use stay registered (and untouched), so checkpoints and
/// shapes are identical across conditions with equal dimensions.
template <class S>
class Model {
 public:
  Model(const ModelDims& dims, bool freeze_region_params = false) : dims_(dims) {
    encoders::EncoderDims enc_dims;
    enc_dims.vocab_size = dims.source_vocab;
    enc_dims.embed_dim = dims.embed_dim;
    enc_dims.hidden_dim = dims.hidden_dim;
    enc_dims.visual_dim = dims.visual_dim;
    enc_dims.key_dim = dims.key_dim;
    encoder_ = encoders::EncoderParams<S>::create(store_, enc_dims);

    decoder::DecoderDims dec_dims;
    dec_dims.vocab_size = dims.target_vocab;
    dec_dims.embed_dim = dims.embed_dim;
    dec_dims.hidden_dim = dims.hidden_dim;
    dec_dims.text_dim = 2 * dims.hidden_dim;
    dec_dims.visual_dim = dims.visual_dim;
    decoder_ = decoder::DecoderParams<S>::create(store_, dec_dims);

    filters::RegionFilterDims reg_dims;
    reg_dims.score_dim = dims.region_score_dim;
    reg_dims.visual_dim = dims.visual_dim;
    reg_dims.text_dim = 2 * dims.hidden_dim;
    region_filter_ = filters::RegionFilterParams<S>::create(store_, reg_dims);
    if (freeze_region_params) {
      region_filter_.V->trainable = false;
      region_filter_.W->trainable = false;
      region_filter_.U->trainable = false;
    }
  }

  const ModelDims& dims() const { return dims_; }
  ParamStore<S>& store() { return store_; }
  const ParamStore<S>& store() const { return store_; }
  const encoders::EncoderParams<S>& encoder_params() const { return encoder_; }
  const decoder::DecoderParams<S>& decoder_params() const { return decoder_; }
  const filters::RegionFilterParams<S>& region_params() const { return region_filter_; }

  SentenceForward<S> prepare(Tape<S>& tape, const std::vector<int>& source_ids,
                             const VisualContext<S>& ctx, double dropout_rate = 0.0,
                             bool training = false, Rng* rng = nullptr) const {
    SentenceForward<S> fwd;
    fwd.encoding = encoders::encode_text(tape, source_ids, encoder_, dropout_rate, training, rng);
    fwd.pooled = encoders::pool_text(tape, fwd.encoding);

    using Mode = typename VisualContext<S>::Mode;
    switch (ctx.mode) {
      case Mode::none: {
        fwd.enhanced = decoder::text_only_enhancement(tape, fwd.encoding.states, decoder_);
        break;
      }
      case Mode::grids: {
        fwd.fused_visual = encoders::attend_over_grids(tape, fwd.pooled, ctx.grids, encoder_);
        fwd.enhanced = decoder::bidirectional_attention(tape, fwd.encoding.states,
                                                        fwd.fused_visual->values, decoder_);
        break;
      }
      case Mode::texts: {
        fwd.fused_text =
            encoders::attend_over_grids(tape, fwd.pooled, ctx.text_features, encoder_);
        fwd.enhanced = decoder::bidirectional_attention(tape, fwd.encoding.states,
                                                        fwd.fused_text->values, decoder_);
        break;
      }
      case Mode::grids_and_texts: {
        fwd.fused_visual = encoders::attend_over_grids(tape, fwd.pooled, ctx.grids, encoder_);
        fwd.fused_text =
            encoders::attend_over_grids(tape, fwd.pooled, ctx.text_features, encoder_);
        auto combined =
            scale(fwd.fused_visual->values + fwd.fused_text->values, S(0.5));
        fwd.enhanced =
            decoder::bidirectional_attention(tape, fwd.encoding.states, combined, decoder_);
        break;
      }
      case Mode::regions: {
        VecX<S> pooled_value = fwd.pooled.value().col(0);
        auto selected = filters::filter_regions<S>(ctx.region_pool, pooled_value,
                                                   dims_.region_keep, region_filter_);
        MatX<S> packed(static_cast<Eigen::Index>(selected.size()), dims_.visual_dim);
        for (std::size_t i = 0; i < selected.size(); ++i)
          packed.row(static_cast<Eigen::Index>(i)) = selected[i].transpose();
        fwd.enhanced = decoder::bidirectional_attention(
            tape, fwd.encoding.states, tape.constant(std::move(packed)), decoder_);
        break;
      }
    }
    return fwd;
  }

  /// Teacher-forced pass over `target_ids` (BOS ... EOS, possibly padded).
  /// Step t predicts target_ids[t+1]; pad steps are masked out of the loss.
  struct TeacherForced {
    std::vector<decoder::StepResult<S>> steps;
    std::vector<int> gold;
    std::vector<bool> mask;
    Var<S> loss;
    long real_steps = 0;
  };

  TeacherForced teacher_forced(Tape<S>& tape, const SentenceForward<S>& fwd,
                               const std::vector<int>& target_ids, double dropout_rate = 0.0,
                               bool training = false, Rng* rng = nullptr) const {
    if (target_ids.size() < 2 || target_ids.front() != corpus::kBos)
      throw Error("teacher_forced: target must start with BOS and contain EOS");
    TeacherForced out;
    Var<S> state = decoder::initial_state(tape, fwd.pooled, decoder_);
    std::vector<Var<S>> distributions;
    for (std::size_t t = 0; t + 1 < target_ids.size(); ++t) {
      auto step = decoder::decode_step(tape, state, target_ids[t], fwd.enhanced, decoder_,
                                       dropout_rate, training, rng);
      state = step.state;
      distributions.push_back(step.distribution);
      out.gold.push_back(target_ids[t + 1]);
      out.mask.push_back(target_ids[t + 1] != corpus::kPad);
      if (out.mask.back()) ++out.real_steps;
      out.steps.push_back(std::move(step));
    }
    out.loss = training::cross_entropy_loss(tape, distributions, out.gold, out.mask);
    return out;
  }

  std::vector<int> translate(Tape<S>& tape, const std::vector<int>& source_ids,
                             const VisualContext<S>& ctx, int max_len) const {
    auto fwd = prepare(tape, source_ids, ctx);
    return decoder::greedy_decode(tape, fwd.pooled, fwd.enhanced, decoder_, max_len);
  }

 private:
  ModelDims dims_;
  ParamStore<S> store_;
  encoders::EncoderParams<S> encoder_;
  decoder::DecoderParams<S> decoder_;
  filters::RegionFilterParams<S> region_filter_;
};

}  // namespace mmt::model
