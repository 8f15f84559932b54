#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmt/corpus.hpp"
#include "mmt/evaluation.hpp"
#include "mmt/model.hpp"
#include "mmt/training.hpp"

namespace mmt::training {

template <class S>
struct TrainedModel {
  std::vector<MatX<S>> best_values;  // parameter snapshot of the best epoch
  double best_dev_bleu = 0.0;
  int best_epoch = 0;
  std::vector<EpochRecord> log;
  long updates = 0;
};

template <class S>
struct TrainData {
  const corpus::CorpusSplit* split = nullptr;
  const corpus::Vocabulary* source_vocab = nullptr;
  const corpus::Vocabulary* target_vocab = nullptr;
  const std::vector<model::VisualContext<S>>* contexts = nullptr;  // aligned with pairs
};

/// Greedy-decode a split and score it against its own target side.
template <class S>
double decode_bleu(const model::Model<S>& m, const TrainData<S>& data, int max_len) {
  std::vector<std::vector<std::string>> hyps, refs;
  for (std::size_t i = 0; i < data.split->pairs.size(); ++i) {
    const auto& pair = data.split->pairs[i];
    Tape<S> tape;
    auto src = corpus::encode_tokens(pair.source_tokens, *data.source_vocab, false);
    auto ids = m.translate(tape, src, (*data.contexts)[i], max_len);
    hyps.push_back(corpus::decode_ids(ids, *data.target_vocab));
    refs.push_back(pair.target_tokens);
  }
  return evaluation::bleu_corpus(hyps, refs).score;
}

/// Seeded run: init parameters uniform(-0.1, 0.1), then per epoch shuffle,
/// teacher-forced updates with Adam, dev decode, early stopping on dev BLEU.
/// Returns the snapshot with the highest dev BLEU.
/// `dev_override`, when set, replaces the dev evaluation (protocol tests).
template <class S>
TrainedModel<S> train_model(model::Model<S>& m, const TrainData<S>& train,
                            const TrainData<S>& dev, const TrainConfig& cfg,
                            std::uint64_t seed, int max_decode_len = 50,
                            const std::function<double(int)>& dev_override = {},
                            long max_updates = 0) {
  cfg.validate();
  if (train.split->pairs.empty() || dev.split->pairs.empty())
    throw Error("train_model: empty split");

  Rng init_rng(mix_seed(seed, 0x1217ULL));
  m.store().init_uniform(init_rng, S(-0.1), S(0.1));
  Rng dropout_rng(mix_seed(seed, 0xD120ULL));

  TrainedModel<S> result;
  EarlyStopping stopper(cfg.patience);
  bool stop = false;

  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    auto batches = corpus::make_batches(*train.split, *train.source_vocab,
                                        *train.target_vocab, cfg.batch_size, seed, epoch);
    double epoch_loss_sum = 0.0;
    long epoch_tokens = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      m.store().zero_grads();
      long batch_tokens = 0;
      for (const auto& tgt : batch.target_ids)
        batch_tokens += static_cast<long>(tgt.size()) - 1;
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < batch.pair_indices.size(); ++k) {
        Tape<S> tape;
        const auto& ctx =
            (*train.contexts)[static_cast<std::size_t>(batch.pair_indices[k])];
        auto fwd = m.prepare(tape, batch.source_ids[k], ctx, cfg.dropout, true, &dropout_rng);
        auto tf = m.teacher_forced(tape, fwd, batch.target_ids[k], cfg.dropout, true,
                                   &dropout_rng);
        const double sentence_loss = static_cast<double>(tf.loss.scalar());
        if (!std::isfinite(sentence_loss))
          throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", update " +
                      std::to_string(result.updates + 1));
        const double weight =
            static_cast<double>(tf.real_steps) / static_cast<double>(batch_tokens);
        batch_loss += sentence_loss * weight;
        tape.backward(tf.loss, static_cast<S>(weight));
      }
      adam_update(m.store(), result.updates + 1, cfg);
      ++result.updates;
      epoch_loss_sum += batch_loss * static_cast<double>(batch_tokens);
      epoch_tokens += batch_tokens;
      if (max_updates > 0 && result.updates >= max_updates) break;
    }

    const double epoch_loss = epoch_loss_sum / static_cast<double>(epoch_tokens);
    const double dev_bleu =
        dev_override ? dev_override(epoch) : decode_bleu(m, dev, max_decode_len);
    result.log.push_back(EpochRecord{epoch, epoch_loss, dev_bleu});

    const bool improved = dev_bleu > stopper.best_score();
    stop = stopper.observe(epoch, dev_bleu) ||
           (max_updates > 0 && result.updates >= max_updates);
    if (improved) {
      result.best_values = m.store().snapshot_values();
      result.best_dev_bleu = dev_bleu;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace mmt::training
