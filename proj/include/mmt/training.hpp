#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mmt/core/binio.hpp"
#include "mmt/core/params.hpp"
#include "mmt/core/tape.hpp"

namespace mmt::training {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 0.001;
  double dropout = 0.3;
  int max_epochs = 15;
  int patience = 3;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (max_epochs < 1) throw Error("max_epochs must be >= 1");
    if (patience < 1) throw Error("patience must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
    if (seeds.empty()) throw Error("at least one seed required");
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over unmasked steps of -ln p(gold). Gold probabilities are clamped at
/// 1e-12 before the log.
template <class S>
Var<S> cross_entropy_loss(Tape<S>& tape, const std::vector<Var<S>>& distributions,
                          const std::vector<int>& gold_ids, const std::vector<bool>& mask) {
  if (distributions.size() != gold_ids.size() || distributions.size() != mask.size())
    throw Error("cross_entropy_loss: step counts differ");
  std::size_t kept = 0;
  Var<S> total = tape.constant(MatX<S>::Zero(1, 1));
  for (std::size_t t = 0; t < distributions.size(); ++t) {
    if (!mask[t]) continue;
    const int gold = gold_ids[t];
    if (gold < 0 || gold >= distributions[t].rows())
      throw Error("cross_entropy_loss: gold id out of range");
    auto p = clamp_min(row_of(distributions[t], gold), static_cast<S>(kProbabilityFloor));
    total = total - log_v(p);
    ++kept;
  }
  if (kept == 0) throw Error("cross_entropy_loss: all steps masked");
  return scale(total, S(1) / static_cast<S>(kept));
}

/// One bias-corrected Adam step over every trainable parameter.
template <class S>
void adam_update(ParamStore<S>& store, long step, const TrainConfig& cfg) {
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& p = store.at(i);
    if (!p.trainable) continue;
    if (!p.grad.allFinite())
      throw Error("non-finite gradient in parameter group " + p.name);
    p.moment1 = static_cast<S>(b1) * p.moment1 + static_cast<S>(1.0 - b1) * p.grad;
    p.moment2 = (static_cast<S>(b2) * p.moment2.array() +
                 static_cast<S>(1.0 - b2) * p.grad.array().square())
                    .matrix();
    const auto m_hat = p.moment1.array() / static_cast<S>(correct1);
    const auto v_hat = p.moment2.array() / static_cast<S>(correct2);
    p.value.array() -= static_cast<S>(cfg.learning_rate) * m_hat /
                       (v_hat.sqrt() + static_cast<S>(cfg.epsilon));
  }
}

/// Tracks the best dev score; stops after `patience` consecutive epochs
/// without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool observe(int epoch, double dev_score) {
    if (dev_score > best_score_) {
      best_score_ = dev_score;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    ++stale_;
    return stale_ >= patience_;
  }

  double best_score() const { return best_score_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_score_ = -std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double dev_bleu = 0.0;
};

inline void write_training_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write training log: " + path);
  out << "epoch\tloss\tdev_bleu\n";
  for (const auto& rec : log)
    out << rec.epoch << '\t' << rec.loss << '\t' << rec.dev_bleu << '\n';
}

// ---- checkpoint container -----------------------------------------------------
// "MMTC" | version 0x01 | tensor count u32 | per tensor:
//   name length u32 | name bytes | rows u32 | cols u32 | rows*cols f32 LE row-major

inline constexpr char kCheckpointMagic[4] = {'M', 'M', 'T', 'C'};
inline constexpr unsigned char kCheckpointVersion = 0x01;

template <class S>
void save_checkpoint(const ParamStore<S>& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  binio::write_magic(out, kCheckpointMagic, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(store.count()));
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto& p = store.at(i);
    binio::write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        binio::write_f32(out, static_cast<float>(p.value(r, c)));
  }
  if (!out) throw Error("write failed: " + path);
}

/// Loads tensors by name into an already-constructed store. Every stored
/// tensor must match a registered parameter and vice versa.
template <class S>
void load_checkpoint(ParamStore<S>& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  binio::read_magic(in, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  const std::uint32_t count = binio::read_u32(in, "checkpoint tensor count");
  if (count != store.count())
    throw Error("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                std::to_string(store.count()));
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = binio::read_u32(in, "checkpoint name length");
    if (name_len > 4096) throw DimOverflowError("checkpoint tensor name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw TruncatedFileError("truncated file while reading checkpoint tensor name");
    const std::uint32_t rows = binio::read_u32(in, "checkpoint rows");
    const std::uint32_t cols = binio::read_u32(in, "checkpoint cols");
    const std::uint64_t total = static_cast<std::uint64_t>(rows) * cols;
    if (total > (1ULL << 28))
      throw DimOverflowError("checkpoint tensor " + name + " dimensions overflow");
    auto* p = store.find(name);
    if (!p) throw Error("checkpoint tensor " + name + " is not a model parameter");
    if (p->value.rows() != static_cast<Eigen::Index>(rows) ||
        p->value.cols() != static_cast<Eigen::Index>(cols))
      throw Error("checkpoint tensor " + name + " has shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", model expects " + std::to_string(p->value.rows()) +
                  "x" + std::to_string(p->value.cols()));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        p->value(r, c) =
            static_cast<S>(binio::read_f32(in, "checkpoint tensor " + name));
  }
}

// ---- gradient checking -----------------------------------------------------------

struct GroupCheck {
  std::string name;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double max_relative_error = 0.0;
};

/// Central finite differences against the tape's analytic gradients.
/// `build` must construct the scalar loss on the given tape from the current
/// parameter values, deterministically (no dropout).
template <class S>
GradCheckReport gradient_check(ParamStore<S>& store,
                               const std::function<Var<S>(Tape<S>&)>& build,
                               double step_size = 1e-5) {
  store.zero_grads();
  {
    Tape<S> tape;
    auto loss = build(tape);
    tape.backward(loss);
  }
  auto eval = [&]() -> double {
    Tape<S> tape;
    return static_cast<double>(build(tape).scalar());
  };

  GradCheckReport report;
  for (std::size_t g = 0; g < store.count(); ++g) {
    auto& p = store.at(g);
    GroupCheck group;
    group.name = p.name;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const S saved = p.value(r, c);
        p.value(r, c) = saved + static_cast<S>(step_size);
        const double up = eval();
        p.value(r, c) = saved - static_cast<S>(step_size);
        const double down = eval();
        p.value(r, c) = saved;
        const double numeric = (up - down) / (2.0 * step_size);
        const double analytic = static_cast<double>(p.grad(r, c));
        const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        group.max_relative_error =
            std::max(group.max_relative_error, std::abs(analytic - numeric) / denom);
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, group.max_relative_error);
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace mmt::training
