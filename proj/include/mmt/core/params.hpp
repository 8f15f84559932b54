#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/core/rng.hpp"
#include "mmt/core/tape.hpp"

namespace mmt {

template <class S>
struct Parameter {
  std::string name;
  MatX<S> value;
  MatX<S> grad;
  // Adam accumulators, owned here so optimizer state serializes with the store.
  MatX<S> moment1;
  MatX<S> moment2;
  bool trainable = true;
};

/// Owns every trainable tensor of a model. Registration order is fixed, which
/// makes seeded initialization and update order deterministic.
template <class S>
class ParamStore {
 public:
  Parameter<S>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw Error("parameter registered twice: " + name);
    params_.push_back(Parameter<S>{name, MatX<S>::Zero(rows, cols),
                                   MatX<S>::Zero(rows, cols), MatX<S>::Zero(rows, cols),
                                   MatX<S>::Zero(rows, cols), true});
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  Parameter<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::size_t count() const { return params_.size(); }
  Parameter<S>& at(std::size_t i) { return params_[i]; }
  const Parameter<S>& at(std::size_t i) const { return params_[i]; }

  void init_uniform(Rng& rng, S lo, S hi) {
    for (auto& p : params_)
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c)
          p.value(r, c) = static_cast<S>(rng.uniform(static_cast<double>(lo),
                                                     static_cast<double>(hi)));
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Deep copy of values only (snapshots for best-checkpoint tracking).
  std::vector<MatX<S>> snapshot_values() const {
    std::vector<MatX<S>> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore_values(const std::vector<MatX<S>>& snap) {
    if (snap.size() != params_.size())
      throw Error("parameter snapshot does not match store layout");
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i].value = snap[i];
  }

 private:
  std::deque<Parameter<S>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Put a parameter on the tape; backward accumulates into p.grad.
template <class S>
Var<S> leaf(Tape<S>& tape, Parameter<S>& p) {
  return tape.leaf(p.value, &p.grad);
}

}  // namespace mmt
