#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmt/core/errors.hpp"

namespace mmt {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is reset.
template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const MatX<S>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S scalar() const {
    assert(value().size() == 1);
    return value()(0, 0);
  }
};

/// Reverse-mode tape over dense matrices. Nodes are created in evaluation
/// order, so walking them backwards is a valid topological order.
template <class S>
class Tape {
 public:
  using Mat = MatX<S>;

  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Node&)> backward;  // empty for constants
  };

  Var<S> constant(Mat v) {
    return push(std::move(v), {});
  }

  Var<S> constant_scalar(S v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Leaf whose gradient is written to `*grad_sink` when backward reaches it.
  Var<S> leaf(const Mat& value, Mat* grad_sink) {
    return push(value, [grad_sink](Tape&, const Node& n) { *grad_sink += n.grad; });
  }

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Mat& grad_mut(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::size_t size() const { return nodes_.size(); }

  void reset() { nodes_.clear(); }

  /// Propagate d(root)/d(everything). `root` must be 1x1. `seed` scales the
  /// whole gradient, which lets several losses share one accumulation pass.
  void backward(Var<S> root, S seed = S(1)) {
    check(root.value().size() == 1, "backward: root must be scalar");
    nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) += seed;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, n);
    }
  }

  Var<S> push(Mat value, std::function<void(Tape&, const Node&)> backward) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  static void check(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {
template <class S>
Tape<S>& same_tape(Var<S> a, Var<S> b) {
  Tape<S>::check(a.tape == b.tape, "tape op: operands belong to different tapes");
  return *a.tape;
}
}  // namespace detail

// ---- elementwise and linear ops -------------------------------------------

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  auto& t = detail::same_tape(a, b);
  t.check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  MatX<S> v = a.value() * b.value();
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), [ia, ib](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).noalias() += n.grad * tp.value(ib).transpose();
    tp.grad_mut(ib).noalias() += tp.value(ia).transpose() * n.grad;
  });
}

template <class S>
Var<S> operator+(Var<S> a, Var<S> b) {
  auto& t = detail::same_tape(a, b);
  t.check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  MatX<S> v = a.value() + b.value();
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), [ia, ib](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad;
    tp.grad_mut(ib) += n.grad;
  });
}

template <class S>
Var<S> operator-(Var<S> a, Var<S> b) {
  auto& t = detail::same_tape(a, b);
  t.check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  MatX<S> v = a.value() - b.value();
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), [ia, ib](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad;
    tp.grad_mut(ib) -= n.grad;
  });
}

/// Hadamard product.
template <class S>
Var<S> cmul(Var<S> a, Var<S> b) {
  auto& t = detail::same_tape(a, b);
  t.check(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
  MatX<S> v = a.value().cwiseProduct(b.value());
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), [ia, ib](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad.cwiseProduct(tp.value(ib));
    tp.grad_mut(ib) += n.grad.cwiseProduct(tp.value(ia));
  });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
  auto& t = *a.tape;
  MatX<S> v = a.value() * c;
  int ia = a.id;
  return t.push(std::move(v), [ia, c](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad * c;
  });
}

template <class S>
Var<S> operator*(S c, Var<S> a) {
  return scale(a, c);
}

/// Multiply matrix `a` by 1x1 node `s`.
template <class S>
Var<S> scale_by(Var<S> a, Var<S> s) {
  auto& t = detail::same_tape(a, s);
  t.check(s.value().size() == 1, "scale_by: scale must be 1x1");
  MatX<S> v = a.value() * s.value()(0, 0);
  int ia = a.id, is = s.id;
  return t.push(std::move(v), [ia, is](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad * tp.value(is)(0, 0);
    tp.grad_mut(is)(0, 0) += n.grad.cwiseProduct(tp.value(ia)).sum();
  });
}

/// Elementwise reciprocal.
template <class S>
Var<S> inv(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v = a.value().cwiseInverse();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) -= n.grad.cwiseProduct(n.value.cwiseProduct(n.value));
  });
}

template <class S>
Var<S> tanh_v(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v = a.value().array().tanh().matrix();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).array() +=
        n.grad.array() * (S(1) - n.value.array() * n.value.array());
  });
}

template <class S>
Var<S> sigmoid_v(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v =
      (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).array() += n.grad.array() * n.value.array() * (S(1) - n.value.array());
  });
}

template <class S>
Var<S> log_v(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v = a.value().array().log().matrix();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).array() += n.grad.array() / tp.value(ia).array();
  });
}

/// max(a, lo) elementwise; gradient passes only where a > lo.
template <class S>
Var<S> clamp_min(Var<S> a, S lo) {
  auto& t = *a.tape;
  MatX<S> v = a.value().cwiseMax(lo);
  int ia = a.id;
  return t.push(std::move(v), [ia, lo](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).array() +=
        n.grad.array() * (tp.value(ia).array() > lo).template cast<S>();
  });
}

// ---- shape ops -------------------------------------------------------------

template <class S>
Var<S> transpose(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v = a.value().transpose();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad.transpose();
  });
}

template <class S>
Var<S> rows_of(Var<S> a, Eigen::Index r0, Eigen::Index n_rows) {
  auto& t = *a.tape;
  t.check(r0 >= 0 && r0 + n_rows <= a.rows(), "rows_of: slice out of range");
  MatX<S> v = a.value().middleRows(r0, n_rows);
  int ia = a.id;
  return t.push(std::move(v), [ia, r0, n_rows](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).middleRows(r0, n_rows) += n.grad;
  });
}

template <class S>
Var<S> row_of(Var<S> a, Eigen::Index r) {
  return rows_of(a, r, 1);
}

/// Stack vertically: rows(a) + rows(b), same column count.
template <class S>
Var<S> vstack(Var<S> a, Var<S> b) {
  auto& t = detail::same_tape(a, b);
  t.check(a.cols() == b.cols(), "vstack: column counts differ");
  MatX<S> v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.value();
  v.bottomRows(b.rows()) = b.value();
  int ia = a.id, ib = b.id;
  Eigen::Index ra = a.rows(), rb = b.rows();
  return t.push(std::move(v), [ia, ib, ra, rb](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad.topRows(ra);
    tp.grad_mut(ib) += n.grad.bottomRows(rb);
  });
}

template <class S>
Var<S> hstack(const std::vector<Var<S>>& parts) {
  Tape<S>::check(!parts.empty(), "hstack: no parts");
  auto& t = *parts.front().tape;
  Eigen::Index rows = parts.front().rows(), cols = 0;
  for (auto p : parts) {
    t.check(p.tape == &t, "hstack: operands belong to different tapes");
    t.check(p.rows() == rows, "hstack: row counts differ");
    cols += p.cols();
  }
  MatX<S> v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index c = 0;
  for (auto p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id);
    widths.push_back(p.cols());
    c += p.cols();
  }
  return t.push(std::move(v), [ids, widths](Tape<S>& tp, const typename Tape<S>::Node& n) {
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.grad_mut(ids[k]) += n.grad.middleCols(c, widths[k]);
      c += widths[k];
    }
  });
}

/// Add a row vector (1xK) to every row of a (NxK).
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> v) {
  auto& t = detail::same_tape(a, v);
  t.check(v.rows() == 1 && v.cols() == a.cols(), "add_rowvec: need 1 x cols(a)");
  MatX<S> out = a.value().rowwise() + v.value().row(0);
  int ia = a.id, iv = v.id;
  return t.push(std::move(out), [ia, iv](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia) += n.grad;
    tp.grad_mut(iv) += n.grad.colwise().sum();
  });
}

// ---- reductions and softmax -------------------------------------------------

template <class S>
Var<S> sum(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v(1, 1);
  v(0, 0) = a.value().sum();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    tp.grad_mut(ia).array() += n.grad(0, 0);
  });
}

/// Softmax of a column vector (Nx1), with max subtraction.
template <class S>
Var<S> softmax(Var<S> a) {
  auto& t = *a.tape;
  t.check(a.cols() == 1, "softmax: expects a column vector");
  const auto& x = a.value();
  MatX<S> v = (x.array() - x.maxCoeff()).exp().matrix();
  v /= v.sum();
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    const S dot = n.grad.cwiseProduct(n.value).sum();
    tp.grad_mut(ia).array() += n.value.array() * (n.grad.array() - dot);
  });
}

/// Row-wise softmax of a matrix.
template <class S>
Var<S> softmax_rows(Var<S> a) {
  auto& t = *a.tape;
  MatX<S> v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    row = (row.array() - row.maxCoeff()).exp().matrix();
    row /= row.sum();
  }
  int ia = a.id;
  return t.push(std::move(v), [ia](Tape<S>& tp, const typename Tape<S>::Node& n) {
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      const S dot = n.grad.row(r).cwiseProduct(n.value.row(r)).sum();
      tp.grad_mut(ia).row(r).array() +=
          n.value.row(r).array() * (n.grad.row(r).array() - dot);
    }
  });
}

}  // namespace mmt
