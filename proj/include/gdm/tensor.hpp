#pragma once

// Dense reverse-mode differentiation over row-major matrices. Every
// differentiable quantity is a node on a Tape; ops append nodes in execution
// order, so the tape is topologically sorted by construction and backward()
// is a single reverse sweep.

#include "gdm/errors.hpp"
#include "gdm/graph.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gdm::tg {

using gdm::Index;
using gdm::Matrix;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// d(loss)/d(this); zeros when the node received no gradient.
  const Matrix& grad() const;
  bool requires_grad() const;
  std::array<Index, 2> shape() const { return {value().rows(), value().cols()}; }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

class Tape {
 public:
  using Adjoint = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, {}, nullptr);
  }
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  /// Appends an op result. `adjoint(tape, self)` reads grad(self) and calls
  /// accumulate() on the inputs; it only runs when some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Adjoint adjoint) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(adjoint));
  }

  Var record(Matrix value, const std::vector<Var>& inputs, Adjoint adjoint) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) {
      check_owned(v);
      needs = needs || nodes_[v.id()].requires_grad;
      ids.push_back(v.id());
    }
    return push(std::move(value), needs, std::move(ids), needs ? std::move(adjoint) : nullptr);
  }

  /// Populates grad() of every node that influences `loss`.
  void backward(Var loss) {
    check_owned(loss);
    if (consumed_) throw StateError("Tape::backward: tape already consumed by a previous backward");
    const Matrix& v = nodes_[loss.id()].value;
    if (v.rows() != 1 || v.cols() != 1)
      throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " + shape_str(v));
    consumed_ = true;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.adjoint && n.grad.size() != 0) n.adjoint(*this, i);
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& value(Var v) const { return nodes_[v.id()].value; }

  const Matrix& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }

  /// grad(input) += delta, skipped for inputs that need no gradient.
  template <class Expr>
  void accumulate(std::size_t id, const Expr& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = delta;
    else
      n.grad += delta;
  }

  void check_owned(const Var& v) const {
    if (v.tape() != this) throw std::invalid_argument("tensorgrad: variable belongs to a different tape");
  }

 private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
  };

  Var push(Matrix value, bool requires_grad, std::vector<std::size_t> inputs, Adjoint adjoint) {
    if (consumed_) throw StateError("tensorgrad: cannot record on a consumed tape");
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(inputs), std::move(adjoint)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }
inline double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::item: not a scalar " + shape_str(v));
  return v(0, 0);
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || a.tape() != b.tape())
    throw std::invalid_argument("tensorgrad: operands belong to different tapes");
  return *a.tape();
}

[[noreturn]] inline void shape_error(const char* op, const Var& a, const Var& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                              shape_str(b.value()));
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g * tp.value(ib).transpose()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(tp.value(ia).transpose() * g));
  });
}

/// Elementwise a + b. `b` may also be a 1 x cols row, added to every row of a.
inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row_bcast = b.rows() == 1 && b.cols() == a.cols();
  if (!same && !row_bcast) detail::shape_error("add", a, b);
  Matrix out = a.value();
  if (same)
    out += b.value();
  else
    out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {a, b}, [same](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(tp.input(self, 0), g);
    if (same)
      tp.accumulate(tp.input(self, 1), g);
    else if (tp.requires_grad(tp.input(self, 1)))
      tp.accumulate(tp.input(self, 1), Matrix(g.colwise().sum()));
  });
}

inline Var scale(Var a, double k) {
  Tape& t = *a.tape();
  return t.record(Matrix(a.value() * k), {a}, [k](Tape& tp, std::size_t self) {
    tp.accumulate(tp.input(self, 0), Matrix(tp.grad(self) * k));
  });
}

inline Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

/// Elementwise product of equal-shape operands.
inline Var hadamard(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g.cwiseProduct(tp.value(ib))));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.cwiseProduct(tp.value(ia))));
  });
}

/// max(a, 0) elementwise; the adjoint uses subgradient 0 at exactly 0.
inline Var relu(Var a) {
  Tape& t = *a.tape();
  return t.record(Matrix(a.value().cwiseMax(0.0)), {a}, [](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(tp.input(self, 0));
    tp.accumulate(tp.input(self, 0), Matrix((x.array() > 0.0).select(tp.grad(self), 0.0)));
  });
}

inline Var max_zero(Var a) { return relu(a); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  return t.record(std::move(out), {a}, [](Tape& tp, std::size_t self) {
    const Matrix& s = tp.value(self);
    tp.accumulate(tp.input(self, 0),
                  Matrix(tp.grad(self).array() * s.array() * (1.0 - s.array())));
  });
}

/// Mean over rows: (n x c) -> (1 x c).
inline Var row_mean(Var a) {
  Tape& t = *a.tape();
  if (a.rows() == 0) throw std::invalid_argument("row_mean: empty input");
  const double inv = 1.0 / static_cast<double>(a.rows());
  return t.record(Matrix(a.value().colwise().sum() * inv), {a}, [inv](Tape& tp, std::size_t self) {
    const std::size_t in = tp.input(self, 0);
    Matrix g(tp.value(in).rows(), tp.value(in).cols());
    g.rowwise() = tp.grad(self).row(0) * inv;
    tp.accumulate(in, g);
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.input(self, 0);
    tp.accumulate(in, Matrix::Constant(tp.value(in).rows(), tp.value(in).cols(), tp.grad(self)(0, 0)));
  });
}

/// Sum of squared entries.
inline Var sq_norm(Var a) {
  Tape& t = *a.tape();
  return t.record(Matrix::Constant(1, 1, a.value().squaredNorm()), {a}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.input(self, 0);
    tp.accumulate(in, Matrix(tp.value(in) * (2.0 * tp.grad(self)(0, 0))));
  });
}

/// Row-wise log-softmax.
inline Var log_softmax(Var a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return t.record(std::move(out), {a}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix p = tp.value(self).array().exp().matrix();
    Matrix dx = g;
    for (Index r = 0; r < g.rows(); ++r) dx.row(r) -= p.row(r) * g.row(r).sum();
    tp.accumulate(tp.input(self, 0), dx);
  });
}

/// Mean negative log-likelihood of row r's label labels[r] under log-probs.
inline Var nll(Var logp, std::span<const int> labels) {
  Tape& t = *logp.tape();
  if (static_cast<Index>(labels.size()) != logp.rows())
    throw std::invalid_argument("nll: " + std::to_string(labels.size()) + " labels for " +
                                shape_str(logp.value()) + " log-probabilities");
  std::vector<int> ys(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < ys.size(); ++r) {
    if (ys[r] < 0 || ys[r] >= logp.cols())
      throw std::invalid_argument("nll: label " + std::to_string(ys[r]) + " out of range");
    total -= logp.value()(static_cast<Index>(r), ys[r]);
  }
  const double inv = 1.0 / static_cast<double>(ys.size());
  return t.record(Matrix::Constant(1, 1, total * inv), {logp}, [ys, inv](Tape& tp, std::size_t self) {
    const std::size_t in = tp.input(self, 0);
    Matrix g = Matrix::Zero(tp.value(in).rows(), tp.value(in).cols());
    const double up = tp.grad(self)(0, 0);
    for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Index>(r), ys[r]) = -up * inv;
    tp.accumulate(in, g);
  });
}

inline Var nll(Var logp, int label) { return nll(logp, std::span<const int>(&label, 1)); }

/// Stacks equal-width rows (1 x c each, or n_i x c) vertically.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.cols() != cols) detail::shape_error("concat_rows", parts.front(), p);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.record(std::move(out), parts, [n = parts.size()](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Index row = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t in = tp.input(self, k);
      const Index h = tp.value(in).rows();
      if (tp.requires_grad(in)) tp.accumulate(in, Matrix(g.middleRows(row, h)));
      row += h;
    }
  });
}

/// Elementwise mean of equal-shape operands.
inline Var mean_of(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("mean_of: no inputs");
  Tape& t = *parts.front().tape();
  Matrix out = Matrix::Zero(parts.front().rows(), parts.front().cols());
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.rows() != out.rows() || p.cols() != out.cols()) detail::shape_error("mean_of", parts.front(), p);
    out += p.value();
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  out *= inv;
  return t.record(std::move(out), parts, [n = parts.size(), inv](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad(self) * inv;
    for (std::size_t k = 0; k < n; ++k) tp.accumulate(tp.input(self, k), g);
  });
}

/// D^-1/2 (A + I) D^-1/2, differentiable in A (relaxed adjacency).
inline Var normalized_adjacency(Var a) {
  Tape& t = *a.tape();
  if (a.rows() != a.cols()) throw std::invalid_argument("normalized_adjacency: not square " + shape_str(a.value()));
  Matrix s = a.value();
  s.diagonal().array() += 1.0;
  const Eigen::VectorXd r = s.rowwise().sum().array().rsqrt();
  Matrix out = r.asDiagonal() * s * r.asDiagonal();
  return t.record(std::move(out), {a}, [r](Tape& tp, std::size_t self) {
    const std::size_t in = tp.input(self, 0);
    const Matrix& g = tp.grad(self);
    Matrix s = tp.value(in);
    s.diagonal().array() += 1.0;
    // N_ij = r_i S_ij r_j with r = d^-1/2, d_i = sum_j S_ij.
    const Matrix gs = g.cwiseProduct(s);
    const Eigen::VectorXd dr = gs * r + gs.transpose() * r;
    const Eigen::VectorXd dd = -0.5 * dr.cwiseProduct(r.cwiseProduct(r.cwiseProduct(r)));
    Matrix da = r.asDiagonal() * g * r.asDiagonal();
    da.colwise() += dd;
    tp.accumulate(in, da);
  });
}

/// Max over entries of |analytic - central difference| / max(1, |analytic|)
/// for the scalar function f at x.
inline double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double h = 1e-4) {
  Matrix analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(x);
    Var loss = f(tape, leaf);
    tape.backward(loss);
    analytic = leaf.grad();
  }
  const auto eval = [&](const Matrix& at) {
    Tape tape;
    return f(tape, tape.leaf(at, false)).item();
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = eval(probe);
    probe.data()[i] = orig - h;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace gdm::tg
