#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Each node owns its value
// and, when any input requires a gradient, a closure that pushes the node's
// upstream gradient into its parents. Nodes that depend only on constants carry
// no closure, so disabled branches cost nothing and provably receive no
// gradient.

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lddu/tensor.hpp"

namespace lddu::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  /// With grad_enabled = false parameters enter as constants and no closures are recorded.
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  /// Free input that receives a gradient (used by gradient checks on inputs).
  Var leaf(Matrix value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a trainable parameter. Repeated calls reuse one node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(p.value, grad_enabled_, nullptr);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  void set_backward(std::size_t id, Backward backward) { nodes_[id].backward = std::move(backward); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw ShapeError("backward: root must be a scalar, got " + shape_str(root.value()));
    }
    if (!nodes_[root.id()].requires_grad) return;
    accumulate(root.id(), Matrix::Ones(1, 1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
  }

  /// Gradient of the last backward pass; zeros when the node was not reached.
  Matrix grad(const Var& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds each bound parameter's node gradient into Parameter::grad.
  void flush_param_grads() {
    for (auto& [p, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.size() != 0) p->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad;
    Backward backward;
  };

  bool grad_enabled_ = true;
  std::deque<Node> nodes_;  // deque: values stay addressable while the tape grows
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }
inline double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("scalar(): not a 1x1 value, got " + shape_str(value()));
  return value()(0, 0);
}

namespace detail {

inline bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars)
    if (v.requires_grad()) return true;
  return false;
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  }
}

/// Elementwise unary map with derivative f'(x, y) evaluated from input and output.
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tape& t = *a.tape();
  Matrix y = a.value().unaryExpr(f);
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  Var out = t.push(std::move(y), true, nullptr);
  const std::size_t io = out.id();
  t.set_backward(io, [ia, io, df](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    const Matrix& yv = tp.value(io);
    Matrix d(x.rows(), x.cols());
    for (Index k = 0; k < x.size(); ++k) d(k) = g(k) * df(x(k), yv(k));
    tp.accumulate(ia, d);
  });
  return out;
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value() * b.value();
  if (!detail::any_grad({a, b})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(y), true, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

inline Var operator+(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  Tape& t = *a.tape();
  Matrix y = a.value() + b.value();
  if (!detail::any_grad({a, b})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(y), true, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

inline Var operator-(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  Tape& t = *a.tape();
  Matrix y = a.value() - b.value();
  if (!detail::any_grad({a, b})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(y), true, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

/// Hadamard product.
inline Var operator*(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  Tape& t = *a.tape();
  Matrix y = a.value().cwiseProduct(b.value());
  if (!detail::any_grad({a, b})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(y), true, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

inline Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix y = a.value() * s;
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  return t.push(std::move(y), true, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

inline Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix y = a.value().array() + s;
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  return t.push(std::move(y), true, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

/// a [n x k] + bias [1 x k] broadcast over rows.
inline Var add_row(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_str(a.value()) + " + " + shape_str(bias.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().rowwise() + bias.value().row(0);
  if (!detail::any_grad({a, bias})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), ib = bias.id();
  return t.push(std::move(y), true, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

/// a [n x k] scaled per row by s [n x 1].
inline Var scale_rows(const Var& a, const Var& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw ShapeError("scale_rows: " + shape_str(a.value()) + " by " + shape_str(s.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().array().colwise() * s.value().col(0).array();
  if (!detail::any_grad({a, s})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), is = s.id();
  return t.push(std::move(y), true, [ia, is](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, g.array().colwise() * tp.value(is).col(0).array());
    }
    if (tp.requires_grad(is)) {
      tp.accumulate(is, g.cwiseProduct(tp.value(ia)).rowwise().sum());
    }
  });
}

/// a [n x k] divided per row by s [n x 1].
inline Var divide_rows(const Var& a, const Var& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw ShapeError("divide_rows: " + shape_str(a.value()) + " by " + shape_str(s.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().array().colwise() / s.value().col(0).array();
  if (!detail::any_grad({a, s})) return t.constant(std::move(y));
  const std::size_t ia = a.id(), is = s.id();
  return t.push(std::move(y), true, [ia, is](Tape& tp, const Matrix& g) {
    const auto sv = tp.value(is).col(0).array();
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.array().colwise() / sv);
    if (tp.requires_grad(is)) {
      Vector dot = g.cwiseProduct(tp.value(ia)).rowwise().sum();
      tp.accumulate(is, -(dot.array() / (sv * sv)).matrix());
    }
  });
}

inline Var transpose(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().transpose();
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  return t.push(std::move(y), true, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

inline Var sum(const Var& a) {
  Tape& t = *a.tape();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(std::move(y), true,
                [ia, r, c](Tape& tp, const Matrix& g) { tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Row means [n x 1].
inline Var row_mean(const Var& a) {
  Tape& t = *a.tape();
  const double inv = 1.0 / static_cast<double>(a.cols());
  Matrix y = a.value().rowwise().sum() * inv;
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  const Index c = a.cols();
  return t.push(std::move(y), true, [ia, c, inv](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.col(0).replicate(1, c) * inv);
  });
}

/// Euclidean norm of each row [n x 1].
inline Var row_norm(const Var& a, double eps = 0.0) {
  Tape& t = *a.tape();
  Matrix y = (a.value().rowwise().norm().array() + eps).matrix();
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  return t.push(std::move(y), true, [ia](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Vector n = x.rowwise().norm();
    Matrix d(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const double s = n(i) > 0.0 ? g(i, 0) / n(i) : 0.0;
      d.row(i) = x.row(i) * s;
    }
    tp.accumulate(ia, d);
  });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline double softplus_scalar(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline Var softplus(const Var& a) {
  return detail::unary(
      a, softplus_scalar,
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

/// tanh approximation of GELU.
inline Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        const double th = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * k * x * x);
      });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var abs(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var reciprocal(const Var& a) {
  return detail::unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

/// Clamp into [lo, hi]; the gradient is passed only where the input is inside.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Row-wise softmax restricted to columns where valid(c) is true; invalid
/// columns get exactly zero probability and pass no gradient.
inline Var masked_softmax_rows(const Var& a, const std::vector<bool>& valid) {
  if (static_cast<Index>(valid.size()) != a.cols()) {
    throw ShapeError("masked_softmax_rows: mask length " + std::to_string(valid.size()) + " vs " +
                     shape_str(a.value()));
  }
  bool any = false;
  for (bool v : valid) any = any || v;
  if (!any) throw ValidationError("masked_softmax_rows: no valid positions to attend");
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j)
      if (valid[j]) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!valid[j]) continue;
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (Index j = 0; j < x.cols(); ++j) y(i, j) /= z;
  }
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  Var out = t.push(std::move(y), true, nullptr);
  const std::size_t io = out.id();
  t.set_backward(io, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& p = tp.value(io);
    Vector dot = g.cwiseProduct(p).rowwise().sum();
    Matrix d = p.cwiseProduct(g - dot.replicate(1, g.cols()));
    tp.accumulate(ia, d);
  });
  return out;
}

/// Layer normalization of each row with gain and bias [1 x k].
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Index k = x.cols();
  if (gain.rows() != 1 || gain.cols() != k || bias.rows() != 1 || bias.cols() != k) {
    throw ShapeError("layer_norm_rows: gain/bias must be [1 x " + std::to_string(k) + "]");
  }
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), k);
  Vector inv_std(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  if (!detail::any_grad({x, gain, bias})) return t.constant(std::move(y));
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.push(std::move(y), true,
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Matrix& g) {
                  const RowVector gv = tp.value(ig).row(0);
                  if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                  if (tp.requires_grad(ix)) {
                    Matrix gx(g.rows(), g.cols());
                    for (Index i = 0; i < g.rows(); ++i) {
                      RowVector gh = g.row(i).cwiseProduct(gv);
                      const double m1 = gh.mean();
                      const double m2 = gh.cwiseProduct(xhat.row(i)).mean();
                      gx.row(i) = inv_std(i) * (gh.array() - m1 - xhat.row(i).array() * m2);
                    }
                    tp.accumulate(ix, gx);
                  }
                });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Index r = parts.front().rows();
  Index c = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
    c += p.cols();
    grad = grad || p.requires_grad();
  }
  Matrix y(r, c);
  Index off = 0;
  std::vector<std::pair<std::size_t, Index>> spans;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    off += p.cols();
  }
  if (!grad) return t.constant(std::move(y));
  return t.push(std::move(y), true, [spans = std::move(spans)](Tape& tp, const Matrix& g) {
    Index o = 0;
    for (auto [id, w] : spans) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(o, w));
      o += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  const Index c = parts.front().cols();
  Index r = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column mismatch");
    r += p.rows();
    grad = grad || p.requires_grad();
  }
  Matrix y(r, c);
  Index off = 0;
  std::vector<std::pair<std::size_t, Index>> spans;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    off += p.rows();
  }
  if (!grad) return t.constant(std::move(y));
  return t.push(std::move(y), true, [spans = std::move(spans)](Tape& tp, const Matrix& g) {
    Index o = 0;
    for (auto [id, h] : spans) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(o, h));
      o += h;
    }
  });
}

inline Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Tape& t = *a.tape();
  Matrix y = a.value().middleCols(start, count);
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(std::move(y), true, [ia, r, c, start, count](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleCols(start, count) = g;
    tp.accumulate(ia, d);
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Tape& t = *a.tape();
  Matrix y = a.value().middleRows(start, count);
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(std::move(y), true, [ia, r, c, start, count](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleRows(start, count) = g;
    tp.accumulate(ia, d);
  });
}

/// Row-major flattening of [n x k] into [1 x n*k].
inline Var flatten(const Var& a) {
  Tape& t = *a.tape();
  const Index r = a.rows(), c = a.cols();
  Matrix y(1, r * c);
  for (Index i = 0; i < r; ++i) y.block(0, i * c, 1, c) = a.value().row(i);
  if (!a.requires_grad()) return t.constant(std::move(y));
  const std::size_t ia = a.id();
  return t.push(std::move(y), true, [ia, r, c](Tape& tp, const Matrix& g) {
    Matrix d(r, c);
    for (Index i = 0; i < r; ++i) d.row(i) = g.block(0, i * c, 1, c);
    tp.accumulate(ia, d);
  });
}

/// Generic fused node: value plus per-parent gradient maps. `grads(g)` returns,
/// for each parent in order, the gradient contribution given upstream g.
inline Var fused(const std::vector<Var>& parents, Matrix value,
                 std::function<std::vector<Matrix>(const Matrix&)> grads) {
  if (parents.empty()) throw ShapeError("fused: no parents");
  Tape& t = *parents.front().tape();
  bool grad = false;
  std::vector<std::size_t> ids;
  for (const Var& p : parents) {
    grad = grad || p.requires_grad();
    ids.push_back(p.id());
  }
  if (!grad) return t.constant(std::move(value));
  return t.push(std::move(value), true, [ids = std::move(ids), grads = std::move(grads)](Tape& tp, const Matrix& g) {
    std::vector<Matrix> gs = grads(g);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (tp.requires_grad(ids[k]) && gs[k].size() != 0) tp.accumulate(ids[k], gs[k]);
  });
}

inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator-(double s, const Var& a) { return add_scalar(scale(a, -1.0), s); }

}  // namespace lddu::ad
