#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"

// Reverse-mode differentiation over dense real matrices.
//
// A Tape records primitives in execution order; each node owns its value, an
// accumulated gradient and a backward rule that pushes the node's gradient to
// its parents. Because nodes are appended in execution order, walking the tape
// backwards visits every node after all of its consumers.
//
// Shapes: every value is a 2-D matrix. Vectors are n x 1 or 1 x n, scalars 1 x 1.
// Binary elementwise ops broadcast a 1 x 1, 1 x c or r x 1 operand; nothing else.
namespace curvclust::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the gradient of the node being processed.
using BackwardFn = std::function<void(const Matrix& grad)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is reported after backward().
  Var variable(Matrix value) { return push("leaf", std::move(value), true, {}); }
  Var constant(Matrix value) { return push("const", std::move(value), false, {}); }
  Var constant(double x) { return constant(Matrix::Constant(1, 1, x)); }

  // Records a primitive. The node requires a gradient when any parent does; the
  // backward rule is dropped otherwise.
  Var record(std::string op, Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(std::move(op), std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  Var record(std::string op, Matrix value, std::span<const Var> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var& p : parents) {
      check_owned(p);
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(op), std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  // Adds `g` into v's gradient; no-op for nodes that need none.
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_.at(v.id());
    if (!n.requires_grad) return;
    if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
      throw ShapeError("gradient shape mismatch in backward of '" + n.op + "'");
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Gradient of the last backward() loss; zeros for leaves the loss ignores.
  Matrix grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Single use: a second call on the same tape throws.
  void backward(Var loss) {
    check_owned(loss);
    if (consumed_) throw std::logic_error("tape already consumed by backward()");
    const Node& root = nodes_.at(loss.id());
    if (root.value.rows() != 1 || root.value.cols() != 1) {
      throw ShapeError("backward() needs a scalar loss");
    }
    if (!std::isfinite(root.value(0, 0))) {
      throw NumericDomainError("non-finite loss; first non-finite value produced by " +
                               first_non_finite());
    }
    consumed_ = true;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.backward || n.grad.size() == 0) continue;
      // Copy: the rule may accumulate into this node's parents while we read it.
      Matrix g = n.grad;
      n.backward(g);
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // "op#index" of the first recorded node holding a NaN or infinity.
  std::string first_non_finite() const {
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      if (!nodes_[k].value.allFinite()) return nodes_[k].op + "#" + std::to_string(k);
    }
    return "<none>";
  }

  void check_owned(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("variable from another tape");
  }

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(std::string op, Matrix value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(op), std::move(value), Matrix{}, requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

inline double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() on non-scalar");
  return v(0, 0);
}

namespace detail {

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Shape of an elementwise result, or ShapeError if the operands don't broadcast.
inline std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const Matrix& a, const Matrix& b,
                                                             const char* op) {
  auto dim = [&](Eigen::Index x, Eigen::Index y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  };
  return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

inline Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to `like`'s shape.
inline Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  Matrix r = g;
  if (like.rows() == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (like.cols() == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <typename F, typename D>
Var unary(const char* op, Var a, F f, D deriv) {
  Tape& t = *a.tape();
  Matrix y = a.value().unaryExpr(f);
  return t.record(op, y, {a}, [&t, a, y, deriv](const Matrix& g) {
    const Matrix& x = a.value();
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) d.data()[k] = deriv(x.data()[k], y.data()[k]);
    t.accumulate(a, g.cwiseProduct(d));
  });
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw NumericDomainError(what);
}

}  // namespace detail

// ---- arithmetic ---------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = *a.tape();
  auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "add");
  Matrix y = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  return t.record("add", std::move(y), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, detail::reduce_to(g, a.value()));
    t.accumulate(b, detail::reduce_to(g, b.value()));
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape();
  auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "sub");
  Matrix y = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  return t.record("sub", std::move(y), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, detail::reduce_to(g, a.value()));
    t.accumulate(b, detail::reduce_to(-g, b.value()));
  });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& t = *a.tape();
  auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "mul");
  Matrix y = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  return t.record("mul", std::move(y), {a, b}, [&t, a, b, r, c](const Matrix& g) {
    t.accumulate(a, detail::reduce_to(g.cwiseProduct(detail::expand(b.value(), r, c)), a.value()));
    t.accumulate(b, detail::reduce_to(g.cwiseProduct(detail::expand(a.value(), r, c)), b.value()));
  });
}

inline Var div(Var a, Var b) {
  Tape& t = *a.tape();
  auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "div");
  Matrix bb = detail::expand(b.value(), r, c);
  detail::require((bb.array() != 0.0).all(), "div: division by zero");
  Matrix y = detail::expand(a.value(), r, c).cwiseQuotient(bb);
  return t.record("div", y, {a, b}, [&t, a, b, r, c, y](const Matrix& g) {
    Matrix bb = detail::expand(b.value(), r, c);
    t.accumulate(a, detail::reduce_to(g.cwiseQuotient(bb), a.value()));
    t.accumulate(b, detail::reduce_to(-g.cwiseProduct(y).cwiseQuotient(bb), b.value()));
  });
}

inline Var neg(Var a) {
  Tape& t = *a.tape();
  return t.record("neg", -a.value(), {a}, [&t, a](const Matrix& g) { t.accumulate(a, -g); });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record("scale", a.value() * s, {a}, [&t, a, s](const Matrix& g) { t.accumulate(a, g * s); });
}

inline Var shift(Var a, double s) {
  Tape& t = *a.tape();
  Matrix y = a.value().array() + s;
  return t.record("shift", std::move(y), {a}, [&t, a](const Matrix& g) { t.accumulate(a, g); });
}

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + detail::shape_str(a.value()) + " * " + detail::shape_str(b.value()));
  }
  Matrix y = a.value() * b.value();
  return t.record("matmul", std::move(y), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record("transpose", a.value().transpose(), {a},
                  [&t, a](const Matrix& g) { t.accumulate(a, g.transpose()); });
}

// ---- structure ----------------------------------------------------------

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record("concat_cols", std::move(y), ps, [&t, ps](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : ps) {
      t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record("concat_rows", std::move(y), ps, [&t, ps](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : ps) {
      t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Matrix y = a.value().middleCols(start, count);
  return t.record("slice_cols", std::move(y), {a}, [&t, a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Matrix y = a.value().middleRows(start, count);
  return t.record("slice_rows", std::move(y), {a}, [&t, a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

// out.row(k) = a.row(index[k]).
inline Var gather_rows(Var a, std::vector<Eigen::Index> index) {
  Tape& t = *a.tape();
  Matrix y(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  return t.record("gather_rows", std::move(y), {a}, [&t, a, index = std::move(index)](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < index.size(); ++k) full.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(a, full);
  });
}

// out.row(index[k]) += a.row(k), out has `rows` rows.
inline Var scatter_add_rows(Var a, std::vector<Eigen::Index> index, Eigen::Index rows) {
  Tape& t = *a.tape();
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("scatter_add_rows: index size");
  Matrix y = Matrix::Zero(rows, a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= rows) throw ShapeError("scatter_add_rows: index out of range");
    y.row(index[k]) += a.value().row(static_cast<Eigen::Index>(k));
  }
  return t.record("scatter_add_rows", std::move(y), {a}, [&t, a, index = std::move(index)](const Matrix& g) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < index.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = g.row(index[k]);
    t.accumulate(a, out);
  });
}

// Row k of the result comes from `a` where use_a[k], else from `b`.
inline Var select_rows(const std::vector<bool>& use_a, Var a, Var b) {
  Tape& t = *a.tape();
  if (a.rows() != b.rows() || a.cols() != b.cols() || static_cast<Eigen::Index>(use_a.size()) != a.rows()) {
    throw ShapeError("select_rows: shape mismatch");
  }
  Matrix y = b.value();
  for (std::size_t k = 0; k < use_a.size(); ++k) {
    if (use_a[k]) y.row(static_cast<Eigen::Index>(k)) = a.value().row(static_cast<Eigen::Index>(k));
  }
  return t.record("select_rows", std::move(y), {a, b}, [&t, a, b, use_a](const Matrix& g) {
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = g;
    for (std::size_t k = 0; k < use_a.size(); ++k) {
      if (use_a[k]) {
        ga.row(static_cast<Eigen::Index>(k)) = g.row(static_cast<Eigen::Index>(k));
        gb.row(static_cast<Eigen::Index>(k)).setZero();
      }
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

// Same value, no gradient flow.
inline Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

// ---- reductions ---------------------------------------------------------

inline Var sum(Var a) {
  Tape& t = *a.tape();
  return t.record("sum", Matrix::Constant(1, 1, a.value().sum()), {a}, [&t, a](const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// r x c -> r x 1
inline Var row_sum(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value().rowwise().sum();
  return t.record("row_sum", std::move(y), {a},
                  [&t, a](const Matrix& g) { t.accumulate(a, g.replicate(1, a.cols())); });
}

// r x c -> 1 x c
inline Var col_sum(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value().colwise().sum();
  return t.record("col_sum", std::move(y), {a},
                  [&t, a](const Matrix& g) { t.accumulate(a, g.replicate(a.rows(), 1)); });
}

// Euclidean norm of each row, r x 1. Subgradient 0 at a zero row.
inline Var norm_rows(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value().rowwise().norm();
  return t.record("norm_rows", y, {a}, [&t, a, y](const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (y(i, 0) > 0.0) d.row(i) = a.value().row(i) * (g(i, 0) / y(i, 0));
    }
    t.accumulate(a, d);
  });
}

// ---- elementwise transcendental ----------------------------------------

inline Var exp(Var a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  detail::require((a.value().array() > 0.0).all(), "log of nonpositive value");
  return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// Gradient at exactly 0 is taken as 0.
inline Var sqrt(Var a) {
  detail::require((a.value().array() >= 0.0).all(), "sqrt of negative value");
  return detail::unary("sqrt", a, [](double x) { return std::sqrt(x); },
                       [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// Subgradient 0 at 0.
inline Var abs(Var a) {
  return detail::unary("abs", a, [](double x) { return std::abs(x); },
                       [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var pow(Var a, double p) {
  if (p != std::floor(p)) detail::require((a.value().array() >= 0.0).all(), "fractional power of negative value");
  if (p < 0.0) detail::require((a.value().array() != 0.0).all(), "negative power of zero");
  return detail::unary("pow", a, [p](double x) { return std::pow(x, p); },
                       [p](double x, double) { return p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

inline Var square(Var a) {
  return detail::unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var cosh(Var a) {
  return detail::unary("cosh", a, [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

inline Var sinh(Var a) {
  return detail::unary("sinh", a, [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

inline Var tanh(Var a) {
  return detail::unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// Domain x >= 1; the derivative at exactly 1 is taken as 0 (callers clamp first).
inline Var acosh(Var a) {
  detail::require((a.value().array() >= 1.0).all(), "acosh of value below 1");
  return detail::unary("acosh", a, [](double x) { return std::acosh(x); },
                       [](double x, double) { return x > 1.0 ? 1.0 / std::sqrt(x * x - 1.0) : 0.0; });
}

inline Var asinh(Var a) {
  return detail::unary("asinh", a, [](double x) { return std::asinh(x); },
                       [](double x, double) { return 1.0 / std::sqrt(x * x + 1.0); });
}

inline Var cos(Var a) {
  return detail::unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

inline Var sin(Var a) {
  return detail::unary("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

// Domain [-1, 1]; derivative at the endpoints taken as 0.
inline Var acos(Var a) {
  detail::require((a.value().array().abs() <= 1.0).all(), "acos outside [-1, 1]");
  return detail::unary("acos", a, [](double x) { return std::acos(x); },
                       [](double x, double) { return std::abs(x) < 1.0 ? -1.0 / std::sqrt(1.0 - x * x) : 0.0; });
}

namespace detail {

inline double sinhc(double x) { return std::abs(x) < 1e-4 ? 1.0 + x * x / 6.0 : std::sinh(x) / x; }
inline double sinhc_deriv(double x) {
  return std::abs(x) < 1e-4 ? x / 3.0 : (x * std::cosh(x) - std::sinh(x)) / (x * x);
}
inline double sinc(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }
inline double sinc_deriv(double x) {
  return std::abs(x) < 1e-4 ? -x / 3.0 : (x * std::cos(x) - std::sin(x)) / (x * x);
}

}  // namespace detail

// sinh(x)/x, continuous through 0.
inline Var sinhc(Var a) {
  return detail::unary("sinhc", a, [](double x) { return detail::sinhc(x); },
                       [](double x, double) { return detail::sinhc_deriv(x); });
}

// sin(x)/x, continuous through 0.
inline Var sinc(Var a) {
  return detail::unary("sinc", a, [](double x) { return detail::sinc(x); },
                       [](double x, double) { return detail::sinc_deriv(x); });
}

// Elementwise atan2(y, x); both operands share one shape.
inline Var atan2(Var y, Var x) {
  Tape& t = *y.tape();
  if (y.rows() != x.rows() || y.cols() != x.cols()) throw ShapeError("atan2: shape mismatch");
  Matrix out = y.value().binaryExpr(x.value(), [](double a, double b) { return std::atan2(a, b); });
  return t.record("atan2", std::move(out), {y, x}, [&t, y, x](const Matrix& g) {
    Matrix r2 = y.value().cwiseAbs2() + x.value().cwiseAbs2();
    Matrix gy(g.rows(), g.cols());
    Matrix gx(g.rows(), g.cols());
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      double d = r2.data()[k];
      gy.data()[k] = d > 0.0 ? g.data()[k] * x.value().data()[k] / d : 0.0;
      gx.data()[k] = d > 0.0 ? -g.data()[k] * y.value().data()[k] / d : 0.0;
    }
    t.accumulate(y, gy);
    t.accumulate(x, gx);
  });
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

inline Var softplus(Var a) {
  return detail::unary("softplus", a, [](double x) { return softplus(x); },
                       [](double x, double) { return sigmoid(x); });
}

// Clamp to [lo, hi]. Gradient passes unchanged strictly inside and is zero
// wherever the value was clamped.
inline Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape();
  Matrix y = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record("clamp", std::move(y), {a}, [&t, a, lo, hi](const Matrix& g) {
    Matrix d = g;
    const Matrix& x = a.value();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (x.data()[k] <= lo || x.data()[k] >= hi) d.data()[k] = 0.0;
    }
    t.accumulate(a, d);
  });
}

inline Var clamp_min(Var a, double lo) { return clamp(a, lo, std::numeric_limits<double>::infinity()); }

// Row-wise softmax.
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return t.record("softmax_rows", y, {a}, [&t, a, y](const Matrix& g) {
    Matrix gy = g.cwiseProduct(y);
    Matrix d = gy - y.cwiseProduct(gy.rowwise().sum().replicate(1, y.cols()));
    t.accumulate(a, d);
  });
}

// Row-wise log-softmax, stabilized by subtracting each row's max.
inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double m = y.row(i).maxCoeff();
    double lse = m + std::log((y.row(i).array() - m).exp().sum());
    y.row(i).array() -= lse;
  }
  return t.record("log_softmax_rows", y, {a}, [&t, a, y](const Matrix& g) {
    Matrix p = y.array().exp();
    Matrix d = g - p.cwiseProduct(g.rowwise().sum().replicate(1, y.cols()));
    t.accumulate(a, d);
  });
}

// Softmax of an n x 1 column within groups: entries k with equal segment[k]
// share one normalization. Empty segments are allowed.
inline Var segment_softmax(Var logits, std::vector<Eigen::Index> segment, Eigen::Index num_segments) {
  Tape& t = *logits.tape();
  if (logits.cols() != 1 || static_cast<Eigen::Index>(segment.size()) != logits.rows()) {
    throw ShapeError("segment_softmax: expects an n x 1 column with n segment ids");
  }
  const Matrix& x = logits.value();
  std::vector<double> mx(static_cast<std::size_t>(num_segments), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] < 0 || segment[k] >= num_segments) throw ShapeError("segment_softmax: bad segment id");
    mx[segment[k]] = std::max(mx[segment[k]], x(static_cast<Eigen::Index>(k), 0));
  }
  std::vector<double> z(static_cast<std::size_t>(num_segments), 0.0);
  Matrix y(x.rows(), 1);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    y(static_cast<Eigen::Index>(k), 0) = std::exp(x(static_cast<Eigen::Index>(k), 0) - mx[segment[k]]);
    z[segment[k]] += y(static_cast<Eigen::Index>(k), 0);
  }
  for (std::size_t k = 0; k < segment.size(); ++k) y(static_cast<Eigen::Index>(k), 0) /= z[segment[k]];
  return t.record("segment_softmax", y, {logits},
                  [&t, logits, y, segment = std::move(segment), num_segments](const Matrix& g) {
                    std::vector<double> dot(static_cast<std::size_t>(num_segments), 0.0);
                    for (std::size_t k = 0; k < segment.size(); ++k) {
                      dot[segment[k]] += g(static_cast<Eigen::Index>(k), 0) * y(static_cast<Eigen::Index>(k), 0);
                    }
                    Matrix d(y.rows(), 1);
                    for (std::size_t k = 0; k < segment.size(); ++k) {
                      auto kk = static_cast<Eigen::Index>(k);
                      d(kk, 0) = y(kk, 0) * (g(kk, 0) - dot[segment[k]]);
                    }
                    t.accumulate(logits, d);
                  });
}

// ---- operator sugar -----------------------------------------------------

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return shift(a, s); }
inline Var operator-(Var a, double s) { return shift(a, -s); }

}  // namespace curvclust::ad
