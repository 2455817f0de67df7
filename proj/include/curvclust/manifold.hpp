#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/autodiff.hpp"
#include "curvclust/errors.hpp"

// Constant-curvature factors and their product.
//
// A restricted factor of curvature c != 0 and spatial dimension d lives in
// R^{d+1} as { z = (z_t, z_s) : <z, z>_c = 1/c } with
// <x, y>_c = sgn(c) x_t y_t + x_s . y_s. For c < 0 this is the upper sheet of a
// hyperboloid, for c > 0 a sphere of radius 1/sqrt(c). The pole is
// (|c|^{-1/2}, 0, ..., 0). The free factor is plain R^{d0}.
namespace curvclust {

using Vector = Eigen::VectorXd;

inline constexpr double kConstraintTol = 1e-6;

struct RestrictedFactor {
  int sign = -1;                  // fixed at construction
  double magnitude_param = 0.0;   // curvature magnitude = softplus(magnitude_param)
  std::size_t dim = 2;            // spatial dims; ambient is dim + 1

  static RestrictedFactor with_curvature(double c, std::size_t dim) {
    if (c == 0.0) throw ValidationError("restricted factor curvature must be nonzero");
    return {c < 0.0 ? -1 : 1, ad::softplus_inverse(std::abs(c)), dim};
  }

  double magnitude() const { return ad::softplus(magnitude_param); }
  double curvature() const { return sign * magnitude(); }
  std::size_t ambient_dim() const { return dim + 1; }
};

struct FreeFactor {
  std::size_t dim = 2;
};

struct ProductManifold {
  FreeFactor free;
  std::vector<RestrictedFactor> restricted;

  std::size_t num_restricted() const { return restricted.size(); }

  void validate() const {
    if (free.dim <= 1) throw ValidationError("free factor dimension must exceed 1");
    for (const auto& f : restricted) {
      if (f.sign != 1 && f.sign != -1) throw ValidationError("factor sign must be +1 or -1");
      if (f.dim == 0) throw ValidationError("factor dimension must be positive");
    }
  }
};

// One coordinate block per factor: blocks[0] is the free block (length d0),
// blocks[m] the ambient coordinates on restricted factor m-1.
struct ProductPoint {
  std::vector<Vector> blocks;
};

inline double minkowski_inner(double c, const Vector& x, const Vector& y) {
  const double s = c < 0.0 ? -1.0 : 1.0;
  return s * x(0) * y(0) + x.tail(x.size() - 1).dot(y.tail(y.size() - 1));
}

inline double constraint_violation(const RestrictedFactor& f, const Vector& z) {
  const double c = f.curvature();
  return std::abs(minkowski_inner(c, z, z) - 1.0 / c);
}

inline Vector pole(const RestrictedFactor& f) {
  Vector z = Vector::Zero(static_cast<Eigen::Index>(f.ambient_dim()));
  z(0) = 1.0 / std::sqrt(f.magnitude());
  return z;
}

namespace detail {

inline void check_dim(const RestrictedFactor& f, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != f.ambient_dim()) {
    throw ShapeError("point has " + std::to_string(z.size()) + " coordinates, factor expects " +
                     std::to_string(f.ambient_dim()));
  }
}

// Tolerance scales with the coordinate magnitude so far hyperbolic points are
// not rejected for ordinary rounding.
inline void check_on_factor(const RestrictedFactor& f, const Vector& z) {
  check_dim(f, z);
  const double scale = std::max(1.0, z.squaredNorm());
  if (constraint_violation(f, z) > kConstraintTol * scale) {
    throw ConstraintError("point is off its factor manifold (violation " +
                          std::to_string(constraint_violation(f, z)) + ")");
  }
  if (f.sign < 0 && z(0) <= 0.0) throw ConstraintError("hyperbolic point on the lower sheet");
}

}  // namespace detail

inline double factor_distance(const RestrictedFactor& f, const Vector& x, const Vector& y) {
  detail::check_on_factor(f, x);
  detail::check_on_factor(f, y);
  const double c = f.curvature();
  const double k = std::abs(c);
  const double inner = minkowski_inner(c, x, y);
  if (c < 0.0) {
    return std::acosh(std::max(-k * inner, 1.0)) / std::sqrt(k);
  }
  return std::acos(std::clamp(k * inner, -1.0, 1.0)) / std::sqrt(k);
}

inline double free_distance(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeError("free_distance: length mismatch");
  return (x - y).norm();
}

inline double product_distance(const ProductManifold& p, const ProductPoint& x, const ProductPoint& y) {
  const std::size_t nb = p.num_restricted() + 1;
  if (x.blocks.size() != nb || y.blocks.size() != nb) throw ShapeError("product point block count mismatch");
  if (static_cast<std::size_t>(x.blocks[0].size()) != p.free.dim ||
      static_cast<std::size_t>(y.blocks[0].size()) != p.free.dim) {
    throw ShapeError("free block length mismatch");
  }
  double sq = std::pow(free_distance(x.blocks[0], y.blocks[0]), 2);
  for (std::size_t m = 0; m < p.num_restricted(); ++m) {
    sq += std::pow(factor_distance(p.restricted[m], x.blocks[m + 1], y.blocks[m + 1]), 2);
  }
  return std::sqrt(sq);
}

// Exponential map at the pole. `v` is an ambient tangent vector with v_t = 0.
inline Vector exp_at_pole(const RestrictedFactor& f, const Vector& v) {
  detail::check_dim(f, v);
  if (std::abs(v(0)) > 1e-12) throw ConstraintError("tangent vector at the pole must have v_t = 0");
  const double k = std::abs(f.curvature());
  const double rk = std::sqrt(k);
  const Vector vs = v.tail(v.size() - 1);
  const double r = rk * vs.norm();
  Vector z(v.size());
  if (f.sign < 0) {
    z(0) = std::cosh(r) / rk;
    z.tail(v.size() - 1) = vs * ad::detail::sinhc(r);
  } else {
    z(0) = std::cos(r) / rk;
    z.tail(v.size() - 1) = vs * ad::detail::sinc(r);
  }
  return z;
}

// Inverse of exp_at_pole. The spatial part is parallel to z_s with length
// equal to the geodesic distance from the pole.
inline Vector log_at_pole(const RestrictedFactor& f, const Vector& z) {
  detail::check_on_factor(f, z);
  const double k = std::abs(f.curvature());
  const double rk = std::sqrt(k);
  const Vector zs = z.tail(z.size() - 1);
  const double u = rk * zs.norm();
  Vector v = Vector::Zero(z.size());
  if (f.sign < 0) {
    const double r = std::asinh(u);
    v.tail(z.size() - 1) = zs / ad::detail::sinhc(r);
  } else {
    if (u < 1e-12 && z(0) < 0.0) throw ConstraintError("log at the pole is singular at the antipode");
    const double r = std::atan2(u, rk * z(0));
    v.tail(z.size() - 1) = zs / ad::detail::sinc(r);
  }
  return v;
}

// Retraction onto the factor. Hyperbolic: keep z_s, solve z_t > 0.
// Spherical: rescale the whole vector to radius 1/sqrt(c).
inline Vector project_to_factor(const RestrictedFactor& f, const Vector& ambient) {
  detail::check_dim(f, ambient);
  const double k = std::abs(f.curvature());
  Vector z = ambient;
  if (f.sign < 0) {
    z(0) = std::sqrt(1.0 / k + ambient.tail(ambient.size() - 1).squaredNorm());
  } else {
    const double n = ambient.norm();
    if (n == 0.0) throw ConstraintError("cannot project the zero vector onto a sphere");
    z = ambient / (std::sqrt(k) * n);
  }
  return z;
}

}  // namespace curvclust
