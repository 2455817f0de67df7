#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"
#include "curvclust/manifold.hpp"

// Manifold-preserving layer operators on a single restricted factor, on plain
// vectors. The encoder uses the row-batched tape versions in geometry_ad.hpp;
// these are the reference forms.
namespace curvclust {

// Weighted sum cancels (only possible on a sphere).
class DegenerateAggregateError : public ConstraintError {
  using ConstraintError::ConstraintError;
};

// Counts spherical linear maps that pushed the spatial part past radius
// 1/sqrt(c) and were shrunk back inside.
struct GltDiagnostics {
  std::size_t spherical_overflows = 0;
};

inline constexpr double kSphereShrink = 1.0 - 1e-6;
inline constexpr double kDegenerateAggregate = 1e-12;

// Linear layer on a factor: spatial part W z_s + b, time part solved so the
// output satisfies the target factor's constraint. Equivalent to scaling z_t by
// w_t = sqrt(sgn(c) (1/c - |W z_s + b|^2)) / z_t, computed without dividing by z_t.
inline Vector linear_layer(const RestrictedFactor& f, const Eigen::MatrixXd& weight, const Vector& bias,
                           const Vector& z, GltDiagnostics* diag = nullptr) {
  detail::check_on_factor(f, z);
  if (static_cast<std::size_t>(weight.cols()) != f.dim) throw ShapeError("linear_layer: weight cols != factor dim");
  if (bias.size() != weight.rows()) throw ShapeError("linear_layer: bias length");
  const double k = f.magnitude();
  Vector ys = weight * z.tail(z.size() - 1) + bias;
  double ell = ys.squaredNorm();
  Vector out(ys.size() + 1);
  if (f.sign < 0) {
    out(0) = std::sqrt(1.0 / k + ell);
  } else {
    const double r_max = kSphereShrink / std::sqrt(k);
    if (ell >= 1.0 / k) {
      ys *= r_max / std::sqrt(ell);
      ell = ys.squaredNorm();
      if (diag) ++diag->spherical_overflows;
    }
    out(0) = std::sqrt(1.0 / k - ell);
  }
  out.tail(ys.size()) = ys;
  return out;
}

// Generalized Lorentz transformation: linear_layer without bias.
inline Vector glt(const RestrictedFactor& f, const Eigen::MatrixXd& weight, const Vector& z,
                  GltDiagnostics* diag = nullptr) {
  return linear_layer(f, weight, Vector::Zero(weight.rows()), z, diag);
}

// softmax over j of (-tau * distance_j - gamma).
inline Vector attention_weights(std::span<const double> distances, double tau, double gamma) {
  if (!(tau > 0.0)) throw ValidationError("attention temperature must be positive");
  Vector logits(static_cast<Eigen::Index>(distances.size()));
  for (std::size_t j = 0; j < distances.size(); ++j) {
    logits(static_cast<Eigen::Index>(j)) = -tau * distances[j] - gamma;
  }
  if (logits.size() == 0) return logits;
  const double m = logits.maxCoeff();
  Vector w = (logits.array() - m).exp();
  return w / w.sum();
}

// Attention of center h_i over a neighborhood (which must include h_i itself).
inline Vector attention_weights(const RestrictedFactor& f, const Vector& center,
                                std::span<const Vector> neighborhood, double tau, double gamma) {
  std::vector<double> d;
  d.reserve(neighborhood.size());
  for (const auto& h : neighborhood) d.push_back(factor_distance(f, h, center));
  return attention_weights(d, tau, gamma);
}

inline Vector free_attention_weights(const Vector& center, std::span<const Vector> neighborhood, double tau,
                                     double gamma) {
  std::vector<double> d;
  d.reserve(neighborhood.size());
  for (const auto& h : neighborhood) d.push_back(free_distance(h, center));
  return attention_weights(d, tau, gamma);
}

// Closed-form weighted centroid: s / (sqrt|c| sqrt|<s,s>_c|) with s = sum_j nu_j h_j.
// Throws DegenerateAggregateError when |<s,s>_c| < 1e-12.
inline Vector aggregate(const RestrictedFactor& f, std::span<const Vector> points, const Vector& weights) {
  if (points.empty() || static_cast<std::size_t>(weights.size()) != points.size()) {
    throw ShapeError("aggregate: points/weights mismatch");
  }
  Vector s = Vector::Zero(points.front().size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    detail::check_on_factor(f, points[j]);
    s += weights(static_cast<Eigen::Index>(j)) * points[j];
  }
  const double c = f.curvature();
  const double inner = minkowski_inner(c, s, s);
  if (std::abs(inner) < kDegenerateAggregate) throw DegenerateAggregateError("aggregate: <s,s>_c vanishes");
  return s / (std::sqrt(std::abs(c)) * std::sqrt(std::abs(inner)));
}

}  // namespace curvclust
