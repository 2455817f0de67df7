#pragma once

#include <cmath>
#include <vector>

#include "curvclust/autodiff.hpp"
#include "curvclust/frgcn.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/manifold.hpp"

// Row-batched factor geometry on the tape. Every matrix holds one point (or
// tangent vector) per row; restricted points carry the time coordinate in
// column 0. Curvature magnitudes are tape values so gradients reach them.
namespace curvclust::geo {

using ad::Matrix;
using ad::Tape;
using ad::Var;

// Distances are evaluated with the acosh/acos argument kept this far inside
// the domain, which bounds the derivative for (near-)coincident points.
inline constexpr double kArgMargin = 1e-9;

struct Curvature {
  int sign = -1;
  Var magnitude;  // k = softplus(param) > 0, 1 x 1
  Var root;       // sqrt(k)
  Var inverse;    // 1 / k
};

inline Curvature bind_curvature(Var magnitude_param, int sign) {
  Tape& t = *magnitude_param.tape();
  Curvature c;
  c.sign = sign;
  c.magnitude = ad::softplus(magnitude_param);
  c.root = ad::sqrt(c.magnitude);
  c.inverse = ad::div(t.constant(1.0), c.magnitude);
  return c;
}

inline Var time_part(Var z) { return ad::slice_cols(z, 0, 1); }
inline Var space_part(Var z) { return ad::slice_cols(z, 1, z.cols() - 1); }

// <x_r, y_r>_c per row, r x 1.
inline Var minkowski_rows(int sign, Var x, Var y) {
  Var tt = ad::mul(time_part(x), time_part(y));
  Var ss = ad::row_sum(ad::mul(space_part(x), space_part(y)));
  return sign < 0 ? ad::sub(ss, tt) : ad::add(ss, tt);
}

// <x_i, y_j>_c for all pairs, r x s.
inline Var minkowski_pairwise(int sign, Var x, Var y) {
  Var tt = ad::matmul(time_part(x), ad::transpose(time_part(y)));
  Var ss = ad::matmul(space_part(x), ad::transpose(space_part(y)));
  return sign < 0 ? ad::sub(ss, tt) : ad::add(ss, tt);
}

inline Var distance_from_inner(const Curvature& c, Var inner) {
  Var scaled = ad::mul(inner, c.magnitude);
  if (c.sign < 0) {
    Var arg = ad::clamp_min(ad::neg(scaled), 1.0 + kArgMargin);
    return ad::div(ad::acosh(arg), c.root);
  }
  Var arg = ad::clamp(scaled, -1.0 + kArgMargin, 1.0 - kArgMargin);
  return ad::div(ad::acos(arg), c.root);
}

inline Var distance_rows(const Curvature& c, Var x, Var y) {
  return distance_from_inner(c, minkowski_rows(c.sign, x, y));
}

inline Var distance_pairwise(const Curvature& c, Var x, Var y) {
  return distance_from_inner(c, minkowski_pairwise(c.sign, x, y));
}

inline Var free_distance_rows(Var x, Var y) { return ad::norm_rows(ad::sub(x, y)); }

// Squared Euclidean distance for all pairs, r x s.
inline Var free_sq_distance_pairwise(Var x, Var y) {
  std::vector<Var> cols;
  cols.reserve(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index k = 0; k < y.rows(); ++k) {
    cols.push_back(ad::row_sum(ad::square(ad::sub(x, ad::slice_rows(y, k, 1)))));
  }
  return ad::concat_cols(cols);
}

// Spatial tangent rows (N x d) at the pole -> points (N x (d+1)).
inline Var exp_at_pole_rows(const Curvature& c, Var tangent) {
  Var r = ad::mul(ad::norm_rows(tangent), c.root);
  if (c.sign < 0) {
    Var t = ad::div(ad::cosh(r), c.root);
    return ad::concat_cols({t, ad::mul(tangent, ad::sinhc(r))});
  }
  Var t = ad::div(ad::cos(r), c.root);
  return ad::concat_cols({t, ad::mul(tangent, ad::sinc(r))});
}

// Points (N x (d+1)) -> spatial tangent rows at the pole (N x d).
inline Var log_at_pole_rows(const Curvature& c, Var z) {
  Var zs = space_part(z);
  Var u = ad::mul(ad::norm_rows(zs), c.root);
  if (c.sign < 0) {
    return ad::div(zs, ad::sinhc(ad::asinh(u)));
  }
  Var r = ad::atan2(u, ad::mul(time_part(z), c.root));
  const Matrix& rv = r.value();
  for (Eigen::Index i = 0; i < rv.rows(); ++i) {
    if (rv(i, 0) > std::numbers::pi - 1e-9) throw ConstraintError("log at the pole is singular at the antipode");
  }
  return ad::div(zs, ad::sinc(r));
}

// Row-batched linear_layer; `weight` is d_out x d_in, `bias` (optional) 1 x d_out.
inline Var linear_rows(const Curvature& c, Var z, Var weight, const Var* bias, GltDiagnostics* diag = nullptr) {
  Tape& t = *z.tape();
  Var ys = ad::matmul(space_part(z), ad::transpose(weight));
  if (bias) ys = ad::add(ys, *bias);
  if (c.sign < 0) {
    Var ell = ad::row_sum(ad::square(ys));
    return ad::concat_cols({ad::sqrt(ad::add(ell, c.inverse)), ys});
  }
  // Spatial radius must stay below 1/sqrt(k); offending rows are shrunk to
  // (1 - 1e-6)/sqrt(k).
  const double k = c.magnitude.scalar();
  const double limit_sq = 1.0 / k;
  const Matrix& yv = ys.value();
  std::vector<bool> overflow(static_cast<std::size_t>(yv.rows()), false);
  bool any = false;
  for (Eigen::Index i = 0; i < yv.rows(); ++i) {
    if (yv.row(i).squaredNorm() >= limit_sq) {
      overflow[static_cast<std::size_t>(i)] = true;
      any = true;
      if (diag) ++diag->spherical_overflows;
    }
  }
  if (any) {
    Var r_max = ad::scale(ad::div(t.constant(1.0), c.root), kSphereShrink);
    Var shrink = ad::div(r_max, ad::clamp_min(ad::norm_rows(ys), 1e-300));
    Var factor = ad::select_rows(overflow, shrink, t.constant(Matrix::Ones(yv.rows(), 1)));
    ys = ad::mul(ys, factor);
  }
  Var ell = ad::row_sum(ad::square(ys));
  return ad::concat_cols({ad::sqrt(ad::clamp_min(ad::sub(c.inverse, ell), 0.0)), ys});
}

// Directed neighbor entries (center <- neighbor) for every edge in both
// directions, followed by one self entry per node.
struct Neighborhoods {
  std::vector<Eigen::Index> center;
  std::vector<Eigen::Index> neighbor;
  std::size_t num_edge_entries = 0;
  Eigen::Index num_nodes = 0;

  static Neighborhoods of(const Graph& g) {
    Neighborhoods nb;
    nb.num_nodes = static_cast<Eigen::Index>(g.num_nodes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      for (NodeId j : g.neighbors(static_cast<NodeId>(i))) {
        nb.center.push_back(static_cast<Eigen::Index>(i));
        nb.neighbor.push_back(static_cast<Eigen::Index>(j));
      }
    }
    nb.num_edge_entries = nb.center.size();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      nb.center.push_back(static_cast<Eigen::Index>(i));
      nb.neighbor.push_back(static_cast<Eigen::Index>(i));
    }
    return nb;
  }

  std::vector<Eigen::Index> edge_centers() const {
    return {center.begin(), center.begin() + static_cast<std::ptrdiff_t>(num_edge_entries)};
  }
  std::vector<Eigen::Index> edge_neighbors() const {
    return {neighbor.begin(), neighbor.begin() + static_cast<std::ptrdiff_t>(num_edge_entries)};
  }
};

// Attention weights over closed neighborhoods, one per entry of `nb`
// (column vector). `edge_dist` holds distances for the non-self entries; self
// entries have distance 0 exactly.
inline Var attention_rows(const Neighborhoods& nb, Var edge_dist, Var tau, Var gamma) {
  Tape& t = *tau.tape();
  Var ones = t.constant(Matrix::Ones(nb.num_nodes, 1));
  Var self_logits = ad::neg(ad::mul(ones, gamma));
  Var logits = self_logits;
  if (nb.num_edge_entries > 0) {
    Var edge_logits = ad::sub(ad::neg(ad::mul(edge_dist, tau)), gamma);
    logits = ad::concat_rows({edge_logits, self_logits});
  }
  return ad::segment_softmax(logits, nb.center, nb.num_nodes);
}

inline Var weighted_sum_rows(const Neighborhoods& nb, Var h, Var weights) {
  Var gathered = ad::gather_rows(h, nb.neighbor);
  return ad::scatter_add_rows(ad::mul(gathered, weights), nb.center, nb.num_nodes);
}

// Attentive aggregation on a restricted factor. Rows whose weighted sum
// degenerates keep their own point.
inline Var aggregate_rows(const Curvature& c, const Neighborhoods& nb, Var h, Var tau, Var gamma,
                          std::size_t* degenerate = nullptr) {
  Tape& t = *h.tape();
  Var edge_dist;
  if (nb.num_edge_entries > 0) {
    edge_dist = distance_rows(c, ad::gather_rows(h, nb.edge_neighbors()), ad::gather_rows(h, nb.edge_centers()));
  }
  Var nu = attention_rows(nb, edge_dist, tau, gamma);
  Var s = weighted_sum_rows(nb, h, nu);
  Var inner = minkowski_rows(c.sign, s, s);
  const Matrix& iv = inner.value();
  std::vector<bool> ok(static_cast<std::size_t>(iv.rows()), true);
  bool all_ok = true;
  for (Eigen::Index i = 0; i < iv.rows(); ++i) {
    if (std::abs(iv(i, 0)) < kDegenerateAggregate) {
      ok[static_cast<std::size_t>(i)] = false;
      all_ok = false;
      if (degenerate) ++*degenerate;
    }
  }
  Var denom = ad::mul(ad::sqrt(ad::abs(inner)), c.root);
  if (all_ok) return ad::div(s, denom);
  Var safe = ad::select_rows(ok, denom, t.constant(Matrix::Ones(iv.rows(), 1)));
  return ad::select_rows(ok, ad::div(s, safe), h);
}

inline Var free_aggregate_rows(const Neighborhoods& nb, Var h, Var tau, Var gamma) {
  Var edge_dist;
  if (nb.num_edge_entries > 0) {
    edge_dist = free_distance_rows(ad::gather_rows(h, nb.edge_neighbors()), ad::gather_rows(h, nb.edge_centers()));
  }
  Var nu = attention_rows(nb, edge_dist, tau, gamma);
  return weighted_sum_rows(nb, h, nu);
}

}  // namespace curvclust::geo
