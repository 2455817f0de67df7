#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/autodiff.hpp"
#include "curvclust/errors.hpp"
#include "curvclust/geometry_ad.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/ricci.hpp"

namespace curvclust::loss {

using ad::Matrix;
using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// Soft assignment

// Squared product distance between every node and every centroid, N x K.
// `views` and `centroids` hold one block per factor, free block first.
inline Var sq_product_distance(const std::vector<Var>& views, const std::vector<Var>& centroids,
                               const std::vector<geo::Curvature>& curvatures) {
  if (views.size() != centroids.size() || views.size() != curvatures.size() + 1) {
    throw ShapeError("sq_product_distance: block count mismatch");
  }
  Var sq = geo::free_sq_distance_pairwise(views[0], centroids[0]);
  for (std::size_t m = 0; m < curvatures.size(); ++m) {
    Var d = geo::distance_pairwise(curvatures[m], views[m + 1], centroids[m + 1]);
    sq = ad::add(sq, ad::square(d));
  }
  return sq;
}

// Pi[i,k] = softmax_k(-d_P(z_i, phi_k)).
inline Var soft_assign(const std::vector<Var>& views, const std::vector<Var>& centroids,
                       const std::vector<geo::Curvature>& curvatures) {
  return ad::softmax_rows(ad::neg(ad::sqrt(sq_product_distance(views, centroids, curvatures))));
}

// Row argmax, ties to the lowest index.
inline std::vector<Eigen::Index> hard_labels(const Matrix& pi) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(pi.rows()));
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < pi.cols(); ++k) {
      if (pi(i, k) > pi(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ricci density loss

struct RicciLoss {
  Var intra;
  Var inter;
  Var total;  // alpha0 * inter - intra
};

inline RicciLoss ricci_loss(const Graph& g, const RicciTable& ricci, Var pi, double alpha0) {
  Tape& t = *pi.tape();
  if (ricci.edge_ricci.size() != g.num_edges()) throw ValidationError("Ricci table does not match the graph");
  RicciLoss out;
  if (g.num_edges() == 0) {
    out.intra = t.constant(0.0);
    out.inter = t.constant(0.0);
    out.total = t.constant(0.0);
    return out;
  }
  std::vector<Eigen::Index> us;
  std::vector<Eigen::Index> vs;
  Matrix ric(static_cast<Eigen::Index>(g.num_edges()), 1);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    us.push_back(g.edges()[e].first);
    vs.push_back(g.edges()[e].second);
    ric(static_cast<Eigen::Index>(e), 0) = ricci.edge_ricci[e];
  }
  const double E = static_cast<double>(g.num_edges());
  const double K = static_cast<double>(pi.cols());
  Var pu = ad::gather_rows(pi, us);
  Var pv = ad::gather_rows(pi, vs);
  Var r = t.constant(ric);
  Var agree = ad::row_sum(ad::mul(pu, pv));
  Var all = ad::mul(ad::row_sum(pu), ad::row_sum(pv));
  out.intra = ad::scale(ad::sum(ad::mul(r, agree)), 1.0 / E);
  out.inter = ad::scale(ad::sum(ad::mul(r, ad::sub(all, agree))), 1.0 / (E * K));
  out.total = ad::sub(ad::scale(out.inter, alpha0), out.intra);
  return out;
}

// ---------------------------------------------------------------------------
// Curvature consistency

// Mean of (Ric(i) - estimate_i)^2 over nodes that have a Ricci value.
inline Var curvature_loss(const RicciTable& ricci, Var estimates) {
  Tape& t = *estimates.tape();
  if (static_cast<std::size_t>(estimates.rows()) != ricci.node_ricci.size() || estimates.cols() != 1) {
    throw ShapeError("curvature_loss: estimates must be N x 1");
  }
  std::vector<Eigen::Index> idx;
  std::vector<double> target;
  for (std::size_t i = 0; i < ricci.node_ricci.size(); ++i) {
    if (ricci.node_ricci[i]) {
      idx.push_back(static_cast<Eigen::Index>(i));
      target.push_back(*ricci.node_ricci[i]);
    }
  }
  if (idx.empty()) return t.constant(0.0);
  Matrix tv = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
  Var diff = ad::sub(ad::gather_rows(estimates, std::move(idx)), t.constant(tv));
  return ad::mean(ad::square(diff));
}

// ---------------------------------------------------------------------------
// Geometric contrast

// log_at_pole(glt(z)) with the zero time component kept: N x d0 where
// d0 - 1 = weight.rows().
inline Var view_image(const geo::Curvature& c, Var weight, Var z, GltDiagnostics* diag = nullptr) {
  Tape& t = *z.tape();
  Var moved = geo::linear_rows(c, z, weight, nullptr, diag);
  Var tangent = geo::log_at_pole_rows(c, moved);
  return ad::concat_cols({t.constant(Matrix::Zero(z.rows(), 1)), tangent});
}

inline double similarity(const Eigen::VectorXd& image, const Eigen::VectorXd& free, const Matrix& s) {
  return image.dot(s * free);
}

inline double dual_weight(double agreement, double sim, double beta) {
  return std::pow(std::abs(agreement - sim), beta);
}

struct ContrastOptions {
  double beta = 2.0;
  bool anchors_on_left = true;
  bool reweight_gradient = false;  // let gradients flow through |P - A|^beta
};

namespace detail {

struct ContrastForward {
  Matrix a;        // anchors x candidates similarity
  Matrix w;        // dual weights
  Matrix softmax;  // row softmax of w .* a
  double loss = 0.0;
};

inline ContrastForward contrast_forward(const Matrix& left, const Matrix& s, const Matrix& right, const Matrix& p,
                                        const std::vector<Eigen::Index>& positive, const ContrastOptions& opt) {
  ContrastForward f;
  Matrix sim = left * s * right.transpose();
  f.a = opt.anchors_on_left ? std::move(sim) : Matrix(sim.transpose());
  if (p.rows() != f.a.rows() || p.cols() != f.a.cols()) throw ShapeError("contrast: agreement matrix shape");
  if (static_cast<Eigen::Index>(positive.size()) != f.a.rows()) throw ShapeError("contrast: positive count");
  f.w = (p - f.a).array().abs().pow(opt.beta).matrix();
  Matrix logits = f.w.cwiseProduct(f.a);
  f.softmax.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    f.softmax.row(i) = e / z;
    const Eigen::Index k = positive[static_cast<std::size_t>(i)];
    if (k < 0 || k >= logits.cols()) throw ShapeError("contrast: positive index out of range");
    f.loss -= logits(i, k) - (mx + std::log(z));
  }
  return f;
}

}  // namespace detail

// -sum_i log softmax_j(W_ij A_ij)[pos_i] with A = left S right^T (or its
// transpose when anchors are rows of `right`) and W = |P - A|^beta. P is the
// membership agreement in anchor-by-candidate orientation. N x N products are
// recomputed in backward rather than kept on the tape.
inline Var contrast(Var left, Var s, Var right, Var p, std::vector<Eigen::Index> positive,
                    const ContrastOptions& opt) {
  Tape& t = *left.tape();
  if (left.cols() != s.rows() || right.cols() != s.cols()) throw ShapeError("contrast: critic shape");
  if (!(opt.beta >= 1.0)) throw ValidationError("beta must be at least 1");
  const auto f = detail::contrast_forward(left.value(), s.value(), right.value(), p.value(), positive, opt);
  Matrix value = Matrix::Constant(1, 1, f.loss);
  return t.record("contrast", std::move(value), {left, s, right, p},
                  [&t, left, s, right, p, positive = std::move(positive), opt](const Matrix& g) {
                    const auto fw = detail::contrast_forward(left.value(), s.value(), right.value(), p.value(),
                                                             positive, opt);
                    Matrix gl = fw.softmax;
                    for (Eigen::Index i = 0; i < gl.rows(); ++i) gl(i, positive[static_cast<std::size_t>(i)]) -= 1.0;
                    gl *= g(0, 0);
                    Matrix da = gl.cwiseProduct(fw.w);
                    if (opt.reweight_gradient) {
                      // dW/dP = beta |P - A|^(beta-1) sgn(P - A) = -dW/dA
                      Matrix diff = p.value() - fw.a;
                      Matrix dw = (opt.beta * diff.array().abs().pow(opt.beta - 1.0) * diff.array().sign()).matrix();
                      Matrix ga = gl.cwiseProduct(fw.a).cwiseProduct(dw);
                      da -= ga;
                      t.accumulate(p, ga);
                    }
                    const Matrix dsim = opt.anchors_on_left ? da : Matrix(da.transpose());
                    const Matrix& lv = left.value();
                    const Matrix& sv = s.value();
                    const Matrix& rv = right.value();
                    if (t.requires_grad(left)) t.accumulate(left, dsim * (rv * sv.transpose()));
                    if (t.requires_grad(right)) t.accumulate(right, dsim.transpose() * (lv * sv));
                    if (t.requires_grad(s)) t.accumulate(s, lv.transpose() * dsim * rv);
                  });
}

// Same nodes across views are the positives.
inline Var n2n_loss(Var images, Var free, Var pi, Var s, double beta, bool reversed = false,
                    bool reweight_gradient = false) {
  if (images.rows() != free.rows()) throw ShapeError("n2n_loss: view row mismatch");
  Var agree = ad::matmul(pi, ad::transpose(pi));
  if (!reweight_gradient) agree = ad::stop_gradient(agree);
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(images.rows()));
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<Eigen::Index>(i);
  return contrast(images, s, free, agree, std::move(pos), {beta, !reversed, reweight_gradient});
}

// Node anchors against cluster candidates; the positive is each node's
// argmax cluster. `nodes_on_left` selects whether node rows are the left or
// right operand of the critic.
inline Var n2c_loss(Var nodes, Var clusters, Var pi, Var s, double beta, bool nodes_on_left,
                    bool reweight_gradient = false) {
  Var agree = reweight_gradient ? pi : ad::stop_gradient(pi);
  auto pos = hard_labels(pi.value());
  if (nodes_on_left) return contrast(nodes, s, clusters, agree, std::move(pos), {beta, true, reweight_gradient});
  return contrast(clusters, s, nodes, agree, std::move(pos), {beta, false, reweight_gradient});
}

struct FactorContrast {
  Var n2n;          // restricted-view anchors vs free-view nodes
  Var n2n_reverse;  // free-view anchors vs restricted-view nodes
  Var n2c;          // restricted-view nodes vs free-view centroids
  Var n2c_reverse;  // free-view nodes vs restricted-view centroids

  Var total() const { return ad::add(ad::add(n2n, n2n_reverse), ad::add(n2c, n2c_reverse)); }
};

// Contrast between restricted factor m and the free factor. `images` and
// `centroid_images` are view images (N x d0, K x d0) of that factor's nodes
// and centroids.
inline FactorContrast factor_contrast(Var images, Var centroid_images, Var free, Var free_centroids, Var pi, Var s,
                                      double beta, bool reweight_gradient = false) {
  FactorContrast fc;
  fc.n2n = n2n_loss(images, free, pi, s, beta, false, reweight_gradient);
  fc.n2n_reverse = n2n_loss(images, free, pi, s, beta, true, reweight_gradient);
  fc.n2c = n2c_loss(images, free_centroids, pi, s, beta, true, reweight_gradient);
  fc.n2c_reverse = n2c_loss(free, centroid_images, pi, s, beta, false, reweight_gradient);
  return fc;
}

}  // namespace curvclust::loss
