#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/autodiff.hpp"
#include "curvclust/geometry_ad.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/manifold.hpp"
#include "curvclust/params.hpp"

// Product-manifold graph encoder: one stack of manifold-preserving
// convolutions per factor, plus the MLP that estimates node curvature from the
// first free coordinate and the factor curvatures.
namespace curvclust {

struct EncoderShape {
  std::size_t num_features = 0;
  std::size_t num_layers = 2;
  std::size_t mlp_hidden = 16;
};

// Per-node, per-factor coordinates. free is N x d0; restricted[m] is N x (d_m + 1).
struct EmbeddingSet {
  Eigen::MatrixXd free;
  std::vector<Eigen::MatrixXd> restricted;

  ProductPoint point(Eigen::Index i) const {
    ProductPoint p;
    p.blocks.push_back(free.row(i).transpose());
    for (const auto& z : restricted) p.blocks.push_back(z.row(i).transpose());
    return p;
  }
};

namespace names {

inline std::string free_prefix() { return "free"; }
inline std::string factor_prefix(std::size_t m) { return "r" + std::to_string(m); }
inline std::string layer(const std::string& prefix, std::size_t l, const char* what) {
  return prefix + ".l" + std::to_string(l) + "." + what;
}
inline std::string curvature(std::size_t m) { return "curv.r" + std::to_string(m); }

}  // namespace names

// Registers encoder and curvature-MLP parameters. Factor curvatures are taken
// from `manifold` (their magnitude parameters become trainable).
inline void add_encoder_params(ParamStore& store, const ProductManifold& manifold, const EncoderShape& shape,
                               std::mt19937_64& rng) {
  manifold.validate();
  const auto F = static_cast<Eigen::Index>(shape.num_features);
  const double tau0 = ad::softplus_inverse(1.0);

  const auto d0 = static_cast<Eigen::Index>(manifold.free.dim);
  const std::string fp = names::free_prefix();
  store.add(fp + ".proj", glorot_uniform(d0, F, rng));
  for (std::size_t l = 0; l < shape.num_layers; ++l) {
    store.add(names::layer(fp, l, "weight"), glorot_uniform(d0 - 1, d0 - 1, rng));
    store.add(names::layer(fp, l, "bias"), Eigen::MatrixXd::Zero(1, d0 - 1));
    store.add(names::layer(fp, l, "wt"), Eigen::MatrixXd::Ones(1, 1));
    store.add(names::layer(fp, l, "tau"), Eigen::MatrixXd::Constant(1, 1, tau0));
    store.add(names::layer(fp, l, "gamma"), Eigen::MatrixXd::Zero(1, 1));
  }

  for (std::size_t m = 0; m < manifold.num_restricted(); ++m) {
    const auto d = static_cast<Eigen::Index>(manifold.restricted[m].dim);
    const std::string p = names::factor_prefix(m);
    store.add(p + ".proj", glorot_uniform(d, F, rng));
    for (std::size_t l = 0; l < shape.num_layers; ++l) {
      store.add(names::layer(p, l, "weight"), glorot_uniform(d, d, rng));
      store.add(names::layer(p, l, "bias"), Eigen::MatrixXd::Zero(1, d));
      store.add(names::layer(p, l, "tau"), Eigen::MatrixXd::Constant(1, 1, tau0));
      store.add(names::layer(p, l, "gamma"), Eigen::MatrixXd::Zero(1, 1));
    }
  }
  for (std::size_t m = 0; m < manifold.num_restricted(); ++m) {
    store.add(names::curvature(m), Eigen::MatrixXd::Constant(1, 1, manifold.restricted[m].magnitude_param),
              ParamKind::kCurvature, static_cast<int>(m));
  }

  const auto in = static_cast<Eigen::Index>(manifold.num_restricted() + 1);
  const auto h = static_cast<Eigen::Index>(shape.mlp_hidden);
  store.add("mlp.w1", glorot_uniform(in, h, rng));
  store.add("mlp.b1", Eigen::MatrixXd::Zero(1, h));
  store.add("mlp.w2", glorot_uniform(h, 1, rng));
  store.add("mlp.b2", Eigen::MatrixXd::Zero(1, 1));
}

// Current factor curvatures of `store`, applied to a copy of `manifold`.
inline ProductManifold with_learned_curvatures(ProductManifold manifold, const ParamStore& store) {
  for (std::size_t m = 0; m < manifold.num_restricted(); ++m) {
    manifold.restricted[m].magnitude_param = store.value(names::curvature(m))(0, 0);
  }
  return manifold;
}

struct EncoderDiagnostics {
  GltDiagnostics glt;
  std::size_t degenerate_aggregates = 0;
};

// Tape handles for one forward pass.
struct EncodedViews {
  ad::Var free;                       // N x d0
  std::vector<ad::Var> restricted;    // N x (d_m + 1)
  std::vector<geo::Curvature> curvatures;

  EmbeddingSet values() const {
    EmbeddingSet e;
    e.free = free.value();
    for (const auto& z : restricted) e.restricted.push_back(z.value());
    return e;
  }
};

inline std::vector<geo::Curvature> bind_curvatures(const ProductManifold& manifold, const BoundParams& p) {
  std::vector<geo::Curvature> out;
  for (std::size_t m = 0; m < manifold.num_restricted(); ++m) {
    out.push_back(geo::bind_curvature(p[names::curvature(m)], manifold.restricted[m].sign));
  }
  return out;
}

// Free-factor layer: first coordinate scaled by `wt`, the rest mapped by
// W . + b, then attentive Euclidean aggregation.
inline ad::Var free_layer(const BoundParams& p, std::size_t l, const geo::Neighborhoods& nb, ad::Var z) {
  const std::string fp = names::free_prefix();
  ad::Var first = ad::mul(ad::slice_cols(z, 0, 1), p[names::layer(fp, l, "wt")]);
  ad::Var rest = ad::slice_cols(z, 1, z.cols() - 1);
  rest = ad::add(ad::matmul(rest, ad::transpose(p[names::layer(fp, l, "weight")])), p[names::layer(fp, l, "bias")]);
  ad::Var h = ad::concat_cols({first, rest});
  ad::Var tau = ad::softplus(p[names::layer(fp, l, "tau")]);
  return geo::free_aggregate_rows(nb, h, tau, p[names::layer(fp, l, "gamma")]);
}

// Lift features into every factor, then `num_layers` rounds of
// (linear layer -> attentive aggregation).
inline EncodedViews encode(const BoundParams& p, const ProductManifold& manifold, const EncoderShape& shape,
                           ad::Var features, const geo::Neighborhoods& nb, EncoderDiagnostics* diag = nullptr) {
  EncodedViews out;
  out.curvatures = bind_curvatures(manifold, p);

  const std::string fp = names::free_prefix();
  ad::Var z0 = ad::matmul(features, ad::transpose(p[fp + ".proj"]));
  for (std::size_t l = 0; l < shape.num_layers; ++l) z0 = free_layer(p, l, nb, z0);
  out.free = z0;

  for (std::size_t m = 0; m < manifold.num_restricted(); ++m) {
    const auto& c = out.curvatures[m];
    const std::string pre = names::factor_prefix(m);
    ad::Var tangent = ad::matmul(features, ad::transpose(p[pre + ".proj"]));
    ad::Var z = geo::exp_at_pole_rows(c, tangent);
    for (std::size_t l = 0; l < shape.num_layers; ++l) {
      ad::Var bias = p[names::layer(pre, l, "bias")];
      z = geo::linear_rows(c, z, p[names::layer(pre, l, "weight")], &bias, diag ? &diag->glt : nullptr);
      ad::Var tau = ad::softplus(p[names::layer(pre, l, "tau")]);
      z = geo::aggregate_rows(c, nb, z, tau, p[names::layer(pre, l, "gamma")],
                              diag ? &diag->degenerate_aggregates : nullptr);
    }
    out.restricted.push_back(z);
  }
  return out;
}

// Node curvature estimates (N x 1) from [first free coordinate, c_1..c_M].
inline ad::Var estimate_node_curvature(const BoundParams& p, ad::Var free_view,
                                       const std::vector<geo::Curvature>& curvatures) {
  ad::Tape& t = *free_view.tape();
  std::vector<ad::Var> cs;
  for (const auto& c : curvatures) cs.push_back(ad::scale(c.magnitude, static_cast<double>(c.sign)));
  ad::Var input = ad::slice_cols(free_view, 0, 1);
  if (!cs.empty()) {
    ad::Var row = ad::concat_cols(cs);
    ad::Var ones = t.constant(Eigen::MatrixXd::Ones(free_view.rows(), 1));
    input = ad::concat_cols({input, ad::matmul(ones, row)});
  }
  ad::Var hidden = ad::tanh(ad::add(ad::matmul(input, p["mlp.w1"]), p["mlp.b1"]));
  return ad::add(ad::matmul(hidden, p["mlp.w2"]), p["mlp.b2"]);
}

}  // namespace curvclust
