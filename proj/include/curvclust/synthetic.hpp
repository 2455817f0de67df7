#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"
#include "curvclust/graph.hpp"

// Planted-partition fixtures.
namespace curvclust::synthetic {

struct SbmOptions {
  std::size_t blocks = 3;
  std::size_t block_size = 50;
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t num_features = 16;
  double feature_shift = 1.0;  // class mean is feature_shift on the class's own coordinates
  double feature_noise = 1.0;  // per-entry Gaussian standard deviation
  std::uint64_t seed = 0;
};

// Stochastic block model with Gaussian features. Feature columns are split
// evenly between classes; a node's class columns are shifted by
// `feature_shift`. Labels are block ids.
inline Graph stochastic_block_model(const SbmOptions& o) {
  if (o.blocks == 0 || o.block_size == 0) throw ValidationError("SBM needs at least one non-empty block");
  if (o.num_features < o.blocks) throw ValidationError("SBM needs at least one feature column per block");
  const std::size_t n = o.blocks * o.block_size;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.feature_noise);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / o.block_size);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? o.p_in : o.p_out;
      if (coin(rng) < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }

  const std::size_t per_class = o.num_features / o.blocks;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(o.num_features));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < o.num_features; ++f) {
      const bool own = f / per_class == static_cast<std::size_t>(labels[i]);
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = (own ? o.feature_shift : 0.0) + noise(rng);
    }
  }
  return Graph::build(n, edges, std::move(x), std::move(labels));
}

}  // namespace curvclust::synthetic
