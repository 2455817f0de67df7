#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/graph.hpp"
#include "curvclust/manifold.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("curvclust_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Erdos-Renyi edge list on n nodes.
inline std::vector<curvclust::Edge> random_edges(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<curvclust::Edge> e;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng)) e.emplace_back(static_cast<curvclust::NodeId>(i), static_cast<curvclust::NodeId>(j));
    }
  }
  return e;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  }
  return m;
}

inline curvclust::Graph random_graph(std::size_t n, double p, std::size_t features, std::mt19937_64& rng) {
  return curvclust::Graph::build(n, random_edges(n, p, rng),
                                 random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features), rng));
}

// Random point on a restricted factor via its spatial part; spheres use a
// random direction scaled inside the radius, upper hemisphere.
inline Eigen::VectorXd random_point(const curvclust::RestrictedFactor& f, std::mt19937_64& rng, double spread = 1.0) {
  const double k = f.magnitude();
  Eigen::VectorXd zs = random_matrix(static_cast<Eigen::Index>(f.dim), 1, rng, spread);
  Eigen::VectorXd z(zs.size() + 1);
  if (f.sign < 0) {
    z(0) = std::sqrt(1.0 / k + zs.squaredNorm());
  } else {
    std::uniform_real_distribution<double> u(0.0, 0.95);
    zs *= u(rng) / (std::sqrt(k) * std::max(zs.norm(), 1e-12));
    z(0) = std::sqrt(1.0 / k - zs.squaredNorm());
  }
  z.tail(zs.size()) = zs;
  return z;
}

}  // namespace testutil
