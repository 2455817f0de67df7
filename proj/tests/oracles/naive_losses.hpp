#pragma once

// Direct double-loop evaluations of the clustering objectives on plain
// matrices. No shared code with the library beyond Eigen storage.

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline double ricci_loss(const std::vector<std::pair<int, int>>& edges, const std::vector<double>& ric,
                         const Mat& pi, double alpha0, double* intra_out = nullptr, double* inter_out = nullptr) {
  if (edges.empty()) return 0.0;
  const int K = static_cast<int>(pi.cols());
  double intra = 0.0;
  double inter = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = 0; k2 < K; ++k2) {
        const double term = ric[e] * pi(i, k1) * pi(j, k2);
        if (k1 == k2) intra += term;
        else inter += term;
      }
    }
  }
  intra /= static_cast<double>(edges.size());
  inter /= static_cast<double>(edges.size()) * K;
  if (intra_out) *intra_out = intra;
  if (inter_out) *inter_out = inter;
  return alpha0 * inter - intra;
}

inline double curvature_loss(const std::vector<std::optional<double>>& node_ricci, const std::vector<double>& est) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!node_ricci[i]) continue;
    s += (*node_ricci[i] - est[i]) * (*node_ricci[i] - est[i]);
    ++n;
  }
  return n == 0 ? 0.0 : s / n;
}

inline double sim(const Mat& image_rows, int i, const Mat& s, const Mat& free_rows, int j) {
  double v = 0.0;
  for (int a = 0; a < s.rows(); ++a) {
    for (int b = 0; b < s.cols(); ++b) v += image_rows(i, a) * s(a, b) * free_rows(j, b);
  }
  return v;
}

inline double agreement(const Mat& pi, int i, int j) {
  double v = 0.0;
  for (int k = 0; k < pi.cols(); ++k) v += pi(i, k) * pi(j, k);
  return v;
}

inline int argmax_row(const Mat& pi, int i) {
  int best = 0;
  for (int k = 1; k < pi.cols(); ++k) {
    if (pi(i, k) > pi(i, best)) best = k;
  }
  return best;
}

// -sum_i log( exp(l_pos) / sum_j exp(l_j) ), computed without max shift in
// long double (exponent range to about 11000).
inline double nll(const std::vector<std::vector<double>>& logits, const std::vector<int>& pos) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    long double z = 0.0L;
    for (double l : logits[i]) z += std::exp(static_cast<long double>(l));
    total -= std::log(std::exp(static_cast<long double>(logits[i][pos[i]])) / z);
  }
  return static_cast<double>(total);
}

// Same loss with the dual weights supplied rather than derived from the
// similarities: logits are w(i,j) * a(i,j).
inline double fixed_weight_nll(const Mat& a, const Mat& w, const std::vector<int>& pos) {
  std::vector<std::vector<double>> l(a.rows(), std::vector<double>(a.cols()));
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) l[i][j] = w(i, j) * a(i, j);
  }
  return nll(l, pos);
}

// Restricted-view images anchor; candidates are free-view nodes.
inline double n2n(const Mat& images, const Mat& free, const Mat& pi, const Mat& s, double beta) {
  const int n = static_cast<int>(images.rows());
  std::vector<std::vector<double>> l(n, std::vector<double>(n));
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = i;
    for (int j = 0; j < n; ++j) {
      const double sm = sim(images, i, s, free, j);
      l[i][j] = std::pow(std::abs(agreement(pi, i, j) - sm), beta) * sm;
    }
  }
  return nll(l, pos);
}

// Free-view anchors; candidates are restricted-view nodes. Same critic.
inline double n2n_reverse(const Mat& images, const Mat& free, const Mat& pi, const Mat& s, double beta) {
  const int n = static_cast<int>(images.rows());
  std::vector<std::vector<double>> l(n, std::vector<double>(n));
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = i;
    for (int j = 0; j < n; ++j) {
      const double sm = sim(images, j, s, free, i);
      l[i][j] = std::pow(std::abs(agreement(pi, i, j) - sm), beta) * sm;
    }
  }
  return nll(l, pos);
}

// Node anchors (restricted images) against free-view centroids.
inline double n2c(const Mat& images, const Mat& free_centroids, const Mat& pi, const Mat& s, double beta) {
  const int n = static_cast<int>(images.rows());
  const int K = static_cast<int>(free_centroids.rows());
  std::vector<std::vector<double>> l(n, std::vector<double>(K));
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = argmax_row(pi, i);
    for (int k = 0; k < K; ++k) {
      const double sm = sim(images, i, s, free_centroids, k);
      l[i][k] = std::pow(std::abs(pi(i, k) - sm), beta) * sm;
    }
  }
  return nll(l, pos);
}

// Free-view node anchors against restricted-view centroid images.
inline double n2c_reverse(const Mat& free, const Mat& centroid_images, const Mat& pi, const Mat& s, double beta) {
  const int n = static_cast<int>(free.rows());
  const int K = static_cast<int>(centroid_images.rows());
  std::vector<std::vector<double>> l(n, std::vector<double>(K));
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = argmax_row(pi, i);
    for (int k = 0; k < K; ++k) {
      const double sm = sim(centroid_images, k, s, free, i);
      l[i][k] = std::pow(std::abs(pi(i, k) - sm), beta) * sm;
    }
  }
  return nll(l, pos);
}

// Geodesic distance on a restricted factor with signed curvature c.
inline double factor_distance(double c, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double inner = 0.0;
  for (int a = 1; a < x.size(); ++a) inner += x(a) * y(a);
  inner += (c < 0 ? -1.0 : 1.0) * x(0) * y(0);
  const double k = std::abs(c);
  if (c < 0) return std::acosh(std::max(1.0, -k * inner)) / std::sqrt(k);
  return std::acos(std::min(1.0, std::max(-1.0, k * inner))) / std::sqrt(k);
}

}  // namespace oracle
