#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "curvclust/errors.hpp"
#include "curvclust/graph.hpp"

namespace curvclust::metrics {

using Labels = std::span<const int>;

namespace detail {

// Relabels to 0..k-1 in order of first appearance.
inline std::vector<std::size_t> compact(Labels x, std::size_t* k) {
  std::map<int, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(x.size());
  for (auto v : x) out.push_back(ids.try_emplace(v, ids.size()).first->second);
  *k = ids.size();
  return out;
}

struct Contingency {
  std::vector<std::vector<double>> table;  // pred x truth counts
  std::vector<double> pred_sizes;
  std::vector<double> truth_sizes;
  double n = 0.0;
};

inline Contingency contingency(Labels pred, Labels truth) {
  if (pred.size() != truth.size()) throw ValidationError("label vectors differ in length");
  std::size_t kp = 0;
  std::size_t kt = 0;
  auto p = compact(pred, &kp);
  auto t = compact(truth, &kt);
  Contingency c;
  c.table.assign(kp, std::vector<double>(kt, 0.0));
  c.pred_sizes.assign(kp, 0.0);
  c.truth_sizes.assign(kt, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.table[p[i]][t[i]] += 1.0;
    c.pred_sizes[p[i]] += 1.0;
    c.truth_sizes[t[i]] += 1.0;
  }
  c.n = static_cast<double>(p.size());
  return c;
}

inline double entropy(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes) {
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  }
  return h;
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

// Mutual information over the arithmetic mean of the two entropies. Returns 0
// when that mean is 0 (a single cluster on both sides).
inline double nmi(Labels pred, Labels truth) {
  const auto c = detail::contingency(pred, truth);
  if (c.n == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < c.table.size(); ++a) {
    for (std::size_t b = 0; b < c.table[a].size(); ++b) {
      const double nab = c.table[a][b];
      if (nab > 0.0) mi += (nab / c.n) * std::log(c.n * nab / (c.pred_sizes[a] * c.truth_sizes[b]));
    }
  }
  const double denom = 0.5 * (detail::entropy(c.pred_sizes, c.n) + detail::entropy(c.truth_sizes, c.n));
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

inline double ari(Labels pred, Labels truth) {
  if (pred.size() < 2) throw ValidationError("ARI needs at least two points");
  const auto c = detail::contingency(pred, truth);
  double index = 0.0;
  for (const auto& row : c.table) {
    for (double x : row) index += detail::choose2(x);
  }
  double sa = 0.0;
  double sb = 0.0;
  for (double x : c.pred_sizes) sa += detail::choose2(x);
  for (double x : c.truth_sizes) sb += detail::choose2(x);
  const double expected = sa * sb / detail::choose2(c.n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

// Maximum-weight perfect matching on a square matrix; returns col assigned to
// each row.
inline std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
  const std::size_t n = weight.size();
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path on costs -weight; 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // match[col] = row
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Fraction of nodes matched under the best one-to-one map from predicted
// clusters to classes.
inline double acc(Labels pred, Labels truth) {
  const auto c = detail::contingency(pred, truth);
  if (c.n == 0.0) return 0.0;
  const std::size_t n = std::max(c.table.size(), c.truth_sizes.size());
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < c.table.size(); ++a) {
    for (std::size_t b = 0; b < c.table[a].size(); ++b) w[a][b] = c.table[a][b];
  }
  double best = 0.0;
  if (n <= 8) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      double s = 0.0;
      for (std::size_t a = 0; a < n; ++a) s += w[a][perm[a]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    const auto match = max_weight_assignment(w);
    for (std::size_t a = 0; a < n; ++a) best += w[a][match[a]];
  }
  return best / c.n;
}

// Mean over clusters with at least two nodes of E_k / (V_k (V_k - 1)).
// nullopt when every cluster is a singleton.
inline std::optional<double> cluster_density(const Graph& g, Labels labels) {
  if (labels.size() != g.num_nodes()) throw ValidationError("label count differs from node count");
  std::map<int, std::pair<double, double>> stats;  // label -> (nodes, intra edges)
  for (auto l : labels) stats[l].first += 1.0;
  for (const auto& [u, v] : g.edges()) {
    if (labels[u] == labels[v]) stats[labels[u]].second += 1.0;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [label, s] : stats) {
    if (s.first < 2.0) continue;
    sum += s.second / (s.first * (s.first - 1.0));
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

// Mean over predicted clusters of the class entropy inside the cluster (nats).
inline double cluster_entropy(Labels pred, Labels truth) {
  const auto c = detail::contingency(pred, truth);
  if (c.table.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a < c.table.size(); ++a) total += detail::entropy(c.table[a], c.pred_sizes[a]);
  return total / static_cast<double>(c.table.size());
}

}  // namespace curvclust::metrics
