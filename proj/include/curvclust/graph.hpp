#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"

namespace curvclust {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// Undirected, unweighted attributed graph. Immutable once built.
//
// Edges are stored once each as (u, v) with u < v, sorted lexicographically.
// Neighbor lists are sorted ascending.
class Graph {
 public:
  Graph() = default;

  // Symmetrizes, drops self-loops and duplicates. Throws ValidationError on
  // out-of-range endpoints, feature/label row mismatch or negative labels.
  static Graph build(std::size_t num_nodes, std::vector<Edge> edges, Eigen::MatrixXd features,
                     std::optional<std::vector<int>> labels = std::nullopt) {
    if (static_cast<std::size_t>(features.rows()) != num_nodes) {
      throw ValidationError("feature row count " + std::to_string(features.rows()) +
                            " does not match node count " + std::to_string(num_nodes));
    }
    if (labels && labels->size() != num_nodes) {
      throw ValidationError("label count " + std::to_string(labels->size()) +
                            " does not match node count " + std::to_string(num_nodes));
    }
    if (labels) {
      for (std::size_t i = 0; i < labels->size(); ++i) {
        if ((*labels)[i] < 0) {
          throw ValidationError("negative class id at node " + std::to_string(i));
        }
      }
    }

    std::vector<Edge> canon;
    canon.reserve(edges.size());
    for (auto [a, b] : edges) {
      if (a >= num_nodes || b >= num_nodes) {
        throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") has endpoint outside [0," + std::to_string(num_nodes) + ")");
      }
      if (a == b) continue;
      canon.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(canon.begin(), canon.end());
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

    Graph g;
    g.num_nodes_ = num_nodes;
    g.edges_ = std::move(canon);
    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    g.adjacency_.assign(num_nodes, {});
    for (auto [u, v] : g.edges_) {
      g.adjacency_[u].push_back(v);
      g.adjacency_[v].push_back(u);
    }
    for (auto& nbrs : g.adjacency_) std::sort(nbrs.begin(), nbrs.end());
    return g;
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  const Eigen::MatrixXd& features() const noexcept { return features_; }
  std::size_t num_features() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
  std::span<const NodeId> neighbors(NodeId i) const { return adjacency_.at(i); }
  std::size_t degree(NodeId i) const { return adjacency_.at(i).size(); }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> out(num_nodes_);
    for (std::size_t i = 0; i < num_nodes_; ++i) out[i] = adjacency_[i].size();
    return out;
  }

  bool has_edge(NodeId u, NodeId v) const {
    if (u >= num_nodes_ || v >= num_nodes_) return false;
    const auto& a = adjacency_[u];
    return std::binary_search(a.begin(), a.end(), v);
  }

  // Index of edge {u, v} in edges(), or nullopt.
  std::optional<std::size_t> edge_index(NodeId u, NodeId v) const {
    Edge key{std::min(u, v), std::max(u, v)};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
    if (it == edges_.end() || *it != key) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
  }

  // Graph with the same structure and labels but replaced features.
  Graph with_features(Eigen::MatrixXd features) const {
    return build(num_nodes_, edges_, std::move(features), labels_);
  }

  // FNV-1a over node count and the canonical edge list. Features are excluded:
  // curvature depends on structure only.
  std::uint64_t structure_hash() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(num_nodes_);
    mix(edges_.size());
    for (auto [u, v] : edges_) {
      mix(u);
      mix(v);
    }
    return h;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_ && a.features_ == b.features_ &&
           a.labels_ == b.labels_;
  }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  Eigen::MatrixXd features_;
  std::optional<std::vector<int>> labels_;
  std::vector<std::vector<NodeId>> adjacency_;
};

// BFS hop count from i to j; kUnreachable when disconnected.
inline std::size_t shortest_hop_distance(const Graph& g, NodeId i, NodeId j) {
  if (i >= g.num_nodes() || j >= g.num_nodes()) {
    throw ValidationError("node id out of range");
  }
  if (i == j) return 0;
  std::vector<std::size_t> dist(g.num_nodes(), kUnreachable);
  std::queue<NodeId> frontier;
  dist[i] = 0;
  frontier.push(i);
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop();
    for (NodeId v : g.neighbors(u)) {
      if (dist[v] != kUnreachable) continue;
      dist[v] = dist[u] + 1;
      if (v == j) return dist[v];
      frontier.push(v);
    }
  }
  return kUnreachable;
}

// Reusable BFS workspace: hop distances from a source to a set of targets,
// stopping once every target is settled. Unreached targets report kUnreachable.
// Visit marks are stamped so repeated queries do not clear O(N) state.
class HopSearch {
 public:
  explicit HopSearch(const Graph& g) : g_(&g), stamp_(g.num_nodes(), 0), dist_(g.num_nodes(), 0) {}

  std::vector<std::size_t> distances(NodeId source, std::span<const NodeId> targets) {
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0U);
      epoch_ = 1;
    }
    for (NodeId t : targets) {
      if (t >= g_->num_nodes()) throw ValidationError("node id out of range");
    }
    std::vector<NodeId> uniq(targets.begin(), targets.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::size_t remaining = uniq.size();

    auto is_target = [&uniq](NodeId v) { return std::binary_search(uniq.begin(), uniq.end(), v); };
    frontier_.clear();
    frontier_.push_back(source);
    stamp_[source] = epoch_;
    dist_[source] = 0;
    if (is_target(source)) --remaining;
    std::size_t head = 0;
    while (remaining > 0 && head < frontier_.size()) {
      NodeId u = frontier_[head++];
      for (NodeId v : g_->neighbors(u)) {
        if (stamp_[v] == epoch_) continue;
        stamp_[v] = epoch_;
        dist_[v] = dist_[u] + 1;
        frontier_.push_back(v);
        if (is_target(v) && --remaining == 0) break;
      }
    }
    std::vector<std::size_t> out(targets.size(), kUnreachable);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (stamp_[targets[t]] == epoch_) out[t] = dist_[targets[t]];
    }
    return out;
  }

 private:
  const Graph* g_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::size_t> dist_;
  std::vector<NodeId> frontier_;
  std::uint32_t epoch_ = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (s.front() == '+') s.remove_prefix(1);
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace detail

struct LoadOptions {
  // Scale each feature row to unit L1 norm (zero rows untouched).
  bool row_normalize = false;
};

inline std::vector<Edge> read_edge_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    auto split = view.find_first_of("\t ");
    if (split == std::string_view::npos) {
      throw ParseError(path.string(), lineno, "expected two tab-separated node ids");
    }
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    if (!detail::parse_number(view.substr(0, split), a) ||
        !detail::parse_number(view.substr(split + 1), b)) {
      throw ParseError(path.string(), lineno, "node ids must be nonnegative integers");
    }
    if (a > std::numeric_limits<NodeId>::max() || b > std::numeric_limits<NodeId>::max()) {
      throw ParseError(path.string(), lineno, "node id too large");
    }
    edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  }
  return edges;
}

inline Eigen::MatrixXd read_feature_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      auto comma = view.find(',', start);
      auto cell = view.substr(start, comma == std::string_view::npos ? view.npos : comma - start);
      double x = 0.0;
      if (!detail::parse_number(cell, x)) {
        throw ParseError(path.string(), lineno, "bad real value '" + std::string(cell) + "'");
      }
      row.push_back(x);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(rows.front().size()) + " columns, got " +
                           std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) x(i, j) = rows[i][j];
  }
  return x;
}

inline std::vector<int> read_label_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    int y = 0;
    if (!detail::parse_number(view, y)) {
      throw ParseError(path.string(), lineno, "bad class id '" + std::string(view) + "'");
    }
    labels.push_back(y);
  }
  return labels;
}

inline void row_normalize(Eigen::MatrixXd& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = x.row(i).cwiseAbs().sum();
    if (s > 0.0) x.row(i) /= s;
  }
}

// Node count is the feature row count.
inline Graph load_graph(const std::filesystem::path& edge_path,
                        const std::filesystem::path& feature_path,
                        const std::optional<std::filesystem::path>& label_path = std::nullopt,
                        LoadOptions options = {}) {
  auto features = read_feature_file(feature_path);
  if (options.row_normalize) row_normalize(features);
  auto edges = read_edge_file(edge_path);
  std::optional<std::vector<int>> labels;
  if (label_path) labels = read_label_file(*label_path);
  const auto n = static_cast<std::size_t>(features.rows());
  return Graph::build(n, std::move(edges), std::move(features), std::move(labels));
}

inline std::string format_real(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

// Writes the three files read by load_graph. Reals use shortest round-trip form.
inline void save_graph(const Graph& g, const std::filesystem::path& edge_path,
                       const std::filesystem::path& feature_path,
                       const std::optional<std::filesystem::path>& label_path = std::nullopt) {
  std::ofstream edges(edge_path);
  std::ofstream feats(feature_path);
  if (!edges || !feats) throw IoError("cannot write graph files");
  for (auto [u, v] : g.edges()) edges << u << '\t' << v << '\n';
  const auto& x = g.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j) feats << ',';
      feats << format_real(x(i, j));
    }
    feats << '\n';
  }
  if (label_path && g.labels()) {
    std::ofstream labels(*label_path);
    if (!labels) throw IoError("cannot write " + label_path->string());
    for (int y : *g.labels()) labels << y << '\n';
  }
}

}  // namespace curvclust
