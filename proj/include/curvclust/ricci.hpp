#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/transport.hpp"

namespace curvclust {

// Lazy random-walk measure around a node: `lambda` on the node itself and
// (1 - lambda) / degree on each neighbor. The center is always in the support,
// even when lambda == 0.
struct MassDistribution {
  std::vector<NodeId> support;  // center first, then neighbors ascending
  std::vector<double> mass;
};

inline MassDistribution mass_distribution(const Graph& g, NodeId i, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    throw ValidationError("lambda must lie in [0, 1)");
  }
  if (i >= g.num_nodes()) throw ValidationError("node id out of range");
  auto nbrs = g.neighbors(i);
  if (nbrs.empty()) {
    throw EmptyNeighborhoodError("node " + std::to_string(i) + " has no neighbors");
  }
  MassDistribution m;
  m.support.reserve(nbrs.size() + 1);
  m.mass.reserve(nbrs.size() + 1);
  m.support.push_back(i);
  m.mass.push_back(lambda);
  const double share = (1.0 - lambda) / static_cast<double>(nbrs.size());
  for (NodeId j : nbrs) {
    m.support.push_back(j);
    m.mass.push_back(share);
  }
  return m;
}

// Exact 1-Wasserstein distance under the hop metric. Zero-mass support entries
// are dropped before solving; they cannot carry flow.
inline double wasserstein([[maybe_unused]] const Graph& g, const MassDistribution& a,
                          const MassDistribution& b, HopSearch& search) {
  std::vector<NodeId> src;
  std::vector<double> supply;
  std::vector<NodeId> dst;
  std::vector<double> demand;
  for (std::size_t k = 0; k < a.support.size(); ++k) {
    if (a.mass[k] > 0.0) {
      src.push_back(a.support[k]);
      supply.push_back(a.mass[k]);
    }
  }
  for (std::size_t k = 0; k < b.support.size(); ++k) {
    if (b.mass[k] > 0.0) {
      dst.push_back(b.support[k]);
      demand.push_back(b.mass[k]);
    }
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(src.size()), static_cast<Eigen::Index>(dst.size()));
  for (std::size_t r = 0; r < src.size(); ++r) {
    auto d = search.distances(src[r], dst);
    for (std::size_t c = 0; c < dst.size(); ++c) {
      if (d[c] == kUnreachable) {
        throw InfeasibleTransportError("nodes " + std::to_string(src[r]) + " and " +
                                       std::to_string(dst[c]) + " are disconnected");
      }
      cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(d[c]);
    }
  }
  return TransportationSimplex::solve(supply, demand, cost).cost;
}

inline double wasserstein(const Graph& g, const MassDistribution& a, const MassDistribution& b) {
  HopSearch search(g);
  return wasserstein(g, a, b, search);
}

inline double edge_ricci(const Graph& g, NodeId i, NodeId j, double lambda, HopSearch& search) {
  if (!g.has_edge(i, j)) {
    throw ValidationError("(" + std::to_string(i) + "," + std::to_string(j) + ") is not an edge");
  }
  auto mi = mass_distribution(g, i, lambda);
  auto mj = mass_distribution(g, j, lambda);
  // Adjacent endpoints: d_G(i, j) = 1.
  return 1.0 - wasserstein(g, mi, mj, search);
}

inline double edge_ricci(const Graph& g, NodeId i, NodeId j, double lambda) {
  HopSearch search(g);
  return edge_ricci(g, i, j, lambda, search);
}

// Per-edge curvature aligned with Graph::edges(); node curvature is the mean
// over incident edges and is absent for isolated nodes.
struct RicciTable {
  double lambda = 0.5;
  std::uint64_t graph_hash = 0;
  std::vector<double> edge_ricci;
  std::vector<std::optional<double>> node_ricci;

  double mean_edge() const {
    if (edge_ricci.empty()) return 0.0;
    double s = 0.0;
    for (double r : edge_ricci) s += r;
    return s / static_cast<double>(edge_ricci.size());
  }

  friend bool operator==(const RicciTable&, const RicciTable&) = default;
};

inline std::vector<std::optional<double>> node_means(const Graph& g, const std::vector<double>& edge_values) {
  std::vector<double> sum(g.num_nodes(), 0.0);
  auto edges = g.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    sum[edges[e].first] += edge_values[e];
    sum[edges[e].second] += edge_values[e];
  }
  std::vector<std::optional<double>> out(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    auto deg = g.degree(static_cast<NodeId>(i));
    if (deg > 0) out[i] = sum[i] / static_cast<double>(deg);
  }
  return out;
}

// Edges are split into contiguous blocks, one per worker; each worker writes
// only its own slots, so the result does not depend on the thread count.
inline RicciTable compute_ricci_table(const Graph& g, double lambda, unsigned threads = 0) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [0, 1)");
  RicciTable table;
  table.lambda = lambda;
  table.graph_hash = g.structure_hash();
  const auto edges = g.edges();
  table.edge_ricci.assign(edges.size(), 0.0);

  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, edges.size() / 64)));
  auto work = [&](std::size_t begin, std::size_t end) {
    HopSearch search(g);
    for (std::size_t e = begin; e < end; ++e) {
      table.edge_ricci[e] = edge_ricci(g, edges[e].first, edges[e].second, lambda, search);
    }
  };
  if (threads <= 1) {
    work(0, edges.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (edges.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t b = t * chunk;
      std::size_t e = std::min(edges.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  table.node_ricci = node_means(g, table.edge_ricci);
  return table;
}

// Binary cache: magic, version, graph hash, lambda, counts, edge values, node
// values (NaN marks an isolated node). Little-endian host layout.
namespace ricci_cache {

inline constexpr char kMagic[4] = {'C', 'R', 'I', 'C'};
inline constexpr std::uint32_t kVersion = 1;

inline void save(const RicciTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto put = [&out](const auto& x) { out.write(reinterpret_cast<const char*>(&x), sizeof(x)); };
  out.write(kMagic, 4);
  put(kVersion);
  put(t.graph_hash);
  put(t.lambda);
  put(static_cast<std::uint64_t>(t.edge_ricci.size()));
  put(static_cast<std::uint64_t>(t.node_ricci.size()));
  for (double r : t.edge_ricci) put(r);
  for (const auto& r : t.node_ricci) put(r ? *r : std::numeric_limits<double>::quiet_NaN());
  if (!out) throw IoError("short write to " + path.string());
}

inline RicciTable load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto get = [&in, &path](auto& x) {
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    if (!in) throw IoError("truncated curvature cache " + path.string());
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a curvature cache: " + path.string());
  std::uint32_t version = 0;
  get(version);
  if (version != kVersion) throw IoError("unsupported curvature cache version");
  RicciTable t;
  std::uint64_t ne = 0;
  std::uint64_t nn = 0;
  get(t.graph_hash);
  get(t.lambda);
  get(ne);
  get(nn);
  if (ne > (1ULL << 40) || nn > (1ULL << 40)) throw IoError("corrupt curvature cache");
  t.edge_ricci.resize(ne);
  for (auto& r : t.edge_ricci) get(r);
  t.node_ricci.resize(nn);
  for (auto& r : t.node_ricci) {
    double x = 0.0;
    get(x);
    if (!std::isnan(x)) r = x;
  }
  return t;
}

// Loads the cache when it matches (graph, lambda); otherwise recomputes and rewrites it.
inline RicciTable load_or_compute(const Graph& g, double lambda, const std::filesystem::path& path,
                                  bool* recomputed = nullptr) {
  if (std::filesystem::exists(path)) {
    try {
      auto t = load(path);
      if (t.graph_hash == g.structure_hash() && t.lambda == lambda &&
          t.edge_ricci.size() == g.num_edges() && t.node_ricci.size() == g.num_nodes()) {
        if (recomputed) *recomputed = false;
        return t;
      }
    } catch (const IoError&) {
      // Unreadable cache is rebuilt below.
    }
  }
  auto t = compute_ricci_table(g, lambda);
  save(t, path);
  if (recomputed) *recomputed = true;
  return t;
}

}  // namespace ricci_cache

inline void write_ricci_csv(const Graph& g, const RicciTable& t, const std::filesystem::path& edge_csv,
                            const std::optional<std::filesystem::path>& node_csv = std::nullopt) {
  std::ofstream out(edge_csv);
  if (!out) throw IoError("cannot write " + edge_csv.string());
  out << "src,dst,ricci\n";
  auto edges = g.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out << edges[e].first << ',' << edges[e].second << ',' << format_real(t.edge_ricci[e]) << '\n';
  }
  if (node_csv) {
    std::ofstream nodes(*node_csv);
    if (!nodes) throw IoError("cannot write " + node_csv->string());
    nodes << "node,ricci\n";
    for (std::size_t i = 0; i < t.node_ricci.size(); ++i) {
      if (t.node_ricci[i]) nodes << i << ',' << format_real(*t.node_ricci[i]) << '\n';
    }
  }
}

}  // namespace curvclust
