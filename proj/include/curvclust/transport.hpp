#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/errors.hpp"

namespace curvclust {

struct TransportSolution {
  double cost = 0.0;
  Eigen::MatrixXd plan;  // supply rows x demand cols
  std::size_t pivots = 0;
};

// Exact solver for the balanced transportation problem
//
//   min sum_ij cost(i,j) x_ij  s.t.  sum_j x_ij = supply_i, sum_i x_ij = demand_j, x >= 0
//
// Primal transportation simplex on the spanning-tree basis of the bipartite
// supply/demand graph. Starts from the northwest-corner basis (degenerate
// zero cells kept in the basis), prices with row/column potentials, and
// uses Bland's rule for both entering and leaving cells, so the pivot
// sequence is finite and fully determined by the input.
//
// Sizes here are tiny (a node's closed neighborhood on each side), so the
// O(nm) pricing sweep per pivot is not a concern.
class TransportationSimplex {
 public:
  static constexpr double kReducedCostTol = 1e-12;
  static constexpr double kBalanceTol = 1e-9;

  static TransportSolution solve(std::span<const double> supply, std::span<const double> demand,
                                 const Eigen::MatrixXd& cost) {
    const std::size_t n = supply.size();
    const std::size_t m = demand.size();
    if (n == 0 || m == 0) throw ValidationError("transport problem needs nonempty supports");
    if (static_cast<std::size_t>(cost.rows()) != n || static_cast<std::size_t>(cost.cols()) != m) {
      throw ValidationError("transport cost matrix shape mismatch");
    }
    double total_a = 0.0;
    double total_b = 0.0;
    for (double a : supply) {
      if (!(a >= 0.0)) throw ValidationError("negative or NaN supply");
      total_a += a;
    }
    for (double b : demand) {
      if (!(b >= 0.0)) throw ValidationError("negative or NaN demand");
      total_b += b;
    }
    if (std::abs(total_a - total_b) > kBalanceTol) {
      throw ValidationError("unbalanced transport problem");
    }
    for (Eigen::Index i = 0; i < cost.size(); ++i) {
      if (!std::isfinite(cost.data()[i])) {
        throw InfeasibleTransportError("transport cost contains an unreachable pair");
      }
    }

    Solver s(n, m, cost);
    s.northwest_corner(supply, demand);
    s.iterate();

    TransportSolution out;
    out.plan = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (const auto& cell : s.basis) {
      out.plan(cell.row, cell.col) = cell.flow;
      out.cost += cell.flow * cost(cell.row, cell.col);
    }
    out.pivots = s.pivots;
    return out;
  }

 private:
  struct Cell {
    std::size_t row;
    std::size_t col;
    double flow;
  };

  struct Solver {
    std::size_t n;
    std::size_t m;
    const Eigen::MatrixXd& cost;
    std::vector<Cell> basis;
    std::size_t pivots = 0;

    Solver(std::size_t rows, std::size_t cols, const Eigen::MatrixXd& c) : n(rows), m(cols), cost(c) {}

    void northwest_corner(std::span<const double> supply, std::span<const double> demand) {
      std::vector<double> ra(supply.begin(), supply.end());
      std::vector<double> rb(demand.begin(), demand.end());
      std::size_t i = 0;
      std::size_t j = 0;
      // Exactly n + m - 1 cells: every step advances one index.
      while (true) {
        double x = std::min(ra[i], rb[j]);
        basis.push_back({i, j, std::max(x, 0.0)});
        ra[i] -= x;
        rb[j] -= x;
        if (i == n - 1 && j == m - 1) break;
        if (i == n - 1) {
          ++j;
        } else if (j == m - 1) {
          ++i;
        } else if (ra[i] <= rb[j]) {
          ++i;
        } else {
          ++j;
        }
      }
    }

    // Tree nodes: rows are 0..n-1, columns are n..n+m-1.
    void adjacency(std::vector<std::vector<std::size_t>>& adj) const {
      adj.assign(n + m, {});
      for (std::size_t e = 0; e < basis.size(); ++e) {
        adj[basis[e].row].push_back(e);
        adj[n + basis[e].col].push_back(e);
      }
    }

    void potentials(const std::vector<std::vector<std::size_t>>& adj, std::vector<double>& u,
                    std::vector<double>& v) const {
      std::vector<double> pot(n + m, 0.0);
      std::vector<char> done(n + m, 0);
      std::vector<std::size_t> stack{0};
      done[0] = 1;
      while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        for (std::size_t e : adj[node]) {
          const Cell& c = basis[e];
          std::size_t other = node < n ? n + c.col : c.row;
          if (done[other]) continue;
          // u_i + v_j = cost_ij on basic cells.
          pot[other] = cost(c.row, c.col) - pot[node];
          done[other] = 1;
          stack.push_back(other);
        }
      }
      u.assign(pot.begin(), pot.begin() + static_cast<std::ptrdiff_t>(n));
      v.assign(pot.begin() + static_cast<std::ptrdiff_t>(n), pot.end());
    }

    // Basic cells on the tree path from row node `r` to column node `n + c`, in order.
    std::vector<std::size_t> tree_path(const std::vector<std::vector<std::size_t>>& adj, std::size_t r,
                                       std::size_t c) const {
      const std::size_t none = std::numeric_limits<std::size_t>::max();
      std::vector<std::size_t> via(n + m, none);
      std::vector<char> seen(n + m, 0);
      std::vector<std::size_t> queue{r};
      seen[r] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        std::size_t node = queue[head];
        if (node == n + c) break;
        for (std::size_t e : adj[node]) {
          const Cell& cell = basis[e];
          std::size_t other = node < n ? n + cell.col : cell.row;
          if (seen[other]) continue;
          seen[other] = 1;
          via[other] = e;
          queue.push_back(other);
        }
      }
      std::vector<std::size_t> path;
      std::size_t node = n + c;
      while (node != r) {
        std::size_t e = via[node];
        path.push_back(e);
        const Cell& cell = basis[e];
        node = node < n ? n + cell.col : cell.row;
      }
      // Path was collected from the column end; first element touches column c.
      return path;
    }

    void iterate() {
      std::vector<std::vector<std::size_t>> adj;
      std::vector<double> u;
      std::vector<double> v;
      std::vector<char> in_basis;
      // Bland's rule guarantees termination; the cap only guards against bugs.
      const std::size_t max_pivots = 50 * (n + m) * (n + m) + 1000;
      while (true) {
        adjacency(adj);
        potentials(adj, u, v);
        in_basis.assign(n * m, 0);
        for (const auto& cell : basis) in_basis[cell.row * m + cell.col] = 1;

        std::size_t enter_r = n;
        std::size_t enter_c = m;
        for (std::size_t i = 0; i < n && enter_r == n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            if (in_basis[i * m + j]) continue;
            if (cost(i, j) - u[i] - v[j] < -kReducedCostTol) {
              enter_r = i;
              enter_c = j;
              break;
            }
          }
        }
        if (enter_r == n) return;
        if (++pivots > max_pivots) throw std::logic_error("transportation simplex failed to terminate");

        // Cycle: entering cell (+), then alternating signs along the tree path
        // from column enter_c back to row enter_r. The first path cell shares
        // column enter_c with the entering cell, so it takes (-).
        auto path = tree_path(adj, enter_r, enter_c);
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = basis.size();
        for (std::size_t k = 0; k < path.size(); k += 2) {
          const Cell& cell = basis[path[k]];
          bool better = cell.flow < theta;
          bool tie = cell.flow == theta && leave < basis.size() &&
                     key(cell) < key(basis[leave]);
          if (better || tie) {
            theta = cell.flow;
            leave = path[k];
          }
        }
        for (std::size_t k = 0; k < path.size(); ++k) {
          basis[path[k]].flow += (k % 2 == 0) ? -theta : theta;
        }
        basis[leave] = {enter_r, enter_c, theta};
        for (std::size_t k = 0; k < path.size(); k += 2) {
          if (path[k] != leave && basis[path[k]].flow < 0.0) basis[path[k]].flow = 0.0;
        }
      }
    }

    std::size_t key(const Cell& c) const { return c.row * m + c.col; }
  };
};

}  // namespace curvclust
