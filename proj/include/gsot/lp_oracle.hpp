#pragma once

// Exact unregularized transport by the transportation simplex method:
// northwest-corner start, MODI potentials for pricing, most negative reduced
// cost to enter, and Bland's lowest-index rule once pivots stall.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gsot/core.hpp"

namespace gsot {

struct ExactSolution {
  double value = 0.0;  // W(p, q)
  Matrix plan;         // a vertex of the transportation polytope
  Index nonzeros = 0;
  int pivots = 0;
};

struct ExactOptions {
  Index max_cells = 4096;
  double optimality_tol = 1e-10;
  int max_pivots = 0;  // 0 picks a size-based default
};

namespace detail {

class TransportationSimplex {
 public:
  TransportationSimplex(const Matrix& cost, Vector supply, Vector demand, const ExactOptions& opts)
      : cost_(cost), n_(cost.rows()), m_(cost.cols()), opts_(opts),
        flow_(Matrix::Zero(cost.rows(), cost.cols())),
        basic_(static_cast<std::size_t>(cost.size()), 0) {
    northwest_corner(std::move(supply), std::move(demand));
  }

  void run() {
    const int limit = opts_.max_pivots > 0 ? opts_.max_pivots : static_cast<int>(50 * n_ * m_ + 1000);
    int stalled = 0;
    const int stall_limit = static_cast<int>(n_ + m_);
    while (true) {
      compute_potentials();
      const bool bland = stalled > stall_limit;
      Index enter = price(bland);
      if (enter < 0) return;
      if (pivots_ >= limit) {
        throw Error(ErrorKind::PivotLimit, "transportation simplex exceeded " + std::to_string(limit) + " pivots");
      }
      const double step = pivot(enter, bland);
      ++pivots_;
      stalled = step > 0.0 ? 0 : stalled + 1;
    }
  }

  const Matrix& flow() const { return flow_; }
  int pivots() const { return pivots_; }

 private:
  Index cell(Index i, Index j) const { return i * m_ + j; }
  bool is_basic(Index i, Index j) const { return basic_[static_cast<std::size_t>(cell(i, j))] != 0; }
  void set_basic(Index i, Index j, bool b) { basic_[static_cast<std::size_t>(cell(i, j))] = b ? 1 : 0; }

  // Produces exactly n + m - 1 basic cells, some possibly carrying zero flow.
  void northwest_corner(Vector supply, Vector demand) {
    Index i = 0, j = 0;
    while (i < n_ && j < m_) {
      const double amount = std::min(supply[i], demand[j]);
      flow_(i, j) = amount;
      set_basic(i, j, true);
      supply[i] -= amount;
      demand[j] -= amount;
      if (i == n_ - 1 && j == m_ - 1) break;
      if (j == m_ - 1 || (i < n_ - 1 && supply[i] <= demand[j])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Spanning tree of the basis; rows are nodes 0..n-1, columns n..n+m-1.
  void build_tree() {
    adjacency_.assign(static_cast<std::size_t>(n_ + m_), {});
    for (Index i = 0; i < n_; ++i) {
      for (Index j = 0; j < m_; ++j) {
        if (!is_basic(i, j)) continue;
        adjacency_[static_cast<std::size_t>(i)].push_back(n_ + j);
        adjacency_[static_cast<std::size_t>(n_ + j)].push_back(i);
      }
    }
  }

  void compute_potentials() {
    build_tree();
    u_.assign(static_cast<std::size_t>(n_), 0.0);
    v_.assign(static_cast<std::size_t>(m_), 0.0);
    std::vector<char> seen(static_cast<std::size_t>(n_ + m_), 0);
    std::vector<Index> queue{0};
    seen[0] = 1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const Index node = queue[h];
      for (Index next : adjacency_[static_cast<std::size_t>(node)]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = 1;
        if (node < n_) {
          v_[static_cast<std::size_t>(next - n_)] = cost_(node, next - n_) - u_[static_cast<std::size_t>(node)];
        } else {
          u_[static_cast<std::size_t>(next)] = cost_(next, node - n_) - v_[static_cast<std::size_t>(node - n_)];
        }
        queue.push_back(next);
      }
    }
  }

  // Entering cell, or -1 when every reduced cost is >= -tol.
  Index price(bool bland) const {
    Index best = -1;
    double best_value = -opts_.optimality_tol;
    for (Index i = 0; i < n_; ++i) {
      for (Index j = 0; j < m_; ++j) {
        if (is_basic(i, j)) continue;
        const double reduced = cost_(i, j) - u_[static_cast<std::size_t>(i)] - v_[static_cast<std::size_t>(j)];
        if (reduced < best_value) {
          best = cell(i, j);
          if (bland) return best;
          best_value = reduced;
        }
      }
    }
    return best;
  }

  // Path in the basis tree from row node `from` to column node `to`.
  std::vector<Index> tree_path(Index from, Index to) const {
    std::vector<Index> parent(static_cast<std::size_t>(n_ + m_), -1);
    std::vector<Index> queue{from};
    parent[static_cast<std::size_t>(from)] = from;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const Index node = queue[h];
      if (node == to) break;
      for (Index next : adjacency_[static_cast<std::size_t>(node)]) {
        if (parent[static_cast<std::size_t>(next)] != -1) continue;
        parent[static_cast<std::size_t>(next)] = node;
        queue.push_back(next);
      }
    }
    std::vector<Index> path;
    for (Index node = to; node != from; node = parent[static_cast<std::size_t>(node)]) path.push_back(node);
    path.push_back(from);
    std::reverse(path.begin(), path.end());
    return path;
  }

  double pivot(Index enter, bool bland) {
    const Index ei = enter / m_;
    const Index ej = enter % m_;
    // Cycle: entering cell (+), then tree edges alternating -, +, ...
    const auto path = tree_path(ei, n_ + ej);
    std::vector<std::pair<Index, Index>> cells;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      const Index a = path[k], b = path[k + 1];
      cells.emplace_back(a < n_ ? a : b, (a < n_ ? b : a) - n_);
    }
    // cells are ordered from row ei to column ej; the last cell touches column
    // ej and takes the '-' sign, signs then alternate backwards.
    std::reverse(cells.begin(), cells.end());
    double step = std::numeric_limits<double>::infinity();
    Index leave = -1;
    for (std::size_t k = 0; k < cells.size(); k += 2) {
      const auto [i, j] = cells[k];
      const double f = flow_(i, j);
      const Index c = cell(i, j);
      if (f < step || (f == step && bland && c < leave)) {
        step = f;
        leave = c;
      }
    }
    step = std::max(step, 0.0);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto [i, j] = cells[k];
      flow_(i, j) += (k % 2 == 0) ? -step : step;
    }
    flow_(ei, ej) = step;
    set_basic(ei, ej, true);
    set_basic(leave / m_, leave % m_, false);
    flow_(leave / m_, leave % m_) = 0.0;
    return step;
  }

  const Matrix& cost_;
  Index n_, m_;
  ExactOptions opts_;
  Matrix flow_;
  std::vector<char> basic_;
  std::vector<std::vector<Index>> adjacency_;
  std::vector<double> u_, v_;
  int pivots_ = 0;
};

}  // namespace detail

/// Minimizes <C, P> over plans with marginals p and q.
inline ExactSolution exact_transport(const CostMatrix& cost, const Histogram& p, const Histogram& q,
                                     const ExactOptions& opts = {}) {
  if (p.size() != cost.rows() || q.size() != cost.cols()) {
    throw Error(ErrorKind::InvalidInput, "marginals do not match cost dimensions");
  }
  if (cost.rows() * cost.cols() > opts.max_cells) {
    throw Error(ErrorKind::SizeLimit, "exact oracle handles at most " + std::to_string(opts.max_cells) +
                                          " cells, got " + detail::dims(cost.rows(), cost.cols()));
  }
  detail::TransportationSimplex simplex(cost.matrix(), p.values(), q.values(), opts);
  simplex.run();
  ExactSolution out;
  out.plan = simplex.flow().cwiseMax(0.0);
  out.value = transport_cost(out.plan, cost);
  out.nonzeros = (out.plan.array() > 0.0).count();
  out.pivots = simplex.pivots();
  return out;
}

}  // namespace gsot
