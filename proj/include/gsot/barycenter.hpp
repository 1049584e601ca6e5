#pragma once

// Regularized Wasserstein barycenters.
//
// `entropic_barycenter` is the multi-marginal scaling iteration on a Gibbs
// kernel. `generalized_barycenter` works in dual potentials for any
// regularizer: every sweep first projects each plan P^k = A(alpha^k, beta^k)
// onto its row constraint, then equalizes the column marginals of
// neighbouring plans (k, k+1) while keeping sum_k r_k beta^k = 0.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gsot/core.hpp"
#include "gsot/regularizers.hpp"
#include "gsot/transport.hpp"

namespace gsot {

struct BarycenterRecord {
  int iter = 0;
  double row_err = 0.0;        // max over k of the L1 row-marginal error
  double consensus_err = 0.0;  // max over k, j of |q^k_j - q^1_j|
  double beta_residual = 0.0;  // max over j of |sum_k r_k beta^k_j|
  int fallbacks = 0;           // pair solves that needed the bisection fallback
};

struct BarycenterOptions {
  SolverConfig solver;
  bool fixed_iterations = false;  // run exactly solver.max_iters sweeps
  int trace_stride = 1;           // record every n-th sweep (the last is always kept)
};

struct BarycenterResult {
  Vector barycenter;                     // normalized consensus marginal q*
  std::vector<Matrix> plans;             // P^1..P^N
  std::vector<DualPotentials> potentials;  // empty for the scaling iteration
  std::vector<BarycenterRecord> trace;
  bool converged = false;
  int iterations = 0;

  double residual() const {
    return trace.empty() ? 0.0 : std::max(trace.back().row_err, trace.back().consensus_err);
  }
};

using BarycenterObserver = std::function<void(int iter, const std::vector<DualPotentials>&)>;

namespace detail {

inline void check_barycenter(const BarycenterProblem& problem, Index rows, Index cols) {
  if (rows != cols) throw Error(ErrorKind::InvalidInput, "barycenter needs a square cost matrix");
  if (problem.support_size() != rows) {
    throw Error(ErrorKind::InvalidInput, "histogram length " + std::to_string(problem.support_size()) +
                                             " does not match cost size " + std::to_string(rows));
  }
}

inline Vector consensus(const std::vector<Vector>& cols, const Vector& weights) {
  Vector q = Vector::Zero(cols.front().size());
  for (std::size_t k = 0; k < cols.size(); ++k) q += weights[static_cast<Index>(k)] * cols[k];
  const double total = q.sum();
  if (total > 0.0) q /= total;
  return q;
}

inline double consensus_error(const std::vector<Vector>& cols) {
  double err = 0.0;
  for (std::size_t k = 1; k < cols.size(); ++k) err = std::max(err, (cols[k] - cols[0]).cwiseAbs().maxCoeff());
  return err;
}

inline bool should_record(int t, const BarycenterOptions& opts) {
  return t == opts.solver.max_iters || opts.trace_stride <= 1 || t % opts.trace_stride == 0;
}

}  // namespace detail

/// Multi-marginal Sinkhorn scaling on the kernel K. Intermediate geometric
/// means are left unnormalized; q* is normalized on output. Zero entries in
/// the inputs are allowed and zero the corresponding rows.
inline BarycenterResult entropic_barycenter(const Matrix& kernel, const BarycenterProblem& problem,
                                            const BarycenterOptions& opts) {
  opts.solver.validate();
  detail::check_barycenter(problem, kernel.rows(), kernel.cols());
  if (!kernel.allFinite() || (kernel.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidInput, "kernel entries must be finite and nonnegative");
  }
  const std::size_t count = problem.count();
  const Index n = kernel.rows();
  const Vector& r = problem.weights();
  const Matrix kernel_t = kernel.transpose();

  std::vector<Vector> u(count, Vector::Ones(n)), v(count, Vector::Ones(n));
  std::vector<Vector> kv(count), ktu(count);
  for (std::size_t k = 0; k < count; ++k) kv[k] = kernel * v[k];
  Vector geometric(n);

  BarycenterResult out;
  for (int t = 1; t <= opts.solver.max_iters; ++t) {
    for (std::size_t k = 0; k < count; ++k) {
      detail::check_scaling_sums(kv[k], "row");
      u[k] = problem.inputs()[k].values().cwiseQuotient(kv[k]);
      ktu[k] = kernel_t * u[k];
      detail::check_scaling_sums(ktu[k], "column");
    }
    geometric.setOnes();
    for (std::size_t k = 0; k < count; ++k) {
      geometric.array() *= ktu[k].array().pow(r[static_cast<Index>(k)]);
    }
    for (std::size_t k = 0; k < count; ++k) {
      v[k] = geometric.cwiseQuotient(ktu[k]);
      if (!v[k].allFinite()) {
        throw Error(ErrorKind::Underflow, "column scaling overflowed; retry with a larger lambda");
      }
      kv[k] = kernel * v[k];
    }

    BarycenterRecord rec;
    rec.iter = t;
    std::vector<Vector> cols(count);
    for (std::size_t k = 0; k < count; ++k) {
      rec.row_err =
          std::max(rec.row_err, (u[k].cwiseProduct(kv[k]) - problem.inputs()[k].values()).lpNorm<1>());
      cols[k] = v[k].cwiseProduct(ktu[k]);
    }
    rec.consensus_err = detail::consensus_error(cols);
    out.iterations = t;
    const bool done = !opts.fixed_iterations && std::max(rec.row_err, rec.consensus_err) <= opts.solver.tol;
    if (done || detail::should_record(t, opts)) out.trace.push_back(rec);
    if (done) {
      out.converged = true;
      break;
    }
  }

  out.barycenter = geometric / geometric.sum();
  for (std::size_t k = 0; k < count; ++k) out.plans.push_back(u[k].asDiagonal() * kernel * v[k].asDiagonal());
  if (!out.trace.empty() && out.trace.back().iter != out.iterations) {
    // Final state is always reported.
    BarycenterRecord rec;
    rec.iter = out.iterations;
    std::vector<Vector> cols(count);
    for (std::size_t k = 0; k < count; ++k) {
      const auto m = marginals(out.plans[k]);
      rec.row_err = std::max(rec.row_err, (m.row - problem.inputs()[k].values()).lpNorm<1>());
      cols[k] = m.col;
    }
    rec.consensus_err = detail::consensus_error(cols);
    out.trace.push_back(rec);
  }
  out.converged = out.converged || out.residual() <= opts.solver.tol;
  if (opts.solver.strict && !out.converged) {
    throw Error(ErrorKind::NotConverged, "barycenter residual " + std::to_string(out.residual()) +
                                             " above tolerance");
  }
  return out;
}

/// Solves the column-j equalization between plans k and k+1 for the
/// quadratic regularizer: sum_i (alpha^k_i + b1 - C_ij)^+ equals
/// sum_i (alpha^{k+1}_i + b2 - C_ij)^+ with r_k b1 + r_{k+1} b2 = sigma.
inline PairSolve quadratic_pair_solve(double lambda, Index j, const CostMatrix& cost, const Vector& alpha_first,
                                      const Vector& alpha_second, double sigma, double r_first, double r_second) {
  detail::check_lambda(lambda);
  std::vector<double> g1(static_cast<std::size_t>(cost.rows())), g2(g1.size());
  for (Index i = 0; i < cost.rows(); ++i) {
    g1[static_cast<std::size_t>(i)] = alpha_first[i] - cost(i, j);
    g2[static_cast<std::size_t>(i)] = alpha_second[i] - cost(i, j);
  }
  return Quadratic{lambda}.solve_pair(g1, g2, sigma, r_first, r_second);
}

/// Tsallis counterpart of quadratic_pair_solve; eliminates b2 and runs a
/// safeguarded Newton iteration on b1.
inline PairSolve tsallis_pair_solve(double lambda, double q, Index j, const CostMatrix& cost,
                                    const Vector& alpha_first, const Vector& alpha_second, double sigma,
                                    double r_first, double r_second) {
  detail::check_lambda(lambda);
  check_tsallis_index(q);
  std::vector<double> g1(static_cast<std::size_t>(cost.rows())), g2(g1.size());
  for (Index i = 0; i < cost.rows(); ++i) {
    g1[static_cast<std::size_t>(i)] = alpha_first[i] - cost(i, j);
    g2[static_cast<std::size_t>(i)] = alpha_second[i] - cost(i, j);
  }
  return Tsallis{lambda, q}.solve_pair(g1, g2, sigma, r_first, r_second);
}

namespace detail {

// A zero-mass input pixel forces its row of the plan to zero, and every
// alpha at or below -max(gamma) does that. Taking alpha = -inf keeps the row
// empty after later beta updates instead of letting it leak mass back in.
// The entropic potential reaches zero mass only in that limit anyway.
template <Regularizer R>
double input_row_potential(const R& reg, std::span<const double> gamma, double mass) {
  if (mass == 0.0 && !std::is_same_v<R, Tsallis>) return -std::numeric_limits<double>::infinity();
  return reg.solve_row(gamma, mass).alpha;
}

template <Regularizer R>
BarycenterResult run_generalized_barycenter(const R& reg, const CostMatrix& cost, const BarycenterProblem& problem,
                                            const BarycenterOptions& opts, const BarycenterObserver& observer) {
  const std::size_t count = problem.count();
  const Index n = cost.rows();
  const Vector& r = problem.weights();
  const Matrix& c = cost.matrix();
  const Matrix cost_t = c.transpose();  // contiguous rows for the row projections

  std::vector<DualPotentials> pot(count, DualPotentials::zeros(n, n));
  std::vector<double> g1(static_cast<std::size_t>(n)), g2(g1.size());

  const auto plan_of = [&](std::size_t k) {
    Matrix plan(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) plan(i, j) = reg.plan_entry(pot[k].alpha[i] + pot[k].beta[j] - c(i, j));
    return plan;
  };
  const auto record = [&](int t, int fallbacks) {
    BarycenterRecord rec;
    rec.iter = t;
    rec.fallbacks = fallbacks;
    std::vector<Vector> cols(count);
    for (std::size_t k = 0; k < count; ++k) {
      Vector rows = Vector::Zero(n);
      cols[k] = Vector::Zero(n);
      for (Index j = 0; j < n; ++j) {
        double col = 0.0;
        for (Index i = 0; i < n; ++i) {
          const double a = reg.plan_entry(pot[k].alpha[i] + pot[k].beta[j] - c(i, j));
          rows[i] += a;
          col += a;
        }
        cols[k][j] = col;
      }
      rec.row_err = std::max(rec.row_err, (rows - problem.inputs()[k].values()).template lpNorm<1>());
    }
    rec.consensus_err = consensus_error(cols);
    Vector weighted = Vector::Zero(n);
    for (std::size_t k = 0; k < count; ++k) weighted += r[static_cast<Index>(k)] * pot[k].beta;
    rec.beta_residual = weighted.cwiseAbs().maxCoeff();
    return rec;
  };

  BarycenterResult out;
  for (int t = 1; t <= opts.solver.max_iters; ++t) {
    for (std::size_t k = 0; k < count; ++k) {
      const Vector& target = problem.inputs()[k].values();
      for (Index i = 0; i < n; ++i) {
        Eigen::Map<Vector>(g1.data(), n) = pot[k].beta - cost_t.col(i);
        pot[k].alpha[i] = input_row_potential(reg, g1, target[i]);
      }
    }
    int fallbacks = 0;
    for (std::size_t k = 0; k + 1 < count; ++k) {
      const double r1 = r[static_cast<Index>(k)];
      const double r2 = r[static_cast<Index>(k + 1)];
      for (Index j = 0; j < n; ++j) {
        double sigma = 0.0;
        for (std::size_t l = 0; l < count; ++l) {
          if (l != k && l != k + 1) sigma -= r[static_cast<Index>(l)] * pot[l].beta[j];
        }
        Eigen::Map<Vector>(g1.data(), n) = pot[k].alpha - c.col(j);
        Eigen::Map<Vector>(g2.data(), n) = pot[k + 1].alpha - c.col(j);
        const PairSolve s = reg.solve_pair(g1, g2, sigma, r1, r2);
        pot[k].beta[j] = s.beta_first;
        pot[k + 1].beta[j] = s.beta_second;
        fallbacks += s.used_fallback ? 1 : 0;
      }
    }
    out.iterations = t;
    if (observer) observer(t, pot);
    const bool check = !opts.fixed_iterations || detail::should_record(t, opts);
    if (!check) continue;
    const BarycenterRecord rec = record(t, fallbacks);
    if (detail::should_record(t, opts)) out.trace.push_back(rec);
    if (!opts.fixed_iterations && std::max(rec.row_err, rec.consensus_err) <= opts.solver.tol) {
      if (out.trace.empty() || out.trace.back().iter != t) out.trace.push_back(rec);
      out.converged = true;
      break;
    }
  }
  if (out.trace.empty() || out.trace.back().iter != out.iterations) out.trace.push_back(record(out.iterations, 0));

  std::vector<Vector> cols(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.plans.push_back(plan_of(k));
    cols[k] = out.plans.back().colwise().sum().transpose();
  }
  out.barycenter = consensus(cols, r);
  out.potentials = std::move(pot);
  out.converged = out.converged || out.residual() <= opts.solver.tol;
  return out;
}

}  // namespace detail

/// Barycenter of problem.inputs() for any regularizer on a square cost.
inline BarycenterResult generalized_barycenter(const RegularizerSpec& reg, const CostMatrix& cost,
                                               const BarycenterProblem& problem, const BarycenterOptions& opts,
                                               const BarycenterObserver& observer = {}) {
  opts.solver.validate();
  detail::check_barycenter(problem, cost.rows(), cost.cols());
  auto out = reg.visit([&](const auto& r) {
    return detail::run_generalized_barycenter(r, cost, problem, opts, observer);
  });
  if (opts.solver.strict && !out.converged) {
    throw Error(ErrorKind::NotConverged, "barycenter residual " + std::to_string(out.residual()) +
                                             " above tolerance");
  }
  return out;
}

}  // namespace gsot
