#pragma once

// Pairwise regularized transport: the classic Sinkhorn scaling iteration and
// its generalization, which alternates exact row and column projections in
// the dual potentials (alpha, beta) for any regularizer.

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsot/core.hpp"
#include "gsot/regularizers.hpp"

namespace gsot {

struct TraceRecord {
  int iter = 0;
  double row_err = 0.0;  // L1
  double col_err = 0.0;  // L1
  double primal = 0.0;
  std::optional<double> dual;
  double theta_res = 0.0;
};

struct SolveResult {
  Matrix plan;  // equals plan_from_potentials(potentials)
  DualPotentials potentials;
  std::vector<TraceRecord> trace;
  bool converged = false;
  int iterations = 0;

  double row_err() const { return trace.empty() ? 0.0 : trace.back().row_err; }
  double col_err() const { return trace.empty() ? 0.0 : trace.back().col_err; }
};

struct ScalingResult {
  Vector u;
  Vector v;
  std::vector<TraceRecord> trace;  // marginal errors only
  bool converged = false;
  int iterations = 0;
};

/// Called after every full sweep with the current dual potentials.
using PotentialObserver = std::function<void(int iter, const DualPotentials&)>;
/// Called after every full sweep with the current scalings.
using ScalingObserver = std::function<void(int iter, const Vector& u, const Vector& v)>;

namespace detail {

inline void check_marginals(const CostMatrix& cost, const Histogram& p, const Histogram& q) {
  if (p.size() != cost.rows() || q.size() != cost.cols()) {
    throw Error(ErrorKind::InvalidInput, "marginals of length " + std::to_string(p.size()) + " and " +
                                             std::to_string(q.size()) + " do not match a " +
                                             dims(cost.rows(), cost.cols()) + " cost");
  }
}

inline std::string format_scalar(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline void check_scaling_sums(const Vector& sums, const char* axis) {
  for (Index i = 0; i < sums.size(); ++i) {
    if (!(sums[i] > 0.0) || !std::isfinite(sums[i])) {
      throw Error(ErrorKind::Underflow,
                  std::string("scaled kernel ") + axis + " sum " + std::to_string(i) + " is " +
                      format_scalar(sums[i]) + "; exp(-C/lambda) left the floating-point range, retry with log-domain updates or a "
                      "larger lambda");
    }
  }
}

}  // namespace detail

/// K = exp(-C / lambda) evaluated with std::exp, so entries that leave the
/// double range become exactly zero. Subnormal results are flushed to zero
/// as well; they carry no usable mass and make every later product slow.
inline Matrix gibbs_kernel(const CostMatrix& cost, double lambda) {
  detail::check_lambda(lambda);
  return (-cost.matrix() / lambda).unaryExpr([](double x) {
    const double k = std::exp(x);
    return k < std::numeric_limits<double>::min() ? 0.0 : k;
  });
}

/// Alternating diagonal scaling of a positive kernel K so that
/// diag(u) K diag(v) has marginals p and q. Starts from v = 1.
inline ScalingResult classic_sinkhorn(const Matrix& kernel, const Histogram& p, const Histogram& q,
                                      const SolverConfig& cfg, const ScalingObserver& observer = {}) {
  cfg.validate();
  if (p.size() != kernel.rows() || q.size() != kernel.cols()) {
    throw Error(ErrorKind::InvalidInput, "kernel and marginals disagree in size");
  }
  if (!kernel.allFinite() || (kernel.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidInput, "kernel entries must be finite and nonnegative");
  }
  ScalingResult out;
  out.u = Vector::Ones(kernel.rows());
  out.v = Vector::Ones(kernel.cols());
  Vector kv = kernel * out.v;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    detail::check_scaling_sums(kv, "row");
    out.u = p.values().cwiseQuotient(kv);
    const Vector ktu = kernel.transpose() * out.u;
    detail::check_scaling_sums(ktu, "column");
    out.v = q.values().cwiseQuotient(ktu);
    kv = kernel * out.v;

    TraceRecord rec;
    rec.iter = t;
    rec.row_err = (out.u.cwiseProduct(kv) - p.values()).lpNorm<1>();
    rec.col_err = (out.v.cwiseProduct(ktu) - q.values()).lpNorm<1>();
    out.trace.push_back(rec);
    out.iterations = t;
    if (observer) observer(t, out.u, out.v);
    if (std::max(rec.row_err, rec.col_err) <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Solves sum_j (1/lambda)(alpha + beta_j - C_ij)^+ = mass for alpha.
inline double quadratic_row_solve(double lambda, std::span<const double> beta, double mass,
                                  std::span<const double> cost_row) {
  detail::check_lambda(lambda);
  std::vector<double> gamma(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) gamma[j] = beta[j] - cost_row[j];
  return Quadratic{lambda}.solve_row(gamma, mass).alpha;
}

/// Solves sum_j (c (alpha + beta_j - C_ij))^(1/(q-1)) = mass for alpha,
/// c = (q-1)/(lambda q), by Newton steps safeguarded with bisection.
inline double tsallis_row_solve(double lambda, double q, std::span<const double> beta, double mass,
                                std::span<const double> cost_row) {
  detail::check_lambda(lambda);
  check_tsallis_index(q);
  std::vector<double> gamma(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) gamma[j] = beta[j] - cost_row[j];
  return Tsallis{lambda, q}.solve_row(gamma, mass).alpha;
}

namespace detail {

/// New alpha making every row of A(alpha, beta) sum to the target.
template <Regularizer R>
Vector project_rows(const R& reg, const Matrix& cost, const Vector& beta, const Vector& target) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  Vector alpha(n);
  std::vector<double> gamma(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) gamma[static_cast<std::size_t>(j)] = beta[j] - cost(i, j);
    alpha[i] = reg.solve_row(gamma, target[i]).alpha;
  }
  return alpha;
}

/// New beta making every column of A(alpha, beta) sum to the target.
template <Regularizer R>
Vector project_cols(const R& reg, const Matrix& cost, const Vector& alpha, const Vector& target) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  Vector beta(m);
  std::vector<double> gamma(static_cast<std::size_t>(n));
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) gamma[static_cast<std::size_t>(i)] = alpha[i] - cost(i, j);
    beta[j] = reg.solve_row(gamma, target[j]).alpha;
  }
  return beta;
}

}  // namespace detail

/// Row projection: alpha' with row sums of A(alpha', beta) equal to p, beta fixed.
inline Vector row_projection(const RegularizerSpec& reg, const CostMatrix& cost, const DualPotentials& pot,
                             const Histogram& p) {
  detail::check_shape(cost, pot);
  if (p.size() != cost.rows()) throw Error(ErrorKind::InvalidInput, "row marginal length mismatch");
  return reg.visit([&](const auto& r) { return detail::project_rows(r, cost.matrix(), pot.beta, p.values()); });
}

/// Column projection: beta' with column sums of A(alpha, beta') equal to q, alpha fixed.
inline Vector col_projection(const RegularizerSpec& reg, const CostMatrix& cost, const DualPotentials& pot,
                             const Histogram& q) {
  detail::check_shape(cost, pot);
  if (q.size() != cost.cols()) throw Error(ErrorKind::InvalidInput, "column marginal length mismatch");
  return reg.visit([&](const auto& r) { return detail::project_cols(r, cost.matrix(), pot.alpha, q.values()); });
}

/// Moves an approximately feasible plan onto the transport polytope of
/// (p, q): rows and columns are scaled down where they overshoot and the
/// remaining deficit is filled with a rank-one correction.
inline Matrix round_to_feasible(const Matrix& plan, const Vector& p, const Vector& q) {
  Matrix x = plan;
  const Vector rows = x.rowwise().sum();
  for (Index i = 0; i < x.rows(); ++i) {
    if (rows[i] > p[i]) x.row(i) *= p[i] / rows[i];
  }
  const Vector cols = x.colwise().sum().transpose();
  for (Index j = 0; j < x.cols(); ++j) {
    if (cols[j] > q[j]) x.col(j) *= q[j] / cols[j];
  }
  const Vector row_gap = (p - x.rowwise().sum()).cwiseMax(0.0);
  const Vector col_gap = (q - x.colwise().sum().transpose()).cwiseMax(0.0);
  const double gap = row_gap.sum();
  if (gap > 0.0) x += row_gap * col_gap.transpose() / gap;
  return x;
}

namespace detail {

inline TraceRecord make_record(int iter, const RegularizerSpec& reg, const CostMatrix& cost, const Histogram& p,
                               const Histogram& q, const Matrix& plan, const DualPotentials& pot) {
  TraceRecord rec;
  rec.iter = iter;
  const auto [rows, cols] = marginals(plan);
  rec.row_err = (rows - p.values()).lpNorm<1>();
  rec.col_err = (cols - q.values()).lpNorm<1>();
  rec.primal = potential(reg, cost, round_to_feasible(plan, p.values(), q.values()));
  if (pot.alpha.allFinite() && pot.beta.allFinite()) {
    const Matrix sum = pot.alpha.replicate(1, cost.cols()) + pot.beta.transpose().replicate(cost.rows(), 1);
    if (const auto conj = conjugate(reg, cost, sum)) {
      rec.dual = p.values().dot(pot.alpha) + q.values().dot(pot.beta) - *conj;
    }
  }
  rec.theta_res = theta_residual(reg, cost, plan);
  return rec;
}

}  // namespace detail

/// Alternates row and column projections from alpha = beta = 0 until both
/// marginal errors are within cfg.tol. Entropic problems run on the scaling
/// form u = exp(alpha / lambda) unless cfg.log_domain is set.
inline SolveResult solve_transport(const RegularizerSpec& reg, const CostMatrix& cost, const Histogram& p,
                                   const Histogram& q, const SolverConfig& cfg,
                                   const PotentialObserver& observer = {}) {
  cfg.validate();
  detail::check_marginals(cost, p, q);
  if (reg.is_entropic() && !(p.strict() && q.strict())) {
    throw Error(ErrorKind::InvalidInput, "entropic transport needs strictly positive marginals");
  }
  const double lambda = reg.lambda();
  const bool scaling = reg.is_entropic() && !cfg.log_domain;

  SolveResult out;
  out.potentials = DualPotentials::zeros(cost.rows(), cost.cols());
  Matrix kernel;
  Vector u, v;
  if (scaling) {
    kernel = gibbs_kernel(cost, lambda);
    u = Vector::Ones(cost.rows());
    v = Vector::Ones(cost.cols());
  }

  for (int t = 1; t <= cfg.max_iters; ++t) {
    if (scaling) {
      const Vector kv = kernel * v;
      detail::check_scaling_sums(kv, "row");
      u = p.values().cwiseQuotient(kv);
      const Vector ktu = kernel.transpose() * u;
      detail::check_scaling_sums(ktu, "column");
      v = q.values().cwiseQuotient(ktu);
      out.potentials.alpha = lambda * u.array().log().matrix();
      out.potentials.beta = lambda * v.array().log().matrix();
      out.plan = u.asDiagonal() * kernel * v.asDiagonal();
    } else {
      out.potentials.alpha = row_projection(reg, cost, out.potentials, p);
      out.potentials.beta = col_projection(reg, cost, out.potentials, q);
      out.plan = plan_from_potentials(reg, cost, out.potentials);
    }
    out.trace.push_back(detail::make_record(t, reg, cost, p, q, out.plan, out.potentials));
    out.iterations = t;
    if (observer) observer(t, out.potentials);
    const auto& rec = out.trace.back();
    if (std::max(rec.row_err, rec.col_err) <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  if (cfg.strict && !out.converged) {
    throw Error(ErrorKind::NotConverged, "marginal error " + std::to_string(std::max(out.row_err(), out.col_err())) +
                                             " above tolerance after " + std::to_string(out.iterations) +
                                             " iterations");
  }
  return out;
}

}  // namespace gsot
