#pragma once

// Convex regularizers for discrete optimal transport.
//
// Each regularizer supplies the pieces the alternating dual-projection
// solvers need: the potential on the positive orthant, its gradient S, the
// inverse map from a dual value x = alpha_i + beta_j - C_ij back to a plan
// entry, the Legendre conjugate where it is available in closed form, and
// the scalar equations solved during row and pair projections.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gsot/core.hpp"
#include "gsot/detail/scalar.hpp"

namespace gsot {

/// Row-projection outcome: the new dual value and how many entries ended up active.
struct RowSolve {
  double alpha;
  Index active;  // number of active terms (quadratic), or row length
};

/// Pair-projection outcome for one column of two neighbouring plans.
struct PairSolve {
  double beta_first;
  double beta_second;
  bool used_fallback = false;  // the active-set scan was inconclusive
};

namespace detail {

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidInput, "regularization strength must be positive and finite");
  }
}

inline void check_nonnegative(const Matrix& a, const char* what) {
  if (!a.allFinite() || (a.array() < 0.0).any()) {
    throw Error(ErrorKind::Domain, std::string(what) + ": entries must be finite and nonnegative");
  }
}

inline void check_positive(const Matrix& a, const char* what) {
  if (!a.allFinite() || (a.array() <= kZeroMass).any()) {
    throw Error(ErrorKind::Domain, std::string(what) + ": entries must be strictly positive");
  }
}

inline double max_of(std::span<const double> v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())).maxCoeff();
}

/// Entries strictly greater than `floor`, in input order.
inline std::vector<double> entries_above(std::span<const double> v, double floor) {
  std::vector<double> out;
  for (double x : v) {
    if (x > floor) out.push_back(x);
  }
  return out;
}

/// Two-pointer walk for the quadratic pair equation. Walks the common value
/// x = F1 = F2 upward; each side's active count only grows with x, so the
/// segments are visited in order of their breakpoints. Returns {b1, x}.
inline std::pair<double, double> quadratic_pair_scan(std::span<const double> g1, std::span<const double> g2,
                                                     double sigma, double r1, double r2) {
  DescendingScan s1(g1);
  DescendingScan s2(g2);
  double sum1 = s1.pop();
  double sum2 = s2.pop();
  double n1 = 1.0;
  double n2 = 1.0;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (;;) {
    const double b1 = (n2 * sigma - r2 * (sum1 - sum2)) / (r2 * n1 + r1 * n2);
    const double x = n1 * b1 + sum1;
    const double end1 = s1.empty() ? kInf : sum1 - n1 * s1.top();
    const double end2 = s2.empty() ? kInf : sum2 - n2 * s2.top();
    if (x <= std::min(end1, end2)) return {b1, x};
    if (end1 <= end2) {
      sum1 += s1.pop();
      n1 += 1.0;
    } else {
      sum2 += s2.pop();
      n2 += 1.0;
    }
  }
}

/// Bracket for the pair equation F1(b) = F2((sigma - r1 b) / r2): below
/// `first_on` the first sum vanishes, above `second_off` the second does.
struct PairBracket {
  double first_on;
  double second_off;
};

inline PairBracket pair_bracket(std::span<const double> g1, std::span<const double> g2, double sigma,
                                double r1, double r2) {
  return {-max_of(g1), (sigma + r2 * max_of(g2)) / r1};
}

}  // namespace detail

/// Negative Shannon entropy: lambda * (sum A log A - sum A + 1).
struct Entropic {
  double lambda;

  std::string name() const { return "entropic"; }

  double value(const Matrix& a) const {
    detail::check_nonnegative(a, "entropic potential");
    double s = 0.0;
    for (Index k = 0; k < a.size(); ++k) s += xlogx(a.data()[k]) - a.data()[k];
    return lambda * (s + 1.0);
  }

  Matrix gradient(const Matrix& a) const {
    detail::check_positive(a, "entropic gradient");
    return lambda * a.array().log().matrix();
  }

  double plan_entry(double x) const { return std::exp(x / lambda); }

  std::optional<double> conjugate(const Matrix& shifted) const {
    return lambda * ((shifted.array() / lambda).exp().sum() - 1.0);
  }

  /// alpha = lambda log(mass) - lambda log sum_j exp(gamma_j / lambda).
  RowSolve solve_row(std::span<const double> gamma, double mass) const {
    if (!(mass > 0.0)) {
      throw Error(ErrorKind::Domain, "entropic regularization needs strictly positive marginals");
    }
    std::vector<double> scaled(gamma.begin(), gamma.end());
    for (double& g : scaled) g /= lambda;
    return {lambda * (std::log(mass) - detail::log_sum_exp(scaled)), static_cast<Index>(gamma.size())};
  }

  PairSolve solve_pair(std::span<const double> g1, std::span<const double> g2, double sigma, double r1,
                       double r2) const {
    std::vector<double> s1(g1.begin(), g1.end());
    std::vector<double> s2(g2.begin(), g2.end());
    for (double& g : s1) g /= lambda;
    for (double& g : s2) g /= lambda;
    // exp(b1 / lambda) Z1 = exp(b2 / lambda) Z2 fixes b1 - b2.
    const double diff = lambda * (detail::log_sum_exp(s2) - detail::log_sum_exp(s1));
    const double b1 = (sigma + r2 * diff) / (r1 + r2);
    return {b1, (sigma - r1 * b1) / r2};
  }
};

/// Squared Frobenius norm: (lambda / 2) sum A^2; plans may sit on the boundary.
struct Quadratic {
  double lambda;

  std::string name() const { return "quadratic"; }

  double value(const Matrix& a) const {
    detail::check_nonnegative(a, "quadratic potential");
    return 0.5 * lambda * a.squaredNorm();
  }

  Matrix gradient(const Matrix& a) const {
    detail::check_nonnegative(a, "quadratic gradient");
    return lambda * a;
  }

  double plan_entry(double x) const { return x > 0.0 ? x / lambda : 0.0; }

  std::optional<double> conjugate(const Matrix& shifted) const {
    return shifted.cwiseMax(0.0).squaredNorm() / (2.0 * lambda);
  }

  /// Solves sum_j (alpha + gamma_j)^+ = lambda * mass by scanning active-set
  /// sizes J over the descending order of gamma.
  RowSolve solve_row(std::span<const double> gamma, double mass) const;

  /// Solves sum_i (g1_i + b1)^+ = sum_i (g2_i + b2)^+ with r1 b1 + r2 b2 = sigma
  /// by a two-pointer scan over both descending orders.
  PairSolve solve_pair(std::span<const double> g1, std::span<const double> g2, double sigma, double r1,
                       double r2) const;
};

/// Tsallis entropy of index q through its 1-homogeneous extension
///   T(A) = (1 / (q - 1)) sum_ij (A_ij - (sum A)^(1 - q) A_ij^q),
/// contributing -lambda * T(A) to the potential.
struct Tsallis {
  double lambda;
  double q;

  std::string name() const { return "tsallis"; }

  double coefficient() const { return (q - 1.0) / (lambda * q); }
  double exponent() const { return 1.0 / (q - 1.0); }

  double homogeneous_entropy(const Matrix& a) const {
    detail::check_nonnegative(a, "Tsallis potential");
    const double total = a.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::Domain, "Tsallis potential of a zero matrix");
    double power_sum = 0.0;
    for (Index k = 0; k < a.size(); ++k) {
      const double x = a.data()[k];
      if (x > 0.0) power_sum += std::pow(x, q);
    }
    return (total - std::pow(total, 1.0 - q) * power_sum) / (q - 1.0);
  }

  double value(const Matrix& a) const { return -lambda * homogeneous_entropy(a); }

  /// Scale invariant: depends on A only through A / sum A.
  Matrix gradient(const Matrix& a) const {
    if (q < 1.0) {
      detail::check_positive(a, "Tsallis gradient");
    } else {
      detail::check_nonnegative(a, "Tsallis gradient");
    }
    const double total = a.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::Domain, "Tsallis gradient of a zero matrix");
    const Matrix p = a / total;
    double power_sum = 0.0;
    for (Index k = 0; k < p.size(); ++k) {
      if (p.data()[k] > 0.0) power_sum += std::pow(p.data()[k], q);
    }
    Matrix g(a.rows(), a.cols());
    for (Index k = 0; k < p.size(); ++k) {
      const double x = p.data()[k];
      const double pw = x > 0.0 ? std::pow(x, q - 1.0) : 0.0;
      g.data()[k] = lambda / (q - 1.0) * (q * pw + (1.0 - q) * power_sum - 1.0);
    }
    return g;
  }

  /// (c x)^(1/(q-1)) with c = (q-1)/(lambda q). For q > 1 a nonpositive base
  /// gives 0; for q < 1 the base must be positive.
  double plan_entry(double x) const {
    const double base = coefficient() * x;
    if (q > 1.0) return base > 0.0 ? std::pow(base, exponent()) : 0.0;
    if (!(base > 0.0)) {
      throw Error(ErrorKind::Domain, "Tsallis plan with q < 1 requires alpha_i + beta_j < C_ij");
    }
    return std::pow(base, exponent());
  }

  double plan_entry_derivative(double x) const {
    const double c = coefficient();
    const double base = c * x;
    if (!(base > 0.0)) return 0.0;
    return exponent() * c * std::pow(base, exponent() - 1.0);
  }

  /// The homogeneous part has an indicator conjugate; not evaluated.
  std::optional<double> conjugate(const Matrix&) const { return std::nullopt; }

  RowSolve solve_row(std::span<const double> gamma, double mass) const;

  PairSolve solve_pair(std::span<const double> g1, std::span<const double> g2, double sigma, double r1,
                       double r2) const;

 private:
  double power_sum(std::span<const double> gamma, double shift) const {
    double s = 0.0;
    for (double g : gamma) s += plan_entry(g + shift);
    return s;
  }
  double power_sum_derivative(std::span<const double> gamma, double shift) const {
    double s = 0.0;
    for (double g : gamma) s += plan_entry_derivative(g + shift);
    return s;
  }
};

template <class R>
concept Regularizer = requires(const R& r, const Matrix& a, double x, std::span<const double> v) {
  { r.lambda } -> std::convertible_to<double>;
  { r.name() } -> std::convertible_to<std::string>;
  { r.value(a) } -> std::convertible_to<double>;
  { r.gradient(a) } -> std::convertible_to<Matrix>;
  { r.plan_entry(x) } -> std::convertible_to<double>;
  { r.conjugate(a) } -> std::same_as<std::optional<double>>;
  { r.solve_row(v, x) } -> std::same_as<RowSolve>;
  { r.solve_pair(v, v, x, x, x) } -> std::same_as<PairSolve>;
};

static_assert(Regularizer<Entropic>);
static_assert(Regularizer<Quadratic>);
static_assert(Regularizer<Tsallis>);

/// Tagged choice of regularizer with validated parameters.
class RegularizerSpec {
 public:
  using Variant = std::variant<Entropic, Quadratic, Tsallis>;

  static RegularizerSpec entropic(double lambda) {
    detail::check_lambda(lambda);
    return RegularizerSpec(Entropic{lambda});
  }
  static RegularizerSpec quadratic(double lambda) {
    detail::check_lambda(lambda);
    return RegularizerSpec(Quadratic{lambda});
  }
  static RegularizerSpec tsallis(double lambda, double q) {
    detail::check_lambda(lambda);
    check_tsallis_index(q);
    return RegularizerSpec(Tsallis{lambda, q});
  }

  template <class F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), impl_);
  }

  bool is_entropic() const noexcept { return std::holds_alternative<Entropic>(impl_); }
  bool is_quadratic() const noexcept { return std::holds_alternative<Quadratic>(impl_); }
  bool is_tsallis() const noexcept { return std::holds_alternative<Tsallis>(impl_); }

  double lambda() const {
    return visit([](const auto& r) { return r.lambda; });
  }
  std::string name() const {
    return visit([](const auto& r) { return r.name(); });
  }
  const Variant& variant() const noexcept { return impl_; }

 private:
  explicit RegularizerSpec(Variant v) : impl_(std::move(v)) {}
  Variant impl_;
};

/// Dual potentials (alpha, beta); the plan depends on them only through alpha_i + beta_j.
struct DualPotentials {
  Vector alpha;
  Vector beta;

  static DualPotentials zeros(Index n, Index m) { return {Vector::Zero(n), Vector::Zero(m)}; }

  /// Resolves the (alpha + c, beta - c) gauge by setting the last beta to zero.
  DualPotentials canonical() const {
    DualPotentials out = *this;
    const double shift = beta[beta.size() - 1];
    out.alpha.array() += shift;
    out.beta.array() -= shift;
    return out;
  }
};

namespace detail {

inline void check_shape(const CostMatrix& cost, const Matrix& a) {
  if (a.rows() != cost.rows() || a.cols() != cost.cols()) {
    throw Error(ErrorKind::InvalidInput, "matrix is " + dims(a.rows(), a.cols()) + " but cost is " +
                                             dims(cost.rows(), cost.cols()));
  }
}

inline void check_shape(const CostMatrix& cost, const DualPotentials& pot) {
  if (pot.alpha.size() != cost.rows() || pot.beta.size() != cost.cols()) {
    throw Error(ErrorKind::InvalidInput, "potentials do not match cost dimensions");
  }
}

}  // namespace detail

/// Phi(A) = <A, C> + regularizer(A).
inline double potential(const RegularizerSpec& reg, const CostMatrix& cost, const Matrix& a) {
  detail::check_shape(cost, a);
  return a.cwiseProduct(cost.matrix()).sum() + reg.visit([&](const auto& r) { return r.value(a); });
}

/// S(A) = C + gradient of the regularizer.
inline Matrix gradient(const RegularizerSpec& reg, const CostMatrix& cost, const Matrix& a) {
  detail::check_shape(cost, a);
  return cost.matrix() + reg.visit([&](const auto& r) { return r.gradient(a); });
}

/// The plan A(alpha, beta) whose gradient is alpha (+) beta, entry by entry.
inline Matrix plan_from_potentials(const RegularizerSpec& reg, const CostMatrix& cost, const DualPotentials& pot) {
  detail::check_shape(cost, pot);
  return reg.visit([&](const auto& r) {
    Matrix plan(cost.rows(), cost.cols());
    for (Index j = 0; j < cost.cols(); ++j) {
      for (Index i = 0; i < cost.rows(); ++i) {
        plan(i, j) = r.plan_entry(pot.alpha[i] + pot.beta[j] - cost(i, j));
      }
    }
    return plan;
  });
}

/// Legendre conjugate sup_A <A, u> - Phi(A); std::nullopt where no closed form is offered.
inline std::optional<double> conjugate(const RegularizerSpec& reg, const CostMatrix& cost, const Matrix& u) {
  detail::check_shape(cost, u);
  if (!u.allFinite()) throw Error(ErrorKind::InvalidInput, "conjugate argument must be finite");
  const Matrix shifted = u - cost.matrix();
  return reg.visit([&](const auto& r) { return r.conjugate(shifted); });
}

/// Largest deviation of S(P) from the separable form alpha_i + beta_j over
/// the support of P. With full support this is the max over (i, j) of
/// |S_ij - S_im - S_nj + S_nm|; on a partial support (quadratic plans) the
/// fit runs over a spanning forest of the bipartite support graph.
inline double theta_residual(const RegularizerSpec& reg, const CostMatrix& cost, const Matrix& plan) {
  detail::check_shape(cost, plan);
  detail::check_nonnegative(plan, "theta residual");
  const Index n = plan.rows();
  const Index m = plan.cols();
  const auto active = [&](Index i, Index j) { return plan(i, j) > kZeroMass; };

  Matrix score = cost.matrix();
  reg.visit([&](const auto& r) {
    using R = std::decay_t<decltype(r)>;
    if constexpr (std::is_same_v<R, Entropic>) {
      for (Index j = 0; j < m; ++j)
        for (Index i = 0; i < n; ++i)
          if (active(i, j)) score(i, j) += r.lambda * std::log(plan(i, j));
    } else {
      score += r.gradient(plan);
    }
  });

  Vector alpha = Vector::Zero(n);
  Vector beta = Vector::Zero(m);
  std::vector<char> row_seen(static_cast<std::size_t>(n), 0);
  std::vector<char> col_seen(static_cast<std::size_t>(m), 0);
  std::vector<Index> queue;  // rows encoded as i, columns as n + j
  for (Index root = n - 1; root >= 0; --root) {
    if (row_seen[static_cast<std::size_t>(root)]) continue;
    row_seen[static_cast<std::size_t>(root)] = 1;
    queue.assign(1, root);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Index node = queue[head];
      if (node < n) {
        for (Index j = m - 1; j >= 0; --j) {
          if (col_seen[static_cast<std::size_t>(j)] || !active(node, j)) continue;
          col_seen[static_cast<std::size_t>(j)] = 1;
          beta[j] = score(node, j) - alpha[node];
          queue.push_back(n + j);
        }
      } else {
        const Index j = node - n;
        for (Index i = n - 1; i >= 0; --i) {
          if (row_seen[static_cast<std::size_t>(i)] || !active(i, j)) continue;
          row_seen[static_cast<std::size_t>(i)] = 1;
          alpha[i] = score(i, j) - beta[j];
          queue.push_back(i);
        }
      }
    }
  }

  double residual = 0.0;
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i)
      if (active(i, j)) residual = std::max(residual, std::abs(score(i, j) - alpha[i] - beta[j]));
  return residual;
}

/// D(P || Q) = Phi(P) - Phi(Q) - <S(Q), P - Q>. The cost terms cancel, so
/// only the regularizer enters.
inline double bregman_divergence(const RegularizerSpec& reg, const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorKind::InvalidInput, "Bregman divergence of mismatched shapes");
  }
  detail::check_nonnegative(p, "Bregman divergence");
  detail::check_nonnegative(q, "Bregman divergence");
  return reg.visit([&](const auto& r) -> double {
    using R = std::decay_t<decltype(r)>;
    if constexpr (std::is_same_v<R, Entropic>) {
      // lambda * (sum P log(P/Q) - sum P + sum Q)
      double d = 0.0;
      for (Index k = 0; k < p.size(); ++k) {
        const double a = p.data()[k];
        const double b = q.data()[k];
        if (a > kZeroMass) {
          if (b <= kZeroMass) throw Error(ErrorKind::Domain, "entropic divergence needs supp(P) in supp(Q)");
          d += a * std::log(a / b);
        }
        d += b - a;
      }
      return r.lambda * d;
    } else if constexpr (std::is_same_v<R, Quadratic>) {
      return 0.5 * r.lambda * (p - q).squaredNorm();
    } else {
      // 1-homogeneity gives <S(Q), Q> = Phi(Q) for the regularizer part.
      return r.value(p) - p.cwiseProduct(r.gradient(q)).sum();
    }
  });
}

/// Divergence between a reference plan P and the dual point u = alpha (+) beta,
/// Phi(P) + Phi*(u) - <P, u>: the Bregman divergence of the conjugate. It
/// equals bregman_divergence(reg, P, A(alpha, beta)) when no plan entry is
/// clamped at zero. For a feasible P it is Phi(P) minus the dual objective, so
/// the alternating projections never increase it. std::nullopt where the
/// conjugate is unavailable.
inline std::optional<double> dual_divergence(const RegularizerSpec& reg, const CostMatrix& cost,
                                             const Matrix& reference, const DualPotentials& pot) {
  detail::check_shape(cost, pot);
  const Matrix u = pot.alpha.replicate(1, cost.cols()) + pot.beta.transpose().replicate(cost.rows(), 1);
  const auto conj = conjugate(reg, cost, u);
  if (!conj) return std::nullopt;
  return potential(reg, cost, reference) + *conj - reference.cwiseProduct(u).sum();
}

// ---------------------------------------------------------------------------
// Scalar solvers.

inline RowSolve Quadratic::solve_row(std::span<const double> gamma, double mass) const {
  if (gamma.empty()) throw Error(ErrorKind::InvalidInput, "empty row");
  if (!(mass >= 0.0)) throw Error(ErrorKind::Domain, "quadratic row solve needs a nonnegative mass");
  const double top = detail::max_of(gamma);
  if (mass == 0.0) {
    // Whole interval of solutions; take its right end so every term is inactive.
    return {-top, 0};
  }
  // The largest term alone gives alpha <= lambda mass - top, so entries at or
  // below top - lambda mass can never be active.
  const double target = lambda * mass;
  const auto candidates = detail::entries_above(gamma, top - target);
  detail::DescendingScan scan(candidates);
  double partial = 0.0;
  Index active = 0;
  double alpha = 0.0;
  while (!scan.empty()) {
    partial += scan.pop();
    ++active;
    alpha = (target - partial) / static_cast<double>(active);
    if (scan.empty() || alpha + scan.top() <= 0.0) break;
  }
  return {alpha, active};
}

inline PairSolve Quadratic::solve_pair(std::span<const double> g1, std::span<const double> g2, double sigma,
                                       double r1, double r2) const {
  if (g1.empty() || g1.size() != g2.size()) throw Error(ErrorKind::InvalidInput, "pair solve size mismatch");
  const auto bracket = detail::pair_bracket(g1, g2, sigma, r1, r2);
  const auto second = [&](double b1) { return (sigma - r1 * b1) / r2; };

  // Both sums vanish on [second_off, first_on]: pick the midpoint.
  if (bracket.first_on >= bracket.second_off) {
    const double b1 = 0.5 * (bracket.first_on + bracket.second_off);
    return {b1, second(b1), false};
  }

  const double top1 = -bracket.first_on;
  const double top2 = detail::max_of(g2);
  const auto difference = [&](std::span<const double> h1, std::span<const double> h2, double b) {
    double f1 = 0.0, f2 = 0.0;
    const double b2 = second(b);
    for (double g : h1) f1 += std::max(g + b, 0.0);
    for (double g : h2) f2 += std::max(g + b2, 0.0);
    return std::pair{f1 - f2, std::max(f1, f2)};
  };

  // If the common value x = F1 = F2 is at most `reach`, only entries within
  // `reach` of each side's maximum can be active. Solve on those, then widen
  // the window until the solution confirms the guess.
  double reach = lambda * 8.0 / static_cast<double>(g1.size());
  for (;;) {
    const auto c1 = detail::entries_above(g1, top1 - reach);
    const auto c2 = detail::entries_above(g2, top2 - reach);
    const bool whole = c1.size() == g1.size() && c2.size() == g2.size();
    const auto [b1, x] = detail::quadratic_pair_scan(c1, c2, sigma, r1, r2);
    if (whole || x <= reach) {
      const auto [residual, scale] = difference(c1, c2, b1);
      if (std::abs(residual) <= 1e-9 * std::max(1.0, scale)) return {b1, second(b1), false};
      break;
    }
    reach = std::max(2.0 * reach, x);
  }

  const double fallback = detail::bisect_increasing([&](double b) { return difference(g1, g2, b).first; },
                                                    bracket.first_on, bracket.second_off);
  return {fallback, second(fallback), true};
}

inline RowSolve Tsallis::solve_row(std::span<const double> gamma, double mass) const {
  if (gamma.empty()) throw Error(ErrorKind::InvalidInput, "empty row");
  const double top = detail::max_of(gamma);
  const double count = static_cast<double>(gamma.size());
  if (q > 1.0 && mass == 0.0) return {-top, 0};
  if (!(mass > 0.0)) throw Error(ErrorKind::Domain, "Tsallis row solve needs a positive mass");

  // The largest term alone bounds the sum from below, m copies of it from
  // above; inverting both gives a bracket around the root.
  const double c = std::abs(coefficient());
  const double near = std::pow(mass, q - 1.0) / c;
  const double far = std::pow(mass / count, q - 1.0) / c;
  double lo, hi;
  if (q > 1.0) {
    lo = -top + far;
    hi = -top + near;
  } else {
    lo = -top - far;
    hi = -top - near;
  }
  const auto f = [&](double a) { return power_sum(gamma, a) - mass; };
  for (int k = 0; k < 64 && !(f(lo) <= 0.0); ++k) lo -= std::max(1.0, std::abs(lo)) * std::ldexp(1.0, k);
  if (q > 1.0) {
    for (int k = 0; k < 64 && !(f(hi) >= 0.0); ++k) hi += std::max(1.0, std::abs(hi)) * std::ldexp(1.0, k);
  } else {
    // hi must stay strictly below -top; shrink the gap geometrically.
    for (int k = 0; k < 64 && !(f(hi) >= 0.0); ++k) hi = -top - 0.5 * (-top - hi);
  }
  if (!(f(lo) <= 0.0 && f(hi) >= 0.0)) {
    throw Error(ErrorKind::Bracketing, "Tsallis row solve could not bracket the root (mass " +
                                           std::to_string(mass) + ")");
  }
  const auto root = detail::safeguarded_newton(
      [&](double a) { return std::pair{f(a), power_sum_derivative(gamma, a)}; }, lo, hi, 0.5 * (lo + hi),
      1e-15 * mass);
  return {root.x, static_cast<Index>(gamma.size())};
}

inline PairSolve Tsallis::solve_pair(std::span<const double> g1, std::span<const double> g2, double sigma,
                                     double r1, double r2) const {
  if (g1.empty() || g1.size() != g2.size()) throw Error(ErrorKind::InvalidInput, "pair solve size mismatch");
  const auto bracket = detail::pair_bracket(g1, g2, sigma, r1, r2);
  const auto second = [&](double b1) { return (sigma - r1 * b1) / r2; };
  double lo, hi;
  if (q > 1.0) {
    if (bracket.first_on >= bracket.second_off) {
      const double b1 = 0.5 * (bracket.first_on + bracket.second_off);
      return {b1, second(b1), false};
    }
    lo = bracket.first_on;
    hi = bracket.second_off;
  } else {
    // Both sums are finite only strictly inside (second_off, first_on).
    lo = bracket.second_off;
    hi = bracket.first_on;
    if (!(lo < hi)) {
      throw Error(ErrorKind::Bracketing, "Tsallis pair solve: potentials leave no feasible interval");
    }
  }
  const auto eval = [&](double b) {
    const double b2 = second(b);
    const double value = power_sum(g1, b) - power_sum(g2, b2);
    const double slope = power_sum_derivative(g1, b) + (r1 / r2) * power_sum_derivative(g2, b2);
    return std::pair{value, slope};
  };
  const auto root = detail::safeguarded_newton(eval, lo, hi, 0.5 * (lo + hi), 0.0);
  return {root.x, second(root.x), false};
}

}  // namespace gsot
