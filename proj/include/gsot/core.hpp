#pragma once

// Numeric vocabulary shared by every solver: histograms, cost matrices,
// transport plans, and the objective/divergence functionals evaluated on them.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gsot/error.hpp"

namespace gsot {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Entries at or below this magnitude are treated as exact zeros by
/// entropy and support checks.
inline constexpr double kZeroMass = 1e-300;

/// Histograms whose total deviates from one by at most this much are
/// silently renormalized; anything further off is rejected.
inline constexpr double kRenormalizeTolerance = 1e-6;

inline constexpr double kPlanMassTolerance = 1e-10;

namespace detail {

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

inline std::string dims(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail

/// A probability vector: nonnegative entries summing to one.
class Histogram {
 public:
  Histogram() = default;

  /// Validates `values`, renormalizing when the total is within
  /// kRenormalizeTolerance of one.
  explicit Histogram(Vector values) : values_(std::move(values)) {
    if (values_.size() == 0) {
      throw Error(ErrorKind::InvalidInput, "histogram must have at least one entry");
    }
    if (!values_.allFinite()) {
      throw Error(ErrorKind::InvalidInput, "histogram has non-finite entries");
    }
    if ((values_.array() < 0.0).any()) {
      throw Error(ErrorKind::InvalidInput, "histogram has negative entries");
    }
    const double total = values_.sum();
    if (std::abs(total - 1.0) > kRenormalizeTolerance) {
      throw Error(ErrorKind::InvalidInput,
                  "histogram sums to " + std::to_string(total) + ", expected 1");
    }
    values_ /= total;
    strict_ = (values_.array() > 0.0).all();
  }

  explicit Histogram(const std::vector<double>& values)
      : Histogram(Vector(Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())))) {}

  Histogram(std::initializer_list<double> values) : Histogram(std::vector<double>(values)) {}

  static Histogram uniform(Index n) { return Histogram(Vector::Constant(n, 1.0 / static_cast<double>(n))); }

  const Vector& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

  /// True when every entry is strictly positive.
  bool strict() const noexcept { return strict_; }

 private:
  Vector values_;
  bool strict_ = false;
};

/// An n x m matrix of finite transport costs.
class CostMatrix {
 public:
  CostMatrix() = default;

  explicit CostMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.size() == 0) {
      throw Error(ErrorKind::InvalidInput, "cost matrix must be non-empty");
    }
    if (!entries_.allFinite()) {
      throw Error(ErrorKind::InvalidInput, "cost matrix has non-finite entries");
    }
  }

  const Matrix& matrix() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }

  CostMatrix transposed() const { return CostMatrix(entries_.transpose()); }

 private:
  Matrix entries_;
};

/// A nonnegative n x m matrix of total mass one.
class TransportPlan {
 public:
  TransportPlan() = default;

  explicit TransportPlan(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.size() == 0) {
      throw Error(ErrorKind::InvalidInput, "transport plan must be non-empty");
    }
    if (!entries_.allFinite() || (entries_.array() < 0.0).any()) {
      throw Error(ErrorKind::InvalidInput, "transport plan entries must be finite and nonnegative");
    }
    const double total = entries_.sum();
    if (std::abs(total - 1.0) > kPlanMassTolerance) {
      throw Error(ErrorKind::InvalidInput,
                  "transport plan has total mass " + std::to_string(total));
    }
  }

  const Matrix& matrix() const noexcept { return entries_; }
  operator const Matrix&() const noexcept { return entries_; }  // NOLINT(google-explicit-constructor)
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }

 private:
  Matrix entries_;
};

/// Input histograms p^1..p^N with positive weights r summing to one.
class BarycenterProblem {
 public:
  BarycenterProblem(std::vector<Histogram> inputs, Vector weights)
      : inputs_(std::move(inputs)), weights_(std::move(weights)) {
    if (inputs_.empty()) {
      throw Error(ErrorKind::InvalidInput, "barycenter needs at least one input histogram");
    }
    if (static_cast<Index>(inputs_.size()) != weights_.size()) {
      throw Error(ErrorKind::InvalidInput, "number of weights does not match number of inputs");
    }
    for (const auto& h : inputs_) {
      if (h.size() != inputs_.front().size()) {
        throw Error(ErrorKind::InvalidInput, "barycenter inputs must have equal length");
      }
    }
    if (!weights_.allFinite() || (weights_.array() <= 0.0).any()) {
      throw Error(ErrorKind::InvalidInput, "barycenter weights must be positive");
    }
    if (std::abs(weights_.sum() - 1.0) > 1e-12) {
      throw Error(ErrorKind::InvalidInput, "barycenter weights must sum to 1");
    }
  }

  const std::vector<Histogram>& inputs() const noexcept { return inputs_; }
  const Vector& weights() const noexcept { return weights_; }
  std::size_t count() const noexcept { return inputs_.size(); }
  Index support_size() const noexcept { return inputs_.front().size(); }

 private:
  std::vector<Histogram> inputs_;
  Vector weights_;
};

struct SolverConfig {
  int max_iters = 10000;
  double tol = 1e-9;      // L1 marginal error
  bool log_domain = false;  // entropic only
  bool strict = false;      // non-convergence is an error

  void validate() const {
    if (max_iters < 1) throw Error(ErrorKind::InvalidInput, "max_iters must be >= 1");
    if (!(tol > 0.0) || !std::isfinite(tol)) throw Error(ErrorKind::InvalidInput, "tol must be positive");
  }
};

struct Marginals {
  Vector row;
  Vector col;
};

inline Marginals marginals(const Matrix& plan) {
  return {plan.rowwise().sum(), plan.colwise().sum().transpose()};
}

/// <P, C>.
inline double transport_cost(const Matrix& plan, const CostMatrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw Error(ErrorKind::InvalidInput, "plan is " + detail::dims(plan.rows(), plan.cols()) +
                                             " but cost is " + detail::dims(cost.rows(), cost.cols()));
  }
  return plan.cwiseProduct(cost.matrix()).sum();
}

/// x log x with the 0 log 0 = 0 convention.
inline double xlogx(double x) { return x > kZeroMass ? x * std::log(x) : 0.0; }

inline double shannon_entropy(const Matrix& plan) {
  double h = 0.0;
  for (Index k = 0; k < plan.size(); ++k) h -= xlogx(plan.data()[k]);
  return h;
}

inline void check_tsallis_index(double q) {
  if (!(q > 0.0) || q == 1.0 || !std::isfinite(q)) {
    throw Error(ErrorKind::InvalidInput, "Tsallis index must be positive and different from 1");
  }
}

inline double tsallis_entropy(const Matrix& plan, double q) {
  check_tsallis_index(q);
  double power_sum = 0.0;
  for (Index k = 0; k < plan.size(); ++k) {
    const double x = plan.data()[k];
    if (x > kZeroMass) power_sum += std::pow(x, q);
  }
  return (1.0 - power_sum) / (q - 1.0);
}

/// Sum P log(P/Q); requires supp(P) within supp(Q).
inline double kl_divergence(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorKind::InvalidInput, "KL divergence of mismatched shapes");
  }
  double d = 0.0;
  for (Index k = 0; k < p.size(); ++k) {
    const double a = p.data()[k];
    const double b = q.data()[k];
    if (a < 0.0 || b < 0.0) throw Error(ErrorKind::Domain, "KL divergence of negative entries");
    if (a <= kZeroMass) continue;
    if (b <= kZeroMass) {
      throw Error(ErrorKind::Domain, "KL divergence: first argument not absolutely continuous w.r.t. second");
    }
    d += a * std::log(a / b);
  }
  return d;
}

}  // namespace gsot
