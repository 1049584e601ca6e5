#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gsot/error.hpp"

namespace gsot::detail {

/// Yields the entries of a vector in descending order without sorting the
/// whole thing up front. Scans that stop after the first few entries cost
/// O(n + J log n).
class DescendingScan {
 public:
  explicit DescendingScan(std::span<const double> values) : heap_(values.begin(), values.end()) {
    std::make_heap(heap_.begin(), heap_.end());
  }

  bool empty() const noexcept { return heap_.empty(); }
  double top() const { return heap_.front(); }

  double pop() {
    std::pop_heap(heap_.begin(), heap_.end());
    const double v = heap_.back();
    heap_.pop_back();
    return v;
  }

 private:
  std::vector<double> heap_;
};

struct RootResult {
  double x;
  int iterations;
};

/// Root of an increasing function on [lo, hi] with f(lo) <= 0 <= f(hi).
/// Newton steps that leave the bracket or stall are replaced by bisection.
/// `eval` returns {f(x), f'(x)}.
template <class Eval>
RootResult safeguarded_newton(Eval&& eval, double lo, double hi, double x0, double ftol,
                              int max_iters = 200) {
  double x = std::clamp(x0, lo, hi);
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  double step_before_last = hi - lo;
  double last_step = step_before_last;
  for (int it = 0; it < max_iters; ++it) {
    const auto [f, df] = eval(x);
    if (std::isnan(f)) {
      throw Error(ErrorKind::Domain, "NaN in scalar root solve");
    }
    if (std::abs(f) <= ftol) return {x, it};
    if (f < 0.0) lo = x; else hi = x;
    if (!std::isfinite(f)) {
      // Pole of the function: the sign is still informative.
      x = 0.5 * (lo + hi);
      continue;
    }
    if (!(hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)))) {
      return {x, it};
    }
    const double newton = (std::isfinite(df) && df > 0.0) ? x - f / df : lo - 1.0;
    double next;
    // Bisect when Newton leaves the bracket or is not halving the step.
    if (!(newton > lo && newton < hi) || std::abs(2.0 * f) > std::abs(step_before_last * df)) {
      next = 0.5 * (lo + hi);
    } else {
      next = newton;
    }
    step_before_last = last_step;
    last_step = next - x;
    if (next == x) return {x, it};
    x = next;
  }
  return {x, max_iters};
}

/// Plain bisection for an increasing function; used as an independent
/// cross-check and as the fallback when an active-set scan is inconclusive.
template <class F>
double bisect_increasing(F&& f, double lo, double hi, int iters = 300) {
  for (int it = 0; it < iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Numerically stable log(sum(exp(values))).
inline double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace gsot::detail
