#pragma once

// Quadrature and root-finding helpers shared by the discounting, valuation
// and scenario modules.

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "stopgame/errors.hpp"

namespace stopgame::numerics {

/// Neumaier-compensated running sum.
template <class Real = double>
class CompensatedSum {
 public:
  void add(Real x) noexcept {
    Real t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  Real value() const noexcept { return sum_ + comp_; }

 private:
  Real sum_{0};
  Real comp_{0};
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss–Laguerre rule for the weight e^{-s} on [0, inf).
/// Newton iteration on the three-term recurrence, carried in long double so
/// that L_n(z) does not overflow near the largest nodes.
inline QuadratureRule gauss_laguerre_compute(int n) {
  if (n < 1 || n > 512) throw DomainError("gauss_laguerre: n must be in [1, 512]");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  std::vector<long double> x(n);
  long double z = 0;
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      z = 3.0L / (1.0L + 2.4L * n);
    } else if (i == 1) {
      z += 15.0L / (1.0L + 2.5L * n);
    } else {
      long double ai = i - 1;
      z += ((1.0L + 2.55L * ai) / (1.9L * ai)) * (z - x[i - 2]);
    }
    long double p1 = 0, p2 = 0, pp = 0;
    for (int iter = 0; iter < 200; ++iter) {
      p1 = 1;
      p2 = 0;
      for (int j = 1; j <= n; ++j) {
        long double p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1 - z) * p2 - (j - 1) * p3) / j;
      }
      pp = (n * p1 - n * p2) / z;
      long double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) <= 1e-17L * std::fabs(z)) break;
    }
    x[i] = z;
    rule.nodes[i] = static_cast<double>(z);
    rule.weights[i] = static_cast<double>(-1.0L / (pp * n * p2));
  }
  return rule;
}

/// Cached, thread-safe access to Gauss–Laguerre rules.
inline const QuadratureRule& gauss_laguerre(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_laguerre_compute(n)).first;
  return it->second;
}

struct AdaptiveResult {
  double value;
  int nodes_used;
  double last_change;
};

/// Integrate \int_0^inf e^{-s} g(s) ds with Gauss–Laguerre, doubling the node
/// count from n0 until two successive estimates agree within tol.
inline AdaptiveResult integrate_laguerre(const std::function<double(double)>& g, double tol,
                                         int n0 = 16, int n_max = 256) {
  auto apply = [&](int n) {
    const auto& r = gauss_laguerre(n);
    CompensatedSum<long double> s;
    for (int i = 0; i < n; ++i) s.add(static_cast<long double>(r.weights[i]) * g(r.nodes[i]));
    return static_cast<double>(s.value());
  };
  double prev = apply(n0);
  for (int n = 2 * n0; n <= n_max; n *= 2) {
    double cur = apply(n);
    double change = std::fabs(cur - prev);
    if (change <= tol * std::max(1.0, std::fabs(cur))) return {cur, n, change};
    prev = cur;
  }
  throw NumericalError("integrate_laguerre: no convergence within node cap");
}

/// Nodes of the trapezoid rule in v for \int_0^inf e^{-s} g(s) ds after the
/// substitution s = e^v: weight step * e^v * e^{-e^v}. Levels are nested: level
/// l uses step 0.4 / 2^l on an origin-anchored grid covering [v_lo, v_hi].
inline QuadratureRule exp_substitution_rule(int level, double v_lo = -45.0,
                                            double v_hi = 4.1) {
  const double step = 0.4 / std::ldexp(1.0, level);
  const auto j_lo = static_cast<long>(std::ceil(v_lo / step));
  const auto j_hi = static_cast<long>(std::floor(v_hi / step));
  QuadratureRule rule;
  rule.nodes.reserve(j_hi - j_lo + 1);
  rule.weights.reserve(j_hi - j_lo + 1);
  for (long j = j_lo; j <= j_hi; ++j) {
    double v = j * step;
    double s = std::exp(v);
    rule.nodes.push_back(s);
    rule.weights.push_back(step * s * std::exp(-s));
  }
  return rule;
}

/// Root of a continuous f on [lo, hi] with f(lo) < 0 < f(hi) (TOMS 748).
inline double find_root(const std::function<double(double)>& f, double lo, double hi,
                        int max_iter = 200) {
  boost::uintmax_t it = max_iter;
  auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 2);
  auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, it);
  if (it >= static_cast<boost::uintmax_t>(max_iter))
    throw NumericalError("find_root: iteration cap reached");
  return 0.5 * (a + b);
}

/// Numerically stable cosh(a)/cosh(b) for a, b >= 0.
inline double cosh_ratio(double a, double b) {
  a = std::fabs(a);
  b = std::fabs(b);
  return std::exp(a - b) * (1.0 + std::exp(-2.0 * a)) / (1.0 + std::exp(-2.0 * b));
}

/// z / sinh(z), stable at both ends.
inline double z_over_sinh(double z) {
  z = std::fabs(z);
  if (z < 1e-4) return 1.0 - z * z / 6.0;
  return 2.0 * z * std::exp(-z) / (1.0 - std::exp(-2.0 * z));
}

}  // namespace stopgame::numerics
