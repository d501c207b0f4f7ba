#pragma once

// Discount functions, the decreasing-impatience check, and the exponential
// mixture representation used by the quadrature oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "stopgame/errors.hpp"
#include "stopgame/numerics.hpp"

namespace stopgame {

struct ExponentialDiscount {
  double rate;
};
struct HyperbolicDiscount {
  double rate;
};
/// Knots (t_i, delta_i) with t_0 = 0, delta_0 = 1, nonincreasing values.
struct TabulatedDiscount {
  std::vector<double> times;
  std::vector<double> values;
};

/// A discount function delta: [0, inf] -> [0, 1] with delta(0) = 1.
class DiscountCurve {
 public:
  using Kind = std::variant<ExponentialDiscount, HyperbolicDiscount, TabulatedDiscount>;

  static DiscountCurve exponential(double rate) {
    if (!(rate > 0) || !std::isfinite(rate)) throw DomainError("exponential discount: rate must be > 0");
    return DiscountCurve(ExponentialDiscount{rate});
  }
  static DiscountCurve hyperbolic(double rate) {
    if (!(rate > 0) || !std::isfinite(rate)) throw DomainError("hyperbolic discount: rate must be > 0");
    return DiscountCurve(HyperbolicDiscount{rate});
  }
  static DiscountCurve tabulated(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size() || times.size() < 2)
      throw DomainError("tabulated discount: need >= 2 knots of matching length");
    if (times.front() != 0.0 || values.front() != 1.0)
      throw DomainError("tabulated discount: first knot must be (0, 1)");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw DomainError("tabulated discount: times must increase");
      if (values[i] > values[i - 1] || values[i] < 0)
        throw DomainError("tabulated discount: values must be nonincreasing in [0, 1]");
    }
    return DiscountCurve(TabulatedDiscount{std::move(times), std::move(values)});
  }

  const Kind& kind() const noexcept { return kind_; }
  bool is_exponential() const noexcept { return std::holds_alternative<ExponentialDiscount>(kind_); }
  bool is_hyperbolic() const noexcept { return std::holds_alternative<HyperbolicDiscount>(kind_); }
  bool is_tabulated() const noexcept { return std::holds_alternative<TabulatedDiscount>(kind_); }

  double operator()(double t) const { return eval(t); }

  double eval(double t) const {
    if (std::isnan(t) || t < 0) throw DomainError("discount: time must be >= 0");
    if (std::isinf(t)) return 0.0;
    return std::visit([t](const auto& k) { return eval_kind(k, t); }, kind_);
  }

  /// Smallest T with delta(T) * scale < tol, or +inf when the curve never
  /// drops below (a table clamped to a positive last value).
  double tail_horizon(double scale, double tol) const {
    if (scale <= 0) return 0.0;
    const double target = tol / scale;
    if (target >= 1.0) return 0.0;
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ExponentialDiscount>) {
            return -std::log(target) / k.rate;
          } else if constexpr (std::is_same_v<K, HyperbolicDiscount>) {
            return (1.0 / target - 1.0) / k.rate;
          } else {
            for (std::size_t i = 0; i < k.times.size(); ++i)
              if (k.values[i] < target) {
                // bisect on the bracketing interval
                double lo = i == 0 ? 0.0 : k.times[i - 1], hi = k.times[i];
                for (int it = 0; it < 100; ++it) {
                  double mid = 0.5 * (lo + hi);
                  (eval_kind(k, mid) < target ? hi : lo) = mid;
                }
                return hi;
              }
            return std::numeric_limits<double>::infinity();
          }
        },
        kind_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ExponentialDiscount>)
            return "exponential(alpha=" + std::to_string(k.rate) + ")";
          else if constexpr (std::is_same_v<K, HyperbolicDiscount>)
            return "hyperbolic(beta=" + std::to_string(k.rate) + ")";
          else
            return "tabulated(" + std::to_string(k.times.size()) + " knots)";
        },
        kind_);
  }

 private:
  explicit DiscountCurve(Kind k) : kind_(std::move(k)) {}

  static double eval_kind(const ExponentialDiscount& k, double t) { return std::exp(-k.rate * t); }
  static double eval_kind(const HyperbolicDiscount& k, double t) { return 1.0 / (1.0 + k.rate * t); }
  // Log-linear between positive knots, linear when a knot is zero, clamped
  // to the last value beyond the table.
  static double eval_kind(const TabulatedDiscount& k, double t) {
    if (t >= k.times.back()) return k.values.back();
    auto it = std::upper_bound(k.times.begin(), k.times.end(), t);
    std::size_t i = static_cast<std::size_t>(it - k.times.begin());
    double t0 = k.times[i - 1], t1 = k.times[i];
    double v0 = k.values[i - 1], v1 = k.values[i];
    double w = (t - t0) / (t1 - t0);
    if (v0 > 0 && v1 > 0) return std::exp((1 - w) * std::log(v0) + w * std::log(v1));
    return (1 - w) * v0 + w * v1;
  }

  Kind kind_;
};

inline double eval_discount(const DiscountCurve& curve, double t) { return curve.eval(t); }

struct DecreasingImpatienceReport {
  bool holds = true;
  /// max over pairs of delta(s)delta(t) - delta(s+t)
  double worst_violation = -std::numeric_limits<double>::infinity();
  /// max over pairs of |delta(s)delta(t) - delta(s+t)|; 0 means equality (exponential)
  double max_abs_gap = 0.0;
  std::pair<double, double> witness{0.0, 0.0};
};

/// Check delta(s)delta(t) <= delta(s+t) + tol over all ordered grid pairs.
inline DecreasingImpatienceReport check_decreasing_impatience(const DiscountCurve& curve,
                                                              std::span<const double> time_grid,
                                                              double tol) {
  if (time_grid.empty()) throw DomainError("check_decreasing_impatience: empty time grid");
  for (double t : time_grid)
    if (!(t > 0) || !std::isfinite(t))
      throw DomainError("check_decreasing_impatience: grid entries must be finite and > 0");
  DecreasingImpatienceReport r;
  for (double s : time_grid)
    for (double t : time_grid) {
      double gap = curve(s) * curve(t) - curve(s + t);
      if (gap > r.worst_violation) {
        r.worst_violation = gap;
        r.witness = {s, t};
      }
      r.max_abs_gap = std::max(r.max_abs_gap, std::fabs(gap));
    }
  r.holds = r.worst_violation <= tol;
  return r;
}

/// delta(t) = \int_0^inf w(u) e^{-u t} du, discretised as a weighted node set.
/// Exponential curves are a point mass at u = alpha.
class LaplaceMixture {
 public:
  static constexpr double kDefaultTol = 1e-9;

  const std::function<double(double)>& weight_density() const noexcept { return density_; }
  bool is_point_mass() const noexcept { return point_mass_; }
  int level() const noexcept { return level_; }
  double tolerance() const noexcept { return tol_; }

  /// Quadrature nodes (u_i, w_i) at the construction level.
  std::vector<std::pair<double, double>> quadrature_nodes() const { return nodes_at(level_); }

  /// \int w(u) g(u) du ~ sum_i w_i g(u_i) at the construction level.
  double apply(const std::function<double(double)>& g) const { return apply_at(level_, g); }

  /// Same as apply, refining the node set until two successive levels agree
  /// within the tolerance.
  double integrate(const std::function<double(double)>& g, int max_level = 7) const {
    if (point_mass_) return g(point_);
    double prev = apply_at(level_, g);
    for (int l = level_ + 1; l <= max_level; ++l) {
      double cur = apply_at(l, g);
      if (std::fabs(cur - prev) <= tol_ * std::max(1.0, std::fabs(cur))) return cur;
      prev = cur;
    }
    throw NumericalError("LaplaceMixture: quadrature did not converge within the refinement cap");
  }

  /// Reconstructed delta(t).
  double reconstruct(double t) const {
    return apply([t](double u) { return std::exp(-u * t); });
  }

  friend LaplaceMixture laplace_mixture_of(const DiscountCurve& curve, double t_tail, double tol);

 private:
  std::vector<std::pair<double, double>> nodes_at(int level) const {
    if (point_mass_) return {{point_, 1.0}};
    auto rule = numerics::exp_substitution_rule(level);
    std::vector<std::pair<double, double>> out(rule.nodes.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {scale_ * rule.nodes[i], rule.weights[i]};
    return out;
  }
  double apply_at(int level, const std::function<double(double)>& g) const {
    if (point_mass_) return g(point_);
    auto rule = numerics::exp_substitution_rule(level);
    numerics::CompensatedSum<long double> s;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s.add(static_cast<long double>(rule.weights[i]) * g(scale_ * rule.nodes[i]));
    return static_cast<double>(s.value());
  }

  std::function<double(double)> density_;
  bool point_mass_ = false;
  double point_ = 0.0;
  double scale_ = 1.0;
  int level_ = 0;
  double tol_ = kDefaultTol;
};

/// Mixture representation of an exponential or hyperbolic curve. The node
/// level is raised until the reconstruction of delta on [0, t_tail] is stable
/// to tol between successive levels.
inline LaplaceMixture laplace_mixture_of(const DiscountCurve& curve, double t_tail = 100.0,
                                         double tol = LaplaceMixture::kDefaultTol) {
  LaplaceMixture m;
  m.tol_ = tol;
  if (const auto* e = std::get_if<ExponentialDiscount>(&curve.kind())) {
    m.point_mass_ = true;
    m.point_ = e->rate;
    m.density_ = [](double) { return 0.0; };
    return m;
  }
  const auto* h = std::get_if<HyperbolicDiscount>(&curve.kind());
  if (!h) throw UnsupportedError("laplace_mixture_of: tabulated curves have no mixture representation");
  const double beta = h->rate;
  m.scale_ = beta;
  m.density_ = [beta](double u) { return u < 0 ? 0.0 : std::exp(-u / beta) / beta; };

  std::vector<double> probe{0.0};
  for (int i = 0; i <= 40; ++i) probe.push_back(std::min(t_tail, 1e-4 * std::pow(10.0, i * 0.25)));
  probe.push_back(t_tail);
  auto sup_change = [&](int l) {
    double worst = 0;
    for (double t : probe) {
      auto g = [t](double u) { return std::exp(-u * t); };
      worst = std::max(worst, std::fabs(m.apply_at(l, g) - m.apply_at(l + 1, g)));
    }
    return worst;
  };
  for (m.level_ = 0; m.level_ < 6; ++m.level_)
    if (sup_change(m.level_) <= tol) break;
  return m;
}

}  // namespace stopgame
