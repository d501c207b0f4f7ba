#pragma once

// Continuation values J(x, R) = E^x[delta(rho_R) f(X_rho)]: Monte Carlo over
// grids and point sets, closed-form quadrature for the rotated barrier
// geometry, the rotation identity, and the ball mean-value bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "stopgame/discounting.hpp"
#include "stopgame/dynamics.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/numerics.hpp"
#include "stopgame/parallel.hpp"
#include "stopgame/payoff.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/rng.hpp"

namespace stopgame {

struct ValuationBudget {
  int n_paths = 1024;
  std::uint64_t seed = 1;
  /// Truncation horizon; <= 0 selects delta(T) < 1e-4.
  double t_tail = 0;
  int threads = 0;
  /// Sub-experiment tag mixed into every stream id.
  std::uint64_t tag = 0;
};

inline constexpr double kDefaultTailTolerance = 1e-4;
inline constexpr std::size_t kPathBlock = 256;

inline double resolve_t_tail(const DiscountCurve& delta, double t_tail) {
  if (t_tail > 0) return t_tail;
  double t = delta.tail_horizon(1.0, kDefaultTailTolerance);
  if (!std::isfinite(t)) throw DomainError("t_tail: discount never falls below the tail tolerance; set t_tail");
  return t;
}

/// J(., R) on the cell centers of a grid.
struct ValueField {
  Grid grid;
  std::vector<double> values;
  std::vector<double> std_errs;
  std::vector<double> trunc_bounds;
  int n_paths = 0;

  std::size_t size() const noexcept { return values.size(); }
};

struct PointEstimates {
  std::vector<double> values;
  std::vector<double> std_errs;
  double trunc_bound = 0;
};

/// Monte Carlo J at arbitrary points. Path p of point i uses stream
/// (tag, i, p) and does not depend on R, so estimates for different regions
/// share common random numbers. Work is split into (point, block) items whose
/// partial sums are combined in block order.
inline PointEstimates estimate_J_points(const ProcessModel& model, const PolicyRegion& R, const PayoffField& f,
                                        const DiscountCurve& delta, const std::vector<Point>& points,
                                        const ValuationBudget& budget) {
  if (budget.n_paths < 2) throw DomainError("estimate_J: n_paths must be >= 2");
  const double horizon = resolve_t_tail(delta, budget.t_tail);
  const RegionProbe probe(R);
  const std::size_t n = static_cast<std::size_t>(budget.n_paths);
  const std::size_t blocks = (n + kPathBlock - 1) / kPathBlock;
  struct Partial {
    long double sum = 0, sum_sq = 0;
  };
  std::vector<Partial> parts(points.size() * blocks);
  parallel_for(parts.size(), budget.threads, [&](std::size_t item) {
    const std::size_t cell = item / blocks, block = item % blocks;
    const Point& x = points[cell];
    Partial acc;
    const std::size_t end = std::min(n, (block + 1) * kPathBlock);
    try {
      for (std::size_t p = block * kPathBlock; p < end; ++p) {
        RngStream rng(budget.seed, stream_id_for(budget.tag, cell, p));
        HitResult h = simulate_until(model, x, probe, horizon, rng);
        if (!h.hit) continue;
        long double v = static_cast<long double>(delta(h.hit_time)) * f(h.hit_state);
        acc.sum += v;
        acc.sum_sq += v * v;
      }
    } catch (const SimulationError& e) {
      throw SimulationError(e.what(), e.last_valid_time(), static_cast<long>(cell));
    }
    parts[item] = acc;
  });
  PointEstimates out;
  out.values.resize(points.size());
  out.std_errs.resize(points.size());
  out.trunc_bound = delta(horizon) * f.sup();
  for (std::size_t c = 0; c < points.size(); ++c) {
    long double s = 0, s2 = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      s += parts[c * blocks + b].sum;
      s2 += parts[c * blocks + b].sum_sq;
    }
    long double mean = s / n;
    long double var = std::max(0.0L, (s2 - n * mean * mean) / (n - 1));
    out.values[c] = static_cast<double>(mean);
    out.std_errs[c] = static_cast<double>(std::sqrt(var / n));
  }
  return out;
}

inline ValueField estimate_J_mc(const ProcessModel& model, const PolicyRegion& R, const PayoffField& f,
                                const DiscountCurve& delta, const Grid& grid, const ValuationBudget& budget) {
  if (grid.dim() != model.dim()) throw ShapeError("estimate_J_mc: grid and process dimensions differ");
  std::vector<Point> centers(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) centers[i] = grid.center(i);
  PointEstimates e = estimate_J_points(model, R, f, delta, centers, budget);
  ValueField v;
  v.grid = grid;
  v.values = std::move(e.values);
  v.std_errs = std::move(e.std_errs);
  v.trunc_bounds.assign(grid.size(), e.trunc_bound);
  v.n_paths = budget.n_paths;
  return v;
}

// ---------------------------------------------------------------------------
// Quadrature oracle for the barrier family

namespace detail {

inline const LaplaceMixture& hyperbolic_mixture(double beta) {
  static std::mutex mu;
  static std::map<double, LaplaceMixture> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(beta);
  if (it == cache.end()) it = cache.emplace(beta, laplace_mixture_of(DiscountCurve::hyperbolic(beta))).first;
  return it->second;
}

}  // namespace detail

/// J^Y(y, T_c) = sqrt(2) c E^{y2}[1 / (1 + beta tau_{+-c})] for the rotated
/// barrier region T_c = {|y2| >= c}; valid while the cap a is inactive at
/// the barrier.
inline double quadrature_J_barrier(double y2, double c, double beta, double a) {
  if (!(c > 0)) throw DomainError("quadrature_J_barrier: c must be > 0");
  if (std::fabs(y2) > c) throw DomainError("quadrature_J_barrier: |y2| must be <= c");
  if (std::sqrt(2.0) * c > a * (1 + 1e-12)) throw UnsupportedError("quadrature_J_barrier: cap active at the barrier");
  if (std::fabs(y2) == c) return std::sqrt(2.0) * c;
  const auto& mix = detail::hyperbolic_mixture(beta);
  return std::sqrt(2.0) * c *
         discounted_exit_factor(mix, [&](double u) { return two_sided_barrier_lt(u, c, y2); });
}

struct RotationCheck {
  double lhs = 0, lhs_se = 0;
  double rhs = 0, rhs_se = 0;
  bool consistent = false;
};

/// J(x, R) against J^Y(Mx, MR) with f^Y = f o M^T, from independent streams.
inline RotationCheck rotation_consistency(const ProcessModel& model, const Point& x, const PolicyRegion& R,
                                          const PayoffField& f, const DiscountCurve& delta,
                                          const ValuationBudget& budget) {
  if (model.dim() != 2 || x.dim() != 2) throw ShapeError("rotation_consistency: needs the planar model");
  if (!R.analytic()) throw UnsupportedError("rotation_consistency: region needs an analytic form");
  const Matrix M = rotation_pi_over_4();
  const Matrix Mt = transpose(M);
  RotationCheck out;
  auto lhs = estimate_J_points(model, R, f, delta, {x}, budget);
  out.lhs = lhs.values[0];
  out.lhs_se = lhs.std_errs[0];

  // Payoff in rotated coordinates, evaluated through the inverse rotation.
  class Rotated {
   public:
    Rotated(const PayoffField& f, Matrix mt) : f_(f), mt_(mt) {}
    double operator()(const Point& y) const { return f_(mt_.apply(y)); }
    double sup() const { return f_.sup(); }

   private:
    const PayoffField& f_;
    Matrix mt_;
  };
  const Rotated fy(f, Mt);
  const PolicyRegion MR = PolicyRegion::from_shape(R.analytic()->transformed(M), "rotated");
  ValuationBudget rb = budget;
  rb.tag = budget.tag ^ 0x524f54ull;
  const double horizon = resolve_t_tail(delta, rb.t_tail);
  const RegionProbe probe(MR);
  const Point y = M.apply(x);
  long double s = 0, s2 = 0;
  const auto n = static_cast<std::size_t>(rb.n_paths);
  std::vector<long double> vals(n);
  parallel_for(n, rb.threads, [&](std::size_t p) {
    RngStream rng(rb.seed, stream_id_for(rb.tag, 0, p));
    HitResult h = simulate_until(model, y, probe, horizon, rng);
    vals[p] = h.hit ? static_cast<long double>(delta(h.hit_time)) * fy(h.hit_state) : 0.0L;
  });
  for (auto v : vals) {
    s += v;
    s2 += v * v;
  }
  long double mean = s / n;
  out.rhs = static_cast<double>(mean);
  out.rhs_se = static_cast<double>(std::sqrt(std::max(0.0L, (s2 - n * mean * mean) / (n - 1)) / n));
  out.consistent = std::fabs(out.lhs - out.rhs) <= 3.0 * std::hypot(out.lhs_se, out.rhs_se);
  return out;
}

// ---------------------------------------------------------------------------
// Mean-value bounds on a ball inside D

struct MeanValueReport {
  bool lower_ok = false;
  bool upper_ok = false;
  double k_r = 0;          // quadrature value of E[delta(ball exit)]
  double k_r_mc = 0;       // Monte Carlo value of the same
  double k_r_mc_se = 0;
  double J_x = 0, J_x_se = 0;
  double ball_avg = 0, ball_avg_se = 0;
};

/// k(r) avg_B J <= J(x) <= avg_B J for J = J(., D^c), 3-D Brownian motion
/// and hyperbolic delta; each inequality is tested within 3 combined SE.
inline MeanValueReport mean_value_bounds_check(const ProcessModel& model, const Point& x, double r,
                                               const PolicyRegion& D_complement, const PayoffField& f,
                                               const DiscountCurve& delta, const ValuationBudget& budget) {
  if (model.dim() != 3 || x.dim() != 3) throw ShapeError("mean_value_bounds_check: needs 3-D Brownian motion");
  if (!delta.is_hyperbolic() && !delta.is_exponential())
    throw UnsupportedError("mean_value_bounds_check: discount needs a mixture representation");
  if (!(r > 0)) throw DomainError("mean_value_bounds_check: r must be > 0");
  const RegionProbe dc(D_complement);
  if (dc.contains(x) || !(dc.face_distance(x) >= r)) throw DomainError("mean_value_bounds_check: ball not inside D");

  MeanValueReport rep;
  const auto mix = laplace_mixture_of(delta);
  rep.k_r = discounted_exit_factor(mix, [r](double u) { return ball_exit_lt(u, r); });

  const double horizon = resolve_t_tail(delta, budget.t_tail);
  const auto n = static_cast<std::size_t>(budget.n_paths);

  // k(r) by simulation of the exit from the ball
  const RegionProbe exit_probe(PolicyRegion::from_shape(Shape::literal(Literal::sphere(x, r, true)), "ball exterior"));
  std::vector<double> kv(n), jv(n), av(n);
  parallel_for(n, budget.threads, [&](std::size_t p) {
    RngStream rng(budget.seed, stream_id_for(budget.tag ^ 0x4b52ull, 0, p));
    HitResult h = simulate_until(model, x, exit_probe, horizon, rng);
    kv[p] = h.hit ? delta(h.hit_time) : 0.0;

    RngStream rj(budget.seed, stream_id_for(budget.tag ^ 0x4a58ull, 0, p));
    HitResult hj = simulate_until(model, x, dc, horizon, rj);
    jv[p] = hj.hit ? delta(hj.hit_time) * f(hj.hit_state) : 0.0;

    // uniform start in the ball by rejection, then one path
    RngStream ra(budget.seed, stream_id_for(budget.tag ^ 0x4156ull, 0, p));
    Point y(3);
    while (true) {
      for (int i = 0; i < 3; ++i) y[i] = 2 * ra.uniform() - 1;
      if (norm(y) <= 1) break;
    }
    for (int i = 0; i < 3; ++i) y[i] = x[i] + r * y[i];
    HitResult ha = simulate_until(model, y, dc, horizon, ra);
    av[p] = ha.hit ? delta(ha.hit_time) * f(ha.hit_state) : 0.0;
  });
  auto mean_se = [n](const std::vector<double>& v, double& mean, double& se) {
    numerics::CompensatedSum<long double> s, s2;
    for (double a : v) {
      s.add(a);
      s2.add(static_cast<long double>(a) * a);
    }
    long double m = s.value() / n;
    mean = static_cast<double>(m);
    se = static_cast<double>(std::sqrt(std::max(0.0L, (s2.value() - n * m * m) / (n - 1)) / n));
  };
  mean_se(kv, rep.k_r_mc, rep.k_r_mc_se);
  mean_se(jv, rep.J_x, rep.J_x_se);
  mean_se(av, rep.ball_avg, rep.ball_avg_se);
  rep.lower_ok = rep.k_r * rep.ball_avg <= rep.J_x + 3.0 * std::hypot(rep.k_r * rep.ball_avg_se, rep.J_x_se);
  rep.upper_ok = rep.J_x <= rep.ball_avg + 3.0 * std::hypot(rep.ball_avg_se, rep.J_x_se);
  return rep;
}

}  // namespace stopgame
