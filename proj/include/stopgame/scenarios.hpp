#pragma once

// Named experiments: the barrier threshold a*, the rotated-barrier butterfly
// study, the time-consistent put baseline and the ball mean-value study.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stopgame/discounting.hpp"
#include "stopgame/dynamics.hpp"
#include "stopgame/equilibrium.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/numerics.hpp"
#include "stopgame/payoff.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/valuation.hpp"

namespace stopgame {

// ---------------------------------------------------------------------------
// a*

/// g(a) = a \int e^{-s} sqrt(2 beta s) tanh(a sqrt(2 beta s)) ds - 1.
inline double a_star_residual(double a, double beta, double tol = 1e-14) {
  auto integrand = [a, beta](double s) {
    const double z = std::sqrt(2.0 * beta * s);
    return z * std::tanh(a * z);
  };
  return a * numerics::integrate_laguerre(integrand, tol, 16, 512).value - 1.0;
}

/// Root of g, bracketed by doubling from g(0+) = -1.
inline double solve_a_star(double beta, double tol = 1e-12) {
  if (!(beta > 0) || !(tol > 0)) throw DomainError("solve_a_star: beta and tol must be > 0");
  auto g = [beta](double a) { return a_star_residual(a, beta); };
  double lo = 0.0, hi = 1.0 / std::sqrt(beta);
  int doublings = 0;
  while (g(hi) < 0) {
    lo = hi;
    hi *= 2;
    if (++doublings > 60) throw NumericalError("solve_a_star: bracket not found");
  }
  const double a = numerics::find_root(g, lo > 0 ? lo : hi * 1e-6, hi);
  if (!(std::fabs(g(a)) < std::max(tol, 1e-13))) {
    // one polishing pass on a tight bracket
    const double d = 1e-9 * a;
    const double b = numerics::find_root(g, a - d, a + d);
    if (!(std::fabs(g(b)) < tol)) throw NumericalError("solve_a_star: residual above tolerance");
    return b;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Butterfly: f = |x1 - x2| ^ a, R_b = {|x1 - x2| >= b}

inline Shape barrier_shape(double b) {
  if (b <= 0) return Shape::all();
  return Shape::union_of({Shape::halfspace(Point{1, -1}, b), Shape::halfspace(Point{-1, 1}, b)});
}

inline PolicyRegion barrier_region(double b) {
  return PolicyRegion::from_shape(barrier_shape(b), "R_b(b=" + std::to_string(b) + ")");
}

struct ButterflyScenario {
  double beta = 1.0;
  double a = 1.0;
  Grid grid = Grid(Point{-1, -1}, Point{1, 1}, {20, 20});
  std::vector<double> b_values;
  double dt = 1e-4;
  Matrix M = rotation_pi_over_4();
  double a_star = 0;  // filled at load

  double b_max() const { return std::min(a, std::sqrt(2.0) * a_star); }
  bool optimality_claimed() const { return a <= std::sqrt(2.0) * a_star; }

  static ButterflyScenario make(double beta, double a, Grid grid, int n_b, double dt) {
    ButterflyScenario s;
    s.beta = beta;
    s.a = a;
    s.grid = std::move(grid);
    s.dt = dt;
    s.a_star = solve_a_star(beta);
    for (int k = 0; k < n_b; ++k) s.b_values.push_back(n_b == 1 ? s.b_max() : s.b_max() * k / (n_b - 1));
    return s;
  }
};

/// Exact J(., R_b) on the grid: f inside R_b, the barrier quadrature off it.
/// Empty when the cap is active at the barrier.
inline std::optional<ValueField> quadrature_field(const ButterflyScenario& s, double b) {
  if (b > 0 && b > s.a * (1 + 1e-12)) return std::nullopt;
  ValueField v;
  v.grid = s.grid;
  v.values.resize(s.grid.size());
  v.std_errs.assign(s.grid.size(), 0.0);
  v.trunc_bounds.assign(s.grid.size(), 0.0);
  const PayoffField f = PayoffField::butterfly_min(s.a);
  const Shape r = barrier_shape(b);
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    const Point x = s.grid.center(i);
    if (r.contains(x)) {
      v.values[i] = f(x);
      continue;
    }
    const double y2 = (x[1] - x[0]) / std::sqrt(2.0);
    v.values[i] = quadrature_J_barrier(y2, b / std::sqrt(2.0), s.beta, s.a);
  }
  return v;
}

/// Exact fields for the barrier family members; other regions fall back to
/// Monte Carlo.
inline GameContext::ValueProvider quadrature_provider(const ButterflyScenario& s) {
  std::map<std::string, double> keys;
  for (double b : s.b_values) keys.emplace(barrier_region(b).key(), b);
  return [s, keys](const PolicyRegion& R) -> std::optional<ValueField> {
    auto it = keys.find(R.key());
    if (it == keys.end()) return std::nullopt;
    return quadrature_field(s, it->second);
  };
}

struct ButterflyBarrierResult {
  double b = 0;
  ValueField mc;
  std::optional<ValueField> quad;
  EquilibriumReport report;
  std::size_t quad_cells = 0;        // non-collar off-region cells compared
  std::size_t quad_exceed_3se = 0;
  double quad_max_z = 0;
};

struct ButterflyStudy {
  ButterflyScenario scenario;
  std::vector<ButterflyBarrierResult> barriers;
  std::vector<std::pair<std::size_t, DominanceCheck>> ordering;  // (k, J(R_{b_{k+1}}) >= J(R_{b_k}))
  std::optional<SearchResult> search;
  std::size_t rstar_mismatch_outside_collar = 0;
  std::string label;  // "optimal" or "characterization open"

  bool all_equilibria() const {
    return std::all_of(barriers.begin(), barriers.end(), [](const auto& r) { return r.report.is_equilibrium; });
  }
  bool ordering_holds() const {
    return std::all_of(ordering.begin(), ordering.end(), [](const auto& o) { return o.second.holds(); });
  }
};

inline GameContext butterfly_context(const ButterflyScenario& s, const ValuationBudget& budget) {
  return GameContext(ProcessModel::brownian(2, s.dt), PayoffField::butterfly_min(s.a),
                     DiscountCurve::hyperbolic(s.beta), s.grid, budget);
}

/// The full study: MC and quadrature fields per barrier, verification,
/// dominance ordering across b, and the search over the family.
inline ButterflyStudy run_butterfly(const ButterflyScenario& s, const ValuationBudget& budget, bool search = true) {
  ButterflyStudy st;
  st.scenario = s;
  st.label = s.optimality_claimed() ? "optimal" : "characterization open";
  const GameContext ctx = butterfly_context(s, budget);
  std::vector<PolicyRegion> family;
  for (double b : s.b_values) {
    ButterflyBarrierResult r;
    r.b = b;
    PolicyRegion R = barrier_region(b);
    family.push_back(R);
    r.mc = ctx.value_of(R);
    r.report = verify_equilibrium(ctx, R);
    r.quad = quadrature_field(s, b);
    if (r.quad) {
      const Mask m = R.mask_on(s.grid);
      const auto collar = collar_cells(m);
      for (std::size_t i = 0; i < s.grid.size(); ++i) {
        if (m[i] || collar[i]) continue;
        ++r.quad_cells;
        const double z = std::fabs(r.mc.values[i] - r.quad->values[i]) / std::max(r.mc.std_errs[i], 1e-300);
        r.quad_max_z = std::max(r.quad_max_z, z);
        r.quad_exceed_3se += z > 3.0;
      }
    }
    st.barriers.push_back(std::move(r));
  }
  for (std::size_t k = 0; k + 1 < st.barriers.size(); ++k) {
    const Mask hi = family[k + 1].mask_on(s.grid);
    st.ordering.emplace_back(k, check_dominance(st.barriers[k + 1].mc, {&st.barriers[k].mc}, collar_cells(hi)));
  }
  if (search && s.optimality_claimed()) {
    st.search = search_optimal(ctx, family);
    const Mask star = st.search->R_star.mask_on(s.grid);
    const Mask ra = barrier_region(s.a).mask_on(s.grid);
    const auto collar = collar_cells(ra);
    for (std::size_t i = 0; i < star.bits.size(); ++i)
      st.rstar_mismatch_outside_collar += star.bits[i] != ra.bits[i] && !collar[i];
  }
  return st;
}

// ---------------------------------------------------------------------------
// Time-consistent baseline: 1-D Brownian motion, exponential discount

struct LatticeSolution {
  std::vector<double> x;
  std::vector<double> U;
  std::vector<std::uint8_t> stop;
  double threshold = 0;  // right end of the stopping set (put structure)
  int policy_iterations = 0;
};

/// Perpetual stopping value on the lattice x_i = x_lo + i dx with time step
/// dt = dx^2 (exact random-walk embedding of Brownian motion): U = max(f,
/// e^{-alpha dt} (U_{i-1} + U_{i+1}) / 2), U = f at the left end and 0 at
/// the right end. Solved by policy iteration with tridiagonal solves.
inline LatticeSolution lattice_stopping_value(const std::function<double(double)>& f, double alpha, double x_lo,
                                              double x_hi, double dx) {
  if (!(alpha > 0) || !(dx > 0) || !(x_hi > x_lo)) throw DomainError("lattice: bad parameters");
  const auto n = static_cast<std::size_t>(std::llround((x_hi - x_lo) / dx)) + 1;
  const double lam = std::exp(-alpha * dx * dx);
  LatticeSolution s;
  s.x.resize(n);
  std::vector<double> fv(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.x[i] = x_lo + static_cast<double>(i) * dx;
    fv[i] = f(s.x[i]);
  }
  // the stopping boundary moves at most one cell per improvement once it is
  // near the optimum, so the iteration cap scales with the node count
  s.stop.assign(n, 0);
  s.stop[0] = 1;
  s.U.assign(n, 0.0);
  std::vector<double> a(n), b(n), c(n), d(n);
  bool converged = false;
  const int max_iter = 4 * static_cast<int>(n) + 10;
  for (int it = 0; it < max_iter && !converged; ++it) {
    // assemble: stop rows U_i = f_i; continue rows U_i - lam/2 (U_{i-1} + U_{i+1}) = 0
    for (std::size_t i = 0; i < n; ++i) {
      const bool boundary = i == 0 || i + 1 == n;
      if (boundary || s.stop[i]) {
        a[i] = c[i] = 0;
        b[i] = 1;
        d[i] = i + 1 == n && !s.stop[i] ? 0.0 : fv[i];
      } else {
        a[i] = c[i] = -0.5 * lam;
        b[i] = 1;
        d[i] = 0;
      }
    }
    // Thomas algorithm
    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    s.U[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) s.U[i] = (d[i] - c[i] * s.U[i + 1]) / b[i];
    bool changed = false;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double cont = 0.5 * lam * (s.U[i - 1] + s.U[i + 1]);
      const std::uint8_t st = fv[i] >= cont ? 1 : 0;
      if (st != s.stop[i]) {
        s.stop[i] = st;
        changed = true;
      }
    }
    s.policy_iterations = it + 1;
    converged = !changed;
  }
  if (!converged) throw NumericalError("lattice: policy iteration did not converge");
  for (std::size_t i = 0; i < n; ++i)
    if (s.stop[i] && fv[i] > 0) s.threshold = s.x[i];
  return s;
}

struct BaselineCandidate {
  std::string name;
  double threshold;  // R = (-inf, threshold]; +inf for the full line
  bool dominated = false;
  double worst_gap = 0;  // min over window of V_hat - V_R
};

struct ExponentialBaseline {
  double alpha = 0;
  double strike = 0;
  LatticeSolution lattice;
  double threshold_exact = 0;
  double sup_error = 0;  // lattice U against f v J(., H_hat)
  bool di_equality = false;
  double di_max_gap = 0;
  EquilibriumReport equilibrium;  // Monte Carlo verification of H_hat
  std::vector<BaselineCandidate> battery;
  bool battery_dominated() const {
    return std::all_of(battery.begin(), battery.end(), [](const auto& c) { return c.dominated; });
  }
};

/// J(x, (-inf, b]) for the put payoff: (K - b) exp(-sqrt(2 alpha)(x - b)) right of b.
inline double put_continuation(double x, double b, double strike, double alpha) {
  if (x <= b) return std::max(strike - x, 0.0);
  return std::max(strike - b, 0.0) * one_sided_barrier_lt(alpha, x - b);
}

/// Lattice value against f v J(., H_hat) on the window [x_lo, x_hi], the
/// Monte Carlo equilibrium check of H_hat and the dominance battery.
inline ExponentialBaseline run_exponential_baseline(double alpha, double strike, Grid grid,
                                                    const ValuationBudget& budget, double dx = 1e-3,
                                                    double dt_sim = 1e-4) {
  if (grid.dim() != 1) throw ShapeError("exponential baseline: one-dimensional grid required");
  ExponentialBaseline out;
  out.alpha = alpha;
  out.strike = strike;
  const double lo = grid.lower()[0], hi = grid.upper()[0];
  auto f = [strike](double x) { return std::max(strike - x, 0.0); };
  out.lattice = lattice_stopping_value(f, alpha, lo - 2.0, hi + 15.0, dx);
  out.threshold_exact = strike - 1.0 / std::sqrt(2.0 * alpha);
  const double xh = out.lattice.threshold;
  for (std::size_t i = 0; i < out.lattice.x.size(); ++i) {
    const double x = out.lattice.x[i];
    if (x < lo || x > hi) continue;
    const double v = std::max(f(x), put_continuation(x, xh, strike, alpha));
    out.sup_error = std::max(out.sup_error, std::fabs(out.lattice.U[i] - v));
  }
  std::vector<double> tg;
  for (int k = 1; k <= 40; ++k) tg.push_back(0.05 * k * k);
  const auto di = check_decreasing_impatience(DiscountCurve::exponential(alpha), tg, 1e-12);
  out.di_max_gap = di.max_abs_gap;
  out.di_equality = di.max_abs_gap <= 1e-12;

  GameContext ctx(ProcessModel::brownian(1, dt_sim), PayoffField::put(strike, lo), DiscountCurve::exponential(alpha),
                  grid, budget);
  out.equilibrium = verify_equilibrium(
      ctx, PolicyRegion::from_shape(Shape::halfspace(Point{-1.0}, -xh), "H_hat"));

  std::vector<double> thresholds;
  for (int k = 0; k < 8; ++k) thresholds.push_back(xh + (strike - xh) * k / 8.0);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  for (double b : thresholds) {
    BaselineCandidate c;
    c.threshold = b;
    c.name = std::isinf(b) ? "full line" : "(-inf, " + std::to_string(b) + "]";
    c.worst_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400; ++i) {
      const double x = lo + (hi - lo) * i / 400.0;
      const double vh = std::max(f(x), put_continuation(x, xh, strike, alpha));
      const double vr = std::isinf(b) ? f(x) : std::max(f(x), put_continuation(x, b, strike, alpha));
      c.worst_gap = std::min(c.worst_gap, vh - vr);
    }
    c.dominated = c.worst_gap >= -1e-12;
    out.battery.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ball mean-value study in three dimensions

struct MeanValueStudy {
  std::vector<double> radii;
  std::vector<MeanValueReport> reports;
  bool all_ok() const {
    for (const auto& r : reports)
      if (!r.lower_ok || !r.upper_ok || std::fabs(r.k_r - r.k_r_mc) > 3 * r.k_r_mc_se) return false;
    return !reports.empty();
  }
};

/// D = {x3 < level}, f = k0 + k1 cos(x1), hyperbolic beta, x = origin.
inline MeanValueStudy run_mean_value(const std::vector<double>& radii, double beta, double level, double k0,
                                     double k1, double dt, const ValuationBudget& budget) {
  MeanValueStudy st;
  st.radii = radii;
  const auto model = ProcessModel::brownian(3, dt);
  const auto Dc = PolicyRegion::from_shape(Shape::halfspace(Point{0, 0, 1}, level), "complement of D");
  const auto f = PayoffField::cosine_bump(k0, k1);
  const auto delta = DiscountCurve::hyperbolic(beta);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    ValuationBudget b = budget;
    b.tag = budget.tag + 0x100 * (k + 1);
    st.reports.push_back(mean_value_bounds_check(model, Point{0, 0, 0}, radii[k], Dc, f, delta, b));
  }
  return st;
}

}  // namespace stopgame
