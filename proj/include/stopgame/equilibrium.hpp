#pragma once

// S/I/C classification, the best-response operator Theta, fixed-point
// iteration, equilibrium verification, intersection improvement, the
// iterated optimal-equilibrium search and the value function V = f v J.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stopgame/discounting.hpp"
#include "stopgame/dynamics.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/payoff.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/valuation.hpp"

namespace stopgame {

enum class Label : std::uint8_t { S, I, C, Ambiguous };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::S: return "S";
    case Label::I: return "I";
    case Label::C: return "C";
    case Label::Ambiguous: return "Ambiguous";
  }
  return "?";
}

struct Classification {
  Grid grid;
  std::vector<Label> labels;
  double eps = 0;
  ValueField value_field;
  std::vector<double> payoff;         // f at cell centers
  Mask region_mask;                   // R sampled on the grid
  std::vector<std::uint8_t> collar;   // one-cell band around R's boundary

  std::size_t count(Label l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }
};

/// 2 x median of the positive standard errors, floored at 1e-9.
inline double default_eps(const ValueField& v) {
  std::vector<double> se;
  for (double s : v.std_errs)
    if (s > 0) se.push_back(s);
  if (se.empty()) return 1e-9;
  std::nth_element(se.begin(), se.begin() + se.size() / 2, se.end());
  return std::max(1e-9, 2.0 * se[se.size() / 2]);
}

/// Per cell, with tol = max(eps, 3 SE) and the truncation slack on the
/// lower side: S if J + trunc < f - tol, C if J > f + tol, I if |J - f| <= eps
/// with 3 SE <= eps, otherwise Ambiguous. eps <= 0 selects default_eps.
inline Classification classify(const ValueField& value_field, const PayoffField& f, const PolicyRegion& R,
                               double eps = 0) {
  const Grid& g = value_field.grid;
  Classification c;
  c.grid = g;
  c.eps = eps > 0 ? eps : default_eps(value_field);
  c.value_field = value_field;
  c.region_mask = R.mask_on(g);
  c.collar = collar_cells(c.region_mask);
  c.labels.resize(g.size());
  c.payoff.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double fx = f(g.center(i));
    const double J = value_field.values[i], se = value_field.std_errs[i];
    const double trunc = value_field.trunc_bounds.empty() ? 0.0 : value_field.trunc_bounds[i];
    const double tol = std::max(c.eps, 3.0 * se);
    c.payoff[i] = fx;
    if (J + trunc < fx - tol)
      c.labels[i] = Label::S;
    else if (J > fx + tol)
      c.labels[i] = Label::C;
    else if (std::fabs(J - fx) <= c.eps && 3.0 * se <= c.eps)
      c.labels[i] = Label::I;
    else
      c.labels[i] = Label::Ambiguous;
  }
  return c;
}

struct ThetaResult {
  PolicyRegion region;
  Mask mask;                      // S u (I n R) u (Ambiguous n R)
  std::size_t changed = 0;        // cells where mask differs from R
  std::size_t changed_outside_collar = 0;
  std::size_t ambiguous_kept = 0;
  bool carried_over = false;      // R returned unchanged with its analytic form
};

/// Ambiguous cells keep their membership in R. When the new mask agrees with
/// R off the collar, R itself is returned so its analytic faces survive.
inline ThetaResult theta_step(const PolicyRegion& R, const Classification& cls) {
  const Grid& g = cls.grid;
  ThetaResult out;
  out.mask = Mask::filled(g, false);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool inR = cls.region_mask[i];
    bool v = false;
    switch (cls.labels[i]) {
      case Label::S: v = true; break;
      case Label::I: v = inR; break;
      case Label::C: v = false; break;
      case Label::Ambiguous:
        v = inR;
        ++out.ambiguous_kept;
        break;
    }
    out.mask.bits[i] = v ? 1 : 0;
    if (v != inR) {
      ++out.changed;
      if (!cls.collar[i]) ++out.changed_outside_collar;
    }
  }
  if (out.changed_outside_collar == 0) {
    out.region = R;
    out.carried_over = true;
  } else {
    out.region = PolicyRegion::from_mask(out.mask, "theta(" + R.provenance() + ")");
  }
  return out;
}

inline PolicyRegion theta(const PolicyRegion& R, const Classification& cls) { return theta_step(R, cls).region; }

// ---------------------------------------------------------------------------
// Valuation context

/// Everything a round of classification needs: dynamics, payoff, discount,
/// grid and budget, plus a cache of value fields keyed by region identity.
class GameContext {
 public:
  using ValueProvider = std::function<std::optional<ValueField>(const PolicyRegion&)>;

  GameContext(ProcessModel model, PayoffField f, DiscountCurve delta, Grid grid, ValuationBudget budget,
              double eps = 0)
      : model_(std::move(model)),
        f_(std::move(f)),
        delta_(std::move(delta)),
        grid_(std::move(grid)),
        budget_(budget),
        eps_(eps),
        cache_(std::make_shared<Cache>()) {}

  const ProcessModel& model() const noexcept { return model_; }
  const PayoffField& payoff() const noexcept { return f_; }
  const DiscountCurve& discount() const noexcept { return delta_; }
  const Grid& grid() const noexcept { return grid_; }
  const ValuationBudget& budget() const noexcept { return budget_; }
  double eps() const noexcept { return eps_; }

  /// Replace Monte Carlo by an exact field where one is available.
  void set_value_provider(ValueProvider p) { provider_ = std::move(p); }

  const ValueField& value_of(const PolicyRegion& R) const {
    const std::string key = R.key();
    {
      std::lock_guard lock(cache_->mu);
      auto it = cache_->fields.find(key);
      if (it != cache_->fields.end()) return it->second;
    }
    ValueField v;
    std::optional<ValueField> exact = provider_ ? provider_(R) : std::nullopt;
    v = exact ? std::move(*exact) : estimate_J_mc(model_, R, f_, delta_, grid_, budget_);
    std::lock_guard lock(cache_->mu);
    return cache_->fields.emplace(key, std::move(v)).first->second;
  }

  Classification classify_region(const PolicyRegion& R) const { return classify(value_of(R), f_, R, eps_); }

  std::size_t cached_fields() const {
    std::lock_guard lock(cache_->mu);
    return cache_->fields.size();
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::string, ValueField> fields;
  };

  ProcessModel model_;
  PayoffField f_;
  DiscountCurve delta_;
  Grid grid_;
  ValuationBudget budget_;
  double eps_;
  ValueProvider provider_;
  std::shared_ptr<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Iteration

enum class Direction { None, Increasing, Decreasing, Mixed };

inline const char* direction_name(Direction d) {
  switch (d) {
    case Direction::None: return "none";
    case Direction::Increasing: return "increasing";
    case Direction::Decreasing: return "decreasing";
    case Direction::Mixed: return "mixed";
  }
  return "?";
}

struct IterationTrace {
  std::vector<PolicyRegion> iterates;
  std::vector<Mask> masks;
  std::vector<std::size_t> changed;  // changed[k]: cells differing between masks[k] and masks[k+1]
  Direction direction = Direction::None;
  bool converged = false;
  bool oscillation = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline Direction step_direction(const Mask& from, const Mask& to) {
  bool grow = false, shrink = false;
  for (std::size_t i = 0; i < from.bits.size(); ++i) {
    grow |= !from.bits[i] && to.bits[i];
    shrink |= from.bits[i] && !to.bits[i];
  }
  if (grow && shrink) return Direction::Mixed;
  if (grow) return Direction::Increasing;
  if (shrink) return Direction::Decreasing;
  return Direction::None;
}

inline Direction merge(Direction a, Direction b) {
  if (a == Direction::None) return b;
  if (b == Direction::None || a == b) return a;
  return Direction::Mixed;
}

inline std::size_t mask_diff(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += a.bits[i] != b.bits[i];
  return n;
}

}  // namespace detail

struct EquilibriumViolation {
  std::size_t cell;
  Label side;  // C inside R, or S outside R
  double margin;  // J - f
  double std_err;
};

struct EquilibriumReport {
  PolicyRegion region;
  bool is_equilibrium = false;
  std::vector<EquilibriumViolation> violations;
  std::size_t collar_excluded = 0;
  std::size_t collar_violations = 0;
  std::size_t ambiguous = 0;
  double eps = 0;
};

/// Two-sided check of Theta(R) = R: no C cell inside R and no S cell outside,
/// with the one-cell collar around R's boundary excluded and counted.
inline EquilibriumReport verify_equilibrium(const GameContext& ctx, const PolicyRegion& R) {
  const Classification cls = ctx.classify_region(R);
  EquilibriumReport rep;
  rep.region = R;
  rep.eps = cls.eps;
  for (std::size_t i = 0; i < cls.grid.size(); ++i) {
    const bool inR = cls.region_mask[i];
    const Label l = cls.labels[i];
    const bool bad = (inR && l == Label::C) || (!inR && l == Label::S);
    if (l == Label::Ambiguous) ++rep.ambiguous;
    if (cls.collar[i]) {
      ++rep.collar_excluded;
      rep.collar_violations += bad;
      continue;
    }
    if (bad)
      rep.violations.push_back({i, l, cls.value_field.values[i] - cls.payoff[i], cls.value_field.std_errs[i]});
  }
  rep.is_equilibrium = rep.violations.empty();
  return rep;
}

/// Theta applied repeatedly until the mask is fixed off the Ambiguous cells
/// (and the collar), or max_iters is reached. A 2-cycle is replaced by the
/// union of the cycle, re-verified once.
inline IterationTrace iterate_theta(const GameContext& ctx, const PolicyRegion& R0, int max_iters) {
  if (max_iters < 1) throw DomainError("iterate_theta: max_iters must be >= 1");
  IterationTrace tr;
  tr.iterates.push_back(R0);
  tr.masks.push_back(R0.mask_on(ctx.grid()));
  for (int k = 0; k < max_iters; ++k) {
    const PolicyRegion& R = tr.iterates.back();
    const Classification cls = ctx.classify_region(R);
    ThetaResult th = theta_step(R, cls);
    Direction d = detail::step_direction(tr.masks.back(), th.mask);
    if (th.carried_over) {
      tr.converged = true;
      tr.changed.push_back(0);
      return tr;
    }
    if (k == 1 && tr.direction == Direction::Decreasing)
      tr.warnings.push_back("first step decreased but Theta changed the mask again (" +
                            std::to_string(th.changed_outside_collar) + " non-collar cells): numerical inconsistency");
    tr.direction = detail::merge(tr.direction, d);
    tr.changed.push_back(detail::mask_diff(tr.masks.back(), th.mask));
    // 2-cycle: the new mask repeats the one before the last
    if (tr.masks.size() >= 2 && th.mask == tr.masks[tr.masks.size() - 2]) {
      tr.oscillation = true;
      Mask u = th.mask;
      for (std::size_t i = 0; i < u.bits.size(); ++i) u.bits[i] |= tr.masks.back().bits[i];
      PolicyRegion U = PolicyRegion::from_mask(u, "cycle-union");
      tr.iterates.push_back(U);
      tr.masks.push_back(u);
      tr.converged = verify_equilibrium(ctx, U).is_equilibrium;
      tr.warnings.push_back(std::string("mask 2-cycle detected; union ") +
                            (tr.converged ? "verified as equilibrium" : "fails verification"));
      return tr;
    }
    tr.iterates.push_back(th.region);
    tr.masks.push_back(th.mask);
  }
  // converged also if the final region is already a fixed point
  const Classification last = ctx.classify_region(tr.iterates.back());
  tr.converged = theta_step(tr.iterates.back(), last).carried_over;
  return tr;
}

// ---------------------------------------------------------------------------
// Improvement and search

struct DominanceCheck {
  std::size_t cells_checked = 0;
  std::size_t collar_excluded = 0;
  std::vector<EquilibriumViolation> violations;  // margin = J_new - max(J_R, J_T)
  bool holds() const { return violations.empty(); }
};

/// J_hi >= J_lo - 3 combined SE on every cell outside the given collar.
inline DominanceCheck check_dominance(const ValueField& hi, const std::vector<const ValueField*>& lows,
                                      const std::vector<std::uint8_t>& collar) {
  DominanceCheck d;
  for (std::size_t i = 0; i < hi.size(); ++i) {
    if (!collar.empty() && collar[i]) {
      ++d.collar_excluded;
      continue;
    }
    ++d.cells_checked;
    for (const ValueField* lo : lows) {
      const double se = std::hypot(hi.std_errs[i], lo->std_errs[i]);
      const double margin = hi.values[i] - lo->values[i];
      if (margin < -3.0 * se - 1e-12) {
        d.violations.push_back({i, Label::S, margin, se});
        break;
      }
    }
  }
  return d;
}

struct ImproveResult {
  PolicyRegion improved;
  DominanceCheck dominance;
  bool degenerate = false;
  bool carried_over = false;
  std::vector<std::string> warnings;
};

/// Theta(R n T) after one classification round; dominance of its J over
/// max(J_R, J_T) cellwise within 3 SE. An intersection empty on the grid is
/// reported as degenerate and R is returned unchanged.
inline ImproveResult improve_pair(const GameContext& ctx, const PolicyRegion& R, const PolicyRegion& T) {
  ImproveResult out;
  PolicyRegion I = region_intersection(R, T);
  if (I.mask_on(ctx.grid()).count() == 0) {
    out.improved = R;
    out.degenerate = true;
    out.warnings.push_back("intersection is empty on the grid; improvement skipped");
    return out;
  }
  const Classification cls = ctx.classify_region(I);
  ThetaResult th = theta_step(I, cls);
  out.improved = th.region;
  out.carried_over = th.carried_over;
  const ValueField& Jn = ctx.value_of(out.improved);
  const ValueField& JR = ctx.value_of(R);
  const ValueField& JT = ctx.value_of(T);
  out.dominance = check_dominance(Jn, {&JR, &JT}, collar_cells(out.improved.mask_on(ctx.grid())));
  return out;
}

struct SearchStep {
  std::size_t candidate;
  ImproveResult result;
};

struct SearchResult {
  PolicyRegion R_star;
  std::vector<SearchStep> trace;
  std::vector<std::size_t> accepted;
  std::vector<std::pair<std::size_t, EquilibriumReport>> rejected;
  EquilibriumReport final_report;
  DominanceCheck dominance;  // R_star over every accepted candidate
  std::size_t closure_excess = 0;                // cells of closure(R_star) outside every closure
  std::size_t closure_excess_outside_collar = 0;
  bool ok() const { return final_report.is_equilibrium && dominance.holds() && closure_excess_outside_collar == 0; }
};

/// T_1 = R_1, T_n = Theta(T_{n-1} n R_n) over the candidates that verify.
inline SearchResult search_optimal(const GameContext& ctx, const std::vector<PolicyRegion>& candidates) {
  if (candidates.empty()) throw DomainError("search_optimal: no candidates");
  SearchResult out;
  std::optional<PolicyRegion> T;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    EquilibriumReport rep = verify_equilibrium(ctx, candidates[k]);
    if (!rep.is_equilibrium) {
      out.rejected.emplace_back(k, std::move(rep));
      continue;
    }
    out.accepted.push_back(k);
    if (!T) {
      T = candidates[k];
      continue;
    }
    ImproveResult step = improve_pair(ctx, *T, candidates[k]);
    T = step.improved;
    out.trace.push_back({k, std::move(step)});
  }
  if (!T) throw DomainError("search_optimal: every candidate failed verification");
  out.R_star = *T;
  out.final_report = verify_equilibrium(ctx, out.R_star);

  const Grid& g = ctx.grid();
  std::vector<const ValueField*> lows;
  Mask inter = Mask::filled(g, true);
  for (std::size_t k : out.accepted) {
    lows.push_back(&ctx.value_of(candidates[k]));
    Mask c = closure_mask(candidates[k], g);
    for (std::size_t i = 0; i < inter.bits.size(); ++i) inter.bits[i] &= c.bits[i];
  }
  const Mask star = closure_mask(out.R_star, g);
  const auto collar = collar_cells(star);
  out.dominance = check_dominance(ctx.value_of(out.R_star), lows, collar);
  for (std::size_t i = 0; i < star.bits.size(); ++i)
    if (star.bits[i] && !inter.bits[i]) {
      ++out.closure_excess;
      out.closure_excess_outside_collar += !collar[i];
    }
  return out;
}

/// V = f v J with the SE of J where J is the larger term.
struct ValueFunctionResult {
  ValueField V;
  bool verified = false;
  std::vector<std::string> warnings;
};

inline ValueFunctionResult value_function(const GameContext& ctx, const PolicyRegion& R) {
  ValueFunctionResult out;
  const EquilibriumReport rep = verify_equilibrium(ctx, R);
  out.verified = rep.is_equilibrium;
  if (!out.verified) out.warnings.push_back("region is not a verified equilibrium; V reported anyway");
  const ValueField& J = ctx.value_of(R);
  out.V = J;
  for (std::size_t i = 0; i < J.size(); ++i) {
    const double fx = ctx.payoff()(J.grid.center(i));
    if (fx >= J.values[i]) {
      out.V.values[i] = fx;
      out.V.std_errs[i] = 0.0;
      out.V.trunc_bounds[i] = 0.0;
    }
  }
  return out;
}

}  // namespace stopgame
