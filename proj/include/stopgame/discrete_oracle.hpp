#pragma once

// Exact analog of the stopping game on a finite discrete-time chain: J, Theta,
// all equilibria by enumeration, the structural checks, and backward
// induction for the time-consistent case.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stopgame/discounting.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/numerics.hpp"
#include "stopgame/parallel.hpp"

namespace stopgame {

using StateSet = std::uint32_t;

inline constexpr int kMaxChainStates = 12;

inline bool in_set(StateSet s, int i) { return (s >> i) & 1u; }
inline bool subset_of(StateSet a, StateSet b) { return (a & ~b) == 0; }

inline std::string set_string(StateSet s, int n) {
  std::string out = "{";
  bool first = true;
  for (int i = 0; i < n; ++i)
    if (in_set(s, i)) {
      out += (first ? "" : ",") + std::to_string(i);
      first = false;
    }
  return out + "}";
}

class FiniteChain {
 public:
  FiniteChain(std::vector<std::vector<double>> P, double h) : P_(std::move(P)), h_(h) {
    const std::size_t n = P_.size();
    if (n < 1 || n > static_cast<std::size_t>(kMaxChainStates))
      throw DomainError("FiniteChain: 1..12 states supported");
    if (!(h > 0)) throw DomainError("FiniteChain: time unit h must be > 0");
    for (const auto& row : P_) {
      if (row.size() != n) throw ShapeError("FiniteChain: transition matrix must be square");
      long double s = 0;
      for (double p : row) {
        if (!(p >= 0)) throw DomainError("FiniteChain: negative transition probability");
        s += p;
      }
      if (std::fabs(static_cast<double>(s) - 1.0) > 1e-12) throw DomainError("FiniteChain: rows must sum to 1");
    }
  }

  /// Walk on {0..n-1} stepping right with probability p; the end states are
  /// absorbing, or reflecting when requested.
  static FiniteChain biased_walk(int n, double p, double h = 1.0, bool absorbing = true) {
    if (n < 2) throw DomainError("biased_walk: n >= 2");
    if (!(p > 0 && p < 1)) throw DomainError("biased_walk: p in (0, 1)");
    std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
      if (i == 0 || i == n - 1) {
        if (absorbing) {
          P[i][i] = 1.0;
        } else {
          P[i][i == 0 ? 1 : n - 2] = 1.0;
        }
        continue;
      }
      P[i][i + 1] = p;
      P[i][i - 1] = 1 - p;
    }
    return FiniteChain(std::move(P), h);
  }
  static FiniteChain symmetric_walk(int n, double h = 1.0, bool absorbing = true) {
    return biased_walk(n, 0.5, h, absorbing);
  }
  /// Row-per-line CSV of transition probabilities.
  static FiniteChain from_csv(const std::string& path, double h) {
    std::ifstream in(path);
    if (!in) throw DomainError("chain csv: cannot open " + path);
    std::vector<std::vector<double>> P;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      P.push_back(std::move(row));
    }
    return FiniteChain(std::move(P), h);
  }

  int n() const noexcept { return static_cast<int>(P_.size()); }
  double h() const noexcept { return h_; }
  double p(int i, int j) const { return P_[i][j]; }
  const std::vector<std::vector<double>>& matrix() const noexcept { return P_; }

  /// States from which R is entered at some step k >= 1 with positive probability.
  StateSet can_reach(StateSet R) const {
    StateSet reach = 0;
    bool grew = true;
    while (grew) {
      grew = false;
      for (int i = 0; i < n(); ++i) {
        if (in_set(reach, i)) continue;
        for (int j = 0; j < n(); ++j)
          if (P_[i][j] > 0 && (in_set(R, j) || in_set(reach, j))) {
            reach |= 1u << i;
            grew = true;
            break;
          }
      }
    }
    return reach;
  }

 private:
  std::vector<std::vector<double>> P_;
  double h_;
};

struct OracleOptions {
  double tail_tol = 1e-14;
  long max_steps = 10'000'000;
  long min_steps = 0;  // forces at least this horizon (robustness reruns)
  double tie_tol = 1e-12;
};

struct ExactValue {
  std::vector<long double> J;
  long horizon = 0;
  double tail_bound = 0;  // max over states
};

/// J(x, R) = sum_k delta(k h) sum_{y in R} P^x(rho_R = k, X_k = y) f(y) with
/// rho_R the first k >= 1 in R, by forward propagation of the chain killed
/// on R. Steps continue until f_max delta((N+1)h) times the surviving mass
/// on states that can still reach R is below tail_tol for every start.
inline ExactValue exact_J(const FiniteChain& chain, StateSet R, const std::vector<double>& f,
                          const DiscountCurve& delta, const OracleOptions& opt = {}) {
  const int n = chain.n();
  if (static_cast<int>(f.size()) != n) throw ShapeError("exact_J: payoff size must match the chain");
  const double fmax = *std::max_element(f.begin(), f.end());
  const StateSet live = chain.can_reach(R);
  ExactValue out;
  out.J.assign(n, 0.0L);
  std::vector<numerics::CompensatedSum<long double>> acc(n);
  // mu[x][y] = P^x(X_k = y, rho_R > k)
  std::vector<std::vector<long double>> mu(n, std::vector<long double>(n, 0.0L)), next = mu;
  for (int x = 0; x < n; ++x) mu[x][x] = 1.0L;
  long k = 0;
  while (true) {
    long double worst = 0;
    for (int x = 0; x < n; ++x) {
      long double m = 0;
      for (int y = 0; y < n; ++y)
        if (in_set(live, y)) m += mu[x][y];
      worst = std::max(worst, m);
    }
    const double bound = fmax * delta((k + 1) * chain.h()) * static_cast<double>(worst);
    if (k >= opt.min_steps && bound < opt.tail_tol) {
      out.tail_bound = bound;
      break;
    }
    if (k >= opt.max_steps) throw NumericalError("exact_J: tail bound not met within the step cap");
    ++k;
    const long double dk = delta(k * chain.h());
    for (int x = 0; x < n; ++x) {
      std::fill(next[x].begin(), next[x].end(), 0.0L);
      for (int z = 0; z < n; ++z) {
        const long double m = mu[x][z];
        if (m == 0) continue;
        for (int y = 0; y < n; ++y) next[x][y] += m * chain.p(z, y);
      }
      for (int y = 0; y < n; ++y)
        if (in_set(R, y)) {
          acc[x].add(dk * next[x][y] * f[y]);
          next[x][y] = 0;
        }
    }
    std::swap(mu, next);
  }
  out.horizon = k;
  for (int x = 0; x < n; ++x) out.J[x] = acc[x].value();
  return out;
}

/// First-entry variant (k >= 0): f(x) on R, J(x, R) elsewhere.
inline ExactValue exact_J_entry(const FiniteChain& chain, StateSet R, const std::vector<double>& f,
                                const DiscountCurve& delta, const OracleOptions& opt = {}) {
  ExactValue v = exact_J(chain, R, f, delta, opt);
  for (int x = 0; x < chain.n(); ++x)
    if (in_set(R, x)) v.J[x] = f[x];
  return v;
}

struct DiscreteTheta {
  StateSet S = 0, I = 0, C = 0, theta = 0;
};

inline DiscreteTheta discrete_theta(StateSet R, const std::vector<long double>& J, const std::vector<double>& f,
                                    double tie_tol) {
  DiscreteTheta t;
  for (std::size_t x = 0; x < f.size(); ++x) {
    const long double d = J[x] - f[x];
    const StateSet bit = 1u << x;
    if (d < -tie_tol)
      t.S |= bit;
    else if (d > tie_tol)
      t.C |= bit;
    else
      t.I |= bit;
  }
  t.theta = t.S | (t.I & R);
  return t;
}

struct Enumeration {
  int n = 0;
  std::vector<std::vector<long double>> J;  // indexed by subset
  std::vector<StateSet> theta;
  std::vector<long> horizon;
  std::vector<StateSet> equilibria;
  double max_tail_bound = 0;

  bool is_equilibrium(StateSet R) const { return theta[R] == R; }
  /// V = f v J
  std::vector<long double> V(StateSet R, const std::vector<double>& f) const {
    std::vector<long double> v(n);
    for (int x = 0; x < n; ++x) v[x] = std::max<long double>(f[x], J[R][x]);
    return v;
  }
};

inline Enumeration enumerate_equilibria(const FiniteChain& chain, const std::vector<double>& f,
                                        const DiscountCurve& delta, const OracleOptions& opt = {}, int threads = 1) {
  const int n = chain.n();
  const std::size_t subsets = std::size_t{1} << n;
  Enumeration e;
  e.n = n;
  e.J.resize(subsets);
  e.theta.resize(subsets);
  e.horizon.resize(subsets);
  std::vector<double> tails(subsets);
  parallel_for(subsets, threads, [&](std::size_t R) {
    ExactValue v = exact_J(chain, static_cast<StateSet>(R), f, delta, opt);
    e.J[R] = std::move(v.J);
    e.horizon[R] = v.horizon;
    tails[R] = v.tail_bound;
    e.theta[R] = discrete_theta(static_cast<StateSet>(R), e.J[R], f, opt.tie_tol).theta;
  });
  for (std::size_t R = 0; R < subsets; ++R) {
    e.max_tail_bound = std::max(e.max_tail_bound, tails[R]);
    if (e.theta[R] == R) e.equilibria.push_back(static_cast<StateSet>(R));
  }
  return e;
}

struct StructuralReport {
  int n = 0;
  bool di_holds = true;
  // (a) Theta(R) c R implies Theta^2(R) = Theta(R)
  std::size_t a_applicable = 0;
  std::vector<StateSet> a_exceptions;
  // (b) R c T, R equilibrium implies J(R) >= J(T)
  std::size_t b_pairs = 0;
  std::vector<std::pair<StateSet, StateSet>> b_exceptions;
  // (c) equilibrium pairs with Theta(R n T) c R n T: Theta(R n T) equilibrium
  //     and J >= max(J_R, J_T)
  std::size_t c_pairs = 0;
  std::size_t c_applicable = 0;
  std::size_t c_passed = 0;
  std::vector<std::pair<StateSet, StateSet>> c_failures;
  std::vector<std::pair<StateSet, StateSet>> c_precondition_failures;
  // (d) a statewise-dominant equilibrium exists
  bool d_holds = false;
  std::vector<StateSet> d_dominant;
  std::vector<StateSet> equilibria;
  double max_tail_bound = 0;

  double c_pass_rate() const { return c_applicable ? static_cast<double>(c_passed) / c_applicable : 1.0; }
  bool all_pass() const { return a_exceptions.empty() && b_exceptions.empty() && c_failures.empty() && d_holds; }
};

inline StructuralReport verify_structural_theorems(const FiniteChain& chain, const std::vector<double>& f,
                                                   const DiscountCurve& delta, const OracleOptions& opt = {},
                                                   int threads = 1) {
  const Enumeration e = enumerate_equilibria(chain, f, delta, opt, threads);
  const int n = chain.n();
  const StateSet full = static_cast<StateSet>((std::size_t{1} << n) - 1);
  StructuralReport r;
  r.n = n;
  r.equilibria = e.equilibria;
  r.max_tail_bound = e.max_tail_bound;
  std::vector<double> grid;
  for (int k = 1; k <= 64; ++k) grid.push_back(k * chain.h());
  r.di_holds = check_decreasing_impatience(delta, grid, 1e-15).holds;
  const long double tol = opt.tie_tol;
  auto geq = [&](const std::vector<long double>& a, const std::vector<long double>& b) {
    for (int x = 0; x < n; ++x)
      if (a[x] < b[x] - tol) return false;
    return true;
  };

  for (StateSet R = 0; R <= full; ++R) {
    const StateSet t1 = e.theta[R];
    if (subset_of(t1, R)) {
      ++r.a_applicable;
      if (e.theta[t1] != t1) r.a_exceptions.push_back(R);
    }
  }
  for (StateSet R : e.equilibria)
    for (StateSet T = 0; T <= full; ++T) {
      if (!subset_of(R, T)) continue;
      ++r.b_pairs;
      if (!geq(e.J[R], e.J[T])) r.b_exceptions.emplace_back(R, T);
    }
  for (std::size_t i = 0; i < e.equilibria.size(); ++i)
    for (std::size_t j = i + 1; j < e.equilibria.size(); ++j) {
      const StateSet R = e.equilibria[i], T = e.equilibria[j];
      ++r.c_pairs;
      const StateSet U = R & T, W = e.theta[U];
      if (!subset_of(W, U)) {
        r.c_precondition_failures.emplace_back(R, T);
        continue;
      }
      ++r.c_applicable;
      if (e.is_equilibrium(W) && geq(e.J[W], e.J[R]) && geq(e.J[W], e.J[T]))
        ++r.c_passed;
      else
        r.c_failures.emplace_back(R, T);
    }
  for (StateSet R : e.equilibria) {
    const auto vR = e.V(R, f);
    bool dominates = true;
    for (StateSet T : e.equilibria)
      if (!geq(vR, e.V(T, f))) {
        dominates = false;
        break;
      }
    if (dominates) r.d_dominant.push_back(R);
  }
  r.d_holds = !r.d_dominant.empty();
  return r;
}

/// Classical optimal stopping under delta(kh) = lambda^k, stopping allowed at
/// k >= 0: U = max(f, lambda P U) by value iteration. Returns U and the
/// stopping region {f >= lambda P U}.
struct StoppingDP {
  std::vector<long double> U;
  StateSet region = 0;
  int iterations = 0;
};

inline StoppingDP backward_induction(const FiniteChain& chain, const std::vector<double>& f, double lambda,
                                     double tol = 1e-15, int max_iter = 1'000'000) {
  if (!(lambda > 0 && lambda < 1)) throw DomainError("backward_induction: need 0 < lambda < 1");
  const int n = chain.n();
  StoppingDP dp;
  dp.U.assign(f.begin(), f.end());
  std::vector<long double> cont(n);
  for (dp.iterations = 0; dp.iterations < max_iter; ++dp.iterations) {
    long double change = 0;
    for (int x = 0; x < n; ++x) {
      long double s = 0;
      for (int y = 0; y < n; ++y) s += chain.p(x, y) * dp.U[y];
      cont[x] = lambda * s;
    }
    for (int x = 0; x < n; ++x) {
      long double u = std::max<long double>(f[x], cont[x]);
      change = std::max(change, std::fabs(u - dp.U[x]));
      dp.U[x] = u;
    }
    if (change < tol) break;
  }
  for (int x = 0; x < n; ++x)
    if (f[x] >= cont[x] - tol) dp.region |= 1u << x;
  return dp;
}

inline nlohmann::json to_json(const StructuralReport& r) {
  auto sets = [&](const std::vector<StateSet>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (StateSet s : v) a.push_back(set_string(s, r.n));
    return a;
  };
  auto pairs = [&](const std::vector<std::pair<StateSet, StateSet>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto [x, y] : v) a.push_back({set_string(x, r.n), set_string(y, r.n)});
    return a;
  };
  nlohmann::json j;
  j["n_states"] = r.n;
  j["decreasing_impatience"] = r.di_holds;
  j["max_tail_bound"] = r.max_tail_bound;
  j["equilibria"] = sets(r.equilibria);
  j["a"] = {{"applicable", r.a_applicable}, {"exceptions", sets(r.a_exceptions)}};
  j["b"] = {{"pairs", r.b_pairs}, {"exceptions", pairs(r.b_exceptions)}};
  j["c"] = {{"pairs", r.c_pairs},
            {"applicable", r.c_applicable},
            {"passed", r.c_passed},
            {"pass_rate", r.c_pass_rate()},
            {"failures", pairs(r.c_failures)},
            {"precondition_failures", pairs(r.c_precondition_failures)}};
  j["d"] = {{"holds", r.d_holds}, {"dominant", sets(r.d_dominant)}};
  return j;
}

}  // namespace stopgame
