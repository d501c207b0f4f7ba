#pragma once

// Entry versus hitting semantics on recorded paths, and the regularity
// diagnostic P^x(rho_R <= h).

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "stopgame/dynamics.hpp"
#include "stopgame/parallel.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/rng.hpp"

namespace stopgame {

struct EntryHit {
  double entry_time = std::numeric_limits<double>::infinity();
  double hit_time = std::numeric_limits<double>::infinity();
};

/// entry_time = inf{t >= 0 : X_t in R}, hit_time = inf{t > 0 : X_t in R}
/// on the sampled path. With an rng, bridge crossings of analytic faces
/// between samples are also tested (variance 1 per unit time).
inline EntryHit first_entry_vs_hit(const PathSegment& path, const RegionProbe& R, const Point& x0,
                                   RngStream* rng = nullptr) {
  if (path.times.empty() || path.times.front() != 0.0 || !(path.states.front() == x0))
    throw DomainError("first_entry_vs_hit: path must start at x0 at time 0");
  EntryHit out;
  if (R.contains(x0)) {
    out.entry_time = 0.0;
    if (R.is_analytic()) {
      // every point of an analytic region is regular: the first step hits
      out.hit_time = path.times.size() > 1 ? 0.5 * path.times[1] : 0.0;
      return out;
    }
  }
  for (std::size_t k = 1; k < path.times.size(); ++k) {
    const Point& a = path.states[k - 1];
    const Point& b = path.states[k];
    const double h = path.times[k] - path.times[k - 1];
    double t = std::numeric_limits<double>::infinity();
    if (R.contains(b)) {
      t = R.contains(a) ? path.times[k] : path.times[k - 1] + 0.5 * h;
    } else if (rng && R.is_analytic()) {
      double none = 1.0;
      for (const auto& f : R.faces()) {
        if (f.contains(a) || f.contains(b)) continue;
        if (!R.closure_contains(f.project(lerp(a, b, 0.5)))) continue;
        none *= 1.0 - std::exp(-2.0 * f.signed_value(a) * f.signed_value(b) / h);
      }
      if (rng->uniform() < 1.0 - none) t = path.times[k - 1] + 0.5 * h;
    }
    if (std::isfinite(t)) {
      if (!std::isfinite(out.entry_time)) out.entry_time = t;
      out.hit_time = t;
      return out;
    }
  }
  return out;
}

/// For each h, the Monte Carlo fraction of paths from x that hit R at a
/// positive time no later than h.
inline std::vector<double> regularity_score(const ProcessModel& model, const Point& x, const PolicyRegion& R,
                                            std::span<const double> h_list, int n_paths, std::uint64_t seed,
                                            int threads = 1) {
  if (h_list.empty() || n_paths < 1) throw DomainError("regularity_score: need h values and n_paths >= 1");
  for (std::size_t i = 0; i < h_list.size(); ++i)
    if (!(h_list[i] > 0) || (i > 0 && !(h_list[i] < h_list[i - 1])))
      throw DomainError("regularity_score: h_list must be positive and decreasing");
  RegionProbe probe(R);
  SimulationOptions opt;
  opt.immediate_when_inside = false;
  std::vector<double> times(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t p) {
    RngStream rng(seed, stream_id_for(0x5245, 0, p));
    times[p] = simulate_until(model, x, probe, h_list.front(), rng, opt).hit_time;
  });
  std::vector<double> scores;
  for (double h : h_list) {
    int k = 0;
    for (double t : times) k += t <= h;
    scores.push_back(static_cast<double>(k) / n_paths);
  }
  return scores;
}

}  // namespace stopgame
