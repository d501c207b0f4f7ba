#pragma once

// Markov dynamics: Brownian motion and isotropic Ito diffusions, first-passage
// simulation with Brownian-bridge crossing correction, and closed-form
// hitting-time Laplace transforms for the oracle geometries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stopgame/discounting.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/rng.hpp"

namespace stopgame {

/// dX = b(X) dt + sigma(X) dB with sigma(X) a scalar multiple of the identity.
class ProcessModel {
 public:
  enum class Kind { Brownian, Ito };
  using Drift = std::function<Point(const Point&)>;
  using Volatility = std::function<double(const Point&)>;

  static ProcessModel brownian(int dim, double dt) {
    ProcessModel m(Kind::Brownian, dim, dt, "brownian");
    m.drift_ = [dim](const Point&) { return Point(dim); };
    m.vol_ = [](const Point&) { return 1.0; };
    return m;
  }
  static ProcessModel ito(int dim, double dt, Drift drift, Volatility vol, std::string preset = "custom") {
    ProcessModel m(Kind::Ito, dim, dt, std::move(preset));
    m.drift_ = std::move(drift);
    m.vol_ = std::move(vol);
    return m;
  }
  /// dX = theta (mean - X) dt + sigma dB
  static ProcessModel ornstein_uhlenbeck(int dim, double dt, double theta, double mean, double sigma) {
    if (!(sigma > 0)) throw DomainError("ou: sigma must be > 0");
    return ito(
        dim, dt,
        [=](const Point& x) {
          Point b(dim);
          for (int i = 0; i < dim; ++i) b[i] = theta * (mean - x[i]);
          return b;
        },
        [sigma](const Point&) { return sigma; }, "ou");
  }
  /// dX = mu dt + sigma dB
  static ProcessModel drifted(Point mu, double dt, double sigma) {
    if (!(sigma > 0)) throw DomainError("drifted: sigma must be > 0");
    return ito(
        mu.dim(), dt, [mu](const Point&) { return mu; }, [sigma](const Point&) { return sigma; }, "drifted");
  }

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  double dt() const noexcept { return dt_; }
  const std::string& preset() const noexcept { return preset_; }
  Point drift(const Point& x) const { return drift_(x); }
  double volatility(const Point& x) const { return vol_(x); }
  ProcessModel with_dt(double dt) const {
    ProcessModel m = *this;
    if (!(dt > 0)) throw DomainError("ProcessModel: dt must be > 0");
    m.dt_ = dt;
    return m;
  }

 private:
  ProcessModel(Kind k, int dim, double dt, std::string preset) : kind_(k), dim_(dim), dt_(dt), preset_(std::move(preset)) {
    if (dim < 1 || dim > kMaxDim) throw DomainError("ProcessModel: unsupported dimension");
    if (!(dt > 0)) throw DomainError("ProcessModel: dt must be > 0");
  }

  Kind kind_;
  int dim_;
  double dt_;
  std::string preset_;
  Drift drift_;
  Volatility vol_;
};

struct PathSegment {
  std::vector<double> times;
  std::vector<Point> states;
};

struct HitResult {
  bool hit = false;
  double hit_time = std::numeric_limits<double>::infinity();
  Point hit_state;
  PathSegment path;  // filled only when recording
};

struct SimulationOptions {
  bool record_path = false;
  /// Count a start inside R as a hit at t = 0 (every point of an analytic
  /// region is regular). When false the first positive-time sample or
  /// bridge crossing decides.
  bool immediate_when_inside = true;
  bool bridge_correction = true;
  bool adaptive_steps = true;
};

namespace detail {

inline constexpr double kBridgeNegligible = 1e-13;

class PathSimulator {
 public:
  PathSimulator(const ProcessModel& m, const RegionProbe& probe, RngStream& rng, const SimulationOptions& opt)
      : m_(m), probe_(probe), rng_(rng), opt_(opt) {}

  HitResult run(const Point& x0, double horizon) {
    if (!(horizon > 0)) throw DomainError("simulate_until: horizon must be > 0");
    if (x0.dim() != m_.dim()) throw ShapeError("simulate_until: start point dimension mismatch");
    HitResult r;
    record(0.0, x0, r);
    if (probe_.never_hit()) return r;
    if (probe_.contains(x0)) {
      if (opt_.immediate_when_inside) return hit_at(0.0, x0, r);
      // analytic regions contain a neighbourhood of x0 on one side of every
      // face, so the path is inside during the first step
      if (probe_.is_analytic()) return hit_at(0.5 * std::min(m_.dt(), horizon), x0, r);
    }

    const bool brownian = m_.kind() == ProcessModel::Kind::Brownian;
    const double dt = m_.dt();
    double t = 0;
    Point x = x0;
    while (t < horizon) {
      double h = dt;
      if (brownian && opt_.adaptive_steps) {
        double d = probe_.face_distance(x);
        h = std::clamp(d * d / 16.0, dt, std::max(dt, horizon));
      }
      h = std::min(h, horizon - t);
      if (h <= 0) break;
      Point y = brownian ? bm_step(x, h) : euler_step(x, h);
      for (int i = 0; i < y.dim(); ++i)
        if (!std::isfinite(y[i])) throw SimulationError("simulate_until: non-finite state", t);
      if (segment(x, y, t, h, r)) return r;
      x = y;
      t += h;
      record(t, x, r);
    }
    return r;
  }

 private:
  Point bm_step(const Point& x, double h) {
    Point y(x.dim());
    const double s = std::sqrt(h);
    for (int i = 0; i < x.dim(); ++i) y[i] = x[i] + s * rng_.normal();
    return y;
  }
  Point euler_step(const Point& x, double h) {
    Point b = m_.drift(x);
    double sig = m_.volatility(x);
    Point y(x.dim());
    const double s = sig * std::sqrt(h);
    for (int i = 0; i < x.dim(); ++i) y[i] = x[i] + b[i] * h + s * rng_.normal();
    return y;
  }

  double local_variance(const Point& x) const {
    double s = m_.kind() == ProcessModel::Kind::Brownian ? 1.0 : m_.volatility(x);
    return s * s;
  }

  // Probability that the bridge x -> y over time h touches a face through
  // which R can be entered; also returns the most likely face.
  double crossing_probability(const Point& x, const Point& y, double h, int& face) const {
    face = -1;
    if (!opt_.bridge_correction || !probe_.is_analytic()) return 0.0;
    const double var = local_variance(x);
    double none = 1.0, best = 0.0;
    const Point mid = lerp(x, y, 0.5);
    const auto& faces = probe_.faces();
    for (std::size_t i = 0; i < faces.size(); ++i) {
      if (faces[i].contains(x) || faces[i].contains(y)) continue;
      double s1 = faces[i].signed_value(x), s2 = faces[i].signed_value(y);
      double p = std::exp(-2.0 * s1 * s2 / (var * h));
      if (p < kBridgeNegligible) continue;
      if (!probe_.closure_contains(faces[i].project(mid))) continue;
      none *= 1.0 - p;
      if (p > best) {
        best = p;
        face = static_cast<int>(i);
      }
    }
    return 1.0 - none;
  }

  // Returns true on a hit inside the step [t, t + h] from x to y.
  bool segment(const Point& x, const Point& y, double t, double h, HitResult& r) {
    const bool end_inside = probe_.contains(y);
    int face = -1;
    const double p = end_inside ? 1.0 : crossing_probability(x, y, h, face);
    if (!end_inside && p < kBridgeNegligible) return false;
    if (h > 1.5 * m_.dt()) {
      // refine: exact bridge midpoint, then the two halves in order
      Point m(x.dim());
      const double s = std::sqrt(local_variance(x) * h / 4.0);
      for (int i = 0; i < x.dim(); ++i) m[i] = 0.5 * (x[i] + y[i]) + s * rng_.normal();
      if (segment(x, m, t, 0.5 * h, r)) return true;
      record(t + 0.5 * h, m, r);
      return segment(m, y, t + 0.5 * h, 0.5 * h, r);
    }
    if (end_inside) {
      if (probe_.contains(x)) return hit_at(t + h, y, r), true;  // started inside, first positive sample
      return hit_at(t + 0.5 * h, probe_.boundary_point(x, y), r), true;
    }
    if (rng_.uniform() < p) return hit_at(t + 0.5 * h, probe_.faces()[face].project(lerp(x, y, 0.5)), r), true;
    return false;
  }

  void record(double t, const Point& x, HitResult& r) const {
    if (!opt_.record_path) return;
    if (!r.path.times.empty() && t <= r.path.times.back()) return;
    r.path.times.push_back(t);
    r.path.states.push_back(x);
  }
  HitResult& hit_at(double t, const Point& x, HitResult& r) const {
    r.hit = true;
    r.hit_time = t;
    r.hit_state = x;
    if (opt_.record_path && t > 0) record(t, x, r);
    return r;
  }

  const ProcessModel& m_;
  const RegionProbe& probe_;
  RngStream& rng_;
  const SimulationOptions& opt_;
};

}  // namespace detail

/// First hitting time of the probe's region after time 0, simulated up to
/// `horizon`; hit_time = +inf when not hit.
inline HitResult simulate_until(const ProcessModel& model, const Point& x0, const RegionProbe& stop, double horizon,
                                RngStream& rng, const SimulationOptions& opt = {}) {
  detail::PathSimulator sim(model, stop, rng, opt);
  return sim.run(x0, horizon);
}

// ---------------------------------------------------------------------------
// Hitting-time transforms

/// E^y[exp(-lambda tau)], tau the exit time of 1-D BM from (-c, c).
inline double two_sided_barrier_lt(double lambda, double c, double y) {
  if (!(c > 0)) throw DomainError("two_sided_barrier_lt: c must be > 0");
  if (std::fabs(y) > c) throw DomainError("two_sided_barrier_lt: |y| must be <= c");
  if (!(lambda >= 0)) throw DomainError("two_sided_barrier_lt: lambda must be >= 0");
  const double k = std::sqrt(2.0 * lambda);
  return numerics::cosh_ratio(y * k, c * k);
}

/// E[exp(-lambda tau_r)], tau_r the exit time of 3-D BM from a ball of radius r.
inline double ball_exit_lt(double lambda, double r) {
  if (!(r > 0)) throw DomainError("ball_exit_lt: r must be > 0");
  if (!(lambda >= 0)) throw DomainError("ball_exit_lt: lambda must be >= 0");
  return numerics::z_over_sinh(r * std::sqrt(2.0 * lambda));
}

/// E[exp(-lambda tau)], tau the hitting time of a level at distance d by 1-D BM.
inline double one_sided_barrier_lt(double lambda, double d) {
  if (!(d >= 0)) throw DomainError("one_sided_barrier_lt: distance must be >= 0");
  if (!(lambda >= 0)) throw DomainError("one_sided_barrier_lt: lambda must be >= 0");
  return std::exp(-d * std::sqrt(2.0 * lambda));
}

/// E[delta(tau)] = \int w(u) E[exp(-u tau)] du for delta with mixture representation.
inline double discounted_exit_factor(const LaplaceMixture& mixture, const std::function<double(double)>& transform) {
  return mixture.integrate(transform);
}

}  // namespace stopgame
