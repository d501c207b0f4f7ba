#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "stopgame/dynamics.hpp"
#include "stopgame/hitting.hpp"

using namespace stopgame;

namespace {

struct Moments {
  double mean = 0, se = 0;
};

template <class F>
Moments mc(int n, F&& sample) {
  double s = 0, s2 = 0;
  for (int p = 0; p < n; ++p) {
    double v = sample(p);
    s += v;
    s2 += v * v;
  }
  Moments m;
  m.mean = s / n;
  m.se = std::sqrt(std::max(0.0, s2 / n - m.mean * m.mean) / (n - 1));
  return m;
}

// {|x| >= c} in one dimension
PolicyRegion outside_interval(double c) {
  return PolicyRegion::from_shape(
      Shape::union_of({Shape::halfspace(Point{1.0}, c), Shape::halfspace(Point{-1.0}, c)}));
}

}  // namespace

TEST(ProcessModel, BrownianIncrementMoments) {
  auto m = ProcessModel::brownian(2, 0.01);
  RegionProbe never(PolicyRegion::from_shape(Shape::halfspace(Point{1, 0}, 1e9)));
  SimulationOptions opt;
  opt.record_path = true;
  opt.adaptive_steps = false;
  RngStream rng(1, 1);
  auto r = simulate_until(m, Point{0, 0}, never, 100.0, rng, opt);
  ASSERT_FALSE(r.hit);
  ASSERT_GE(r.path.states.size(), 10000u);
  for (int axis = 0; axis < 2; ++axis) {
    double s = 0, s2 = 0;
    const std::size_t n = r.path.states.size() - 1;
    for (std::size_t k = 1; k <= n; ++k) {
      double d = r.path.states[k][axis] - r.path.states[k - 1][axis];
      s += d;
      s2 += d * d;
    }
    EXPECT_NEAR(s / n, 0.0, 5 * std::sqrt(0.01 / n));
    EXPECT_NEAR(s2 / n, 0.01, 5 * 0.01 * std::sqrt(2.0 / n));
  }
}

TEST(ProcessModel, OrnsteinUhlenbeckStationaryVariance) {
  auto m = ProcessModel::ornstein_uhlenbeck(1, 0.01, 1.0, 0.0, 1.0);
  RegionProbe never(PolicyRegion::none());
  auto v = mc(4000, [&](int p) {
    RngStream rng(5, p);
    RegionProbe far(PolicyRegion::from_shape(Shape::halfspace(Point{1.0}, 1e9)));
    SimulationOptions opt;
    opt.record_path = true;
    auto r = simulate_until(m, Point{0.0}, far, 5.0, rng, opt);
    double x = r.path.states.back()[0];
    return x * x;
  });
  // Euler stationary variance sigma^2 / (2 theta - theta^2 dt)
  double target = (1 - std::exp(-10.0)) / (2 - 0.01);
  EXPECT_NEAR(v.mean, target, 4 * v.se);
}

TEST(SimulateUntil, WholeLineAndEmpty) {
  auto m = ProcessModel::brownian(1, 1e-3);
  RngStream rng(1, 1);
  auto all = RegionProbe(PolicyRegion::full());
  auto r = simulate_until(m, Point{0.0}, all, 10.0, rng);
  EXPECT_TRUE(r.hit);
  EXPECT_EQ(r.hit_time, 0.0);
  EXPECT_EQ(r.hit_state[0], 0.0);
  auto whole = RegionProbe(outside_interval(0.0));
  EXPECT_LE(simulate_until(m, Point{0.0}, whole, 10.0, rng).hit_time, 1e-3);

  auto m2 = ProcessModel::brownian(2, 1e-3);
  auto e = simulate_until(m2, Point{0, 0}, RegionProbe(PolicyRegion::none()), 10.0, rng);
  EXPECT_FALSE(e.hit);
  EXPECT_TRUE(std::isinf(e.hit_time));
}

TEST(SimulateUntil, ReproducibleBitForBit) {
  auto m = ProcessModel::brownian(2, 1e-3);
  RegionProbe p(PolicyRegion::from_shape(Shape::ball(Point{1, 1}, 0.3)));
  for (int k = 0; k < 20; ++k) {
    RngStream a(77, k), b(77, k);
    auto ra = simulate_until(m, Point{0, 0}, p, 50.0, a);
    auto rb = simulate_until(m, Point{0, 0}, p, 50.0, b);
    EXPECT_EQ(ra.hit_time, rb.hit_time);
    if (ra.hit) {
      EXPECT_EQ(ra.hit_state, rb.hit_state);
    }
  }
}

TEST(SimulateUntil, MeanExitTimeTwoSided) {
  auto m = ProcessModel::brownian(1, 1e-4);
  RegionProbe p(outside_interval(1.0));
  auto t = mc(20000, [&](int k) {
    RngStream rng(3, k);
    return simulate_until(m, Point{0.0}, p, 1e3, rng).hit_time;
  });
  EXPECT_NEAR(t.mean, 1.0, 3 * t.se + 1e-3);
}

TEST(SimulateUntil, HitStateOnBoundary) {
  auto m = ProcessModel::brownian(2, 1e-3);
  RegionProbe p(PolicyRegion::from_shape(Shape::halfspace(Point{0, 1}, 0.5)));
  for (int k = 0; k < 200; ++k) {
    RngStream rng(4, k);
    auto r = simulate_until(m, Point{0, 0}, p, 1e4, rng);
    if (r.hit) {
      EXPECT_NEAR(r.hit_state[1], 0.5, 1e-9);
    }
  }
}

TEST(SimulateUntil, BlowUpReportsLastValidTime) {
  auto m = ProcessModel::ito(
      1, 0.1, [](const Point& x) { return Point{x[0] * x[0] * 1e3}; }, [](const Point&) { return 1.0; }, "explosive");
  RngStream rng(1, 1);
  RegionProbe far(PolicyRegion::from_shape(Shape::halfspace(Point{-1.0}, 1e300)));
  try {
    simulate_until(m, Point{1.0}, far, 100.0, rng);
    FAIL() << "expected a simulation error";
  } catch (const SimulationError& e) {
    EXPECT_GE(e.last_valid_time(), 0.0);
    EXPECT_LT(e.last_valid_time(), 100.0);
  }
}

// Mean exit time from (-1, 1): with the bridge test the bias is O(dt); the
// uncorrected discrete monitor overshoots by order sqrt(dt).
TEST(BridgeCorrection, BiasRegression) {
  RegionProbe p(outside_interval(1.0));
  std::vector<double> dts{1e-2, 1e-3, 1e-4};
  std::vector<double> bias_off;
  for (double dt : dts) {
    auto m = ProcessModel::brownian(1, dt);
    const int n = dt < 5e-4 ? 4000 : 20000;
    for (bool on : {true, false}) {
      SimulationOptions opt;
      opt.bridge_correction = on;
      opt.adaptive_steps = false;
      auto t = mc(n, [&](int k) {
        RngStream rng(21, k);
        return simulate_until(m, Point{0.0}, p, 1e3, rng, opt).hit_time;
      });
      double bias = t.mean - 1.0;
      if (on) {
        EXPECT_LE(std::fabs(bias), 3 * t.se + 2 * dt) << "dt=" << dt;
      } else {
        bias_off.push_back(bias);
        if (dt >= 1e-3) {
          EXPECT_GT(bias, 3 * t.se) << "dt=" << dt;
        }
      }
    }
  }
  // sqrt(10) reduction per decade within generous limits
  double ratio = bias_off[0] / bias_off[1];
  EXPECT_GT(ratio, 2.0);
  EXPECT_LT(ratio, 5.0);
}

TEST(Transforms, TwoSidedBarrier) {
  EXPECT_EQ(two_sided_barrier_lt(3.0, 1.0, 1.0), 1.0);
  EXPECT_EQ(two_sided_barrier_lt(3.0, 1.0, -1.0), 1.0);
  EXPECT_NEAR(two_sided_barrier_lt(1e-14, 1.0, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(two_sided_barrier_lt(0.5, 1.0, 0.0), 1.0 / std::cosh(1.0), 1e-15);
  EXPECT_THROW(two_sided_barrier_lt(0.5, 1.0, 1.5), DomainError);
  double prev = 1.0;
  for (double l = 0.1; l < 10; l *= 1.5) {
    double v = two_sided_barrier_lt(l, 1.0, 0.0);
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_LE(two_sided_barrier_lt(0.7, 2.0, 0.0), two_sided_barrier_lt(0.7, 1.0, 0.0));
  EXPECT_TRUE(std::isfinite(two_sided_barrier_lt(1e6, 10.0, 0.0)));
}

TEST(Transforms, TwoSidedBarrierAgainstSimulation) {
  auto m = ProcessModel::brownian(1, 1e-4);
  RegionProbe p(outside_interval(1.0));
  auto v = mc(20000, [&](int k) {
    RngStream rng(8, k);
    return std::exp(-0.5 * simulate_until(m, Point{0.0}, p, 1e3, rng).hit_time);
  });
  EXPECT_NEAR(v.mean, 1.0 / std::cosh(1.0), 3 * v.se);
}

TEST(Transforms, BallExit) {
  EXPECT_NEAR(ball_exit_lt(0.5, 1e-9), 1.0, 1e-15);
  EXPECT_NEAR(ball_exit_lt(1e-14, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(ball_exit_lt(0.5, 1.0), 1.0 / std::sinh(1.0), 1e-15);
  auto m = ProcessModel::brownian(3, 1e-4);
  RegionProbe p(PolicyRegion::from_shape(Shape::literal(Literal::sphere(Point{0, 0, 0}, 1.0, true))));
  auto v = mc(20000, [&](int k) {
    RngStream rng(9, k);
    return std::exp(-0.5 * simulate_until(m, Point{0, 0, 0}, p, 1e3, rng).hit_time);
  });
  EXPECT_NEAR(v.mean, 1.0 / std::sinh(1.0), 3 * v.se);
}

TEST(Transforms, DiscountedExitFactor) {
  auto e = laplace_mixture_of(DiscountCurve::exponential(0.3));
  EXPECT_EQ(discounted_exit_factor(e, [](double u) { return two_sided_barrier_lt(u, 1.0, 0.2); }),
            two_sided_barrier_lt(0.3, 1.0, 0.2));
  auto h = laplace_mixture_of(DiscountCurve::hyperbolic(2.0));
  EXPECT_NEAR(discounted_exit_factor(h, [](double) { return 1.0; }), 1.0, 1e-12);

  auto hyp = laplace_mixture_of(DiscountCurve::hyperbolic(1.0));
  double q = discounted_exit_factor(hyp, [](double u) { return two_sided_barrier_lt(u, 1.0, 0.0); });
  auto m = ProcessModel::brownian(1, 1e-4);
  RegionProbe p(outside_interval(1.0));
  auto v = mc(20000, [&](int k) {
    RngStream rng(10, k);
    return 1.0 / (1.0 + simulate_until(m, Point{0.0}, p, 1e3, rng).hit_time);
  });
  EXPECT_NEAR(v.mean, q, 3 * v.se);
}

TEST(Hitting, EntryVersusHit) {
  auto m = ProcessModel::brownian(1, 1e-3);
  RegionProbe p(PolicyRegion::from_shape(Shape::halfspace(Point{1.0}, 0.5)));
  SimulationOptions opt;
  opt.record_path = true;
  opt.adaptive_steps = false;
  for (int k = 0; k < 50; ++k) {
    RngStream rng(12, k);
    auto r = simulate_until(m, Point{0.0}, p, 2.0, rng, opt);
    auto eh = first_entry_vs_hit(r.path, p, Point{0.0});
    EXPECT_LE(eh.entry_time, eh.hit_time);
    EXPECT_EQ(eh.entry_time, eh.hit_time);  // x0 outside R
  }
  // interior start: entry at 0, hit within the first step
  RngStream rng(13, 0);
  auto r = simulate_until(m, Point{1.0}, p, 1.0, rng, [] {
    SimulationOptions o;
    o.record_path = true;
    o.immediate_when_inside = false;
    o.adaptive_steps = false;
    return o;
  }());
  auto eh = first_entry_vs_hit(r.path, p, Point{1.0});
  EXPECT_EQ(eh.entry_time, 0.0);
  EXPECT_LE(eh.hit_time, 1e-3);
  // never entering
  RegionProbe far(PolicyRegion::from_shape(Shape::halfspace(Point{1.0}, 50.0)));
  RngStream rng2(14, 0);
  auto rf = simulate_until(m, Point{0.0}, far, 0.5, rng2, opt);
  auto ef = first_entry_vs_hit(rf.path, far, Point{0.0});
  EXPECT_TRUE(std::isinf(ef.entry_time));
  EXPECT_TRUE(std::isinf(ef.hit_time));
}

TEST(Hitting, BoundaryStartFirstStepFraction) {
  // x0 on the face of the open half-space {x > 0}: the fraction of paths
  // whose first step crosses tends to 1 as dt decreases
  RegionProbe p(PolicyRegion::from_shape(Shape::literal(Literal::plane(Point{1.0}, 0.0, true))));
  double prev = 0;
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    auto m = ProcessModel::brownian(1, dt);
    SimulationOptions opt;
    opt.adaptive_steps = false;
    int first = 0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
      RngStream rng(15, k);
      first += simulate_until(m, Point{0.0}, p, 1.0, rng, opt).hit_time <= dt;
    }
    double frac = static_cast<double>(first) / n;
    EXPECT_GE(frac, prev - 0.02);
    prev = frac;
  }
  EXPECT_GT(prev, 0.99);
}

TEST(Regularity, InteriorFarAndPointLikeCells) {
  auto m = ProcessModel::brownian(2, 1e-4);
  std::vector<double> hs{1e-2, 1e-3, 1e-4};
  auto R = PolicyRegion::from_shape(Shape::ball(Point{0, 0}, 0.5));
  for (double s : regularity_score(m, Point{0, 0}, R, hs, 500, 1)) EXPECT_EQ(s, 1.0);
  auto far = regularity_score(m, Point{1.5, 0}, R, std::vector<double>{1e-4}, 500, 1);
  EXPECT_EQ(far[0], 0.0);

  // a single grid cell around x: the score falls as the cell shrinks below
  // the sampling scale, the discrete shadow of points being polar in d = 2
  std::vector<double> scores;
  for (double half : {2e-1, 2e-2, 2e-3}) {
    Grid g(Point{-half, -half}, Point{half, half}, {3, 3});
    Mask mk = Mask::filled(g, false);
    mk.bits[4] = 1;
    scores.push_back(regularity_score(m, Point{0, 0}, PolicyRegion::from_mask(mk), std::vector<double>{1e-2}, 400, 2)[0]);
  }
  EXPECT_GT(scores[0], 0.9);
  EXPECT_LT(scores[2], 0.2);
  EXPECT_GE(scores[0], scores[1]);
  EXPECT_GE(scores[1], scores[2]);
}
