#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "stopgame/rng.hpp"

using namespace stopgame;

TEST(Philox, KnownAnswer) {
  // Random123 known-answer vectors for philox4x32-10
  auto z = detail::philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(z, (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  auto f = detail::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(f, (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(RngStream, Reproducible) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a(), b());
  RngStream c(42, 7), d(42, 7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(c.normal(), d.normal());
}

TEST(RngStream, DistinctStreamsDiffer) {
  RngStream a(42, 7), b(42, 8), c(43, 7);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    auto x = a(), y = b(), z = c();
    same_ab += x == y;
    same_ac += x == z;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(RngStream, UniformMomentsAndRange) {
  RngStream r(1, 2);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 2e-3);
}

TEST(RngStream, NormalMoments) {
  RngStream r(3, 4);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 5 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(RngStream, CrossStreamCorrelationSmall) {
  const int n = 50000;
  double sxy = 0;
  RngStream a(9, stream_id_for(1, 0, 0)), b(9, stream_id_for(1, 0, 1));
  for (int i = 0; i < n; ++i) sxy += a.normal() * b.normal();
  EXPECT_LT(std::fabs(sxy / n), 5 / std::sqrt(n));
}

TEST(StreamIds, DistinctOverStructuredIndices) {
  std::set<std::uint64_t> ids;
  for (std::uint64_t tag = 0; tag < 4; ++tag)
    for (std::uint64_t cell = 0; cell < 50; ++cell)
      for (std::uint64_t p = 0; p < 50; ++p) ids.insert(stream_id_for(tag, cell, p));
  EXPECT_EQ(ids.size(), 4u * 50 * 50);
}
