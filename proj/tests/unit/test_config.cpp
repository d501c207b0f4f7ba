#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "stopgame/config.hpp"

using namespace stopgame;
using namespace stopgame::config;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(
[scenario]
name = "bf"
kind = "butterfly"

[process]
kind = "brownian"
dim = 2
dt = 1e-3

[discount]
kind = "hyperbolic"
beta = 1.0

[payoff]
kind = "butterfly_min"
a = 1.0

[grid]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
counts = [4, 4]
)";

std::string with(const std::string& base, const std::string& from, const std::string& to) {
  std::string s = base;
  const auto p = s.find(from);
  EXPECT_NE(p, std::string::npos) << from;
  return s.replace(p, from.size(), to);
}

std::string first_issue(const std::string& text) {
  try {
    load_config_text(text, "t.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path temp_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("stopgame_config_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(LoadConfig, MinimalButterflyLoads) {
  const auto c = load_config_text(kMinimal);
  EXPECT_EQ(c.name, "bf");
  EXPECT_EQ(c.kind, "butterfly");
  ASSERT_TRUE(c.grid.has_value());
  EXPECT_EQ(c.grid->size(), 16u);
  EXPECT_EQ(c.budget.n_paths, 1024);
  EXPECT_EQ(c.butterfly.b_count, 10);
  EXPECT_EQ(c.resolved["discount"]["beta"], 1.0);
  EXPECT_EQ(c.resolved["budget"]["n_paths"], 1024);
}

TEST(LoadConfig, NegativeBetaNamesKeyPath) {
  const std::string e = first_issue(with(kMinimal, "beta = 1.0", "beta = -1.0"));
  EXPECT_NE(e.find("[discount].beta"), std::string::npos) << e;
  EXPECT_NE(e.find("line"), std::string::npos) << e;
}

TEST(LoadConfig, UnknownKeyRejected) {
  const std::string e = first_issue(with(kMinimal, "beta = 1.0", "beta = 1.0\ngamma = 2"));
  EXPECT_NE(e.find("[discount].gamma"), std::string::npos) << e;
  EXPECT_NE(e.find("unknown key"), std::string::npos) << e;
}

TEST(LoadConfig, UnknownSectionAndMissingSection) {
  EXPECT_NE(first_issue(std::string(kMinimal) + "\n[extra]\nx = 1\n").find("[extra]"), std::string::npos);
  EXPECT_NE(first_issue(with(kMinimal, "[payoff]\nkind = \"butterfly_min\"\na = 1.0", "")).find("[payoff]"),
            std::string::npos);
}

TEST(LoadConfig, ParseErrorCarriesLineAndColumn) {
  const std::string e = first_issue("[scenario]\nname = \n");
  EXPECT_NE(e.find("parse error"), std::string::npos) << e;
  EXPECT_NE(e.find("line 2"), std::string::npos) << e;
  EXPECT_NE(e.find("column"), std::string::npos) << e;
}

TEST(LoadConfig, CollectsEveryIssue) {
  std::string t = with(kMinimal, "dt = 1e-3", "dt = -1");
  t = with(t, "a = 1.0", "a = 0");
  try {
    load_config_text(t);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.issues().size(), 2u);
  }
}

TEST(LoadConfig, TypeErrors) {
  EXPECT_NE(first_issue(with(kMinimal, "dim = 2", "dim = \"two\"")).find("[process].dim: must be an integer"),
            std::string::npos);
  EXPECT_NE(first_issue(with(kMinimal, "counts = [4, 4]", "counts = [4]")).find("[grid]"), std::string::npos);
}

TEST(LoadConfig, ScenarioKindConstraints) {
  EXPECT_NE(first_issue(with(kMinimal, "kind = \"hyperbolic\"\nbeta = 1.0", "kind = \"exponential\"\nalpha = 1.0"))
                .find("butterfly scenario needs hyperbolic"),
            std::string::npos);
  EXPECT_NE(first_issue(std::string(kMinimal) + "\n[mean_value]\nlevel = 1.0\n").find("not used"), std::string::npos);
}

TEST(LoadConfig, HorizonFeedsTruncation) {
  const auto c = load_config_text(with(kMinimal, "dt = 1e-3", "dt = 1e-3\nhorizon = 50.0"));
  EXPECT_DOUBLE_EQ(c.budget.t_tail, 50.0);
}

TEST(LoadConfig, DiscreteChainSection) {
  const char* t = R"(
[scenario]
name = "chain"
kind = "discrete"
[discount]
kind = "exponential"
alpha = 0.5
[chain]
preset = "symmetric_walk"
n = 5
payoff = [0, 1, 2, 1, 0]
)";
  const auto c = load_config_text(t);
  EXPECT_EQ(make_chain(c).n(), 5);
  EXPECT_NE(first_issue(with(t, "n = 5", "n = 40")).find("[chain].n"), std::string::npos);
}

TEST(LoadConfig, ObjectsFromConfig) {
  const auto c = load_config_text(kMinimal);
  EXPECT_EQ(make_process(c).dim(), 2);
  EXPECT_DOUBLE_EQ(make_discount(c)(1.0), 0.5);
  EXPECT_DOUBLE_EQ(make_payoff(c)(Point{0.7, 0.0}), 0.7);
}

TEST(LoadConfig, TabulatedDiscountFromFile) {
  const fs::path d = temp_dir("table");
  io::write_file(d / "delta.csv", "t,delta\n0,1\n1,0.5\n2,0.3\n");
  const std::string t = with(kMinimal, "kind = \"hyperbolic\"\nbeta = 1.0", "kind = \"tabulated\"\ntable_path = \"delta.csv\"");
  io::write_file(d / "c.toml", with(t, "kind = \"butterfly\"", "kind = \"generic\""));
  const auto c = load_config(d / "c.toml");
  EXPECT_NEAR(make_discount(c)(1.5), std::sqrt(0.5 * 0.3), 1e-15);
}

TEST(RegionDsl, Primitives) {
  EXPECT_TRUE(parse_region("halfspace([1, 0], 0.5)").contains(Point{0.6, 0}));
  EXPECT_FALSE(parse_region("halfspace([1, 0], 0.5)").contains(Point{0.4, 0}));
  EXPECT_TRUE(parse_region("slab([0, 1], -1, 1)").contains(Point{5, 0.5}));
  EXPECT_FALSE(parse_region("slab([0, 1], -1, 1)").contains(Point{0, 1.5}));
  EXPECT_TRUE(parse_region("ball([0, 0], 1)").contains(Point{1, 0}));
  EXPECT_FALSE(parse_region("open_ball([0, 0], 1)").contains(Point{1, 0}));
  EXPECT_TRUE(parse_region("all").contains(Point{3, 3}));
  EXPECT_FALSE(parse_region("empty()").contains(Point{3, 3}));
}

TEST(RegionDsl, Combinators) {
  const auto u = parse_region("union(halfspace([1,-1], 0.5), halfspace([-1,1], 0.5))");
  EXPECT_TRUE(u.contains(Point{0.5, -0.5}));
  EXPECT_FALSE(u.contains(Point{0.1, 0.1}));
  const auto c = parse_region("complement(ball([0,0], 1))");
  EXPECT_TRUE(c.contains(Point{2, 0}));
  EXPECT_FALSE(c.contains(Point{0, 0}));
  const auto i = parse_region("intersect(ball([0,0], 1), halfspace([1,0], 0), halfspace([0,1], 0))");
  EXPECT_TRUE(i.contains(Point{0.5, 0.5}));
  EXPECT_FALSE(i.contains(Point{-0.5, 0.5}));
}

TEST(RegionDsl, Errors) {
  EXPECT_THROW(parse_region("wedge([1,0], 1)"), ConfigError);
  EXPECT_THROW(parse_region("halfspace([1,0], 1) extra"), ConfigError);
  EXPECT_THROW(parse_region("halfspace([1,0] 1)"), ConfigError);
  EXPECT_THROW(parse_region("ball([0,0], -1)"), ConfigError);
  EXPECT_THROW(parse_region("union(halfspace([1,0], 1)"), ConfigError);
}

TEST(RegionDsl, MaskRoundTrip) {
  const fs::path d = temp_dir("mask");
  const Grid g(Point{-1, -1}, Point{1, 1}, {6, 4});
  const Mask m = Mask::sample(g, Shape::ball(Point{0.3, 0}, 0.6));
  io::write_mask_pgm(d / "m.pgm", m);
  const auto r = parse_region("mask(\"m.pgm\")", &g, d);
  ASSERT_TRUE(r.mask().has_value());
  EXPECT_EQ(*r.mask(), m);
  const auto u = parse_region("union(mask('m.pgm'), halfspace([1, 0], 0.9))", &g, d);
  EXPECT_GE(u.mask_on(g).count(), m.count());
  const Grid other(Point{-1, -1}, Point{1, 1}, {4, 4});
  EXPECT_THROW(parse_region("mask(\"m.pgm\")", &other, d), ConfigError);
  EXPECT_THROW(parse_region("mask(\"missing.pgm\")", &g, d), ConfigError);
}
