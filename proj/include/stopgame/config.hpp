#pragma once

// Scenario configuration: TOML loading with schema checks, and the region
// expression language used by [regions].

#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "toml.hpp"

#include "stopgame/discounting.hpp"
#include "stopgame/discrete_oracle.hpp"
#include "stopgame/dynamics.hpp"
#include "stopgame/errors.hpp"
#include "stopgame/io.hpp"
#include "stopgame/payoff.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/valuation.hpp"

namespace stopgame::config {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Region expressions
//
//   halfspace([a...], b)      a.x >= b
//   slab([c...], lo, hi)      lo <= c.x <= hi
//   ball([c...], r)           |x - c| <= r   (open_ball: strict)
//   union(e, ...), intersect(e, ...), complement(e)
//   mask("path.pgm")          P5 mask with a JSON sidecar, relative to the config
//   all, empty

class RegionParser {
 public:
  RegionParser(std::string text, const Grid* grid, fs::path base_dir)
      : s_(std::move(text)), grid_(grid), base_(std::move(base_dir)) {}

  PolicyRegion parse() {
    PolicyRegion r = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError({"region expression at offset " + std::to_string(pos_) + ": " + what + " in '" + s_ + "'"});
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string ident() {
    skip();
    const std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (b == pos_) fail("expected a region name");
    return s_.substr(b, pos_ - b);
  }
  double number() {
    skip();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }
  Point vec() {
    expect('[');
    std::vector<double> v;
    if (!peek(']')) {
      v.push_back(number());
      while (peek(',')) {
        ++pos_;
        v.push_back(number());
      }
    }
    expect(']');
    if (v.empty() || v.size() > static_cast<std::size_t>(kMaxDim)) fail("vector length must be 1.." + std::to_string(kMaxDim));
    Point p(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
    return p;
  }
  std::string quoted() {
    skip();
    if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("expected a quoted path");
    const char q = s_[pos_++];
    const std::size_t b = pos_;
    while (pos_ < s_.size() && s_[pos_] != q) ++pos_;
    if (pos_ >= s_.size()) fail("unterminated string");
    return s_.substr(b, pos_++ - b);
  }
  void comma() { expect(','); }

  PolicyRegion expr() {
    const std::string name = ident();
    const std::string label = name;
    try {
      if (name == "all" || name == "empty") {
        if (peek('(')) {
          ++pos_;
          expect(')');
        }
        return name == "all" ? PolicyRegion::full() : PolicyRegion::none();
      }
      expect('(');
      PolicyRegion out = PolicyRegion::none();
      if (name == "halfspace") {
        Point a = vec();
        comma();
        double b = number();
        out = PolicyRegion::from_shape(Shape::halfspace(a, b), "halfspace");
      } else if (name == "slab") {
        Point c = vec();
        comma();
        double lo = number();
        comma();
        double hi = number();
        out = PolicyRegion::from_shape(Shape::slab(c, lo, hi), "slab");
      } else if (name == "ball" || name == "open_ball") {
        Point c = vec();
        comma();
        double r = number();
        out = PolicyRegion::from_shape(name == "ball" ? Shape::ball(c, r) : Shape::open_ball(c, r), name);
      } else if (name == "union" || name == "intersect") {
        out = expr();
        while (peek(',')) {
          ++pos_;
          PolicyRegion next = expr();
          out = name == "union" ? region_union(out, next) : region_intersection(out, next);
        }
      } else if (name == "complement") {
        out = region_complement(expr());
      } else if (name == "mask") {
        fs::path p = quoted();
        if (p.is_relative()) p = base_ / p;
        Mask m = io::read_mask_pgm(p);
        if (grid_ && !(m.grid == *grid_)) fail("mask grid in " + p.string() + " does not match [grid]");
        out = PolicyRegion::from_mask(std::move(m), "mask(" + p.filename().string() + ")");
      } else {
        fail("unknown region '" + name + "'");
      }
      expect(')');
      return out;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(label + ": " + e.what());
    }
  }

  std::string s_;
  const Grid* grid_;
  fs::path base_;
  std::size_t pos_ = 0;
};

inline PolicyRegion parse_region(const std::string& text, const Grid* grid = nullptr,
                                 const fs::path& base_dir = ".") {
  return RegionParser(text, grid, base_dir).parse();
}

// ---------------------------------------------------------------------------
// Schema

struct ProcessConfig {
  std::string kind = "brownian";
  int dim = 2;
  double dt = 1e-4;
  double horizon = 0;
  double theta = 1, mean = 0, sigma = 1;
  std::vector<double> mu;
};

struct DiscountConfig {
  std::string kind = "hyperbolic";
  double beta = 1, alpha = 1;
  std::string table_path;
};

struct PayoffConfig {
  std::string kind;
  double a = 1, value = 1, strike = 1, k0 = 1, k1 = 0;
  std::string table_path;
};

struct RegionsConfig {
  std::optional<std::string> region, other;
  std::vector<std::string> family;
  int max_iters = 20;
  double eps = 0;
};

struct ButterflyConfig {
  int b_count = 10;
  std::vector<double> b_values;
};

struct BaselineConfig {
  double dx = 1e-3;
};

struct MeanValueConfig {
  std::vector<double> radii = {0.25, 0.5};
  double level = 1;
};

struct ChainConfig {
  std::string preset = "biased_walk";
  int n = 7;
  double p = 0.5, h = 1;
  bool absorbing = true;
  std::string matrix_path;
  std::vector<double> payoff;
  std::optional<double> exponential_alpha;
  double tail_tol = 1e-14;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string kind = "generic";  // generic | butterfly | exponential_baseline | mean_value | discrete
  ProcessConfig process;
  DiscountConfig discount;
  PayoffConfig payoff;
  std::optional<Grid> grid;
  RegionsConfig regions;
  ValuationBudget budget;
  ButterflyConfig butterfly;
  BaselineConfig baseline;
  MeanValueConfig mean_value;
  ChainConfig chain;

  fs::path source_path;
  std::string source_text;
  nlohmann::json resolved;

  fs::path base_dir() const { return source_path.has_parent_path() ? source_path.parent_path() : fs::path("."); }
};

namespace detail {

class Reader {
 public:
  std::vector<std::string> issues;

  static std::string where(const toml::source_region& s) {
    return " (line " + std::to_string(s.begin.line) + ", column " + std::to_string(s.begin.column) + ")";
  }
  void issue(const std::string& path, const std::string& what, const toml::node* n = nullptr) {
    issues.push_back(path + ": " + what + (n ? where(n->source()) : ""));
  }

  const toml::table* section(const toml::table& root, const std::string& name, bool required) {
    const toml::node* n = root.get(name);
    if (!n) {
      if (required) issues.push_back("[" + name + "]: missing section");
      return nullptr;
    }
    if (!n->is_table()) {
      issue("[" + name + "]", "must be a table", n);
      return nullptr;
    }
    return n->as_table();
  }

  void allow(const toml::table* t, const std::string& sect, const std::set<std::string>& keys) {
    if (!t) return;
    for (auto&& [k, v] : *t)
      if (!keys.count(std::string(k.str()))) issue("[" + sect + "]." + std::string(k.str()), "unknown key", &v);
  }

  template <class T>
  void get(const toml::table* t, const std::string& sect, const std::string& key, T& out, bool required = false) {
    const std::string path = "[" + sect + "]." + key;
    const toml::node* n = t ? t->get(key) : nullptr;
    if (!n) {
      if (required) issues.push_back(path + ": missing key");
      return;
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!n->is_number()) return issue(path, "must be a number", n);
      out = n->value<double>().value();
    } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
      if (!n->is_integer()) return issue(path, "must be an integer", n);
      const auto v = n->value<std::int64_t>().value();
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (v < 0) return issue(path, "must be >= 0", n);
      }
      out = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) return issue(path, "must be a boolean", n);
      out = n->value<bool>().value();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string()) return issue(path, "must be a string", n);
      out = n->value<std::string>().value();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      const toml::array* a = n->as_array();
      if (!a) return issue(path, "must be an array of numbers", n);
      out.clear();
      for (const auto& el : *a) {
        if (!el.is_number()) return issue(path, "must be an array of numbers", &el);
        out.push_back(el.value<double>().value());
      }
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      const toml::array* a = n->as_array();
      if (!a) return issue(path, "must be an array of integers", n);
      out.clear();
      for (const auto& el : *a) {
        if (!el.is_integer()) return issue(path, "must be an array of integers", &el);
        out.push_back(static_cast<int>(el.value<std::int64_t>().value()));
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      const toml::array* a = n->as_array();
      if (!a) return issue(path, "must be an array of strings", n);
      out.clear();
      for (const auto& el : *a) {
        if (!el.is_string()) return issue(path, "must be an array of strings", &el);
        out.push_back(el.value<std::string>().value());
      }
    }
  }

  void check(bool ok, const toml::table* t, const std::string& sect, const std::string& key, const std::string& what) {
    if (ok) return;
    const toml::node* n = t ? t->get(key) : nullptr;
    issue("[" + sect + "]." + key, what, n);
  }
};

inline Point to_point(const std::vector<double>& v) {
  Point p(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
  return p;
}

}  // namespace detail

/// Parses and validates; throws ConfigError listing every problem found.
inline ScenarioConfig load_config_text(const std::string& text, const fs::path& source = "config.toml") {
  toml::table root;
  try {
    root = toml::parse(text, source.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError({source.string() + ": parse error: " + std::string(e.description()) +
                       detail::Reader::where(e.source())});
  }
  ScenarioConfig c;
  c.source_path = source;
  c.source_text = text;
  detail::Reader rd;
  const std::set<std::string> sections = {"scenario", "process", "discount", "payoff", "grid", "regions",
                                          "budget", "butterfly", "baseline", "mean_value", "chain"};
  for (auto&& [k, v] : root)
    if (!sections.count(std::string(k.str()))) rd.issue("[" + std::string(k.str()) + "]", "unknown section", &v);

  // [scenario]
  const toml::table* sc = rd.section(root, "scenario", false);
  rd.allow(sc, "scenario", {"name", "kind"});
  rd.get(sc, "scenario", "name", c.name);
  rd.get(sc, "scenario", "kind", c.kind);
  const std::set<std::string> kinds = {"generic", "butterfly", "exponential_baseline", "mean_value", "discrete"};
  rd.check(kinds.count(c.kind) > 0, sc, "scenario", "kind",
           "must be one of generic, butterfly, exponential_baseline, mean_value, discrete");
  rd.check(!c.name.empty() && c.name.find('/') == std::string::npos && c.name != "." && c.name != "..", sc,
           "scenario", "name", "must be a nonempty name without '/'");
  const bool discrete = c.kind == "discrete";

  // [discount]
  const toml::table* dc = rd.section(root, "discount", true);
  rd.allow(dc, "discount", {"kind", "beta", "alpha", "table_path"});
  rd.get(dc, "discount", "kind", c.discount.kind, true);
  if (c.discount.kind == "hyperbolic") {
    rd.get(dc, "discount", "beta", c.discount.beta, true);
    rd.check(c.discount.beta > 0, dc, "discount", "beta", "must be > 0");
  } else if (c.discount.kind == "exponential") {
    rd.get(dc, "discount", "alpha", c.discount.alpha, true);
    rd.check(c.discount.alpha > 0, dc, "discount", "alpha", "must be > 0");
  } else if (c.discount.kind == "tabulated") {
    rd.get(dc, "discount", "table_path", c.discount.table_path, true);
  } else if (dc && dc->get("kind")) {
    rd.check(false, dc, "discount", "kind", "must be hyperbolic, exponential or tabulated");
  }

  // [budget]
  const toml::table* bc = rd.section(root, "budget", false);
  rd.allow(bc, "budget", {"n_paths", "seed", "t_tail", "threads"});
  rd.get(bc, "budget", "n_paths", c.budget.n_paths);
  rd.get(bc, "budget", "seed", c.budget.seed);
  rd.get(bc, "budget", "t_tail", c.budget.t_tail);
  rd.get(bc, "budget", "threads", c.budget.threads);
  rd.check(c.budget.n_paths >= 2, bc, "budget", "n_paths", "must be >= 2");
  rd.check(c.budget.t_tail >= 0, bc, "budget", "t_tail", "must be >= 0 (0 selects the automatic horizon)");
  rd.check(c.budget.threads >= 0, bc, "budget", "threads", "must be >= 0 (0 = all cores)");

  if (discrete) {
    const toml::table* ch = rd.section(root, "chain", true);
    rd.allow(ch, "chain", {"preset", "n", "p", "h", "absorbing", "matrix_path", "payoff", "exponential_alpha",
                           "tail_tol"});
    auto& k = c.chain;
    rd.get(ch, "chain", "preset", k.preset);
    rd.get(ch, "chain", "n", k.n);
    rd.get(ch, "chain", "p", k.p);
    rd.get(ch, "chain", "h", k.h);
    rd.get(ch, "chain", "absorbing", k.absorbing);
    rd.get(ch, "chain", "matrix_path", k.matrix_path);
    rd.get(ch, "chain", "payoff", k.payoff, true);
    rd.get(ch, "chain", "tail_tol", k.tail_tol);
    if (ch && ch->get("exponential_alpha")) {
      double a = 0;
      rd.get(ch, "chain", "exponential_alpha", a);
      rd.check(a > 0, ch, "chain", "exponential_alpha", "must be > 0");
      k.exponential_alpha = a;
    }
    rd.check(k.preset == "biased_walk" || k.preset == "symmetric_walk" || k.preset == "csv", ch, "chain", "preset",
             "must be biased_walk, symmetric_walk or csv");
    rd.check(k.preset != "csv" || !k.matrix_path.empty(), ch, "chain", "matrix_path", "required for preset csv");
    rd.check(k.preset == "csv" || (k.n >= 1 && k.n <= kMaxChainStates), ch, "chain", "n",
             "must be in 1.." + std::to_string(kMaxChainStates));
    rd.check(k.p >= 0 && k.p <= 1, ch, "chain", "p", "must be in [0, 1]");
    rd.check(k.h > 0, ch, "chain", "h", "must be > 0");
    rd.check(k.tail_tol > 0, ch, "chain", "tail_tol", "must be > 0");
    for (double v : k.payoff)
      if (!(v >= 0)) {
        rd.check(false, ch, "chain", "payoff", "entries must be >= 0");
        break;
      }
  } else {
    // [process]
    const toml::table* pc = rd.section(root, "process", true);
    rd.allow(pc, "process", {"kind", "dim", "dt", "horizon", "theta", "mean", "sigma", "mu"});
    auto& p = c.process;
    rd.get(pc, "process", "kind", p.kind, true);
    rd.get(pc, "process", "dim", p.dim, true);
    rd.get(pc, "process", "dt", p.dt, true);
    rd.get(pc, "process", "horizon", p.horizon);
    rd.get(pc, "process", "theta", p.theta);
    rd.get(pc, "process", "mean", p.mean);
    rd.get(pc, "process", "sigma", p.sigma);
    rd.get(pc, "process", "mu", p.mu);
    rd.check(p.kind == "brownian" || p.kind == "ornstein_uhlenbeck" || p.kind == "drifted", pc, "process", "kind",
             "must be brownian, ornstein_uhlenbeck or drifted");
    rd.check(p.dim >= 1 && p.dim <= kMaxDim, pc, "process", "dim", "must be in 1.." + std::to_string(kMaxDim));
    rd.check(p.dt > 0, pc, "process", "dt", "must be > 0");
    rd.check(p.horizon >= 0, pc, "process", "horizon", "must be >= 0");
    rd.check(p.sigma > 0, pc, "process", "sigma", "must be > 0");
    rd.check(p.theta > 0, pc, "process", "theta", "must be > 0");
    if (p.kind == "drifted")
      rd.check(static_cast<int>(p.mu.size()) == p.dim, pc, "process", "mu", "required with length dim");

    // [payoff]
    const toml::table* fc = rd.section(root, "payoff", true);
    rd.allow(fc, "payoff", {"kind", "a", "value", "strike", "k0", "k1", "table_path"});
    auto& f = c.payoff;
    rd.get(fc, "payoff", "kind", f.kind, true);
    if (f.kind == "butterfly_min") {
      rd.get(fc, "payoff", "a", f.a, true);
      rd.check(f.a > 0, fc, "payoff", "a", "must be > 0");
      rd.check(p.dim == 2, fc, "payoff", "kind", "butterfly_min needs [process].dim = 2");
    } else if (f.kind == "constant") {
      rd.get(fc, "payoff", "value", f.value, true);
      rd.check(f.value >= 0, fc, "payoff", "value", "must be >= 0");
    } else if (f.kind == "put") {
      rd.get(fc, "payoff", "strike", f.strike, true);
      rd.check(f.strike > 0, fc, "payoff", "strike", "must be > 0");
    } else if (f.kind == "cosine_bump") {
      rd.get(fc, "payoff", "k0", f.k0, true);
      rd.get(fc, "payoff", "k1", f.k1, true);
      rd.check(f.k0 >= std::fabs(f.k1), fc, "payoff", "k0", "must be >= |k1|");
    } else if (f.kind == "tabulated") {
      rd.get(fc, "payoff", "table_path", f.table_path, true);
    } else if (fc && fc->get("kind")) {
      rd.check(false, fc, "payoff", "kind", "must be butterfly_min, constant, put, cosine_bump or tabulated");
    }

    // [grid]
    const toml::table* gc = rd.section(root, "grid", c.kind != "mean_value");
    rd.allow(gc, "grid", {"lower", "upper", "counts"});
    if (gc) {
      std::vector<double> lo, hi;
      std::vector<int> counts;
      rd.get(gc, "grid", "lower", lo, true);
      rd.get(gc, "grid", "upper", hi, true);
      rd.get(gc, "grid", "counts", counts, true);
      const bool dims = static_cast<int>(lo.size()) == p.dim && static_cast<int>(hi.size()) == p.dim &&
                        static_cast<int>(counts.size()) == p.dim;
      rd.check(dims, gc, "grid", "lower", "lower, upper and counts must all have length [process].dim");
      if (dims) {
        try {
          c.grid = Grid(detail::to_point(lo), detail::to_point(hi), counts);
        } catch (const Error& e) {
          rd.check(false, gc, "grid", "counts", e.what());
        }
      }
    }

    // [regions]
    const toml::table* rc = rd.section(root, "regions", false);
    rd.allow(rc, "regions", {"region", "other", "family", "max_iters", "eps"});
    if (rc && rc->get("region")) {
      std::string s;
      rd.get(rc, "regions", "region", s);
      c.regions.region = s;
    }
    if (rc && rc->get("other")) {
      std::string s;
      rd.get(rc, "regions", "other", s);
      c.regions.other = s;
    }
    rd.get(rc, "regions", "family", c.regions.family);
    rd.get(rc, "regions", "max_iters", c.regions.max_iters);
    rd.get(rc, "regions", "eps", c.regions.eps);
    rd.check(c.regions.max_iters >= 1, rc, "regions", "max_iters", "must be >= 1");
    rd.check(c.regions.eps >= 0, rc, "regions", "eps", "must be >= 0 (0 selects the default rule)");

    if (c.kind == "butterfly") {
      const toml::table* bf = rd.section(root, "butterfly", false);
      rd.allow(bf, "butterfly", {"b_count", "b_values"});
      rd.get(bf, "butterfly", "b_count", c.butterfly.b_count);
      rd.get(bf, "butterfly", "b_values", c.butterfly.b_values);
      rd.check(c.butterfly.b_count >= 1, bf, "butterfly", "b_count", "must be >= 1");
      for (double b : c.butterfly.b_values)
        if (!(b >= 0)) {
          rd.check(false, bf, "butterfly", "b_values", "entries must be >= 0");
          break;
        }
      rd.check(f.kind == "butterfly_min", fc, "payoff", "kind", "butterfly scenario needs butterfly_min");
      rd.check(c.discount.kind == "hyperbolic", dc, "discount", "kind", "butterfly scenario needs hyperbolic");
      rd.check(p.kind == "brownian" && p.dim == 2, pc, "process", "kind", "butterfly scenario needs 2-D brownian");
    } else if (c.kind == "exponential_baseline") {
      const toml::table* bl = rd.section(root, "baseline", false);
      rd.allow(bl, "baseline", {"dx"});
      rd.get(bl, "baseline", "dx", c.baseline.dx);
      rd.check(c.baseline.dx > 0, bl, "baseline", "dx", "must be > 0");
      rd.check(f.kind == "put", fc, "payoff", "kind", "exponential baseline needs put");
      rd.check(c.discount.kind == "exponential", dc, "discount", "kind", "exponential baseline needs exponential");
      rd.check(p.kind == "brownian" && p.dim == 1, pc, "process", "kind", "exponential baseline needs 1-D brownian");
    } else if (c.kind == "mean_value") {
      const toml::table* mv = rd.section(root, "mean_value", false);
      rd.allow(mv, "mean_value", {"radii", "level"});
      rd.get(mv, "mean_value", "radii", c.mean_value.radii);
      rd.get(mv, "mean_value", "level", c.mean_value.level);
      for (double r : c.mean_value.radii)
        if (!(r > 0 && r <= c.mean_value.level)) {
          rd.check(false, mv, "mean_value", "radii", "entries must be in (0, level]");
          break;
        }
      rd.check(f.kind == "cosine_bump", fc, "payoff", "kind", "mean-value scenario needs cosine_bump");
      rd.check(c.discount.kind == "hyperbolic", dc, "discount", "kind", "mean-value scenario needs hyperbolic");
      rd.check(p.kind == "brownian" && p.dim == 3, pc, "process", "kind", "mean-value scenario needs 3-D brownian");
    }
  }
  for (const char* s : {"butterfly", "baseline", "mean_value"})
    if (root.get(s) && !(c.kind == s || (c.kind == "exponential_baseline" && std::string(s) == "baseline")))
      rd.issue(std::string("[") + s + "]", "section not used by scenario kind '" + c.kind + "'", root.get(s));
  if (!discrete && root.get("chain")) rd.issue("[chain]", "section only valid with kind = \"discrete\"", root.get("chain"));

  if (!rd.issues.empty()) throw ConfigError(rd.issues);
  if (c.budget.t_tail == 0 && c.process.horizon > 0) c.budget.t_tail = c.process.horizon;

  // resolved form, for manifests
  nlohmann::json j = nlohmann::json::parse(
      [&] {
        std::ostringstream os;
        os << toml::json_formatter{root};
        return os.str();
      }());
  j["budget"]["n_paths"] = c.budget.n_paths;
  j["budget"]["seed"] = c.budget.seed;
  j["budget"]["t_tail"] = c.budget.t_tail;
  j["budget"]["threads"] = c.budget.threads;
  j["scenario"]["name"] = c.name;
  j["scenario"]["kind"] = c.kind;
  c.resolved = std::move(j);
  return c;
}

inline ScenarioConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError({e.what()});
  }
  return load_config_text(text, path);
}

// ---------------------------------------------------------------------------
// Object construction

inline DiscountCurve make_discount(const ScenarioConfig& c) {
  const auto& d = c.discount;
  if (d.kind == "hyperbolic") return DiscountCurve::hyperbolic(d.beta);
  if (d.kind == "exponential") return DiscountCurve::exponential(d.alpha);
  // two numeric columns t, delta(t); '#' comments and a non-numeric header are skipped
  fs::path p = d.table_path;
  if (p.is_relative()) p = c.base_dir() / p;
  std::string text;
  try {
    text = io::read_file(p);
  } catch (const Error& e) {
    throw ConfigError({"[discount].table_path: " + std::string(e.what())});
  }
  std::vector<double> ts, vs;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    double t, v;
    if (ls >> t >> v) {
      ts.push_back(t);
      vs.push_back(v);
    }
  }
  try {
    return DiscountCurve::tabulated(ts, vs);
  } catch (const Error& e) {
    throw ConfigError({"[discount].table_path: " + std::string(e.what())});
  }
}

inline ProcessModel make_process(const ScenarioConfig& c) {
  const auto& p = c.process;
  if (p.kind == "brownian") return ProcessModel::brownian(p.dim, p.dt);
  if (p.kind == "drifted") return ProcessModel::drifted(detail::to_point(p.mu), p.dt, p.sigma);
  return ProcessModel::ornstein_uhlenbeck(p.dim, p.dt, p.theta, p.mean, p.sigma);
}

inline PayoffField make_payoff(const ScenarioConfig& c) {
  const auto& f = c.payoff;
  if (f.kind == "butterfly_min") return PayoffField::butterfly_min(f.a);
  if (f.kind == "constant") return PayoffField::constant(f.value);
  if (f.kind == "put") return PayoffField::put(f.strike, c.grid ? c.grid->lower()[0] : -1.0);
  if (f.kind == "cosine_bump") return PayoffField::cosine_bump(f.k0, f.k1);
  // tabulated: value column of a CSV on the config's grid, cells in axis-0-fastest order
  if (!c.grid) throw ConfigError({"[payoff].table_path: needs [grid]"});
  fs::path p = f.table_path;
  if (p.is_relative()) p = c.base_dir() / p;
  std::vector<double> values;
  std::istringstream is(io::read_file(p));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v;
    if (ls >> v) values.push_back(v);
  }
  try {
    return PayoffField::tabulated(*c.grid, values);
  } catch (const Error& e) {
    throw ConfigError({"[payoff].table_path: " + std::string(e.what())});
  }
}

inline PolicyRegion region_from(const ScenarioConfig& c, const std::string& key, const std::string& text) {
  try {
    PolicyRegion r = parse_region(text, c.grid ? &*c.grid : nullptr, c.base_dir());
    if (r.analytic() && c.grid) {
      const int d = r.analytic()->dim();
      if (d != 0 && d != c.grid->dim()) throw ConfigError({"dimension " + std::to_string(d) + " differs from [grid]"});
    }
    return r;
  } catch (const ConfigError& e) {
    throw ConfigError({"[regions]." + key + ": " + e.what()});
  }
}

inline FiniteChain make_chain(const ScenarioConfig& c) {
  const auto& k = c.chain;
  try {
    if (k.preset == "biased_walk") return FiniteChain::biased_walk(k.n, k.p, k.h, k.absorbing);
    if (k.preset == "symmetric_walk") return FiniteChain::symmetric_walk(k.n, k.h, k.absorbing);
    fs::path p = k.matrix_path;
    if (p.is_relative()) p = c.base_dir() / p;
    return FiniteChain::from_csv(p.string(), k.h);
  } catch (const Error& e) {
    throw ConfigError({"[chain]: " + std::string(e.what())});
  }
}

}  // namespace stopgame::config
