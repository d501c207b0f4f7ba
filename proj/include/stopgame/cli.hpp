#pragma once

// Command-line orchestration: subcommands over a loaded scenario, output
// bundles and run manifests. Exit codes: 0 ok, 1 configuration or usage
// error, 2 verification failure, 3 numerical error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "stopgame/config.hpp"
#include "stopgame/discrete_oracle.hpp"
#include "stopgame/equilibrium.hpp"
#include "stopgame/io.hpp"
#include "stopgame/scenarios.hpp"

namespace stopgame::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitVerification = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr const char* kManifestSchema = "stopgame.manifest/1";
inline constexpr const char* kOutEnv = "STOPGAME_OUT";

struct Options {
  std::string subcommand;
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<fs::path> out;
  bool quiet = false;
};

struct Outcome {
  int exit_code = kExitOk;
  fs::path bundle;
  json manifest;
};

inline fs::path resolve_out_root(const Options& o) {
  if (o.out) return *o.out;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "out";
}

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// `git describe --always --dirty` of the repository holding the config, or
/// "unversioned".
inline std::string git_describe(const fs::path& config) {
  std::error_code ec;
  fs::path dir = fs::absolute(config, ec).parent_path();
  const std::string cmd = "git -C '" + dir.string() + "' describe --always --dirty 2>/dev/null";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
  if (!pipe) return "unversioned";
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe.get())) out += buf;
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unversioned" : out;
}

inline char label_char(Label l) {
  switch (l) {
    case Label::S: return 'S';
    case Label::I: return 'I';
    case Label::C: return 'C';
    case Label::Ambiguous: return '?';
  }
  return '?';
}

/// x..., J, std_err, trunc_bound, f, label
inline std::string classification_csv(const Classification& c) {
  std::ostringstream os;
  const int d = c.grid.dim();
  for (int i = 0; i < d; ++i) os << 'x' << (i + 1) << ',';
  os << "value,std_err,trunc_bound,payoff,label\n";
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    const Point x = c.grid.center(k);
    for (int i = 0; i < d; ++i) os << io::format_double(x[i]) << ',';
    os << io::format_double(c.value_field.values[k]) << ',' << io::format_double(c.value_field.std_errs[k]) << ','
       << io::format_double(c.value_field.trunc_bounds.empty() ? 0.0 : c.value_field.trunc_bounds[k]) << ','
       << io::format_double(c.payoff[k]) << ',' << label_char(c.labels[k]) << '\n';
  }
  return os.str();
}

/// Label image: S 255, I 170, Ambiguous 85, C 0.
inline std::vector<double> label_levels(const Classification& c) {
  std::vector<double> v(c.labels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (c.labels[i]) {
      case Label::S: v[i] = 255; break;
      case Label::I: v[i] = 170; break;
      case Label::Ambiguous: v[i] = 85; break;
      case Label::C: v[i] = 0; break;
    }
  }
  return v;
}

inline json report_json(const EquilibriumReport& r) {
  json j;
  j["region"] = r.region.provenance();
  j["key"] = r.region.key();
  j["is_equilibrium"] = r.is_equilibrium;
  j["violations"] = r.violations.size();
  j["collar_excluded"] = r.collar_excluded;
  j["collar_violations"] = r.collar_violations;
  j["ambiguous"] = r.ambiguous;
  j["eps"] = r.eps;
  json v = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(r.violations.size(), 50); ++i) {
    const auto& x = r.violations[i];
    v.push_back({{"cell", x.cell}, {"side", label_name(x.side)}, {"margin", x.margin}, {"std_err", x.std_err}});
  }
  j["first_violations"] = v;
  return j;
}

inline json dominance_json(const DominanceCheck& d) {
  return {{"holds", d.holds()},
          {"cells_checked", d.cells_checked},
          {"collar_excluded", d.collar_excluded},
          {"violations", d.violations.size()}};
}

inline json structural_json(const StructuralReport& r) {
  json j = to_json(r);
  j["all_pass"] = r.all_pass();
  return j;
}

class Runner {
 public:
  Runner(config::ScenarioConfig cfg, Options opt) : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    if (opt_.seed) cfg_.budget.seed = *opt_.seed;
    if (opt_.threads) cfg_.budget.threads = *opt_.threads;
  }

  Outcome run() {
    Outcome out;
    io::Bundle bundle(resolve_out_root(opt_), cfg_.name);
    json results;
    int code = kExitOk;
    std::string status = "ok", error;
    try {
      code = dispatch(bundle, results);
      if (code == kExitVerification) status = "verification_failed";
    } catch (const NumericalError& e) {
      code = kExitNumerical, status = "numerical_error", error = e.what();
    } catch (const SimulationError& e) {
      code = kExitNumerical, status = "numerical_error", error = e.what();
    }
    json m;
    m["schema"] = kManifestSchema;
    m["subcommand"] = opt_.subcommand;
    m["scenario"] = cfg_.name;
    m["kind"] = cfg_.kind;
    m["status"] = status;
    m["exit_code"] = code;
    if (!error.empty()) m["error"] = error;
    m["seed"] = cfg_.budget.seed;
    m["budget"] = {{"n_paths", cfg_.budget.n_paths},
                   {"t_tail", cfg_.budget.t_tail},
                   {"t_tail_resolved", resolved_t_tail()},
                   {"threads", cfg_.budget.threads},
                   {"threads_resolved", resolve_threads(cfg_.budget.threads)}};
    m["tolerances"] = {{"eps", cfg_.regions.eps},
                       {"eps_rule", "0 selects 2 x median standard error"},
                       {"sigma_multiple", 3},
                       {"collar_cells", 1}};
    m["config_path"] = cfg_.source_path.string();
    m["config_fnv1a64"] = fnv1a_hex(cfg_.source_text);
    m["config_describe"] = git_describe(cfg_.source_path);
    m["config"] = cfg_.resolved;
    m["config"]["budget"]["seed"] = cfg_.budget.seed;
    m["config"]["budget"]["threads"] = cfg_.budget.threads;
    m["created_utc"] = io::utc_timestamp();
    m["results"] = results;
    m["warnings"] = warnings_;
    std::vector<std::string> files = bundle.files();
    files.push_back("manifest.json");
    m["outputs"] = files;
    bundle.add("manifest.json", m.dump(2) + "\n");
    out.bundle = bundle.publish();
    out.exit_code = code;
    out.manifest = std::move(m);
    return out;
  }

 private:
  double resolved_t_tail() const {
    if (cfg_.kind == "discrete") return 0;
    try {
      return resolve_t_tail(config::make_discount(cfg_), cfg_.budget.t_tail);
    } catch (const Error&) {
      return 0;
    }
  }

  const Grid& grid() const {
    if (!cfg_.grid) throw ConfigError({"[grid]: required by '" + opt_.subcommand + "'"});
    return *cfg_.grid;
  }

  GameContext context() const {
    return GameContext(config::make_process(cfg_), config::make_payoff(cfg_), config::make_discount(cfg_), grid(),
                       cfg_.budget, cfg_.regions.eps);
  }

  PolicyRegion region(const std::optional<std::string>& text, const std::string& key) const {
    if (!text) throw ConfigError({"[regions]." + key + ": required by '" + opt_.subcommand + "'"});
    return config::region_from(cfg_, key, *text);
  }

  std::vector<PolicyRegion> family() const {
    std::vector<PolicyRegion> out;
    for (std::size_t i = 0; i < cfg_.regions.family.size(); ++i)
      out.push_back(config::region_from(cfg_, "family[" + std::to_string(i) + "]", cfg_.regions.family[i]));
    if (out.empty() && cfg_.kind == "butterfly")
      for (double b : butterfly_scenario().b_values) out.push_back(barrier_region(b));
    if (out.empty()) throw ConfigError({"[regions].family: required by '" + opt_.subcommand + "'"});
    return out;
  }

  ButterflyScenario butterfly_scenario() const {
    auto s = ButterflyScenario::make(cfg_.discount.beta, cfg_.payoff.a, grid(), cfg_.butterfly.b_count,
                                     cfg_.process.dt);
    if (!cfg_.butterfly.b_values.empty()) s.b_values = cfg_.butterfly.b_values;
    return s;
  }

  void add_region_outputs(io::Bundle& b, const std::string& stem, const GameContext& ctx, const PolicyRegion& R) {
    const ValueField& J = ctx.value_of(R);
    b.add_csv(stem + "_J.csv", J);
    b.add_heatmap(stem + "_J.pgm", J.grid, J.values);
    b.add_mask(stem + "_mask.pgm", R.mask_on(ctx.grid()));
  }

  int dispatch(io::Bundle& b, json& res) {
    const std::string& s = opt_.subcommand;
    if (s == "run") return run_scenario(b, res);
    if (cfg_.kind == "discrete") throw ConfigError({"[scenario].kind: discrete scenarios support only 'run'"});
    const GameContext ctx = context();
    if (s == "classify") {
      const PolicyRegion R = region(cfg_.regions.region, "region");
      const Classification c = ctx.classify_region(R);
      b.add("classification.csv", classification_csv(c));
      b.add_heatmap("labels.pgm", c.grid, label_levels(c));
      add_region_outputs(b, "region", ctx, R);
      res["counts"] = {{"S", c.count(Label::S)},
                       {"I", c.count(Label::I)},
                       {"C", c.count(Label::C)},
                       {"ambiguous", c.count(Label::Ambiguous)}};
      res["eps"] = c.eps;
      return kExitOk;
    }
    if (s == "verify") {
      const PolicyRegion R = region(cfg_.regions.region, "region");
      const EquilibriumReport rep = verify_equilibrium(ctx, R);
      add_region_outputs(b, "region", ctx, R);
      b.add("classification.csv", classification_csv(ctx.classify_region(R)));
      res["verify"] = report_json(rep);
      return rep.is_equilibrium ? kExitOk : kExitVerification;
    }
    if (s == "iterate") {
      const PolicyRegion R0 = region(cfg_.regions.region, "region");
      const IterationTrace tr = iterate_theta(ctx, R0, cfg_.regions.max_iters);
      for (std::size_t k = 0; k < tr.masks.size(); ++k) b.add_mask("iterate_" + std::to_string(k) + ".pgm", tr.masks[k]);
      add_region_outputs(b, "final", ctx, tr.iterates.back());
      res["converged"] = tr.converged;
      res["oscillation"] = tr.oscillation;
      res["direction"] = direction_name(tr.direction);
      res["changed"] = tr.changed;
      res["iterations"] = tr.iterates.size() - 1;
      res["final_region"] = tr.iterates.back().provenance();
      for (const auto& w : tr.warnings) warnings_.push_back(w);
      return tr.converged ? kExitOk : kExitVerification;
    }
    if (s == "improve") {
      const PolicyRegion R = region(cfg_.regions.region, "region");
      const PolicyRegion T = region(cfg_.regions.other, "other");
      const ImproveResult r = improve_pair(ctx, R, T);
      add_region_outputs(b, "improved", ctx, r.improved);
      res["improved"] = r.improved.provenance();
      res["improved_key"] = r.improved.key();
      res["degenerate"] = r.degenerate;
      res["carried_over"] = r.carried_over;
      res["dominance"] = dominance_json(r.dominance);
      for (const auto& w : r.warnings) warnings_.push_back(w);
      return r.degenerate || r.dominance.holds() ? kExitOk : kExitVerification;
    }
    if (s == "search") {
      const std::vector<PolicyRegion> fam = family();
      const SearchResult r = search_optimal(ctx, fam);
      add_region_outputs(b, "R_star", ctx, r.R_star);
      res["R_star"] = {{"provenance", r.R_star.provenance()}, {"key", r.R_star.key()}, {"mask", "R_star_mask.pgm"}};
      res["accepted"] = r.accepted;
      json rej = json::array();
      for (const auto& [k, rep] : r.rejected) rej.push_back({{"candidate", k}, {"report", report_json(rep)}});
      res["rejected"] = rej;
      res["final_report"] = report_json(r.final_report);
      res["dominance"] = dominance_json(r.dominance);
      res["closure_excess_outside_collar"] = r.closure_excess_outside_collar;
      res["ok"] = r.ok();
      return r.ok() ? kExitOk : kExitVerification;
    }
    if (s == "value") {
      const PolicyRegion R = region(cfg_.regions.region, "region");
      const ValueFunctionResult v = value_function(ctx, R);
      b.add_csv("V.csv", v.V);
      b.add_heatmap("V.pgm", v.V.grid, v.V.values);
      add_region_outputs(b, "region", ctx, R);
      res["verified"] = v.verified;
      for (const auto& w : v.warnings) warnings_.push_back(w);
      return v.verified ? kExitOk : kExitVerification;
    }
    throw ConfigError({"unknown subcommand '" + s + "'"});
  }

  int run_scenario(io::Bundle& b, json& res) {
    if (cfg_.kind == "butterfly") return run_butterfly_bundle(b, res);
    if (cfg_.kind == "exponential_baseline") return run_baseline_bundle(b, res);
    if (cfg_.kind == "mean_value") return run_mean_value_bundle(res);
    if (cfg_.kind == "discrete") return run_discrete_bundle(b, res);
    throw ConfigError({"[scenario].kind: 'run' needs butterfly, exponential_baseline, mean_value or discrete"});
  }

  int run_butterfly_bundle(io::Bundle& b, json& res) {
    const ButterflyScenario s = butterfly_scenario();
    for (double v : s.b_values)
      if (v > s.b_max() * (1 + 1e-12))
        warnings_.push_back("b = " + io::format_double(v) + " lies above min(a, sqrt2 a*); no equilibrium claim");
    const ButterflyStudy st = run_butterfly(s, cfg_.budget);
    res["a_star"] = s.a_star;
    res["sqrt2_a_star"] = std::sqrt(2.0) * s.a_star;
    res["label"] = st.label;
    json bars = json::array();
    bool ok = true;
    for (std::size_t k = 0; k < st.barriers.size(); ++k) {
      const auto& r = st.barriers[k];
      const std::string stem = "b" + std::to_string(k);
      b.add_csv(stem + "_mc.csv", r.mc);
      b.add_heatmap(stem + "_mc.pgm", r.mc.grid, r.mc.values);
      if (r.quad) b.add_csv(stem + "_quad.csv", *r.quad);
      b.add_mask(stem + "_mask.pgm", barrier_region(r.b).mask_on(s.grid));
      const bool admissible = r.b <= s.b_max() * (1 + 1e-12);
      if (admissible) ok = ok && r.report.is_equilibrium;
      bars.push_back({{"b", r.b},
                      {"admissible", admissible},
                      {"verify", report_json(r.report)},
                      {"quad_cells", r.quad_cells},
                      {"quad_exceed_3se", r.quad_exceed_3se},
                      {"quad_expected_exceed", 0.0027 * static_cast<double>(r.quad_cells)},
                      {"quad_max_z", r.quad_max_z}});
    }
    res["barriers"] = bars;
    json ord = json::array();
    for (const auto& [k, d] : st.ordering) ord.push_back({{"lower", k}, {"upper", k + 1}, {"dominance", dominance_json(d)}});
    res["ordering"] = ord;
    ok = ok && st.ordering_holds();
    if (st.search) {
      b.add_mask("R_star_mask.pgm", st.search->R_star.mask_on(s.grid));
      res["search"] = {{"R_star", st.search->R_star.provenance()},
                       {"R_star_key", st.search->R_star.key()},
                       {"ok", st.search->ok()},
                       {"dominance", dominance_json(st.search->dominance)},
                       {"mismatch_vs_R_a_outside_collar", st.rstar_mismatch_outside_collar}};
      ok = ok && st.search->ok() && st.rstar_mismatch_outside_collar == 0;
    }
    return ok ? kExitOk : kExitVerification;
  }

  int run_baseline_bundle(io::Bundle& b, json& res) {
    const auto r = run_exponential_baseline(cfg_.discount.alpha, cfg_.payoff.strike, grid(), cfg_.budget,
                                            cfg_.baseline.dx, cfg_.process.dt);
    std::ostringstream os;
    os << "x,lattice_U,f_or_J\n";
    const double lo = grid().lower()[0], hi = grid().upper()[0];
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 / cfg_.baseline.dx)));
    for (std::size_t i = 0; i < r.lattice.x.size(); i += stride) {
      const double x = r.lattice.x[i];
      if (x < lo || x > hi) continue;
      const double v = std::max(std::max(r.strike - x, 0.0), put_continuation(x, r.lattice.threshold, r.strike, r.alpha));
      os << io::format_double(x) << ',' << io::format_double(r.lattice.U[i]) << ',' << io::format_double(v) << '\n';
    }
    b.add("lattice.csv", os.str());
    res["threshold_lattice"] = r.lattice.threshold;
    res["threshold_exact"] = r.threshold_exact;
    res["sup_error"] = r.sup_error;
    res["policy_iterations"] = r.lattice.policy_iterations;
    res["di_max_gap"] = r.di_max_gap;
    res["di_equality"] = r.di_equality;
    res["equilibrium"] = report_json(r.equilibrium);
    json bat = json::array();
    for (const auto& c : r.battery)
      bat.push_back({{"candidate", c.name}, {"dominated", c.dominated}, {"worst_gap", c.worst_gap}});
    res["battery"] = bat;
    const bool ok = r.sup_error < 1e-3 && r.di_equality && r.equilibrium.is_equilibrium && r.battery_dominated();
    return ok ? kExitOk : kExitVerification;
  }

  int run_mean_value_bundle(json& res) {
    const auto st = run_mean_value(cfg_.mean_value.radii, cfg_.discount.beta, cfg_.mean_value.level, cfg_.payoff.k0,
                                   cfg_.payoff.k1, cfg_.process.dt, cfg_.budget);
    json arr = json::array();
    for (std::size_t k = 0; k < st.reports.size(); ++k) {
      const auto& r = st.reports[k];
      arr.push_back({{"r", st.radii[k]},
                     {"k_r", r.k_r},
                     {"k_r_mc", r.k_r_mc},
                     {"k_r_mc_se", r.k_r_mc_se},
                     {"J_x", r.J_x},
                     {"J_x_se", r.J_x_se},
                     {"ball_avg", r.ball_avg},
                     {"ball_avg_se", r.ball_avg_se},
                     {"lower_ok", r.lower_ok},
                     {"upper_ok", r.upper_ok}});
    }
    res["radii"] = arr;
    res["all_ok"] = st.all_ok();
    return st.all_ok() ? kExitOk : kExitVerification;
  }

  int run_discrete_bundle(io::Bundle& b, json& res) {
    const FiniteChain chain = config::make_chain(cfg_);
    if (static_cast<int>(cfg_.chain.payoff.size()) != chain.n())
      throw ConfigError({"[chain].payoff: length must equal the number of states"});
    OracleOptions opt;
    opt.tail_tol = cfg_.chain.tail_tol;
    const DiscountCurve delta = config::make_discount(cfg_);
    const StructuralReport main = verify_structural_theorems(chain, cfg_.chain.payoff, delta, opt,
                                                             resolve_threads(cfg_.budget.threads));
    res["primary"] = structural_json(main);
    res["primary"]["discount"] = cfg_.discount.kind;
    bool ok = main.a_exceptions.empty() && main.b_exceptions.empty() && main.d_holds;
    if (cfg_.discount.kind == "exponential") ok = ok && main.c_pass_rate() == 1.0;
    if (cfg_.chain.exponential_alpha) {
      const StructuralReport ex = verify_structural_theorems(
          chain, cfg_.chain.payoff, DiscountCurve::exponential(*cfg_.chain.exponential_alpha), opt,
          resolve_threads(cfg_.budget.threads));
      res["exponential"] = structural_json(ex);
      ok = ok && ex.a_exceptions.empty() && ex.b_exceptions.empty() && ex.d_holds && ex.c_pass_rate() == 1.0;
    }
    b.add("report.json", res.dump(2) + "\n");
    return ok ? kExitOk : kExitVerification;
  }

  config::ScenarioConfig cfg_;
  Options opt_;
  std::vector<std::string> warnings_;
};

/// Loads the config and runs one subcommand. Configuration problems are
/// reported on err with exit code 1 and no bundle.
inline Outcome execute(const Options& opt, std::ostream& err) {
  Outcome out;
  try {
    config::ScenarioConfig cfg = config::load_config(opt.config);
    Runner runner(std::move(cfg), opt);
    out = runner.run();
  } catch (const ConfigError& e) {
    for (const auto& i : e.issues()) err << "config error: " << i << '\n';
    out.exit_code = kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    out.exit_code = kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    out.exit_code = kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    out.exit_code = kExitConfig;
  }
  return out;
}

inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Equilibrium stopping policies under non-exponential discounting"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir;
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"classify", "label grid cells S / I / C under a region"},
      {"iterate", "apply Theta until the region is fixed"},
      {"verify", "check that a region is an equilibrium"},
      {"improve", "Theta of the intersection of two equilibria"},
      {"search", "fold improvement over a candidate family"},
      {"value", "value function V = f v J of a region"},
      {"run", "run the named scenario pipeline"}};
  for (const auto& [name, help] : subs) {
    CLI::App* sc = app.add_subcommand(name, help);
    sc->add_option("config", opt.config, "scenario TOML file")->required()->check(CLI::ExistingFile);
    sc->add_option("--seed", seed, "override [budget].seed");
    sc->add_option("--threads", threads, "override [budget].threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sc->add_option("--out", out_dir, std::string("output root (default $") + kOutEnv + " or ./out)");
    sc->add_flag("--quiet", opt.quiet, "print nothing on success");
    sc->callback([&opt, &seed, &threads, &out_dir, sc, name = name] {
      opt.subcommand = name;
      if (sc->count("--seed")) opt.seed = seed;
      if (sc->count("--threads")) opt.threads = threads;
      if (sc->count("--out")) opt.out = out_dir;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }
  const Outcome r = execute(opt, err);
  if (!r.bundle.empty() && (!opt.quiet || r.exit_code != kExitOk)) {
    out << opt.subcommand << ": " << r.manifest.value("status", "") << " (exit " << r.exit_code << ")\n";
    out << "bundle: " << r.bundle.string() << '\n';
  }
  return r.exit_code;
}

}  // namespace stopgame::cli
