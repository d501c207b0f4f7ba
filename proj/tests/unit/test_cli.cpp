#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "stopgame/cli.hpp"

using namespace stopgame;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("stopgame_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string butterfly_config(const std::string& region, int counts = 6, int n_paths = 256, int b_count = 3) {
  std::ostringstream os;
  os << "[scenario]\nname = \"bf\"\nkind = \"butterfly\"\n"
     << "[process]\nkind = \"brownian\"\ndim = 2\ndt = 1e-3\n"
     << "[discount]\nkind = \"hyperbolic\"\nbeta = 1.0\n"
     << "[payoff]\nkind = \"butterfly_min\"\na = 1.0\n"
     << "[grid]\nlower = [-1.0, -1.0]\nupper = [1.0, 1.0]\ncounts = [" << counts << ", " << counts << "]\n"
     << "[butterfly]\nb_count = " << b_count << "\n"
     << "[regions]\nregion = \"" << region << "\"\n"
     << "[budget]\nn_paths = " << n_paths << "\nseed = 99\n";
  return os.str();
}

const char* kConstant = R"(
[scenario]
name = "flat"
kind = "generic"
[process]
kind = "brownian"
dim = 1
dt = 1e-3
[discount]
kind = "hyperbolic"
beta = 1.0
[payoff]
kind = "constant"
value = 1.0
[grid]
lower = [-1.0]
upper = [1.0]
counts = [8]
[regions]
region = "REGION"
[budget]
n_paths = 64
)";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) s.replace(p, from.size(), to);
  return s;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli_main(std::vector<std::string> args) {
  args.insert(args.begin(), "stopgame");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

cli::Outcome execute(const fs::path& cfg, const std::string& sub, const fs::path& out, std::optional<int> threads = {}) {
  cli::Options o;
  o.subcommand = sub;
  o.config = cfg.string();
  o.out = out.string();
  o.threads = threads;
  std::ostringstream err;
  cli::Outcome r = cli::execute(o, err);
  EXPECT_TRUE(err.str().empty()) << err.str();
  return r;
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) EXPECT_EQ(std::stod(io::format_double(v)), v);
  EXPECT_EQ(io::format_double(std::nan("")), "nan");
}

TEST(Io, MaskPgmRoundTrip) {
  const fs::path d = temp_dir("pgm");
  const Grid g(Point{-1, 0}, Point{1, 3}, {5, 3});
  Mask m = Mask::filled(g, false, true);
  m.bits[g.flat_index({4, 2})] = 1;
  m.bits[g.flat_index({0, 0})] = 1;
  io::write_mask_pgm(d / "m.pgm", m);
  const std::string bytes = io::read_file(d / "m.pgm");
  ASSERT_EQ(bytes.substr(0, 11), "P5\n5 3\n255\n");
  EXPECT_EQ(static_cast<unsigned char>(bytes[11 + 4]), 255);       // top-right pixel is cell (4, 2)
  EXPECT_EQ(static_cast<unsigned char>(bytes[11 + 2 * 5]), 255);   // bottom-left pixel is cell (0, 0)
  EXPECT_EQ(static_cast<unsigned char>(bytes[11 + 0]), 0);
  EXPECT_EQ(io::read_mask_pgm(d / "m.pgm"), m);
  EXPECT_THROW(io::write_mask_pgm(d / "x.pgm", Mask::filled(Grid(Point{0, 0, 0}, Point{1, 1, 1}, {2, 2, 2}), true)),
               ShapeError);
}

TEST(Io, ValueFieldCsvLayout) {
  ValueField v;
  v.grid = Grid(Point{0, 0}, Point{2, 1}, {2, 2});
  v.values = {0.25, 0.5, 1, 2};
  v.std_errs = {0.01, 0.02, 0, 0};
  v.trunc_bounds = {0, 0, 0, 1e-3};
  EXPECT_EQ(io::value_field_csv(v),
            "x1,x2,value,std_err,trunc_bound\n0.5,0.25,0.25,0.01,0\n1.5,0.25,0.5,0.02,0\n"
            "0.5,0.75,1,0,0\n1.5,0.75,2,0,0.001\n");
}

TEST(Io, BundleIsPublishedAtomically) {
  const fs::path d = temp_dir("bundle");
  fs::path first, second;
  {
    io::Bundle b(d, "s");
    b.add("a.txt", "x");
    EXPECT_FALSE(fs::exists(d / "s" / io::utc_timestamp() / "a.txt"));
    first = b.publish();
  }
  {
    io::Bundle b(d, "s");
    b.add("a.txt", "y");
    second = b.publish();
  }
  { io::Bundle abandoned(d, "s"); abandoned.add("a.txt", "z"); }
  EXPECT_NE(first, second);
  EXPECT_EQ(io::read_file(first / "a.txt"), "x");
  EXPECT_EQ(io::read_file(second / "a.txt"), "y");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(d / "s")) {
    EXPECT_NE(e.path().filename().string().rfind(".staging", 0), 0u);
    ++entries;
  }
  EXPECT_EQ(entries, 2);
}

TEST(Cli, VerifyFullRegionExitsZero) {
  const fs::path d = temp_dir("verify_all");
  io::write_file(d / "c.toml", replace_all(kConstant, "REGION", "all"));
  const auto r = execute(d / "c.toml", "verify", d / "out");
  EXPECT_EQ(r.exit_code, cli::kExitOk);
  EXPECT_TRUE(r.manifest["results"]["verify"]["is_equilibrium"].get<bool>());
}

TEST(Cli, VerifyEmptyRegionWithPositivePayoffExitsTwo) {
  const fs::path d = temp_dir("verify_empty");
  io::write_file(d / "c.toml", replace_all(kConstant, "REGION", "empty"));
  const auto r = execute(d / "c.toml", "verify", d / "out");
  EXPECT_EQ(r.exit_code, cli::kExitVerification);
  EXPECT_EQ(r.manifest["status"], "verification_failed");
  EXPECT_FALSE(r.manifest["results"]["verify"]["is_equilibrium"].get<bool>());
  EXPECT_TRUE(fs::exists(r.bundle / "manifest.json"));
}

TEST(Cli, ManifestRecordsProvenance) {
  const fs::path d = temp_dir("manifest");
  const std::string text = replace_all(kConstant, "REGION", "all");
  io::write_file(d / "c.toml", text);
  const auto r = execute(d / "c.toml", "classify", d / "out");
  ASSERT_EQ(r.exit_code, cli::kExitOk);
  const auto m = nlohmann::json::parse(io::read_file(r.bundle / "manifest.json"));
  EXPECT_EQ(m["schema"], cli::kManifestSchema);
  EXPECT_EQ(m["subcommand"], "classify");
  EXPECT_EQ(m["config_fnv1a64"], cli::fnv1a_hex(text));
  EXPECT_EQ(m["budget"]["n_paths"], 64);
  EXPECT_EQ(m["config"]["payoff"]["value"], 1.0);
  EXPECT_FALSE(m["config_describe"].get<std::string>().empty());
  for (const auto& f : m["outputs"]) EXPECT_TRUE(fs::exists(r.bundle / f.get<std::string>())) << f;
  EXPECT_EQ(r.bundle.parent_path(), d / "out" / "flat");
}

TEST(Cli, ConfigErrorExitsOneWithoutBundle) {
  const fs::path d = temp_dir("bad");
  io::write_file(d / "c.toml", replace_all(replace_all(kConstant, "REGION", "all"), "beta = 1.0", "beta = -1.0"));
  const CliRun r = cli_main({"verify", (d / "c.toml").string(), "--out", (d / "out").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("[discount].beta"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(d / "out" / "flat"));
}

TEST(Cli, BadRegionExpressionExitsOne) {
  const fs::path d = temp_dir("bad_region");
  io::write_file(d / "c.toml", replace_all(kConstant, "REGION", "ball([0, 0], 1)"));
  const CliRun r = cli_main({"verify", (d / "c.toml").string(), "--out", (d / "out").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("[regions].region"), std::string::npos) << r.err;
}

TEST(Cli, ArgumentErrors) {
  EXPECT_EQ(cli_main({}).code, cli::kExitConfig);
  EXPECT_EQ(cli_main({"verify", "/nonexistent.toml"}).code, cli::kExitConfig);
  EXPECT_EQ(cli_main({"frobnicate", "x"}).code, cli::kExitConfig);
  EXPECT_EQ(cli_main({"--help"}).code, 0);
}

TEST(Cli, OutputRootFromEnvironment) {
  const fs::path d = temp_dir("env");
  io::write_file(d / "c.toml", replace_all(kConstant, "REGION", "all"));
  ::setenv(cli::kOutEnv, (d / "envout").c_str(), 1);
  const CliRun r = cli_main({"classify", (d / "c.toml").string(), "--quiet"});
  ::unsetenv(cli::kOutEnv);
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_TRUE(r.out.empty());
  EXPECT_TRUE(fs::exists(d / "envout" / "flat"));
}

TEST(Cli, SearchOverButterflyFamily) {
  const fs::path d = temp_dir("search");
  io::write_file(d / "c.toml", butterfly_config("all"));
  const auto r = execute(d / "c.toml", "search", d / "out");
  ASSERT_EQ(r.exit_code, cli::kExitOk) << r.manifest.dump(2);
  const auto& s = r.manifest["results"];
  EXPECT_TRUE(s["ok"].get<bool>());
  EXPECT_EQ(s["R_star"]["key"], barrier_region(1.0).key());
  EXPECT_TRUE(fs::exists(r.bundle / "R_star_mask.pgm"));
}

TEST(Cli, CsvBytesIdenticalAcrossRunsAndThreads) {
  const fs::path d = temp_dir("determinism");
  io::write_file(d / "c.toml", butterfly_config("union(halfspace([1, -1], 0.5), halfspace([-1, 1], 0.5))", 6, 128));
  std::vector<std::string> csv;
  for (int t : {1, 4, 4}) {
    const auto r = execute(d / "c.toml", "classify", d / ("out" + std::to_string(csv.size())), t);
    ASSERT_EQ(r.exit_code, cli::kExitOk);
    csv.push_back(io::read_file(r.bundle / "region_J.csv") + io::read_file(r.bundle / "classification.csv"));
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[1], csv[2]);
}
