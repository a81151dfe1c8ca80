#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"

using namespace renoise;
using namespace renoise::app;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "renoise");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Value printed on the line "<key> <value>".
double printed(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string k, v;
  while (is >> k >> v)
    if (k == key) return std::stod(v);
  ADD_FAILURE() << "no '" << key << "' in output:\n" << text;
  return NAN;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string config_path(const std::string& name) { return std::string(RENOISE_CONFIG_DIR) + "/" + name; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("renoise_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

}  // namespace

TEST(CliToy, SingleStepIsExact) {
  const CliResult r = cli({"toy", "--dt", "0.1", "--a", "1", "--z0", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("step,t,z_t,renoise_error,forward_euler_error"), std::string::npos);
  EXPECT_LE(printed(r.out, "max_error"), 1e-12);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(CliToy, FiveStepsAndForwardEulerGap) {
  const CliResult r = cli({"toy", "--steps", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(r.out);
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line) && line.rfind("max_error", 0) != 0) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 5u);
    EXPECT_LE(v[3], 1e-12);
    // Forward Euler drifts by roughly dt^2 per step.
    EXPECT_GT(v[4], 1e-4);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(CliToy, InvalidArgumentsAreErrors) {
  EXPECT_EQ(cli({"toy", "--a", "0"}).code, 2);
  EXPECT_EQ(cli({"toy", "--dt", "-0.1"}).code, 2);
  EXPECT_EQ(cli({"toy", "--steps", "0"}).code, 2);
  EXPECT_NE(cli({"toy", "--dt", "abc"}).code, 0);
}

TEST(CliParse, UnknownOrMissingSubcommand) {
  EXPECT_NE(cli({"frobnicate"}).code, 0);
  EXPECT_NE(cli({}).code, 0);
}

TEST_F(CliTest, ReconstructWritesArtifactsReproducibly) {
  const std::string a = (dir_ / "a").string(), b = (dir_ / "b").string();
  const CliResult r1 = cli({"--out", a, "--set", "renoise.k=0", "reconstruct"});
  const CliResult r2 = cli({"--out", b, "--set", "renoise.k=0", "reconstruct"});
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0) << r2.err;
  for (const char* f : {"inversion.rnzt", "reconstruction.rnzt", "metrics.csv"}) {
    ASSERT_TRUE(fs::exists(fs::path(a) / f)) << f;
    EXPECT_EQ(slurp(fs::path(a) / f), slurp(fs::path(b) / f)) << f;
  }
  const auto rows = read_csv(fs::path(a) / "metrics.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"l2", "psnr", "peak", "op_count"}));
  // Default schedule has 4 steps: 4 inversion plus 4 denoising evaluations.
  EXPECT_EQ(rows[1][3], "8");
  EXPECT_EQ(printed(r1.out, "op_count"), 8.0);

  std::ifstream is(fs::path(a) / "reconstruction.rnzt", std::ios::binary);
  const Trajectory t = read_trajectory(is);
  EXPECT_EQ(t.latents.size(), 5u);
}

TEST_F(CliTest, RenoisingImprovesReconstruction) {
  const CliResult k0 = cli({"--out", (dir_ / "k0").string(), "--set", "renoise.k=0", "reconstruct"});
  const CliResult k4 = cli({"--out", (dir_ / "k4").string(), "--set", "renoise.k=4", "--set",
                      "renoise.weight_bands=[{\"weights\":[0,0,0,0,1]}]", "reconstruct"});
  ASSERT_EQ(k0.code, 0) << k0.err;
  ASSERT_EQ(k4.code, 0) << k4.err;
  EXPECT_LT(printed(k4.out, "l2"), printed(k0.out, "l2"));
  EXPECT_EQ(printed(k4.out, "op_count"), 4.0 * 5.0 + 4.0);
}

TEST_F(CliTest, SeedChangesResultAndIsDeterministic) {
  const CliResult a = cli({"--seed", "7", "--out", dir_.string(), "reconstruct"});
  const CliResult b = cli({"--seed", "7", "--out", dir_.string(), "reconstruct"});
  const CliResult c = cli({"--seed", "8", "--out", dir_.string(), "reconstruct"});
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
}

TEST_F(CliTest, MalformedConfigNamesTheKey) {
  const std::string cfg = write_config("bad.json", R"({"renoise": {"foo": 1}})");
  const CliResult r = cli({"--config", cfg, "--out", dir_.string(), "invert"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("renoise.foo"), std::string::npos) << r.err;

  const std::string wrong_type = write_config("type.json", R"({"schedule": {"steps": "four"}})");
  const CliResult t = cli({"--config", wrong_type, "--out", dir_.string(), "invert"});
  EXPECT_EQ(t.code, 2);
  EXPECT_NE(t.err.find("schedule.steps"), std::string::npos) << t.err;

  const std::string syntax = write_config("syntax.json", "{\"seed\": ");
  EXPECT_EQ(cli({"--config", syntax, "invert"}).code, 2);
  EXPECT_EQ(cli({"--config", (dir_ / "missing.json").string(), "invert"}).code, 2);
}

TEST_F(CliTest, ZeroStepScheduleIsAnError) {
  const CliResult r = cli({"--out", dir_.string(), "--set", "schedule.steps=0", "diagnose"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, InvertWritesTrajectoryAndCounts) {
  const CliResult r = cli({"--out", dir_.string(), "--set", "renoise.k=3", "invert"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(printed(r.out, "op_count"), 16.0);
  EXPECT_TRUE(fs::exists(dir_ / "schedule.txt"));
  std::ifstream is(dir_ / "inversion.rnzt", std::ios::binary);
  const Trajectory t = read_trajectory(is);
  ASSERT_EQ(t.latents.size(), 5u);
  EXPECT_EQ(t.latents[0].shape(), (Shape{1, 8, 8}));
  const auto rows = read_csv(dir_ / "inversion_metrics.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "16");
}

TEST_F(CliTest, DiagnoseLinearRatiosAreConstant) {
  const CliResult r = cli({"--config", config_path("linear_diagnose.json"), "--out", dir_.string(), "diagnose"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(printed(r.out, "rows"), 18.0);
  const auto rows = read_csv(dir_ / "diagnostics.csv");
  ASSERT_EQ(rows[0], (std::vector<std::string>{"t", "k", "delta_norm", "scaled_jac_norm", "ratio"}));
  int checked = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 5u);
    if (rows[i][1] == "1") {
      EXPECT_TRUE(rows[i][4].empty());
      continue;
    }
    if (std::stod(rows[i][2]) < 1e-6) continue;
    EXPECT_NEAR(std::stod(rows[i][4]), std::stod(rows[i][3]), 1e-8);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST_F(CliTest, DiagnoseToySettles) {
  const CliResult r = cli({"--config", config_path("toy_euler.json"), "--out", dir_.string(), "diagnose"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(dir_ / "diagnostics.csv");
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], "1");
    EXPECT_TRUE(rows[i][3].empty());
  }
  const CliResult deeper = cli({"--config", config_path("toy_euler.json"), "--out", dir_.string(), "--set", "renoise.k=3",
                          "--set", "renoise.weight_bands=[{\"weights\":[0,0,0,1]}]", "diagnose"});
  ASSERT_EQ(deeper.code, 0) << deeper.err;
  for (const auto& row : read_csv(dir_ / "diagnostics.csv"))
    if (row[1] == "2" || row[1] == "3") EXPECT_LE(std::stod(row[2]), 1e-12);
}

TEST_F(CliTest, SweepBudgetRows) {
  const CliResult a = cli({"--config", config_path("sweep_budget.json"), "--out", (dir_ / "a").string(), "sweep"});
  const CliResult b = cli({"--config", config_path("sweep_budget.json"), "--out", (dir_ / "b").string(), "sweep"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(slurp(dir_ / "a" / "sweep.csv"), slurp(dir_ / "b" / "sweep.csv"));
  const auto rows = read_csv(dir_ / "a" / "sweep.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0][0], "inversion_steps");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][4], "100");
  EXPECT_EQ(rows[1][2], "0");
  EXPECT_EQ(rows[4][2], "8");
}

TEST_F(CliTest, SweepDuplicatesWarnAndNoRowsFail) {
  const std::string cfg = write_config("dup.json", R"({
    "latent": {"shape": [1, 4, 4]},
    "sweep": {"rows": [{"inversion_steps": 4, "denoise_steps": 4, "k": 1},
                       {"inversion_steps": 4, "denoise_steps": 4, "k": 1}]}})");
  const CliResult r = cli({"--config", cfg, "--out", dir_.string(), "sweep"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("duplicate"), std::string::npos);
  EXPECT_EQ(read_csv(dir_ / "sweep.csv").size(), 2u);
  EXPECT_EQ(cli({"--out", dir_.string(), "sweep"}).code, 2);
}

TEST_F(CliTest, SampleConfigsRun) {
  for (const char* name : {"toy_euler.json", "linear_diagnose.json", "nonlinear_reconstruct.json",
                           "ancestral_exact.json"}) {
    const CliResult r = cli({"--config", config_path(name), "--out", (dir_ / name).string(), "reconstruct"});
    EXPECT_EQ(r.code, 0) << name << ": " << r.err;
    EXPECT_LT(printed(r.out, "l2"), 1e-3) << name;
  }
}

TEST(Config, JsonRoundTrip) {
  for (const char* name : {"toy_euler.json", "linear_diagnose.json", "nonlinear_reconstruct.json",
                           "ancestral_exact.json", "sweep_budget.json"}) {
    const RunConfig cfg = parse_run_config(load_json_file(config_path(name)));
    const Json once = to_json(cfg);
    EXPECT_EQ(to_json(parse_run_config(once)), once) << name;
  }
  const Json defaults = to_json(RunConfig{});
  EXPECT_EQ(to_json(parse_run_config(defaults)), defaults);
}

TEST(Config, OverridesCreateAndReplace) {
  Json doc = Json::object();
  apply_override(doc, "renoise.k=3");
  apply_override(doc, "schedule.kind=euler");
  apply_override(doc, "latent.shape=[2,2]");
  EXPECT_EQ(doc["renoise"]["k"], 3);
  EXPECT_EQ(doc["schedule"]["kind"], "euler");
  EXPECT_EQ(doc["latent"]["shape"], Json::array({2, 2}));
  apply_override(doc, "renoise.k=5");
  EXPECT_EQ(doc["renoise"]["k"], 5);
  EXPECT_THROW(apply_override(doc, "novalue"), Error);
  EXPECT_THROW(apply_override(doc, "renoise..k=1"), Error);
  EXPECT_THROW(apply_override(doc, "renoise.k.x=1"), Error);
}

TEST(Config, PrecedenceOfCommandLine) {
  GlobalOptions opts;
  opts.config_path = config_path("nonlinear_reconstruct.json");
  opts.overrides = {"seed=11", "renoise.k=1", "renoise.weight_bands=[{\"weights\":[0,1]}]"};
  RunConfig cfg = resolve_config(opts);
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.renoise.K, 1u);
  EXPECT_EQ(cfg.out_dir, "out/nonlinear_reconstruct");
  opts.seed = 12;
  opts.out_dir = "elsewhere";
  cfg = resolve_config(opts);
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_EQ(cfg.out_dir, "elsewhere");
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_run_config(Json::parse(R"({"predictor": {"kind": "unet"}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"predictor": {"kind": "linear"}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"latent": {"shape": [2], "values": [1, 2, 3]}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"nc": {"mode": "exact", "eta": 2}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"edit": {}, "renoise": {"edit_loss": {}}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"sweep": {"rows": [{"inversion_steps": 0}]}})")), Error);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"schedule": {"kind": "custom"}})")).schedule.build(), Error);
}
