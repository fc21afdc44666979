#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "subdiff/harness.hpp"

using namespace subdiff;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.network.K = 20;
  c.network.P = 2;
  c.network.M = 2;
  c.network.radius = 0.6;
  c.run.algorithms = {"exact_diffusion", "approx_projection", "dispo", "centralized"};
  c.run.mu = 0.01;
  c.run.iterations = 400;
  c.run.monte_carlo_runs = 4;
  c.run.auto_runs = false;
  c.outputs.trace_stride = 5;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("subdiff_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SUBDIFF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Harness, ConfigJsonRoundTrip) {
  ExperimentConfig c = small_config();
  c.run.mu_list = {1e-3, 5e-4};
  const nlohmann::json j = c;
  const ExperimentConfig back = parse_config(j);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.run.mu_list.size(), 2u);
}

TEST(Harness, InvalidConfigsRejected) {
  auto expect_invalid = [](ExperimentConfig c) {
    try {
      c.validate();
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    }
  };
  ExperimentConfig c = small_config();
  c.run.iterations = 0;
  expect_invalid(c);
  c = small_config();
  c.run.burn_in_fraction = 1.0;
  expect_invalid(c);
  c = small_config();
  c.run.monte_carlo_runs = 0;
  expect_invalid(c);
  c = small_config();
  c.run.algorithms = {"unknown"};
  expect_invalid(c);
  EXPECT_THROW(parse_config(nlohmann::json{{"problem", {{"sigma_v2_range", {1.0}}}}}), Error);
}

TEST(Harness, MissingConfigNamesPath) {
  try {
    load_config("/nonexistent/dir/config.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/config.json"), std::string::npos);
  }
}

TEST(Harness, RepeatedRunsAreByteIdentical) {
  ExperimentConfig c = small_config();
  const Instance inst = build_instance(c.network, c.problem);
  c.run.workers = 1;
  const std::string a = curves_csv(run_experiment(c, inst));
  c.run.workers = 3;
  const std::string b = curves_csv(run_experiment(c, inst));
  EXPECT_EQ(a, b);
  c.run.master_seed += 1;
  EXPECT_NE(a, curves_csv(run_experiment(c, inst)));
}

TEST(Harness, CurveShapeAndDecomposition) {
  const ExperimentConfig c = small_config();
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.algorithms.size(), 4u);
  for (const auto& a : r.algorithms) {
    ASSERT_EQ(a.curve.size(), static_cast<std::size_t>(c.run.iterations / c.outputs.trace_stride));
    EXPECT_EQ(a.runs, 4);
    for (const auto& p : a.curve) {
      EXPECT_LE(std::abs(p.msd_U + p.msd_perp - p.msd), 1e-10 * p.msd) << a.name << " " << p.iteration;
    }
  }
  EXPECT_LE(r.at("centralized").curve.back().msd_perp, 1e-20);
  ASSERT_TRUE(r.theory.msd_exact.has_value());
  ASSERT_TRUE(r.theory.msd_small_mu.has_value());
}

TEST(Harness, SteadyStateUsesPostBurnInWindow) {
  ExperimentConfig c = small_config();
  const Instance inst = build_instance(c.network, c.problem);
  TrajectorySpec spec;
  spec.mu = c.run.mu;
  spec.iterations = 100;
  spec.burn_in_fraction = 0.75;
  spec.trace_stride = 1;
  spec.seed = 17;
  const Trajectory t = simulate(inst, spec);
  double tail = 0.0;
  for (std::size_t i = 75; i < 100; ++i) tail += t.curve[i].msd;
  EXPECT_NEAR(t.steady_msd, tail / 25.0, 1e-14 * tail);
}

TEST(Harness, DeterministicExactDiffusionReachesFloor) {
  ExperimentConfig c = small_config();
  c.run.algorithms = {"exact_diffusion"};
  c.run.deterministic = true;
  c.run.mu = 0.05;
  c.run.iterations = 8000;
  c.outputs.trace_stride = 100;
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.algorithms[0].runs, 1);
  EXPECT_LE(r.algorithms[0].curve.back().msd, 1e-18);
}

TEST(Harness, OutputsWritten) {
  ExperimentConfig c = small_config();
  c.outputs.directory = scratch_dir("outputs").string();
  const ExperimentResult r = run_experiment(c);
  write_outputs(c, r);
  const std::string csv = slurp(fs::path(c.outputs.directory) / "curves.csv");
  EXPECT_EQ(csv.rfind("iteration,algorithm,msd_db,msd_component_U_db,msd_component_perp_db\n", 0), 0u);
  const auto summary = nlohmann::json::parse(slurp(fs::path(c.outputs.directory) / "summary.json"));
  EXPECT_EQ(summary["algorithms"].size(), 4u);
  EXPECT_TRUE(summary["theory"]["msd_exact_db"].is_number());
  EXPECT_EQ(summary["provenance"]["code_version"], std::string(kVersion));
  EXPECT_EQ(summary["config"]["run"]["mu"], c.run.mu);
}

TEST(Harness, UnwritableOutputReported) {
  ExperimentConfig c = small_config();
  const fs::path dir = scratch_dir("unwritable");
  const fs::path file = dir / "occupied";
  std::ofstream(file) << "x";
  c.outputs.directory = (file / "sub").string();
  try {
    write_outputs(c, run_experiment(c));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutputUnwritable);
  }
}

TEST(Harness, SweepHandlesEmptyAndUnstableSteps) {
  ExperimentConfig c = small_config();
  c.run.algorithms = {"exact_diffusion"};
  EXPECT_TRUE(sweep_mu(c, {}).rows.empty());
  const SweepResult s = sweep_mu(c, {0.02, 50.0});
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].mu, 0.02);
  ASSERT_EQ(s.failures.size(), 1u);
  EXPECT_EQ(s.failures[0].first, 50.0);
  const std::string csv = sweep_csv(s);
  EXPECT_EQ(csv.rfind("mu,algorithm,msd_db,msd_theory_exact_db,msd_theory_small_mu_db,stderr_db\n", 0), 0u);
}

TEST(Cli, MissingConfigExitsOne) {
  const fs::path dir = scratch_dir("cli_missing");
  EXPECT_EQ(run_cli("run --config /no/such/config.json --out " + dir.string(), dir / "log.txt"), 1);
  EXPECT_NE(slurp(dir / "log.txt").find("/no/such/config.json"), std::string::npos);
}

TEST(Cli, UsageErrorsAreNonzero) {
  const fs::path dir = scratch_dir("cli_usage");
  EXPECT_NE(run_cli("", dir / "a.txt"), 0);
  EXPECT_NE(run_cli("frobnicate", dir / "b.txt"), 0);
  EXPECT_NE(run_cli("run --no-such-flag", dir / "c.txt"), 0);
}

TEST(Cli, RunVerifyGenSmoke) {
  const fs::path dir = scratch_dir("cli_smoke");
  ExperimentConfig c = small_config();
  c.run.iterations = 100;
  std::ofstream(dir / "config.json") << nlohmann::json(c).dump(2);
  const std::string cfg = (dir / "config.json").string();
  EXPECT_EQ(run_cli("run --quiet --config " + cfg + " --out " + (dir / "run").string(), dir / "run.txt"), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "curves.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "summary.json"));
  EXPECT_EQ(run_cli("verify --config " + cfg, dir / "verify.txt"), 0);
  const std::string report = slurp(dir / "verify.txt");
  EXPECT_EQ(report.find("FAIL"), std::string::npos) << report;
  EXPECT_EQ(run_cli("gen --quiet --config " + cfg + " --out " + (dir / "gen").string(), dir / "gen.txt"), 0);
  const auto network = nlohmann::json::parse(slurp(dir / "gen" / "network.json"));
  EXPECT_EQ(network["K"], 20);
  EXPECT_TRUE(fs::exists(dir / "gen" / "combiner.json"));
  EXPECT_EQ(run_cli("sweep --quiet --config " + cfg + " --mu 0.01 0.02 --out " + (dir / "sweep").string(),
                    dir / "sweep.txt"),
            0);
  EXPECT_TRUE(fs::exists(dir / "sweep" / "sweep.csv"));
}

TEST(Cli, SeedOverrideChangesOutput) {
  const fs::path dir = scratch_dir("cli_seed");
  ExperimentConfig c = small_config();
  c.run.iterations = 50;
  c.run.algorithms = {"exact_diffusion"};
  std::ofstream(dir / "config.json") << nlohmann::json(c).dump(2);
  const std::string cfg = (dir / "config.json").string();
  ASSERT_EQ(run_cli("run --quiet --config " + cfg + " --out " + (dir / "a").string(), dir / "a.txt"), 0);
  ASSERT_EQ(run_cli("run --quiet --config " + cfg + " --out " + (dir / "b").string(), dir / "b.txt"), 0);
  ASSERT_EQ(run_cli("run --quiet --seed 7 --config " + cfg + " --out " + (dir / "c").string(), dir / "c.txt"), 0);
  EXPECT_EQ(slurp(dir / "a" / "curves.csv"), slurp(dir / "b" / "curves.csv"));
  EXPECT_NE(slurp(dir / "a" / "curves.csv"), slurp(dir / "c" / "curves.csv"));
}
