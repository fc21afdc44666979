#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "subdiff/subdiff.hpp"

namespace {

using namespace subdiff;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool quiet = false;
  std::vector<double> mu;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.run.master_seed = *o.seed;
  if (o.deterministic) cfg.run.deterministic = true;
  if (!o.out.empty()) cfg.outputs.directory = o.out;
  if (cfg.outputs.directory.empty()) cfg.outputs.directory = "results";
  cfg.validate();
  return cfg;
}

int cmd_gen(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Instance inst = build_instance(cfg.network, cfg.problem);
  const auto dir = detail::ensure_directory(cfg.outputs.directory);
  detail::write_text(dir / "network.json",
                     network_to_json(inst.topology, inst.subspace, inst.problem.w_o).dump(2) + "\n");
  detail::write_text(dir / "combiner.json", combiner_to_json(inst.combiner).dump() + "\n");
  nlohmann::json problem = {{"K", inst.problem.K},
                            {"M", inst.problem.M},
                            {"graph_seed_used", inst.graph_seed},
                            {"sigma_h2", std::vector<double>(inst.problem.sigma_h2.begin(), inst.problem.sigma_h2.end())},
                            {"sigma_v2", std::vector<double>(inst.problem.sigma_v2.begin(), inst.problem.sigma_v2.end())},
                            {"w_star", std::vector<double>(inst.w_star.begin(), inst.w_star.end())}};
  detail::write_text(dir / "problem.json", problem.dump(2) + "\n");
  if (!o.quiet) {
    std::printf("graph seed %llu, %d edges, lambda_A %.6f\n",
                static_cast<unsigned long long>(inst.graph_seed), inst.topology.edge_count(),
                inst.combiner.lambda_A);
    std::printf("wrote network.json, combiner.json, problem.json to %s\n", dir.string().c_str());
  }
  return 0;
}

int cmd_run(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ExperimentResult r = run_experiment(cfg);
  write_outputs(cfg, r);
  if (!o.quiet) {
    for (const auto& a : r.algorithms) {
      std::printf("%-18s %9.3f dB  (stderr %.3f dB, %d runs)\n", a.name.c_str(), a.steady_db(),
                  a.stderr_db(), a.runs);
    }
    if (r.theory.msd_exact) std::printf("%-18s %9.3f dB\n", "theory exact", to_db(*r.theory.msd_exact));
    if (r.theory.msd_small_mu) std::printf("%-18s %9.3f dB\n", "theory small mu", to_db(*r.theory.msd_small_mu));
    if (!r.theory.error.empty()) std::printf("theory: %s\n", r.theory.error.c_str());
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const std::vector<double> mus = o.mu.empty() ? cfg.run.mu_list : o.mu;
  const SweepResult s = sweep_mu(cfg, mus);
  if (mus.empty()) {
    // sweep_mu writes nothing for an empty list; keep the output contract.
    const auto dir = detail::ensure_directory(cfg.outputs.directory);
    detail::write_text(dir / "sweep.csv", sweep_csv(s));
  }
  if (!o.quiet) std::fputs(sweep_csv(s).c_str(), stdout);
  for (const auto& [mu, msg] : s.failures) std::fprintf(stderr, "mu=%g failed: %s\n", mu, msg.c_str());
  return s.failures.empty() ? 0 : 2;
}

int cmd_verify(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Instance inst = build_instance(cfg.network, cfg.problem);
  const double tol = 1e-8;
  const CombinerReport c = verify_combiner(inst.combiner, inst.subspace, inst.topology, tol);
  auto line = [&](const char* name, double value, bool ok) {
    if (!o.quiet) std::printf("%-22s %.3e  %s\n", name, value, ok ? "ok" : "FAIL");
  };
  line("sparsity", c.max_off_pattern, c.sparsity_ok());
  line("A P_U - P_U", c.ap_residual, c.ap_ok());
  line("A - A^T", c.symmetry_residual, c.symmetry_ok());
  line("rho(P_U - A) < 1", c.lambda_A, c.spectral_ok());
  line("B B - (I - A)/2", c.sqrt_residual, c.sqrt_ok());
  line("P_U B", c.pb_residual, c.pb_ok());
  line("rho(Abar - P_U)", c.lambda_Abar, c.abar_bound_ok());

  const MatrixXd& P = inst.subspace.projector;
  const double idem = (P * P - P).norm();
  const double stationarity = (inst.subspace.U.transpose() * network_gradient(inst.problem, inst.w_star)).norm();
  const bool problem_ok = idem <= 1e-10 && stationarity <= 1e-9;
  line("P_U P_U - P_U", idem, idem <= 1e-10);
  line("U^T grad J(w*)", stationarity, stationarity <= 1e-9);
  return c.all_ok() && problem_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subspace-constrained exact diffusion experiments"};
  app.set_version_flag("--version", std::string(subdiff::kVersion));
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", seed, "override run.master_seed");
    sub->add_flag("--deterministic", o.deterministic, "use exact gradients");
    sub->add_flag("--quiet", o.quiet, "suppress console output");
  };
  CLI::App* gen = app.add_subcommand("gen", "write network, combiner and problem JSON");
  CLI::App* run = app.add_subcommand("run", "run the configured experiment");
  CLI::App* sweep = app.add_subcommand("sweep", "steady-state MSD over a list of step sizes");
  CLI::App* verify = app.add_subcommand("verify", "print combiner and problem validation residuals");
  for (CLI::App* s : {gen, run, sweep, verify}) common(s);
  sweep->add_option("--mu", o.mu, "step sizes (overrides run.mu_list)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  for (CLI::App* s : {gen, run, sweep, verify}) {
    if (s->count("--seed") > 0) o.seed = seed;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*run) return cmd_run(o);
    if (*sweep) return cmd_sweep(o);
    return cmd_verify(o);
  } catch (const subdiff::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return subdiff::is_configuration_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
