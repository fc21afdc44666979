#pragma once

// Experiment orchestration: instance construction from seeds, Monte Carlo
// trajectories, learning curves, steady-state estimates, theory comparison
// and CSV/JSON output.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "subdiff/algorithms.hpp"
#include "subdiff/combiner.hpp"
#include "subdiff/errors.hpp"
#include "subdiff/netgraph.hpp"
#include "subdiff/predictor.hpp"
#include "subdiff/problem.hpp"
#include "subdiff/rng.hpp"
#include "subdiff/version.hpp"

namespace subdiff {

struct NetworkConfig {
  int K = 50;
  int P = 3;
  int M = 5;
  double radius = 0.45;
  double kernel_width = 0.2;
  double tau = 1.0;
  std::uint64_t seed = 1;
};

struct ProblemConfig {
  std::pair<double, double> sigma_h2_range{0.5, 2.0};
  std::pair<double, double> sigma_v2_range{0.2, 0.8};
  std::uint64_t seed = 2;
};

struct RunConfig {
  std::vector<std::string> algorithms{"exact_diffusion", "approx_projection"};
  double mu = 1e-3;
  int E = 1;
  std::int64_t iterations = 50'000;
  int monte_carlo_runs = 50;
  bool auto_runs = true;  // grow runs until the stderr gate passes
  int max_runs = 400;
  double stderr_gate_db = 0.5;
  double burn_in_fraction = 0.8;
  std::uint64_t master_seed = 42;
  bool deterministic = false;
  int workers = 0;  // 0: hardware concurrency
  std::vector<double> mu_list;
  bool scale_iterations_with_mu = true;
};

struct OutputConfig {
  std::string directory;
  int trace_stride = 10;
};

struct ExperimentConfig {
  NetworkConfig network;
  ProblemConfig problem;
  RunConfig run;
  OutputConfig outputs;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (network.K < 2) fail("network.K must be >= 2");
    if (network.M < 1) fail("network.M must be >= 1");
    if (network.P < 1 || network.P > network.K) fail("network.P must lie in [1, K]");
    if (!(network.radius > 0.0)) fail("network.radius must be positive");
    if (!(network.kernel_width > 0.0)) fail("network.kernel_width must be positive");
    if (network.tau < 0.0) fail("network.tau must be >= 0");
    if (!(problem.sigma_h2_range.first > 0.0) ||
        problem.sigma_h2_range.second < problem.sigma_h2_range.first) {
      fail("problem.sigma_h2_range must be a positive interval");
    }
    if (problem.sigma_v2_range.first < 0.0 ||
        problem.sigma_v2_range.second < problem.sigma_v2_range.first) {
      fail("problem.sigma_v2_range must be a nonnegative interval");
    }
    if (run.algorithms.empty()) fail("run.algorithms is empty");
    for (const auto& a : run.algorithms) parse_algorithm(a);
    if (!(run.mu > 0.0)) fail("run.mu must be positive");
    if (run.E < 1) fail("run.E must be >= 1");
    if (run.iterations <= 0) fail("run.iterations must be > 0");
    if (run.monte_carlo_runs < 1) fail("run.monte_carlo_runs must be >= 1");
    if (run.max_runs < run.monte_carlo_runs) fail("run.max_runs must be >= monte_carlo_runs");
    if (!(run.burn_in_fraction >= 0.0 && run.burn_in_fraction < 1.0)) {
      fail("run.burn_in_fraction must lie in [0, 1)");
    }
    if (outputs.trace_stride < 1) fail("outputs.trace_stride must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"network",
       {{"K", c.network.K},
        {"P", c.network.P},
        {"M", c.network.M},
        {"radius", c.network.radius},
        {"kernel_width", c.network.kernel_width},
        {"tau", c.network.tau},
        {"seed", c.network.seed}}},
      {"problem",
       {{"sigma_h2_range", {c.problem.sigma_h2_range.first, c.problem.sigma_h2_range.second}},
        {"sigma_v2_range", {c.problem.sigma_v2_range.first, c.problem.sigma_v2_range.second}},
        {"seed", c.problem.seed}}},
      {"run",
       {{"algorithms", c.run.algorithms},
        {"mu", c.run.mu},
        {"E", c.run.E},
        {"iterations", c.run.iterations},
        {"monte_carlo_runs", c.run.monte_carlo_runs},
        {"auto_runs", c.run.auto_runs},
        {"max_runs", c.run.max_runs},
        {"stderr_gate_db", c.run.stderr_gate_db},
        {"burn_in_fraction", c.run.burn_in_fraction},
        {"master_seed", c.run.master_seed},
        {"deterministic", c.run.deterministic},
        {"workers", c.run.workers},
        {"mu_list", c.run.mu_list},
        {"scale_iterations_with_mu", c.run.scale_iterations_with_mu}}},
      {"outputs", {{"directory", c.outputs.directory}, {"trace_stride", c.outputs.trace_stride}}}};
}

/// Missing keys keep their defaults; unknown keys are ignored.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  auto read = [](const nlohmann::json& obj, const char* key, auto& dst) {
    if (obj.contains(key)) obj.at(key).get_to(dst);
  };
  auto read_range = [](const nlohmann::json& obj, const char* key, std::pair<double, double>& dst) {
    if (!obj.contains(key)) return;
    const auto& r = obj.at(key);
    if (!r.is_array() || r.size() != 2) throw Error(ErrorKind::InvalidConfig, std::string(key) + " must be [lo, hi]");
    dst = {r.at(0).get<double>(), r.at(1).get<double>()};
  };
  if (j.contains("network")) {
    const auto& n = j.at("network");
    read(n, "K", c.network.K);
    read(n, "P", c.network.P);
    read(n, "M", c.network.M);
    read(n, "radius", c.network.radius);
    read(n, "kernel_width", c.network.kernel_width);
    read(n, "tau", c.network.tau);
    read(n, "seed", c.network.seed);
  }
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    read_range(p, "sigma_h2_range", c.problem.sigma_h2_range);
    read_range(p, "sigma_v2_range", c.problem.sigma_v2_range);
    read(p, "seed", c.problem.seed);
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    read(r, "algorithms", c.run.algorithms);
    read(r, "mu", c.run.mu);
    read(r, "E", c.run.E);
    read(r, "iterations", c.run.iterations);
    read(r, "monte_carlo_runs", c.run.monte_carlo_runs);
    read(r, "auto_runs", c.run.auto_runs);
    read(r, "max_runs", c.run.max_runs);
    read(r, "stderr_gate_db", c.run.stderr_gate_db);
    read(r, "burn_in_fraction", c.run.burn_in_fraction);
    read(r, "master_seed", c.run.master_seed);
    read(r, "deterministic", c.run.deterministic);
    read(r, "workers", c.run.workers);
    read(r, "mu_list", c.run.mu_list);
    read(r, "scale_iterations_with_mu", c.run.scale_iterations_with_mu);
  }
  if (j.contains("outputs")) {
    const auto& o = j.at("outputs");
    read(o, "directory", c.outputs.directory);
    read(o, "trace_stride", c.outputs.trace_stride);
  }
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "cannot parse '" + path + "': " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------

/// Everything derived deterministically from the network and problem seeds.
struct Instance {
  NetworkTopology topology;
  std::uint64_t graph_seed = 0;  // seed actually accepted (after retries)
  SpectralDecomposition spectrum;
  Subspace subspace;
  QuadraticNetworkProblem problem;
  BlockCombiner combiner;
  VectorXd w_star;
  MatrixXd H_star;
  MatrixXd R_star;
};

/// Graph seeds are tried in order from net.seed; a seed is skipped when the
/// graph is disconnected or admits no combiner with rho(P_U - A) < 1.
inline Instance build_instance(const NetworkConfig& net, const ProblemConfig& prob,
                               int max_attempts = 100) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Instance inst;
    const std::uint64_t seed = net.seed + static_cast<std::uint64_t>(attempt);
    try {
      inst.topology = generate_geometric_graph(net.K, seed, net.kernel_width, net.radius);
      inst.spectrum = spectral(inst.topology);
      inst.subspace = build_subspace(inst.spectrum, net.P, net.M);
      inst.combiner = build_combiner(inst.subspace, inst.topology);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::GraphDisconnected || e.kind() == ErrorKind::SpectralViolation) continue;
      throw;
    }
    inst.graph_seed = seed;
    // Targets use a stream distinct from the coordinates.
    VectorXd w_o = smooth_targets(inst.spectrum, net.M, net.tau, mix64(seed ^ 0x7461726765747321ULL));
    inst.problem = make_random_problem(inst.subspace, std::move(w_o),
                                       VarianceRanges{prob.sigma_h2_range, prob.sigma_v2_range}, prob.seed);
    inst.w_star = optimum(inst.problem);
    inst.H_star = network_hessian(inst.problem);
    inst.R_star = noise_covariance_at_optimum(inst.problem, inst.w_star);
    return inst;
  }
  throw Error(ErrorKind::SpectralViolation,
              "no usable topology after " + std::to_string(max_attempts) +
                  " graph seeds; increase network.radius");
}

inline TheoryInputs theory_inputs(const Instance& inst, double mu) {
  return TheoryInputs{inst.combiner.A, inst.H_star, inst.R_star, inst.subspace.U, mu, inst.topology.K};
}

// ---------------------------------------------------------------------------

inline double to_db(double x) { return x > 1e-20 ? 10.0 * std::log10(x) : -200.0; }

struct CurvePoint {
  std::int64_t iteration = 0;
  double msd = 0.0;       // (1/K) |w* - w_i|^2
  double msd_U = 0.0;     // (1/K) |w* - P_U w_i|^2
  double msd_perp = 0.0;  // (1/K) |(I - P_U) w_i|^2
};

struct Trajectory {
  std::vector<CurvePoint> curve;
  double steady_msd = 0.0;  // time average over the post-burn-in window
};

struct TrajectorySpec {
  Algorithm algorithm = Algorithm::ExactDiffusion;
  double mu = 1e-3;
  int E = 1;
  std::int64_t iterations = 1000;
  double burn_in_fraction = 0.8;
  int trace_stride = 10;
  GradientMode mode = GradientMode::Stochastic;
  std::uint64_t seed = 0;
};

inline std::int64_t burn_in_end(std::int64_t iterations, double fraction) {
  return static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(iterations)));
}

/// One independent trajectory from w_0 = 0.
inline Trajectory simulate(const Instance& inst, const TrajectorySpec& spec) {
  GradientSource grad(inst.problem, spec.mode, spec.seed);
  AlgorithmRun run(spec.algorithm, inst.combiner, inst.subspace, spec.mu, spec.E);
  const double invK = 1.0 / inst.topology.K;
  const std::int64_t start = burn_in_end(spec.iterations, spec.burn_in_fraction);
  Trajectory t;
  t.curve.reserve(static_cast<std::size_t>(spec.iterations / spec.trace_stride));
  double acc = 0.0;
  VectorXd d, dU;
  for (std::int64_t i = 1; i <= spec.iterations; ++i) {
    run.step(grad);
    d = run.w() - inst.w_star;
    const double total = d.squaredNorm() * invK;
    if (i > start) acc += total;
    if (i % spec.trace_stride == 0) {
      dU.noalias() = inst.subspace.projector * d;
      t.curve.push_back({i, total, dU.squaredNorm() * invK, (d - dU).squaredNorm() * invK});
    }
  }
  t.steady_msd = acc / static_cast<double>(spec.iterations - start);
  return t;
}

struct AlgorithmResult {
  std::string name;
  std::vector<CurvePoint> curve;  // averaged over runs
  double steady_msd = 0.0;
  double steady_stderr = 0.0;
  int runs = 0;

  double steady_db() const { return to_db(steady_msd); }
  /// Delta-method standard error of the dB estimate.
  double stderr_db() const {
    return steady_msd > 0.0 ? 10.0 / std::log(10.0) * steady_stderr / steady_msd : 0.0;
  }
};

struct TheoryValues {
  std::optional<double> msd_exact;
  std::optional<double> msd_exact_transposed;
  std::optional<double> msd_small_mu;
  double rho_C = 0.0;
  std::string error;
};

inline TheoryValues compute_theory(const Instance& inst, double mu) {
  TheoryValues tv;
  const TheoryInputs in = theory_inputs(inst, mu);
  try {
    SeriesOptions opt;
    const auto printed = msd_exact_detailed(in, opt);
    tv.msd_exact = printed.msd;
    tv.rho_C = printed.spectral_radius;
    opt.variant = SeriesVariant::Transposed;
    tv.msd_exact_transposed = msd_exact_detailed(in, opt).msd;
  } catch (const Error& e) {
    tv.error = e.what();
  }
  try {
    tv.msd_small_mu = msd_small_mu(in);
  } catch (const Error& e) {
    tv.error += (tv.error.empty() ? "" : "; ") + std::string(e.what());
  }
  return tv;
}

struct ExperimentResult {
  std::vector<AlgorithmResult> algorithms;
  TheoryValues theory;
  nlohmann::json provenance;

  const AlgorithmResult& at(std::string_view name) const {
    for (const auto& a : algorithms) {
      if (a.name == name) return a;
    }
    throw std::out_of_range("no result for algorithm " + std::string(name));
  }
};

namespace detail {

/// Runs trajectories [first, last) on a worker pool; results land at their
/// run index so the later reduction order never depends on scheduling.
template <class Fn>
void parallel_runs(int first, int last, int workers, std::vector<Trajectory>& out, Fn&& fn) {
  out.resize(static_cast<std::size_t>(last));
  const int n = last - first;
  if (n <= 0) return;
  int w = workers > 0 ? workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  w = std::min(w, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(last));
  std::atomic<int> next{first};
  auto body = [&] {
    for (int r = next++; r < last; r = next++) {
      try {
        out[static_cast<std::size_t>(r)] = fn(r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  if (w == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (int r = first; r < last; ++r) {
    if (errors[static_cast<std::size_t>(r)]) std::rethrow_exception(errors[static_cast<std::size_t>(r)]);
  }
}

inline AlgorithmResult reduce_runs(std::string name, const std::vector<Trajectory>& runs) {
  AlgorithmResult res;
  res.name = std::move(name);
  res.runs = static_cast<int>(runs.size());
  const double R = static_cast<double>(runs.size());
  res.curve = runs.front().curve;
  for (auto& p : res.curve) p.msd = p.msd_U = p.msd_perp = 0.0;
  double mean = 0.0;
  for (const auto& t : runs) {
    for (std::size_t n = 0; n < res.curve.size(); ++n) {
      res.curve[n].msd += t.curve[n].msd;
      res.curve[n].msd_U += t.curve[n].msd_U;
      res.curve[n].msd_perp += t.curve[n].msd_perp;
    }
    mean += t.steady_msd;
  }
  for (auto& p : res.curve) {
    p.msd /= R;
    p.msd_U /= R;
    p.msd_perp /= R;
  }
  mean /= R;
  double var = 0.0;
  for (const auto& t : runs) var += (t.steady_msd - mean) * (t.steady_msd - mean);
  res.steady_msd = mean;
  res.steady_stderr = runs.size() > 1 ? std::sqrt(var / (R - 1.0) / R) : 0.0;
  return res;
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::filesystem::path ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::OutputUnwritable, "cannot create output directory '" + dir + "'");
  }
  return std::filesystem::path(dir);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::OutputUnwritable, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::OutputUnwritable, "write failed for '" + path.string() + "'");
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json optional_db(const std::optional<double>& v) {
  return v ? nlohmann::json(to_db(*v)) : nlohmann::json(nullptr);
}

}  // namespace detail

inline std::string curves_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "iteration,algorithm,msd_db,msd_component_U_db,msd_component_perp_db\n";
  for (const auto& a : r.algorithms) {
    for (const auto& p : a.curve) {
      os << p.iteration << ',' << a.name << ',' << detail::format_double(to_db(p.msd)) << ','
         << detail::format_double(to_db(p.msd_U)) << ',' << detail::format_double(to_db(p.msd_perp))
         << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& r) {
  nlohmann::json j;
  j["config"] = cfg;
  auto algos = nlohmann::json::array();
  for (const auto& a : r.algorithms) {
    algos.push_back({{"name", a.name},
                     {"runs", a.runs},
                     {"steady_state_msd", a.steady_msd},
                     {"steady_state_stderr", a.steady_stderr},
                     {"steady_state_msd_db", a.steady_db()},
                     {"steady_state_stderr_db", a.stderr_db()},
                     {"final_msd_db", a.curve.empty() ? -200.0 : to_db(a.curve.back().msd)}});
  }
  j["algorithms"] = std::move(algos);
  j["theory"] = {{"msd_exact", detail::optional_json(r.theory.msd_exact)},
                 {"msd_exact_db", detail::optional_db(r.theory.msd_exact)},
                 {"msd_exact_transposed", detail::optional_json(r.theory.msd_exact_transposed)},
                 {"msd_exact_transposed_db", detail::optional_db(r.theory.msd_exact_transposed)},
                 {"msd_small_mu", detail::optional_json(r.theory.msd_small_mu)},
                 {"msd_small_mu_db", detail::optional_db(r.theory.msd_small_mu)},
                 {"rho_C", r.theory.rho_C},
                 {"assumes_single_local_update", true},
                 {"error", r.theory.error}};
  j["provenance"] = r.provenance;
  return j;
}

inline void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& r) {
  const auto dir = detail::ensure_directory(cfg.outputs.directory);
  detail::write_text(dir / "curves.csv", curves_csv(r));
  detail::write_text(dir / "summary.json", summary_json(cfg, r).dump(2) + "\n");
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Instance& inst) {
  cfg.validate();
  ExperimentResult result;
  const GradientMode mode = cfg.run.deterministic ? GradientMode::Exact : GradientMode::Stochastic;
  std::vector<std::uint64_t> first_seeds;
  for (const auto& name : cfg.run.algorithms) {
    TrajectorySpec spec;
    spec.algorithm = parse_algorithm(name);
    spec.mu = cfg.run.mu;
    spec.E = cfg.run.E;
    spec.iterations = cfg.run.iterations;
    spec.burn_in_fraction = cfg.run.burn_in_fraction;
    spec.trace_stride = cfg.outputs.trace_stride;
    spec.mode = mode;
    auto one = [&](int r) {
      TrajectorySpec s = spec;
      s.seed = stream_seed(cfg.run.master_seed, name, static_cast<std::uint64_t>(r));
      return simulate(inst, s);
    };
    std::vector<Trajectory> runs;
    int n = cfg.run.deterministic ? 1 : cfg.run.monte_carlo_runs;
    detail::parallel_runs(0, n, cfg.run.workers, runs, one);
    AlgorithmResult res = detail::reduce_runs(name, runs);
    while (!cfg.run.deterministic && cfg.run.auto_runs && res.stderr_db() >= cfg.run.stderr_gate_db &&
           n < cfg.run.max_runs) {
      const int grow = std::min(2 * n, cfg.run.max_runs);
      detail::parallel_runs(n, grow, cfg.run.workers, runs, one);
      n = grow;
      res = detail::reduce_runs(name, runs);
    }
    result.algorithms.push_back(std::move(res));
  }
  result.theory = compute_theory(inst, cfg.run.mu);
  result.provenance = {{"code_version", std::string(kVersion)},
                       {"graph_seed_used", inst.graph_seed},
                       {"edges", inst.topology.edge_count()},
                       {"lambda_A", inst.combiner.lambda_A},
                       {"lambda_Abar", inst.combiner.lambda_Abar},
                       {"master_seed", cfg.run.master_seed},
                       {"stream_seed_rule", "mix64(mix64(mix64(master) ^ fnv1a(algorithm)) ^ run)"},
                       {"msd_normalization", "(1/K) |w* - w_i|^2"},
                       {"gradient_mode", cfg.run.deterministic ? "exact" : "stochastic"}};
  if (!cfg.outputs.directory.empty()) write_outputs(cfg, result);
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Instance inst = build_instance(cfg.network, cfg.problem);
  return run_experiment(cfg, inst);
}

struct SweepRow {
  double mu = 0.0;
  std::string algorithm;
  double msd_db = 0.0;
  std::optional<double> theory_exact_db;
  std::optional<double> theory_small_mu_db;
  double stderr_db = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::pair<double, std::string>> failures;  // (mu, message)
};

inline std::string sweep_csv(const SweepResult& s) {
  std::ostringstream os;
  os << "mu,algorithm,msd_db,msd_theory_exact_db,msd_theory_small_mu_db,stderr_db\n";
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string("nan"); };
  for (const auto& r : s.rows) {
    os << detail::format_double(r.mu) << ',' << r.algorithm << ',' << detail::format_double(r.msd_db)
       << ',' << opt(r.theory_exact_db) << ',' << opt(r.theory_small_mu_db) << ','
       << detail::format_double(r.stderr_db) << '\n';
  }
  return os.str();
}

/// One run_experiment per step size. With scale_iterations_with_mu the
/// iteration count is rescaled by (config mu / mu) so every run covers the
/// same number of time constants.
inline SweepResult sweep_mu(const ExperimentConfig& cfg, const std::vector<double>& mu_list) {
  SweepResult out;
  if (mu_list.empty()) return out;
  cfg.validate();
  const Instance inst = build_instance(cfg.network, cfg.problem);
  for (double mu : mu_list) {
    try {
      if (!(mu > 0.0)) throw Error(ErrorKind::InvalidConfig, "step size must be positive");
      const double rho = spectral_radius(series_matrix(theory_inputs(inst, mu)));
      if (!(rho < 1.0)) {
        throw Error(ErrorKind::SeriesDiverges, "rho(C) = " + std::to_string(rho) + " >= 1");
      }
      ExperimentConfig c = cfg;
      c.outputs.directory.clear();
      c.run.mu = mu;
      if (cfg.run.scale_iterations_with_mu) {
        c.run.iterations = static_cast<std::int64_t>(std::llround(
            static_cast<double>(cfg.run.iterations) * cfg.run.mu / mu));
        c.run.iterations = std::max<std::int64_t>(c.run.iterations, c.outputs.trace_stride);
      }
      const ExperimentResult r = run_experiment(c, inst);
      for (const auto& a : r.algorithms) {
        SweepRow row;
        row.mu = mu;
        row.algorithm = a.name;
        row.msd_db = a.steady_db();
        row.stderr_db = a.stderr_db();
        if (r.theory.msd_exact) row.theory_exact_db = to_db(*r.theory.msd_exact);
        if (r.theory.msd_small_mu) row.theory_small_mu_db = to_db(*r.theory.msd_small_mu);
        out.rows.push_back(std::move(row));
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::OutputUnwritable) throw;
      out.failures.emplace_back(mu, e.what());
    }
  }
  if (!cfg.outputs.directory.empty()) {
    const auto dir = detail::ensure_directory(cfg.outputs.directory);
    detail::write_text(dir / "sweep.csv", sweep_csv(out));
  }
  return out;
}

}  // namespace subdiff
