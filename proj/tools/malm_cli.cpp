// Command-line front end:
//   malm solve --problem cm --n 500 --r 20 --mu 0.1 --retraction qr --linesearch ls1 \
//              --seed 7 --runs 20 --out results.csv

#include "manifold_alm/runner.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace {

int solve(const malm::ExperimentConfig& cfg) {
  const auto outcomes = malm::run_experiment(cfg);
  if (!cfg.output_path.empty()) {
    malm::emit_results(outcomes, malm::parse_result_format(cfg.format), cfg.output_path);
  }

  double loss = 0.0;
  double time = 0.0;
  int converged = 0;
  for (const auto& o : outcomes) {
    loss += o.record.loss;
    time += o.record.time_s;
    if (o.converged) ++converged;
  }
  const double count = static_cast<double>(outcomes.size());
  std::printf("%s n=%ld r=%ld mu=%g runs=%zu: mean loss %.6f, mean time %.3f s, converged %d/%zu\n",
              std::string(malm::to_string(cfg.instance.kind)).c_str(), static_cast<long>(cfg.instance.n),
              static_cast<long>(cfg.instance.r), cfg.instance.mu, outcomes.size(), loss / count,
              time / count, converged, outcomes.size());

  if (converged == static_cast<int>(outcomes.size())) return 0;
  for (const auto& o : outcomes) {
    if (o.converged) continue;
    std::fprintf(stderr, "seed %llu: %s (feasibility %.3e, stationarity %.3e)\n",
                 static_cast<unsigned long long>(o.record.seed),
                 o.error.empty() ? "did not reach tolerance" : o.error.c_str(), o.record.feasibility,
                 o.record.stationarity);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmented Lagrangian method with semismooth Newton subproblems on St(n, r)"};
  app.require_subcommand(1);
  CLI::App* cmd = app.add_subcommand("solve", "Run seeded solves of one benchmark problem");

  std::string config_path;
  std::string problem;
  long n = 0;
  long r = 0;
  double mu = -1.0;
  long data_seed = -1;
  std::string retraction;
  std::string linesearch;
  std::string tolerance;
  std::vector<std::string> sets;
  malm::ExperimentConfig cfg;
  bool probe = false;
  bool verbose = false;

  cmd->add_option("--config", config_path, "INI file with [problem], [run], [alm], [newton]");
  cmd->add_option("--problem", problem, "cm, spca or cspca");
  cmd->add_option("--n", n, "ambient dimension");
  cmd->add_option("--r", r, "number of columns");
  cmd->add_option("--mu", mu, "l1 weight");
  cmd->add_option("--data-seed", data_seed, "seed of the problem data (SPCA, cSPCA)");
  auto* seed_opt = cmd->add_option("--seed", cfg.seed, "seed of the first run");
  auto* runs_opt = cmd->add_option("--runs", cfg.n_runs, "number of runs");
  cmd->add_option("--retraction", retraction, "qr, polar or exp");
  cmd->add_option("--linesearch", linesearch, "ls1 or ls2");
  cmd->add_option("--tolerance", tolerance, "standard or high");
  auto* out_opt = cmd->add_option("--out", cfg.output_path, "result file");
  auto* fmt_opt = cmd->add_option("--format", cfg.format, "csv or json");
  cmd->add_option("--set", sets, "override, e.g. alm.tau=0.9 or newton.delta_G=1e-3");
  cmd->add_flag("--probe-min-eig", probe, "record min eigenvalues of Newton-phase operators");
  cmd->add_flag("--verbose", verbose, "print every outer iteration to stderr");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      malm::ExperimentConfig file = malm::load_experiment_config(config_path);
      // Flags given on the command line win over the file.
      if (seed_opt->count() > 0) file.seed = cfg.seed;
      if (runs_opt->count() > 0) file.n_runs = cfg.n_runs;
      if (out_opt->count() > 0) file.output_path = cfg.output_path;
      if (fmt_opt->count() > 0) file.format = cfg.format;
      cfg = std::move(file);
    }
    if (!problem.empty()) cfg.instance.kind = malm::parse_problem_kind(problem);
    if (n > 0) cfg.instance.n = n;
    if (r > 0) cfg.instance.r = r;
    if (mu >= 0.0) cfg.instance.mu = mu;
    if (data_seed >= 0) cfg.instance.seed = static_cast<std::uint64_t>(data_seed);
    if (!retraction.empty()) cfg.retraction = malm::parse_retraction(retraction);
    if (!linesearch.empty()) cfg.linesearch = malm::parse_linesearch(linesearch);
    if (!tolerance.empty()) cfg.tolerance = malm::parse_tolerance_profile(tolerance);
    if (probe) cfg.probe_min_eigenvalue = true;
    if (verbose) cfg.verbose = true;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      cfg.overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg.validate();
    return solve(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
