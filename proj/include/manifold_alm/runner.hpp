#pragma once

// Experiment orchestration: configuration, repeated seeded runs and result
// files (CSV or JSON, plus a per-iteration trace CSV).

#include "manifold_alm/alm.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace malm {

struct ExperimentConfig {
  /// Problem data; `instance.seed` seeds the data generator and stays fixed
  /// across runs.
  InstanceDescriptor instance;
  /// Run i uses seed + i for its initial point and Newton sampling.
  std::uint64_t seed = 1;
  int n_runs = 1;
  RetractionKind retraction = RetractionKind::QR;
  LineSearch linesearch = LineSearch::LS1;
  ToleranceProfile tolerance = ToleranceProfile::Standard;
  std::string output_path;  // empty: nothing written
  std::string format = "csv";
  /// "alm.<key>" / "newton.<key>" = value, applied over the family defaults.
  std::map<std::string, std::string> overrides;
  /// Record the minimum eigenvalue of every sampled Newton-phase operator.
  bool probe_min_eigenvalue = false;
  /// One line per outer iteration on stderr.
  bool verbose = false;

  /// Throws std::invalid_argument on inconsistent fields or unknown override keys.
  void validate() const;
};

/// Reads an INI file with sections [problem], [run], [alm], [newton].
/// Unknown sections or keys throw std::invalid_argument.
[[nodiscard]] ExperimentConfig parse_experiment_config(std::istream& in);
[[nodiscard]] ExperimentConfig load_experiment_config(const std::string& path);

/// Applies "alm.*" and "newton.*" overrides. Throws std::invalid_argument on
/// unknown keys or unparsable values.
void apply_overrides(const std::map<std::string, std::string>& overrides, AlmConfig& alm,
                     NewtonConfig& newton);

struct ResultRecord {
  std::string problem;
  Eigen::Index n = 0;
  Eigen::Index r = 0;
  double mu = 0.0;
  std::uint64_t seed = 0;
  double loss = 0.0;
  double feasibility = 0.0;
  double stationarity = 0.0;
  double time_s = 0.0;
  int outer_iters = 0;
  double newton_start_frac = 0.0;
  double sparsity = 0.0;
  double cpav = 0.0;  // NaN for problems without data matrix

  friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

struct RunOutcome {
  ResultRecord record;
  bool converged = false;
  std::string error;  // empty unless the run threw
  AlmTrace trace;
  double inequality_violation = 0.0;
  double orthonormality = 0.0;
};

/// Solver settings for one experiment: family defaults plus overrides.
[[nodiscard]] std::pair<AlmConfig, NewtonConfig> resolve_configs(const ExperimentConfig& cfg,
                                                                 const ProblemOracle& problem);

/// One run with the given seed. Exceptions become a failed outcome.
[[nodiscard]] RunOutcome run_single(const ExperimentConfig& cfg, const ProblemOracle& problem,
                                    std::uint64_t seed);

/// n_runs solves with seeds seed, seed + 1, ...; parallel up to the
/// MANIFOLD_ALM_THREADS limit (default: hardware concurrency). Results are in
/// seed order.
[[nodiscard]] std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg);

enum class ResultFormat { Csv, Json };
[[nodiscard]] ResultFormat parse_result_format(std::string_view name);

inline constexpr const char* kResultColumns =
    "problem,n,r,mu,seed,loss,feasibility,stationarity,time_s,outer_iters,newton_start_frac,"
    "sparsity,cpav";
inline constexpr const char* kTraceColumns = "iter,sigma,delta,feas,stat,loss,newton_active,cg_iters";

void write_results_csv(const std::vector<ResultRecord>& records, std::ostream& out);
void write_results_json(const std::vector<ResultRecord>& records, std::ostream& out);
void write_trace_csv(const std::vector<AlmTrace>& traces, std::ostream& out);
[[nodiscard]] std::vector<ResultRecord> read_results_csv(std::istream& in);
[[nodiscard]] std::vector<ResultRecord> read_results_json(std::istream& in);

/// Writes `path` in the given format and the traces to `<path>.trace.csv`.
/// Throws std::invalid_argument on empty records, std::runtime_error on I/O failure.
void emit_results(const std::vector<RunOutcome>& outcomes, ResultFormat format,
                  const std::string& path);

/// Parallel-run cap from MANIFOLD_ALM_THREADS (>= 1).
[[nodiscard]] unsigned thread_limit();

}  // namespace malm
