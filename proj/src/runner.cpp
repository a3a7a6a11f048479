#include "manifold_alm/runner.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

namespace malm {

namespace {

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw std::invalid_argument("'" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw std::invalid_argument("'" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument("'" + key + "': out of range");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw std::invalid_argument("'" + key + "': expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(AlmConfig&, NewtonConfig&, const std::string& key, const std::string&)>;

Setter alm_double(double AlmConfig::*field) {
  return [field](AlmConfig& a, NewtonConfig&, const std::string& k, const std::string& v) {
    a.*field = parse_double(k, v);
  };
}
Setter newton_double(double NewtonConfig::*field) {
  return [field](AlmConfig&, NewtonConfig& n, const std::string& k, const std::string& v) {
    n.*field = parse_double(k, v);
  };
}
Setter newton_int(int NewtonConfig::*field) {
  return [field](AlmConfig&, NewtonConfig& n, const std::string& k, const std::string& v) {
    n.*field = parse_int(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["alm.tau"] = alm_double(&AlmConfig::tau);
    t["alm.rho"] = alm_double(&AlmConfig::rho);
    t["alm.alpha"] = alm_double(&AlmConfig::alpha_exp);
    t["alm.sigma0"] = alm_double(&AlmConfig::sigma0);
    t["alm.feas_tol"] = alm_double(&AlmConfig::feas_tol);
    t["alm.stat_tol"] = alm_double(&AlmConfig::stat_tol);
    t["alm.ineq_tol"] = alm_double(&AlmConfig::ineq_tol);
    t["alm.eps_base"] = [](AlmConfig& a, NewtonConfig&, const std::string& k, const std::string& v) {
      a.eps.base = parse_double(k, v);
    };
    t["alm.eps_delta_factor"] = [](AlmConfig& a, NewtonConfig&, const std::string& k,
                                   const std::string& v) { a.eps.delta_factor = parse_double(k, v); };
    t["alm.eps_floor"] = [](AlmConfig& a, NewtonConfig&, const std::string& k, const std::string& v) {
      a.eps.floor = parse_double(k, v);
    };
    t["alm.max_outer"] = [](AlmConfig& a, NewtonConfig&, const std::string& k, const std::string& v) {
      a.max_outer = parse_int(k, v);
    };
    t["alm.crosscheck"] = [](AlmConfig& a, NewtonConfig&, const std::string& k, const std::string& v) {
      if (v == "off" || v == "none") {
        a.penalty_crosscheck.reset();
      } else {
        a.penalty_crosscheck = parse_double(k, v);
      }
    };
    t["alm.carry_delta_G"] = [](AlmConfig& a, NewtonConfig&, const std::string& k,
                                const std::string& v) { a.carry_delta_G = parse_bool(k, v); };
    t["alm.hold_penalty_when_feasible"] = [](AlmConfig& a, NewtonConfig&, const std::string& k,
                                             const std::string& v) {
      a.hold_penalty_when_feasible = parse_bool(k, v);
    };

    t["newton.mu_ls"] = newton_double(&NewtonConfig::mu_ls);
    t["newton.delta_ls"] = newton_double(&NewtonConfig::delta_ls);
    t["newton.nu_bar"] = newton_double(&NewtonConfig::nu_bar);
    t["newton.beta0"] = newton_double(&NewtonConfig::beta0);
    t["newton.beta1"] = newton_double(&NewtonConfig::beta1);
    t["newton.p_exp"] = newton_double(&NewtonConfig::p_exp);
    t["newton.m_max"] = newton_int(&NewtonConfig::m_max);
    t["newton.min_step"] = newton_double(&NewtonConfig::min_step);
    t["newton.eta0"] = newton_double(&NewtonConfig::eta0);
    t["newton.eta_rate"] = newton_double(&NewtonConfig::eta_rate);
    t["newton.cg_max_iters"] = newton_int(&NewtonConfig::cg_max_iters);
    t["newton.max_cg_restarts"] = newton_int(&NewtonConfig::max_cg_restarts);
    t["newton.omega"] = [](AlmConfig&, NewtonConfig& n, const std::string& k, const std::string& v) {
      if (v == "paper" || v == "power") {
        n.omega.kind = OmegaSchedule::Kind::PaperPower;
      } else if (v == "min") {
        n.omega.kind = OmegaSchedule::Kind::ExperimentMin;
      } else {
        throw std::invalid_argument("'" + k + "': expected 'power' or 'min'");
      }
    };
    t["newton.omega_c1"] = [](AlmConfig&, NewtonConfig& n, const std::string& k, const std::string& v) {
      n.omega.c1 = parse_double(k, v);
    };
    t["newton.omega_c2"] = [](AlmConfig&, NewtonConfig& n, const std::string& k, const std::string& v) {
      n.omega.c2 = parse_double(k, v);
    };
    t["newton.omega_floor"] = newton_double(&NewtonConfig::omega_floor);
    t["newton.delta_G"] = newton_double(&NewtonConfig::delta_G);
    t["newton.max_direction_norm"] = newton_double(&NewtonConfig::max_direction_norm);
    t["newton.newton_shrink_after"] = newton_int(&NewtonConfig::newton_shrink_after);
    t["newton.first_order_max_iters"] = newton_int(&NewtonConfig::first_order_max_iters);
    t["newton.bb_initial_step"] = newton_double(&NewtonConfig::bb_initial_step);
    t["newton.bb_backtrack"] = newton_double(&NewtonConfig::bb_backtrack);
    t["newton.bb_armijo"] = newton_double(&NewtonConfig::bb_armijo);
    t["newton.bb_memory"] = newton_int(&NewtonConfig::bb_memory);
    t["newton.max_newton_iters"] = newton_int(&NewtonConfig::max_newton_iters);
    t["newton.max_stagnant_newton"] = newton_int(&NewtonConfig::max_stagnant_newton);
    t["newton.max_first_order_rounds"] = newton_int(&NewtonConfig::max_first_order_rounds);
    t["newton.probe_tol"] = newton_double(&NewtonConfig::probe_tol);
    return t;
  }();
  return table;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double json_number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

// --- Configuration -----------------------------------------------------------------------

void apply_overrides(const std::map<std::string, std::string>& overrides, AlmConfig& alm,
                     NewtonConfig& newton) {
  const auto& table = setters();
  for (const auto& [key, value] : overrides) {
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown configuration key '" + key + "'");
    it->second(alm, newton, key, value);
  }
}

void ExperimentConfig::validate() const {
  if (instance.r < 1 || instance.n < instance.r) throw std::invalid_argument("need n >= r >= 1");
  if (n_runs < 1) throw std::invalid_argument("need at least one run");
  if (!(instance.mu >= 0.0)) throw std::invalid_argument("mu must be nonnegative");
  (void)parse_result_format(format);
  AlmConfig a;
  NewtonConfig n;
  apply_overrides(overrides, a, n);
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (section != "problem" && section != "run" && section != "alm" && section != "newton") {
      throw std::invalid_argument("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const std::string value = node.get_value<std::string>();
      const std::string full = section + "." + key;
      if (section == "alm" || section == "newton") {
        if (setters().count(full) == 0) throw std::invalid_argument("config: unknown key '" + full + "'");
        cfg.overrides[full] = value;
      } else if (full == "problem.name") {
        cfg.instance.kind = parse_problem_kind(value);
      } else if (full == "problem.n") {
        cfg.instance.n = parse_integer(full, value);
      } else if (full == "problem.r") {
        cfg.instance.r = parse_integer(full, value);
      } else if (full == "problem.mu") {
        cfg.instance.mu = parse_double(full, value);
      } else if (full == "problem.data_seed") {
        cfg.instance.seed = static_cast<std::uint64_t>(parse_integer(full, value));
      } else if (full == "problem.p") {
        cfg.instance.p = parse_integer(full, value);
      } else if (full == "problem.domain_length") {
        cfg.instance.domain_length = parse_double(full, value);
      } else if (full == "problem.delta") {
        cfg.instance.delta = parse_double(full, value);
      } else if (full == "run.seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_integer(full, value));
      } else if (full == "run.runs") {
        cfg.n_runs = parse_int(full, value);
      } else if (full == "run.retraction") {
        cfg.retraction = parse_retraction(value);
      } else if (full == "run.linesearch") {
        cfg.linesearch = parse_linesearch(value);
      } else if (full == "run.tolerance") {
        cfg.tolerance = parse_tolerance_profile(value);
      } else if (full == "run.out") {
        cfg.output_path = value;
      } else if (full == "run.format") {
        cfg.format = value;
      } else if (full == "run.probe_min_eigenvalue") {
        cfg.probe_min_eigenvalue = parse_bool(full, value);
      } else {
        throw std::invalid_argument("config: unknown key '" + full + "'");
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_experiment_config(in);
}

std::pair<AlmConfig, NewtonConfig> resolve_configs(const ExperimentConfig& cfg,
                                                   const ProblemOracle& problem) {
  AlmConfig alm = default_alm_config(problem, cfg.tolerance);
  NewtonConfig newton = default_newton_config(problem);
  newton.retraction = cfg.retraction;
  newton.linesearch = cfg.linesearch;
  newton.probe_min_eigenvalue = cfg.probe_min_eigenvalue;
  apply_overrides(cfg.overrides, alm, newton);
  alm.validate();
  newton.validate();
  return {alm, newton};
}

// --- Runs ------------------------------------------------------------------------------------

RunOutcome run_single(const ExperimentConfig& cfg, const ProblemOracle& problem, std::uint64_t seed) {
  RunOutcome out;
  out.record.problem = std::string(to_string(cfg.instance.kind));
  out.record.n = cfg.instance.n;
  out.record.r = cfg.instance.r;
  out.record.mu = cfg.instance.mu;
  out.record.seed = seed;
  out.record.cpav = std::numeric_limits<double>::quiet_NaN();
  try {
    auto [alm, newton] = resolve_configs(cfg, problem);
    if (cfg.verbose) {
      alm.observer = [seed](const OuterRecord& r) {
        std::fprintf(stderr,
                     "seed %llu iter %d: sigma %.3g eps %.2e feas %.2e stat %.2e loss %.8f "
                     "fo %d newton %d cg %d t %.1fs\n",
                     static_cast<unsigned long long>(seed), r.iter, r.sigma, r.eps, r.feas, r.stat,
                     r.loss, r.first_order_iters, r.newton_iters, r.cg_iters, r.wall_time);
      };
    }
    AlmResult res = run_alm(problem, alm, newton, Seed{seed});
    const Matrix& q = res.q.matrix();
    out.converged = res.converged;
    out.record.loss = res.loss;
    out.record.feasibility = res.residuals.feasibility;
    out.record.stationarity = res.residuals.stationarity;
    out.record.time_s = res.trace.records.empty() ? 0.0 : res.trace.records.back().wall_time;
    out.record.outer_iters = static_cast<int>(res.trace.records.size());
    const auto newton_outer = std::count_if(res.trace.records.begin(), res.trace.records.end(),
                                            [](const OuterRecord& r) { return r.newton_active; });
    out.record.newton_start_frac =
        out.record.outer_iters > 0 ? static_cast<double>(newton_outer) / out.record.outer_iters : 0.0;
    out.record.sparsity = sparsity_percent(q);
    if (const auto* spca = dynamic_cast<const SpcaProblem*>(&problem)) {
      out.record.cpav = cpav(spca->instance().A, q);
    }
    out.inequality_violation = res.residuals.inequality_violation;
    out.orthonormality = orthonormality_error(q);
    out.trace = std::move(res.trace);
  } catch (const std::exception& e) {
    out.converged = false;
    out.error = e.what();
    out.record.loss = out.record.feasibility = out.record.stationarity =
        std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

unsigned thread_limit() {
  unsigned limit = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MANIFOLD_ALM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) limit = static_cast<unsigned>(v);
  }
  return limit;
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::unique_ptr<ProblemOracle> problem = make_problem(cfg.instance);
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(cfg.n_runs));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < cfg.n_runs; i = next++) {
      outcomes[static_cast<std::size_t>(i)] =
          run_single(cfg, *problem, cfg.seed + static_cast<std::uint64_t>(i));
    }
  };
  const unsigned n_threads = std::min<unsigned>(thread_limit(), static_cast<unsigned>(cfg.n_runs));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

// --- Persistence -----------------------------------------------------------------------------

ResultFormat parse_result_format(std::string_view name) {
  if (name == "csv") return ResultFormat::Csv;
  if (name == "json") return ResultFormat::Json;
  throw std::invalid_argument("unknown output format '" + std::string(name) + "'");
}

void write_results_csv(const std::vector<ResultRecord>& records, std::ostream& out) {
  out << kResultColumns << '\n';
  for (const auto& r : records) {
    out << r.problem << ',' << r.n << ',' << r.r << ',' << format_double(r.mu) << ',' << r.seed << ','
        << format_double(r.loss) << ',' << format_double(r.feasibility) << ','
        << format_double(r.stationarity) << ',' << format_double(r.time_s) << ',' << r.outer_iters
        << ',' << format_double(r.newton_start_frac) << ',' << format_double(r.sparsity) << ','
        << format_double(r.cpav) << '\n';
  }
}

void write_results_json(const std::vector<ResultRecord>& records, std::ostream& out) {
  // Same key order as the CSV columns.
  nlohmann::ordered_json ordered = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["problem"] = r.problem;
    j["n"] = r.n;
    j["r"] = r.r;
    j["mu"] = std::isfinite(r.mu) ? nlohmann::ordered_json(r.mu) : nlohmann::ordered_json(nullptr);
    j["seed"] = r.seed;
    for (const auto& [key, value] : {std::pair{"loss", r.loss}, {"feasibility", r.feasibility},
                                     {"stationarity", r.stationarity}, {"time_s", r.time_s}}) {
      j[key] = std::isfinite(value) ? nlohmann::ordered_json(value) : nlohmann::ordered_json(nullptr);
    }
    j["outer_iters"] = r.outer_iters;
    for (const auto& [key, value] : {std::pair{"newton_start_frac", r.newton_start_frac},
                                     {"sparsity", r.sparsity}, {"cpav", r.cpav}}) {
      j[key] = std::isfinite(value) ? nlohmann::ordered_json(value) : nlohmann::ordered_json(nullptr);
    }
    ordered.push_back(std::move(j));
  }
  out << ordered.dump(2) << '\n';
}

void write_trace_csv(const std::vector<AlmTrace>& traces, std::ostream& out) {
  out << kTraceColumns << '\n';
  for (const auto& trace : traces) {
    for (const auto& rec : trace.records) {
      out << rec.iter << ',' << format_double(rec.sigma) << ',' << format_double(rec.delta) << ','
          << format_double(rec.feas) << ',' << format_double(rec.stat) << ','
          << format_double(rec.loss) << ',' << (rec.newton_active ? 1 : 0) << ',' << rec.cg_iters
          << '\n';
    }
  }
}

std::vector<ResultRecord> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultColumns) {
    throw std::invalid_argument("read_results_csv: unexpected header");
  }
  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 13) throw std::invalid_argument("read_results_csv: expected 13 fields");
    ResultRecord r;
    r.problem = cells[0];
    r.n = parse_integer("n", cells[1]);
    r.r = parse_integer("r", cells[2]);
    r.mu = parse_double("mu", cells[3]);
    r.seed = std::stoull(cells[4]);
    r.loss = parse_double("loss", cells[5]);
    r.feasibility = parse_double("feasibility", cells[6]);
    r.stationarity = parse_double("stationarity", cells[7]);
    r.time_s = parse_double("time_s", cells[8]);
    r.outer_iters = parse_int("outer_iters", cells[9]);
    r.newton_start_frac = parse_double("newton_start_frac", cells[10]);
    r.sparsity = parse_double("sparsity", cells[11]);
    r.cpav = parse_double("cpav", cells[12]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ResultRecord> read_results_json(std::istream& in) {
  const nlohmann::json arr = nlohmann::json::parse(in);
  std::vector<ResultRecord> out;
  for (const auto& j : arr) {
    ResultRecord r;
    r.problem = j.at("problem").get<std::string>();
    r.n = j.at("n").get<Eigen::Index>();
    r.r = j.at("r").get<Eigen::Index>();
    r.mu = json_number(j, "mu");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.loss = json_number(j, "loss");
    r.feasibility = json_number(j, "feasibility");
    r.stationarity = json_number(j, "stationarity");
    r.time_s = json_number(j, "time_s");
    r.outer_iters = j.at("outer_iters").get<int>();
    r.newton_start_frac = json_number(j, "newton_start_frac");
    r.sparsity = json_number(j, "sparsity");
    r.cpav = json_number(j, "cpav");
    out.push_back(std::move(r));
  }
  return out;
}

void emit_results(const std::vector<RunOutcome>& outcomes, ResultFormat format, const std::string& path) {
  if (outcomes.empty()) throw std::invalid_argument("emit_results: no records");
  std::vector<ResultRecord> records;
  std::vector<AlmTrace> traces;
  for (const auto& o : outcomes) {
    records.push_back(o.record);
    traces.push_back(o.trace);
  }
  {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    if (format == ResultFormat::Csv) {
      write_results_csv(records, out);
    } else {
      write_results_json(records, out);
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
  }
  const std::string trace_path = path + ".trace.csv";
  std::ofstream trace(trace_path);
  if (!trace) throw std::runtime_error("cannot write '" + trace_path + "'");
  write_trace_csv(traces, trace);
  if (!trace) throw std::runtime_error("write failed for '" + trace_path + "'");
}

}  // namespace malm
