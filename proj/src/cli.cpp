#include "fpsearch/cli.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpsearch/analytic.hpp"
#include "fpsearch/harness.hpp"
#include "fpsearch/search.hpp"

namespace fpsearch::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Formatting

std::string fmt12(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Shortest round-trip of the 12-significant-digit value.
json num(double v) {
  if (!std::isfinite(v)) return fmt12(v);
  return std::strtod(fmt12(v).c_str(), nullptr);
}

// Exact text form used when a value must replay bit-for-bit.
std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0' || errno != 0) {
      throw UsageError("not a number: '" + item + "'");
    }
    values.push_back(v);
  }
  return values;
}

std::vector<std::uint64_t> parse_index_list(const std::string& text) {
  std::vector<std::uint64_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    errno = 0;
    const auto v = std::strtoull(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || errno != 0 || item.front() == '-') {
      throw UsageError("not an index: '" + item + "'");
    }
    values.push_back(v);
  }
  return values;
}

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------------------
// Shared search flags

struct SearchFlags {
  std::optional<int> n_qubits;
  std::optional<std::uint64_t> m;
  std::optional<double> p;
  std::string targets;
  std::string mode = "ideal";
  std::string order = "last-sample";
  double set_val = 1.0;
  double eta = 1.0 / 3.0;
  std::uint64_t burn_in = 25;
  std::optional<std::uint64_t> max_iterations;
  std::uint64_t max_restarts = 1000;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned workers = 0;
};

void add_algorithm_flags(CLI::App* cmd, SearchFlags& f) {
  cmd->add_option("--mode", f.mode, "Engine: ideal | full | dephased")->capture_default_str();
  cmd->add_option("--order", f.order, "Measured state: last-sample | after-rotation")
      ->capture_default_str();
  cmd->add_option("--set-val", f.set_val, "Corrected-ratio threshold")->capture_default_str();
  cmd->add_option("--eta", f.eta, "Cloner reduction factor in (0, 1/3]")->capture_default_str();
  cmd->add_option("--burn-in", f.burn_in, "Samples before the rule is evaluated")
      ->capture_default_str();
  cmd->add_option("--max-iterations", f.max_iterations,
                  "Samples per attempt before a forced measurement");
  cmd->add_option("--max-restarts", f.max_restarts, "Restarts after a wrong measurement")
      ->capture_default_str();
}

void add_seed_flags(CLI::App* cmd, SearchFlags& f) {
  cmd->add_option("--trials", f.trials, "Independent trials")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Master seed")->envname(kSeedEnv)->capture_default_str();
  cmd->add_option("--workers", f.workers, "Worker threads (0 = all cores)");
}

void add_problem_flags(CLI::App* cmd, SearchFlags& f) {
  cmd->add_option("--n", f.n_qubits, "Number of qubits (N = 2^n)");
  cmd->add_option("--m", f.m, "Number of marked states");
  cmd->add_option("--p", f.p, "Target fraction m/N (abstract problem)");
  cmd->add_option("--targets", f.targets, "Comma-separated marked indices (with --n)");
}

search::AlgorithmConfig to_config(const SearchFlags& f) {
  search::AlgorithmConfig cfg;
  try {
    cfg.mode = search::parse_engine_mode(f.mode);
    cfg.order = search::parse_measure_order(f.order);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.set_val = f.set_val;
  cfg.eta = f.eta;
  cfg.burn_in = f.burn_in;
  cfg.max_iterations_per_attempt = f.max_iterations;
  cfg.max_restarts = f.max_restarts;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

search::ProblemInstance to_problem(const SearchFlags& f, search::EngineMode mode) {
  if (f.p && (f.n_qubits || f.m || !f.targets.empty())) {
    throw UsageError("--p cannot be combined with --n, --m or --targets");
  }
  try {
    if (f.p) {
      if (mode == search::EngineMode::kFullStatevector) {
        throw UsageError("full statevector mode needs --n and --m (or --targets)");
      }
      return search::ProblemInstance::from_fraction(*f.p);
    }
    if (!f.n_qubits) throw UsageError("give either --p or --n with --m/--targets");
    if (mode == search::EngineMode::kFullStatevector &&
        *f.n_qubits > engine::Register::kMaxQubits) {
      throw UsageError("full statevector mode supports at most 24 qubits");
    }
    std::vector<std::uint64_t> targets;
    if (!f.targets.empty()) {
      targets = parse_index_list(f.targets);
      if (f.m && *f.m != targets.size()) throw UsageError("--m disagrees with --targets");
    } else {
      if (!f.m) throw UsageError("--n needs --m or --targets");
      if (*f.n_qubits > 30 && mode != search::EngineMode::kFullStatevector) {
        if (*f.n_qubits > 62) throw UsageError("--n must be at most 62");
        return search::ProblemInstance::from_counts(*f.m, std::uint64_t{1} << *f.n_qubits);
      }
      if (*f.m < 1 || *f.m > (std::uint64_t{1} << *f.n_qubits)) {
        throw UsageError("--m must satisfy 1 <= m <= 2^n");
      }
      targets.resize(*f.m);
      for (std::uint64_t i = 0; i < *f.m; ++i) targets[i] = i;
    }
    return search::ProblemInstance::from_qubits(*f.n_qubits, std::move(targets));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> algorithm_args(const SearchFlags& f) {
  std::vector<std::string> args = {"--mode",     f.mode,
                                   "--order",    f.order,
                                   "--set-val",  exact(f.set_val),
                                   "--eta",      exact(f.eta),
                                   "--burn-in",  std::to_string(f.burn_in),
                                   "--max-restarts", std::to_string(f.max_restarts)};
  if (f.max_iterations) {
    args.insert(args.end(), {"--max-iterations", std::to_string(*f.max_iterations)});
  }
  return args;
}

std::vector<std::string> problem_args(const SearchFlags& f) {
  std::vector<std::string> args;
  if (f.p) args.insert(args.end(), {"--p", exact(*f.p)});
  if (f.n_qubits) args.insert(args.end(), {"--n", std::to_string(*f.n_qubits)});
  if (f.m) args.insert(args.end(), {"--m", std::to_string(*f.m)});
  if (!f.targets.empty()) args.insert(args.end(), {"--targets", f.targets});
  return args;
}

json config_json(const search::AlgorithmConfig& cfg) {
  json j;
  j["mode"] = std::string(search::to_string(cfg.mode));
  j["measure_order"] = std::string(search::to_string(cfg.order));
  j["set_val"] = num(cfg.set_val);
  j["eta"] = num(cfg.eta);
  j["burn_in"] = cfg.burn_in;
  j["max_iterations_per_attempt"] =
      cfg.max_iterations_per_attempt ? json(*cfg.max_iterations_per_attempt) : json("default");
  j["max_restarts"] = cfg.max_restarts;
  return j;
}

json problem_json(const search::ProblemInstance& problem, const search::AlgorithmConfig& cfg) {
  json j;
  j["p"] = num(problem.p());
  j["N"] = problem.n();
  j["m"] = problem.m();
  j["n_qubits"] = problem.n_qubits() ? json(*problem.n_qubits()) : json(nullptr);
  j["iteration_cap"] = cfg.iteration_cap(problem);
  return j;
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::string> output_args;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
};

void write_manifest(const fs::path& path, const Manifest& m) {
  json j;
  j["tool"] = "fpsearch";
  j["tool_version"] = kToolVersion;
  j["schema_version"] = kSchemaVersion;
  j["command"] = m.command;
  j["args"] = m.args;
  j["output_args"] = m.output_args;
  j["config"] = m.config;
  j["master_seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["timestamp"] = timestamp_utc();
  j["outputs"] = m.outputs;
  write_text(path, j.dump(2) + "\n");
}

// Writes CSV to `csv_path` with a manifest beside it, or to `out` when empty.
void emit_csv(const std::string& csv_path, const std::string& body, Manifest manifest,
              std::ostream& out) {
  if (csv_path.empty()) {
    out << body;
    return;
  }
  write_text(csv_path, body);
  manifest.output_args = {"--csv", csv_path};
  manifest.outputs = {csv_path};
  write_manifest(csv_path + ".manifest.json", manifest);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_table1(const std::string& csv_path, std::ostream& out) {
  const auto cells = analytic::table1();
  std::ostringstream csv;
  csv << "case,p,g_target,ratio_closed,ratio_paper\n";
  for (const auto& c : cells) {
    csv << c.case_label << ',' << fmt12(c.p) << ',' << fmt12(c.g_target) << ','
        << fmt12(c.ratio_closed) << ',' << fmt12(c.ratio_paper) << '\n';
  }
  out << "case  P             g=0.5 (printed)    g=0.75 (printed)   g=1.0 (printed)\n";
  for (std::size_t row = 0; row < 3; ++row) {
    char line[160];
    const auto* c = &cells[row * 3];
    std::snprintf(line, sizeof line, "%-5s %-13.6g %7.4f (%4.2f)     %7.4f (%4.2f)     %7.4f (%4.2f)\n",
                  c[0].case_label.c_str(), c[0].p, c[0].ratio_closed, c[0].ratio_paper,
                  c[1].ratio_closed, c[1].ratio_paper, c[2].ratio_closed, c[2].ratio_paper);
    out << line;
  }
  if (!csv_path.empty()) {
    emit_csv(csv_path, csv.str(), Manifest{"table1", {}, {}, json::object(), {}, {}}, out);
  }
  return kExitOk;
}

int cmd_analytic(double p_value, std::optional<double> g, std::optional<double> ratio,
                 std::ostream& out, std::ostream& err) {
  if (g.has_value() == ratio.has_value()) {
    throw UsageError("give exactly one of --g or --ratio");
  }
  std::optional<analytic::TargetFraction> p;
  try {
    p.emplace(p_value);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json j;
  j["p"] = num(p->p());
  j["theta"] = num(p->theta());
  if (g) {
    if (!(*g >= p->p()) || *g > 1.0) throw UsageError("--g must lie in [p, 1]");
    const auto stop = analytic::StopAngle::from_probability(*g);
    j["g"] = num(*g);
    j["x"] = num(stop.x);
    j["ratio"] = num(analytic::expected_ratio_closed(*p, stop));
  } else {
    try {
      const double solved = analytic::solve_stop_probability(*p, *ratio);
      j["ratio"] = num(*ratio);
      j["g"] = num(solved);
      j["x"] = num(analytic::StopAngle::from_probability(solved).x);
    } catch (const UnsatisfiableError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  out << j.dump() << '\n';
  return kExitOk;
}

json stats_json(const harness::TrialStats& s) {
  json j;
  j["trials"] = s.trials;
  j["successes"] = s.successes;
  j["success_rate"] = num(s.success_rate);
  j["ci_lo"] = num(s.success_ci.lo);
  j["ci_hi"] = num(s.success_ci.hi);
  j["attempts"] = s.attempts;
  j["attempt_successes"] = s.attempt_successes;
  j["per_attempt_success_rate"] = num(s.per_attempt_success_rate);
  j["per_attempt_ci_lo"] = num(s.per_attempt_ci.lo);
  j["per_attempt_ci_hi"] = num(s.per_attempt_ci.hi);
  j["mean_queries"] = num(s.mean_queries);
  j["median_queries"] = num(s.median_queries);
  j["mean_restarts"] = num(s.mean_restarts);
  j["mean_g_at_stop"] = num(s.mean_g_at_stop);
  j["mean_g_measured"] = num(s.mean_g_measured);
  j["forced_measurements"] = s.forced_measurements;
  j["restarts_exhausted"] = s.restarts_exhausted;
  json hist = json::array();
  for (const auto& [r, count] : s.stop_histogram) hist.push_back({{"r", r}, {"count", count}});
  j["stop_histogram"] = hist;
  return j;
}

json trial_json(std::uint64_t index, const search::SearchOutcome& o) {
  json horizons = json::array();
  for (const auto& a : o.attempts) horizons.push_back(a.stop_horizon);
  return {{"trial", index},
          {"found", o.found},
          {"measured_index", o.measured_index},
          {"restarts", o.restarts},
          {"grover_iterations", o.grover_iterations_total},
          {"oracle_queries", o.oracle_queries_total},
          {"stop_horizons", horizons}};
}

harness::Algorithm parse_algorithm(const std::string& text) {
  if (text == "proposed") return harness::Algorithm::kProposed;
  if (text == "canonical") return harness::Algorithm::kCanonical;
  throw UsageError("unknown algorithm '" + text + "' (proposed | canonical)");
}

// Summary lines go to stdout unless stdout already carries CSV.
std::ostream& summary_stream(const std::string& csv_path, std::ostream& out, std::ostream& err) {
  return csv_path.empty() ? err : out;
}

int cmd_run(const SearchFlags& f, const std::string& algorithm, const std::string& out_dir,
            bool record_trials, std::ostream& out) {
  const auto cfg = to_config(f);
  const auto problem = to_problem(f, cfg.mode);
  harness::MonteCarloOptions opts;
  opts.trials = f.trials;
  opts.seed = f.seed;
  opts.workers = f.workers;
  opts.algorithm = parse_algorithm(algorithm);
  if (opts.trials == 0) throw UsageError("--trials must be positive");

  const auto outcomes = harness::run_trials(problem, cfg, opts);
  const auto stats = harness::summarize(problem, outcomes);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "run";
  j["algorithm"] = algorithm;
  j["problem"] = problem_json(problem, cfg);
  j["config"] = config_json(cfg);
  j["master_seed"] = f.seed;
  j["stats"] = stats_json(stats);
  if (record_trials) {
    json records = json::array();
    for (std::size_t i = 0; i < outcomes.size(); ++i) records.push_back(trial_json(i, outcomes[i]));
    j["trial_records"] = records;
  }

  const fs::path dir(out_dir);
  const fs::path results = dir / "results.json";
  write_text(results, j.dump(2) + "\n");

  Manifest m;
  m.command = "run";
  m.args = problem_args(f);
  const auto alg = algorithm_args(f);
  m.args.insert(m.args.end(), alg.begin(), alg.end());
  m.args.insert(m.args.end(), {"--algorithm", algorithm, "--trials", std::to_string(f.trials),
                               "--seed", std::to_string(f.seed)});
  if (record_trials) m.args.push_back("--record-trials");
  m.output_args = {"--out", out_dir};
  m.config = config_json(cfg);
  m.seed = f.seed;
  m.outputs = {results.string()};
  write_manifest(dir / "manifest.json", m);

  out << "run " << algorithm << " p=" << fmt12(problem.p()) << " trials=" << stats.trials
      << " success_rate=" << fmt12(stats.success_rate) << " ci=[" << fmt12(stats.success_ci.lo)
      << ", " << fmt12(stats.success_ci.hi) << "] per_attempt="
      << fmt12(stats.per_attempt_success_rate) << " mean_queries=" << fmt12(stats.mean_queries)
      << " mean_restarts=" << fmt12(stats.mean_restarts) << " -> " << results.string() << '\n';
  return stats.restarts_exhausted > 0 ? kExitRuntimeCap : kExitOk;
}

struct GridFlags {
  std::string p_grid;
  std::optional<double> p_min;
  std::optional<double> p_max;
  std::optional<int> points;
  std::optional<int> n_min;
  std::optional<int> n_max;
};

std::vector<search::ProblemInstance> sweep_problems(const GridFlags& g, search::EngineMode mode) {
  const bool by_p = !g.p_grid.empty() || g.p_min || g.p_max || g.points;
  const bool by_n = g.n_min || g.n_max;
  if (by_p && by_n) throw UsageError("give either a p grid or --nmin/--nmax, not both");
  std::vector<search::ProblemInstance> problems;
  try {
    if (by_n) {
      if (!g.n_min || !g.n_max) throw UsageError("--nmin and --nmax go together");
      if (*g.n_min < 1 || *g.n_max < *g.n_min || *g.n_max > 62) {
        throw UsageError("exponents must satisfy 1 <= nmin <= nmax <= 62");
      }
      for (int e = *g.n_min; e <= *g.n_max; ++e) {
        if (mode == search::EngineMode::kFullStatevector) {
          if (e > engine::Register::kMaxQubits) {
            throw UsageError("full statevector mode supports at most 24 qubits");
          }
          problems.push_back(search::ProblemInstance::from_qubits(e, {0}));
        } else {
          problems.push_back(search::ProblemInstance::from_counts(1, std::uint64_t{1} << e));
        }
      }
      return problems;
    }
    if (mode == search::EngineMode::kFullStatevector) {
      throw UsageError("full statevector sweeps need --nmin/--nmax");
    }
    std::vector<double> grid;
    if (!g.p_grid.empty()) {
      if (g.p_min || g.p_max || g.points) throw UsageError("--p-grid excludes --pmin/--pmax/--points");
      grid = parse_double_list(g.p_grid);
    } else {
      grid = harness::geometric_grid(g.p_min.value_or(std::ldexp(1.0, -10)), g.p_max.value_or(0.5),
                                     g.points.value_or(9));
    }
    for (double p : grid) problems.push_back(search::ProblemInstance::from_fraction(p));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return problems;
}

std::vector<std::string> grid_args(const GridFlags& g) {
  std::vector<std::string> args;
  if (!g.p_grid.empty()) args.insert(args.end(), {"--p-grid", g.p_grid});
  if (g.p_min) args.insert(args.end(), {"--pmin", exact(*g.p_min)});
  if (g.p_max) args.insert(args.end(), {"--pmax", exact(*g.p_max)});
  if (g.points) args.insert(args.end(), {"--points", std::to_string(*g.points)});
  if (g.n_min) args.insert(args.end(), {"--nmin", std::to_string(*g.n_min)});
  if (g.n_max) args.insert(args.end(), {"--nmax", std::to_string(*g.n_max)});
  return args;
}

int cmd_sweep(const SearchFlags& f, const GridFlags& g, const std::string& algorithm,
              const std::string& csv_path, std::ostream& out, std::ostream& err) {
  const auto cfg = to_config(f);
  const auto problems = sweep_problems(g, cfg.mode);
  harness::MonteCarloOptions opts;
  opts.trials = f.trials;
  opts.seed = f.seed;
  opts.workers = f.workers;
  opts.algorithm = parse_algorithm(algorithm);
  if (opts.trials == 0) throw UsageError("--trials must be positive");

  const auto rows = harness::sweep(problems, cfg, opts);
  std::ostringstream csv;
  csv << "p,trials,success_rate,ci_lo,ci_hi,mean_queries,mean_restarts\n";
  std::uint64_t exhausted = 0;
  for (const auto& row : rows) {
    const auto& s = row.stats;
    csv << fmt12(row.p) << ',' << s.trials << ',' << fmt12(s.success_rate) << ','
        << fmt12(s.success_ci.lo) << ',' << fmt12(s.success_ci.hi) << ','
        << fmt12(s.mean_queries) << ',' << fmt12(s.mean_restarts) << '\n';
    exhausted += s.restarts_exhausted;
  }

  Manifest m;
  m.command = "sweep";
  m.args = grid_args(g);
  const auto alg = algorithm_args(f);
  m.args.insert(m.args.end(), alg.begin(), alg.end());
  m.args.insert(m.args.end(), {"--algorithm", algorithm, "--trials", std::to_string(f.trials),
                               "--seed", std::to_string(f.seed)});
  m.config = config_json(cfg);
  m.seed = f.seed;
  emit_csv(csv_path, csv.str(), m, out);
  summary_stream(csv_path, out, err) << "sweep rows=" << rows.size() << " trials/row=" << f.trials
                                     << (csv_path.empty() ? "" : " -> " + csv_path) << '\n';
  return exhausted > 0 ? kExitRuntimeCap : kExitOk;
}

int cmd_scaling(const SearchFlags& f, int n_min, int n_max, const std::string& csv_path,
                std::ostream& out, std::ostream& err) {
  const auto cfg = to_config(f);
  if (cfg.mode != search::EngineMode::kIdealized2d) {
    throw UsageError("scaling uses the noise-free 2-D expectation; --mode must be ideal");
  }
  std::vector<harness::ScalingPoint> points;
  try {
    points = harness::scaling_points(n_min, n_max, cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::ostringstream csv;
  csv << "N,r_stop,queries_proposed,queries_canonical,ratio\n";
  for (const auto& pt : points) {
    csv << pt.n << ',' << pt.r_stop << ',' << fmt12(pt.queries_proposed) << ','
        << fmt12(pt.queries_canonical) << ',' << fmt12(pt.ratio) << '\n';
  }

  Manifest m;
  m.command = "scaling";
  m.args = {"--nmin", std::to_string(n_min), "--nmax", std::to_string(n_max)};
  const auto alg = algorithm_args(f);
  m.args.insert(m.args.end(), alg.begin(), alg.end());
  m.config = config_json(cfg);
  emit_csv(csv_path, csv.str(), m, out);

  auto& s = summary_stream(csv_path, out, err);
  if (points.size() >= 4 && std::log2(static_cast<double>(points.back().n) /
                                      static_cast<double>(points.front().n)) >= 3.0) {
    const auto fit = harness::scaling_fit(points);
    const auto& last = points.back();
    s << "scaling slope=" << fmt12(fit.slope) << " intercept=" << fmt12(fit.intercept)
      << " limiting_ratio=" << fmt12(fit.limiting_ratio) << " r_stop/sqrtN="
      << fmt12(static_cast<double>(last.r_stop) / std::sqrt(static_cast<double>(last.n)))
      << '\n';
  } else {
    s << "scaling rows=" << points.size() << " (too few octaves for a fit)\n";
  }
  return kExitOk;
}

int cmd_expectation(const SearchFlags& f, const std::string& grid_text, const std::string& csv_path,
                    std::ostream& out, std::ostream& err) {
  const auto cfg = to_config(f);
  if (cfg.mode != search::EngineMode::kIdealized2d) {
    throw UsageError("expectation runs are defined in the 2-D picture; --mode must be ideal");
  }
  const auto grid =
      grid_text == "default" ? harness::default_probability_grid() : parse_double_list(grid_text);
  std::ostringstream csv;
  csv << "p,r_stop,g_at_stop,g_measured,ratio_at_stop,oracle_queries,stopped\n";
  std::size_t not_stopped = 0;
  double min_g = 1.0;
  for (double p : grid) {
    std::optional<search::ProblemInstance> problem;
    try {
      problem.emplace(search::ProblemInstance::from_fraction(p));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const auto run = search::deterministic_expectation_run(*problem, cfg);
    csv << fmt12(problem->p()) << ',' << run.r_stop << ',' << fmt12(run.g_at_stop) << ','
        << fmt12(run.g_measured) << ',' << fmt12(run.ratio_at_stop) << ','
        << run.oracle_queries() << ',' << (run.stopped ? 1 : 0) << '\n';
    if (!run.stopped) ++not_stopped;
    min_g = std::min(min_g, run.g_at_stop);
  }

  Manifest m;
  m.command = "expectation";
  m.args = {"--grid", grid_text};
  const auto alg = algorithm_args(f);
  m.args.insert(m.args.end(), alg.begin(), alg.end());
  m.config = config_json(cfg);
  emit_csv(csv_path, csv.str(), m, out);
  summary_stream(csv_path, out, err)
      << "expectation rows=" << grid.size() << " min_g_at_stop=" << fmt12(min_g)
      << " not_stopped=" << not_stopped << '\n';
  return not_stopped > 0 ? kExitRuntimeCap : kExitOk;
}

int cmd_oracle(const SearchFlags& f, std::optional<std::uint64_t> horizon,
               const std::string& csv_path, std::ostream& out, std::ostream& err) {
  const auto cfg = to_config(f);
  if (cfg.mode != search::EngineMode::kIdealized2d) {
    throw UsageError("the exact oracle models the 2-D dynamics; --mode must be ideal");
  }
  if (!f.p) throw UsageError("oracle needs --p");
  std::optional<search::ProblemInstance> problem;
  try {
    problem.emplace(search::ProblemInstance::from_fraction(*f.p));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::uint64_t h = horizon.value_or(cfg.iteration_cap(*problem));
  harness::StopTimeDistribution dist;
  try {
    dist = harness::exact_stop_distribution(problem->fraction(), cfg, h);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::ostringstream csv;
  csv << "r,prob_stop,g_at_stop\n";
  for (std::size_t r = 0; r < dist.prob_stop.size(); ++r) {
    csv << r << ',' << fmt12(dist.prob_stop[r]) << ',' << fmt12(dist.g_at_stop[r]) << '\n';
  }

  Manifest m;
  m.command = "oracle";
  m.args = {"--p", exact(*f.p), "--horizon", std::to_string(h)};
  const auto alg = algorithm_args(f);
  m.args.insert(m.args.end(), alg.begin(), alg.end());
  m.config = config_json(cfg);
  emit_csv(csv_path, csv.str(), m, out);
  summary_stream(csv_path, out, err)
      << "oracle horizon=" << h << " stopped_mass=" << fmt12(dist.stopped_mass())
      << " truncated_mass=" << fmt12(dist.truncated_mass)
      << " per_attempt_success=" << fmt12(dist.per_attempt_success()) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Config files and replay

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Pulls every `--config FILE` out of args and appends its key=value pairs as
// flags, except where the command line already sets the same flag.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> files;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      files.push_back(args[++i]);
    } else if (args[i].rfind("--config=", 0) == 0) {
      files.push_back(args[i].substr(9));
    } else {
      kept.push_back(args[i]);
    }
  }
  std::vector<std::string> extra;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot read config file " + file);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError(file + ":" + std::to_string(lineno) + ": expected key=value");
      }
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      for (char& c : key) {
        if (c == '_') c = '-';
      }
      if (key.rfind("--", 0) != 0) key = "--" + key;
      if (has_flag(kept, key) || has_flag(extra, key)) continue;
      extra.push_back(key + "=" + value);
    }
  }
  kept.insert(kept.end(), extra.begin(), extra.end());
  return kept;
}

std::vector<std::string> replay_args(const std::string& manifest_path, const std::string& out_dir,
                                     const std::string& csv_path) {
  std::ifstream in(manifest_path);
  if (!in) throw UsageError("cannot read manifest " + manifest_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed manifest: " + std::string(e.what()));
  }
  if (!j.contains("command") || !j.contains("args") || j.value("tool", "") != "fpsearch") {
    throw UsageError("not an fpsearch manifest: " + manifest_path);
  }
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw UsageError("unsupported manifest schema version");
  }
  std::vector<std::string> args{j["command"].get<std::string>()};
  if (args.front() == "replay") throw UsageError("manifest cannot replay itself");
  for (const auto& a : j["args"]) args.push_back(a.get<std::string>());
  if (!out_dir.empty()) {
    args.insert(args.end(), {"--out", out_dir});
  } else if (!csv_path.empty()) {
    args.insert(args.end(), {"--csv", csv_path});
  } else {
    for (const auto& a : j.value("output_args", json::array())) args.push_back(a.get<std::string>());
  }
  return args;
}

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err, int depth);

int run_parsed(std::vector<std::string> args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Measurement-based fixed-point quantum search simulator", "fpsearch"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.add_option("--config", "key=value file; command-line flags win");

  // table1
  std::string table_csv;
  auto* table = app.add_subcommand("table1", "Closed-form ratio table");
  table->add_option("--csv", table_csv, "Also write the table as CSV");

  // analytic
  double an_p = 0.0;
  std::optional<double> an_g;
  std::optional<double> an_ratio;
  auto* analytic_cmd = app.add_subcommand("analytic", "Evaluate or invert the expected ratio");
  analytic_cmd->add_option("--p", an_p, "Target fraction")->required();
  analytic_cmd->add_option("--g", an_g, "Success probability at the stop point");
  analytic_cmd->add_option("--ratio", an_ratio, "Expected corrected ratio");

  // run
  SearchFlags run_f;
  std::string run_alg = "proposed";
  std::string run_out = ".";
  bool run_record = false;
  auto* run = app.add_subcommand("run", "Monte-Carlo trials of one problem");
  add_problem_flags(run, run_f);
  add_algorithm_flags(run, run_f);
  add_seed_flags(run, run_f);
  run->add_option("--algorithm", run_alg, "proposed | canonical")->capture_default_str();
  run->add_option("--out", run_out, "Output directory")->capture_default_str();
  run->add_flag("--record-trials", run_record, "Include per-trial records");

  // sweep
  SearchFlags sw_f;
  GridFlags sw_g;
  std::string sw_alg = "proposed";
  std::string sw_csv;
  auto* sw = app.add_subcommand("sweep", "Monte-Carlo success rate across a grid");
  add_algorithm_flags(sw, sw_f);
  add_seed_flags(sw, sw_f);
  sw->add_option("--p-grid", sw_g.p_grid, "Comma-separated target fractions");
  sw->add_option("--pmin", sw_g.p_min, "Smallest p of a geometric grid (default 2^-10)");
  sw->add_option("--pmax", sw_g.p_max, "Largest p of a geometric grid (default 0.5)");
  sw->add_option("--points", sw_g.points, "Geometric grid size (default 9)");
  sw->add_option("--nmin", sw_g.n_min, "Smallest exponent, m = 1 and N = 2^n");
  sw->add_option("--nmax", sw_g.n_max, "Largest exponent");
  sw->add_option("--algorithm", sw_alg, "proposed | canonical")->capture_default_str();
  sw->add_option("--csv", sw_csv, "CSV output path (stdout when omitted)");

  // scaling
  SearchFlags sc_f;
  sc_f.burn_in = 0;
  int sc_min = 10;
  int sc_max = 20;
  std::string sc_csv;
  auto* sc = app.add_subcommand("scaling", "Query scaling of the noise-free run, m = 1");
  add_algorithm_flags(sc, sc_f);
  sc->add_option("--nmin", sc_min, "Smallest exponent of N")->capture_default_str();
  sc->add_option("--nmax", sc_max, "Largest exponent of N")->capture_default_str();
  sc->add_option("--csv", sc_csv, "CSV output path (stdout when omitted)");

  // expectation
  SearchFlags ex_f;
  ex_f.burn_in = 0;
  std::string ex_grid = "default";
  std::string ex_csv;
  auto* ex = app.add_subcommand("expectation", "Noise-free stop point per target fraction");
  add_algorithm_flags(ex, ex_f);
  ex->add_option("--grid", ex_grid, "'default' or comma-separated p values")->capture_default_str();
  ex->add_option("--csv", ex_csv, "CSV output path (stdout when omitted)");

  // oracle
  SearchFlags or_f;
  std::optional<std::uint64_t> or_horizon;
  std::string or_csv;
  auto* orc = app.add_subcommand("oracle", "Exact stop-time distribution of one attempt");
  add_algorithm_flags(orc, or_f);
  orc->add_option("--p", or_f.p, "Target fraction")->required();
  orc->add_option("--horizon", or_horizon, "Samples tracked (default: iteration cap)");
  orc->add_option("--csv", or_csv, "CSV output path (stdout when omitted)");

  // replay
  std::string rp_manifest;
  std::string rp_out;
  std::string rp_csv;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rp->add_option("manifest", rp_manifest, "manifest.json path")->required();
  auto* rp_out_opt = rp->add_option("--out", rp_out, "Override the output directory");
  rp->add_option("--csv", rp_csv, "Override the CSV path")->excludes(rp_out_opt);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*table) return cmd_table1(table_csv, out);
  if (*analytic_cmd) return cmd_analytic(an_p, an_g, an_ratio, out, err);
  if (*run) return cmd_run(run_f, run_alg, run_out, run_record, out);
  if (*sw) return cmd_sweep(sw_f, sw_g, sw_alg, sw_csv, out, err);
  if (*sc) return cmd_scaling(sc_f, sc_min, sc_max, sc_csv, out, err);
  if (*ex) return cmd_expectation(ex_f, ex_grid, ex_csv, out, err);
  if (*orc) return cmd_oracle(or_f, or_horizon, or_csv, out, err);
  if (*rp) {
    if (depth > 0) throw UsageError("nested replay");
    return dispatch(replay_args(rp_manifest, rp_out, rp_csv), out, err, depth + 1);
  }
  return kExitUsage;
}

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err, int depth) {
  try {
    return run_parsed(expand_config(std::move(args)), out, err, depth);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsatisfiableError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ThresholdUnreachable& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeCap;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err, 0);
}

}  // namespace fpsearch::cli
