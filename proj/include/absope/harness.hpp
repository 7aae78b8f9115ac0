#pragma once

// Experiment sweeps (estimate error tables) and the theorem verification
// suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "absope/abstraction.hpp"
#include "absope/error.hpp"
#include "absope/estimators.hpp"
#include "absope/generators.hpp"
#include "absope/io.hpp"
#include "absope/population.hpp"
#include "absope/rng.hpp"
#include "absope/simulator.hpp"
#include "absope/solver.hpp"

namespace absope {

// ---------------------------------------------------------------------------
// Configuration

struct GeneratorSpec {
  std::string kind = "toy";  // toy | random
  ToySizes sizes;
  std::size_t n_noise = 1;
  std::size_t n_states = 6;  // random only
  std::size_t n_actions = 2;
  double gamma = 0.9;
  double reward_noise_std = 0.0;
  std::string target = "deterministic";  // random only: deterministic | random
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  GeneratorSpec generator;
  std::vector<double> epsilons;
  std::vector<std::size_t> sizes;
  std::size_t horizon = 20;
  std::vector<Method> methods;
  std::vector<std::string> abstractions;  // none | forward | backward | two-step
  std::size_t replications = 1;
  std::uint64_t base_seed = 0;
  double tolerance = 1e-9;
  /// Start the data from p_inf and set rho0 = p_inf, so that every method
  /// targets the same J.
  bool stationary_start = false;
  double smoothing = 0.5;
  std::string output = "results.csv";
};

inline const std::vector<std::string>& abstraction_modes() {
  static const std::vector<std::string> modes{"none", "forward", "backward", "two-step"};
  return modes;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.epsilons.empty()) throw InvalidInput("experiment config: epsilon list is empty");
  if (c.sizes.empty()) throw InvalidInput("experiment config: dataset size list is empty");
  if (c.methods.empty()) throw InvalidInput("experiment config: method list is empty");
  if (c.abstractions.empty()) throw InvalidInput("experiment config: abstraction list is empty");
  if (c.replications == 0) throw InvalidInput("experiment config: replications must be >= 1");
  if (c.horizon == 0) throw InvalidInput("experiment config: horizon must be >= 1");
  for (double e : c.epsilons)
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidInput("experiment config: epsilon outside [0,1]");
  for (std::size_t n : c.sizes)
    if (n == 0) throw InvalidInput("experiment config: dataset sizes must be >= 1");
  for (const auto& a : c.abstractions)
    if (std::find(abstraction_modes().begin(), abstraction_modes().end(), a) ==
        abstraction_modes().end())
      throw InvalidInput("experiment config: unknown abstraction '" + a + "'");
  if (c.generator.kind != "toy" && c.generator.kind != "random")
    throw InvalidInput("experiment config: unknown generator kind '" + c.generator.kind + "'");
}

inline ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("generator")) {
      const Json& g = j["generator"];
      c.generator.kind = g.value("kind", c.generator.kind);
      if (g.contains("sizes")) {
        const auto s = g["sizes"].get<std::vector<std::size_t>>();
        if (s.size() != 3) throw InvalidInput("generator.sizes needs 3 entries");
        c.generator.sizes = {s[0], s[1], s[2]};
      }
      c.generator.n_noise = g.value("n_noise", c.generator.n_noise);
      c.generator.n_states = g.value("n_states", c.generator.n_states);
      c.generator.n_actions = g.value("n_actions", c.generator.n_actions);
      c.generator.gamma = g.value("gamma", c.generator.gamma);
      c.generator.reward_noise_std = g.value("reward_noise_std", c.generator.reward_noise_std);
      c.generator.target = g.value("target", c.generator.target);
      c.generator.seed = g.value("seed", c.generator.seed);
    }
    c.epsilons = j.at("epsilons").get<std::vector<double>>();
    c.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    c.horizon = j.value("horizon", c.horizon);
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    c.abstractions = j.value("abstractions", std::vector<std::string>{"none"});
    c.replications = j.value("replications", c.replications);
    c.base_seed = j.value("seed", c.base_seed);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.stationary_start = j.value("stationary_start", c.stationary_start);
    c.smoothing = j.value("smoothing", c.smoothing);
    c.output = j.value("output", c.output);
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("experiment config: ") + e.what());
  }
  validate_config(c);
  return c;
}

/// Relative output paths are placed under $ABSOPE_OUTPUT_DIR when it is set.
inline std::string resolve_output_path(const std::string& path) {
  const char* dir = std::getenv("ABSOPE_OUTPUT_DIR");
  if (!dir || !*dir || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(dir) / path).string();
}

// ---------------------------------------------------------------------------
// Rows

inline constexpr const char* kCsvVersion = "absope-results v1";
inline constexpr const char* kRowColumns =
    "epsilon,n,horizon,replication,seed,method,abstraction,blocks,estimate,oracle_j,error,"
    "squared_error,status,message";
inline constexpr const char* kSummaryColumns =
    "epsilon,n,method,abstraction,replications,failures,mse,bias,stderr,median_abs_error";

struct ResultRow {
  double epsilon = 0.0;
  std::size_t n = 0;
  std::size_t horizon = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::string abstraction;
  std::size_t blocks = 0;
  double estimate = 0.0;
  double oracle_j = 0.0;
  double error = 0.0;
  double squared_error = 0.0;
  std::string status = "ok";
  std::string message;
};

struct SummaryRow {
  double epsilon = 0.0;
  std::size_t n = 0;
  std::string method;
  std::string abstraction;
  std::size_t replications = 0;
  std::size_t failures = 0;
  double mse = 0.0;
  double bias = 0.0;
  double stderr_error = 0.0;
  double median_abs_error = 0.0;
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

inline std::string to_csv(const ResultRow& r) {
  std::ostringstream os;
  os << detail::fmt_double(r.epsilon) << ',' << r.n << ',' << r.horizon << ',' << r.replication
     << ',' << r.seed << ',' << r.method << ',' << r.abstraction << ',' << r.blocks << ','
     << detail::fmt_double(r.estimate) << ',' << detail::fmt_double(r.oracle_j) << ','
     << detail::fmt_double(r.error) << ',' << detail::fmt_double(r.squared_error) << ','
     << r.status << ',' << detail::sanitize(r.message);
  return os.str();
}

inline ResultRow row_from_csv(const std::string& line) {
  const auto f = detail::split_csv(line);
  if (f.size() != 14) throw InvalidInput("result row has " + std::to_string(f.size()) + " fields");
  ResultRow r;
  try {
    r.epsilon = std::stod(f[0]);
    r.n = std::stoull(f[1]);
    r.horizon = std::stoull(f[2]);
    r.replication = std::stoull(f[3]);
    r.seed = std::stoull(f[4]);
    r.method = f[5];
    r.abstraction = f[6];
    r.blocks = std::stoull(f[7]);
    r.estimate = std::stod(f[8]);
    r.oracle_j = std::stod(f[9]);
    r.error = std::stod(f[10]);
    r.squared_error = std::stod(f[11]);
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("result row: ") + e.what());
  }
  r.status = f[12];
  r.message = f[13];
  return r;
}

inline std::string to_csv(const SummaryRow& s) {
  std::ostringstream os;
  os << detail::fmt_double(s.epsilon) << ',' << s.n << ',' << s.method << ',' << s.abstraction
     << ',' << s.replications << ',' << s.failures << ',' << detail::fmt_double(s.mse) << ','
     << detail::fmt_double(s.bias) << ',' << detail::fmt_double(s.stderr_error) << ','
     << detail::fmt_double(s.median_abs_error);
  return os.str();
}

/// Aggregates over replications, in first-appearance order of the cells.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> errors;
  for (const auto& r : rows) {
    const std::string key = detail::fmt_double(r.epsilon) + "|" + std::to_string(r.n) + "|" +
                            r.method + "|" + r.abstraction;
    auto [it, fresh] = index.emplace(key, out.size());
    if (fresh) {
      out.push_back({r.epsilon, r.n, r.method, r.abstraction, 0, 0, 0.0, 0.0, 0.0, 0.0});
      errors.emplace_back();
    }
    SummaryRow& s = out[it->second];
    if (r.status == "ok") {
      errors[it->second].push_back(r.error);
      ++s.replications;
    } else {
      ++s.failures;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& e = errors[i];
    if (e.empty()) continue;
    const double k = static_cast<double>(e.size());
    double sum = 0.0;
    double sq = 0.0;
    std::vector<double> abs_err;
    for (double x : e) {
      sum += x;
      sq += x * x;
      abs_err.push_back(std::abs(x));
    }
    out[i].bias = sum / k;
    out[i].mse = sq / k;
    double var = 0.0;
    for (double x : e) var += (x - out[i].bias) * (x - out[i].bias);
    out[i].stderr_error = e.size() > 1 ? std::sqrt(var / (k - 1.0) / k) : 0.0;
    out[i].median_abs_error = detail::median(abs_err);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

struct ExperimentInstance {
  MdpModel mdp;
  PolicyTable pi;
  PolicyTable b;
  double oracle_j = 0.0;
  std::map<std::string, Partition> partitions;
};

/// The MDP and policies for one behavior epsilon, with the oracle value and
/// the partitions of every requested abstraction mode.
inline ExperimentInstance build_instance(const ExperimentConfig& c, double epsilon) {
  ExperimentInstance inst;
  const GeneratorSpec& g = c.generator;
  if (g.kind == "toy") {
    ToyOptions opts;
    opts.n_actions = g.n_actions;
    opts.n_noise = g.n_noise;
    opts.gamma = g.gamma;
    opts.epsilon = epsilon;
    opts.reward_noise_std = g.reward_noise_std;
    ToyInstance toy = three_group_toy(g.sizes, g.seed, opts);
    inst.mdp = std::move(toy.mdp);
    inst.pi = std::move(toy.pi);
    inst.b = std::move(toy.b);
  } else {
    inst.mdp = random_mdp(g.n_states, g.n_actions, g.seed, 1.0, 1.0, g.gamma);
    inst.mdp.reward_noise_std = g.reward_noise_std;
    inst.pi = g.target == "random" ? random_policy(g.n_states, g.n_actions, g.seed)
                                   : deterministic_policy(g.n_states, g.n_actions, g.seed);
    inst.b = epsilon_greedy(inst.pi, epsilon);
  }
  if (c.stationary_start) inst.mdp.initial = stationary_distribution(inst.mdp, inst.b);
  inst.oracle_j = policy_value(inst.mdp, inst.pi);
  for (const auto& mode : c.abstractions) {
    if (mode == "none")
      inst.partitions.emplace(mode, Partition::identity(inst.mdp.n_states));
    else if (mode == "forward")
      inst.partitions.emplace(mode, coarsest_forward(inst.mdp, inst.pi, c.tolerance));
    else if (mode == "backward")
      inst.partitions.emplace(mode, coarsest_backward(inst.mdp, inst.pi, inst.b, c.tolerance));
    else
      inst.partitions.emplace(mode, two_step(inst.mdp, inst.pi, inst.b, c.tolerance).composed);
  }
  return inst;
}

/// Seed of the dataset for cell (epsilon index, size, replication). Datasets
/// are shared by every method and abstraction within a cell.
inline std::uint64_t cell_seed(std::uint64_t base, std::size_t eps_index, std::size_t n,
                               std::size_t rep) {
  return derive_seed({base, eps_index, n, rep});
}

struct ExperimentOptions {
  std::size_t jobs = 1;
  bool resume = false;
  bool write_files = true;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::size_t failures = 0;
  std::size_t resumed_rows = 0;
  std::string rows_path;
  std::string summary_path;
};

namespace detail {

inline std::string row_key(const ResultRow& r) {
  return fmt_double(r.epsilon) + "|" + std::to_string(r.n) + "|" + std::to_string(r.replication) +
         "|" + r.method + "|" + r.abstraction;
}

inline void read_rows(const std::string& path, std::map<std::string, ResultRow>& into) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("epsilon,", 0) == 0) continue;
    try {
      ResultRow r = row_from_csv(line);
      into.emplace(row_key(r), std::move(r));
    } catch (const InvalidInput&) {
      // A torn final line from an interrupted run; the cell is recomputed.
    }
  }
}

inline std::string summary_path_for(const std::string& rows_path) {
  const std::filesystem::path p(rows_path);
  return (p.parent_path() / (p.stem().string() + "_summary" + p.extension().string())).string();
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const ExperimentOptions& options = {}) {
  validate_config(config);
  ExperimentResult result;
  result.rows_path = resolve_output_path(config.output);
  result.summary_path = detail::summary_path_for(result.rows_path);
  const std::string journal_path = result.rows_path + ".partial";

  std::map<std::string, ResultRow> done;
  if (options.resume && options.write_files) {
    detail::read_rows(result.rows_path, done);
    detail::read_rows(journal_path, done);
  }
  std::ofstream journal;
  if (options.write_files) {
    const auto parent = std::filesystem::path(result.rows_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    journal.open(journal_path, options.resume ? std::ios::app : std::ios::trunc);
  }
  std::mutex journal_mutex;

  struct Cell {
    std::size_t eps_index;
    std::size_t n;
    std::size_t rep;
  };
  std::vector<Cell> cells;
  for (std::size_t e = 0; e < config.epsilons.size(); ++e)
    for (std::size_t n : config.sizes)
      for (std::size_t r = 0; r < config.replications; ++r) cells.push_back({e, n, r});

  std::vector<ExperimentInstance> instances;
  std::vector<std::string> instance_errors(config.epsilons.size());
  for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
    try {
      instances.push_back(build_instance(config, config.epsilons[e]));
    } catch (const Error& err) {
      instances.emplace_back();
      instance_errors[e] = err.what();
    }
  }

  const std::size_t per_cell = config.methods.size() * config.abstractions.size();
  std::vector<std::vector<ResultRow>> cell_rows(cells.size());
  std::size_t resumed = 0;
  std::mutex resumed_mutex;
  EstimatorConfig est_cfg;
  est_cfg.smoothing = config.smoothing;

  detail::parallel_for(cells.size(), options.jobs, [&](std::size_t ci) {
    const Cell& cell = cells[ci];
    const double eps = config.epsilons[cell.eps_index];
    const std::uint64_t seed = cell_seed(config.base_seed, cell.eps_index, cell.n, cell.rep);
    std::vector<ResultRow> rows;
    for (Method m : config.methods)
      for (const auto& mode : config.abstractions) {
        ResultRow r;
        r.epsilon = eps;
        r.n = cell.n;
        r.horizon = config.horizon;
        r.replication = cell.rep;
        r.seed = seed;
        r.method = method_name(m);
        r.abstraction = mode;
        rows.push_back(std::move(r));
      }
    bool complete = true;
    std::vector<ResultRow> reused;
    for (const auto& r : rows) {
      auto it = done.find(detail::row_key(r));
      if (it == done.end()) {
        complete = false;
        break;
      }
      reused.push_back(it->second);
    }
    if (complete) {
      cell_rows[ci] = std::move(reused);
      std::lock_guard lock(resumed_mutex);
      resumed += per_cell;
      return;
    }
    const ExperimentInstance& inst = instances[cell.eps_index];
    Dataset data;
    std::string data_error = instance_errors[cell.eps_index];
    if (data_error.empty()) {
      try {
        data = sample_trajectories(inst.mdp, inst.b, cell.n, config.horizon, seed,
                                   config.stationary_start ? InitMode::FromStationary
                                                           : InitMode::FromRho0);
      } catch (const Error& err) {
        data_error = err.what();
      }
    }
    std::size_t k = 0;
    for (Method m : config.methods)
      for (const auto& mode : config.abstractions) {
        ResultRow& r = rows[k++];
        if (!data_error.empty()) {
          r.status = "error";
          r.message = data_error;
          continue;
        }
        const Partition& part = inst.partitions.at(mode);
        r.blocks = part.n_blocks();
        r.oracle_j = inst.oracle_j;
        try {
          const EstimateResult est = estimate(m, data, inst.pi, part, inst.mdp.gamma, est_cfg);
          r.estimate = est.estimate;
          r.error = est.estimate - inst.oracle_j;
          r.squared_error = r.error * r.error;
          if (!std::isfinite(r.estimate)) {
            r.status = "error";
            r.message = "non-finite estimate";
          }
        } catch (const Error& err) {
          r.status = "error";
          r.message = err.what();
        }
      }
    if (journal.is_open()) {
      std::lock_guard lock(journal_mutex);
      for (const auto& r : rows) journal << to_csv(r) << '\n';
      journal.flush();
    }
    cell_rows[ci] = std::move(rows);
  });

  for (auto& rows : cell_rows)
    for (auto& r : rows) {
      if (r.status != "ok") ++result.failures;
      result.rows.push_back(std::move(r));
    }
  result.resumed_rows = resumed;
  result.summary = summarize(result.rows);

  if (options.write_files) {
    std::ostringstream rows_csv;
    rows_csv << "# " << kCsvVersion << "\n" << kRowColumns << "\n";
    for (const auto& r : result.rows) rows_csv << to_csv(r) << "\n";
    detail::write_text_file(result.rows_path, rows_csv.str());
    std::ostringstream summary_csv;
    summary_csv << "# " << kCsvVersion << " summary\n" << kSummaryColumns << "\n";
    for (const auto& s : result.summary) summary_csv << to_csv(s) << "\n";
    detail::write_text_file(result.summary_path, summary_csv.str());
    journal.close();
    std::filesystem::remove(journal_path);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Theorem verification

struct AssertionSummary {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  double worst = 0.0;
  std::vector<std::string> skip_reasons;  // first few only
  std::vector<std::string> failures;      // first few only
};

struct VerificationReport {
  std::vector<AssertionSummary> assertions;
  std::size_t cases = 0;
  double tolerance = 0.0;

  bool ok() const {
    for (const auto& a : assertions)
      if (a.failed > 0) return false;
    return true;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << "verification over " << cases << " cases at tol " << tolerance << "\n";
    for (const auto& a : assertions) {
      os << (a.failed ? "FAIL " : "PASS ") << a.name << ": passed " << a.passed << ", failed "
         << a.failed << ", skipped " << a.skipped << ", worst residual " << a.worst << "\n";
      for (const auto& f : a.failures) os << "    failure: " << f << "\n";
      for (const auto& s : a.skip_reasons) os << "    skipped: " << s << "\n";
    }
    return os.str();
  }
};

namespace detail {

class Recorder {
 public:
  explicit Recorder(double tol) : tol_(tol) {}

  void check(const std::string& name, double residual, const std::string& context) {
    AssertionSummary& a = get(name);
    a.worst = std::max(a.worst, std::isfinite(residual) ? residual : HUGE_VAL);
    if (residual <= tol_) {
      ++a.passed;
    } else {
      ++a.failed;
      if (a.failures.size() < 5)
        a.failures.push_back(context + ": residual " + fmt_double(residual));
    }
  }

  void skip(const std::string& name, const std::string& reason) {
    AssertionSummary& a = get(name);
    ++a.skipped;
    if (a.skip_reasons.size() < 3) a.skip_reasons.push_back(reason);
  }

  void fail(const std::string& name, const std::string& reason) {
    AssertionSummary& a = get(name);
    ++a.failed;
    if (a.failures.size() < 5) a.failures.push_back(reason);
  }

  std::vector<AssertionSummary> take() { return std::move(list_); }

 private:
  AssertionSummary& get(const std::string& name) {
    for (auto& a : list_)
      if (a.name == name) return a;
    list_.push_back({name, 0, 0, 0, 0.0, {}, {}});
    return list_.back();
  }

  double tol_;
  std::vector<AssertionSummary> list_;
};

inline double max_abs_diff(const Matrix& x, const Matrix& y) {
  return (x - y).cwiseAbs().maxCoeff();
}

// Merges two distinct blocks of `part`, chosen by the stream.
inline Partition merge_random_blocks(const Partition& part, RandomStream& rng) {
  if (part.n_blocks() < 2) return part;
  const std::size_t x = rng.index(part.n_blocks());
  std::size_t y = rng.index(part.n_blocks() - 1);
  if (y >= x) ++y;
  std::vector<std::size_t> labels = part.block_of();
  for (auto& l : labels)
    if (l == y) l = x;
  return Partition::from_labels(labels);
}

}  // namespace detail

/// Runs the identities and theorem assertions on n_cases random instances.
/// Each assertion is gated on the checker for its premise; a case whose
/// premise fails is skipped with the checker's verdict as the reason.
inline VerificationReport verify_theorems(std::uint64_t seed, std::size_t n_cases, double tol) {
  if (n_cases == 0) throw InvalidInput("verify_theorems: n_cases must be at least 1");
  if (!(tol > 0.0)) throw InvalidInput("verify_theorems: tol must be positive");
  detail::Recorder rec(tol);
  const double gammas[] = {0.5, 0.9, 0.99};
  for (std::size_t i = 0; i < n_cases; ++i) {
    const std::uint64_t cs = derive_seed({seed, i});
    RandomStream rng(cs, 11);
    const std::string ctx = "case " + std::to_string(i);
    const std::size_t ns = 2 + rng.index(5);  // 2..6 base states
    const std::size_t na = 2 + rng.index(2);
    const double gamma = gammas[i % 3];
    const std::size_t n_noise = 2 + rng.index(2);
    try {
      // Identities on a plain random instance.
      MdpModel mdp = random_mdp(ns, na, cs ^ 1, 1.0, 1.0, gamma);
      const PolicyTable pi = random_policy(ns, na, cs ^ 2);
      const PolicyTable b = random_full_support_policy(ns, na, cs ^ 3);
      const SolveCache sc = solve(mdp, pi, b);
      rec.check("identity: J = E[f3(w)]", std::abs(exact_f3(mdp, b, sc.p_inf, sc.w) - sc.j_pi), ctx);
      rec.check("identity: J = E[f4(Q, w)]",
                std::abs(exact_f4(mdp, pi, b, sc.p_inf, sc.q, sc.w) - sc.j_pi), ctx);
      for (std::size_t horizon : {5, 10, 20, 40}) {
        const double gap = std::abs(exact_f2(mdp, b, sc.rho, horizon) - sc.j_pi);
        rec.check("SIS truncation bound", std::max(0.0, gap - sis_truncation_bound(mdp, horizon)),
                  ctx + " T=" + std::to_string(horizon));
      }

      // Forward structure.
      const MdpModel base = random_mdp(ns, na, cs ^ 4, 1.0, 1.0, gamma);
      const PolicyTable base_pi = random_policy(ns, na, cs ^ 5);
      const LiftedInstance fwd = lift_model_irrelevant(base, base_pi, n_noise, cs ^ 6);
      const PolicyTable fwd_b = random_full_support_policy(fwd.mdp.n_states, na, cs ^ 7);
      for (int adversarial = 0; adversarial < 2; ++adversarial) {
        const Partition part =
            adversarial ? detail::merge_random_blocks(fwd.truth, rng) : fwd.truth;
        const std::string pctx = ctx + (adversarial ? " (merged blocks)" : "");
        const auto premise = check_forward_irrelevance(part, fwd.mdp, fwd.pi, tol);
        if (!premise.holds) {
          const std::string why = pctx + ": " + premise.to_string();
          rec.skip("Theorem 2: Q = Q_phi under model- and pi-irrelevance", why);
          rec.skip("Theorem 1: E[f1] on Q-irrelevant abstraction", why);
          continue;
        }
        const QuotientModel quo = quotient_mdp(fwd.mdp, part, fwd.pi, fwd_b);
        const Matrix q = q_function(fwd.mdp, fwd.pi);
        const Matrix q_phi = lift_table(abstract_q(quo), part);
        rec.check("Theorem 2: Q = Q_phi under model- and pi-irrelevance",
                  detail::max_abs_diff(q, q_phi), pctx);
        const auto q_irr = check_q_irrelevance(part, q, tol);
        if (!q_irr.holds) {
          rec.fail("Theorem 1: E[f1] on Q-irrelevant abstraction", pctx + ": " + q_irr.to_string());
        } else {
          rec.check("Theorem 1: E[f1] on Q-irrelevant abstraction",
                    std::abs(exact_f1(fwd.mdp, fwd.pi, q_phi) - exact_f1(fwd.mdp, fwd.pi, q)),
                    pctx);
        }
      }

      // Backward structure.
      const PolicyTable base_b = random_full_support_policy(ns, na, cs ^ 8);
      const LiftedInstance bwd = lift_backward_irrelevant(base, base_pi, base_b, n_noise, cs ^ 9);
      const SolveCache bsc = solve(bwd.mdp, bwd.pi, bwd.b);
      for (int adversarial = 0; adversarial < 2; ++adversarial) {
        const Partition part =
            adversarial ? detail::merge_random_blocks(bwd.truth, rng) : bwd.truth;
        const std::string pctx = ctx + (adversarial ? " (merged blocks)" : "");
        const auto premise = check_backward_model_irrelevance(part, bsc.rho, bsc.backward, tol);
        if (!premise.holds) {
          const std::string why = pctx + ": " + premise.to_string();
          for (const char* name :
               {"Theorem 3: rho-irrelevance under backward-model-irrelevance",
                "Theorem 3: w-irrelevance under backward-model-irrelevance",
                "Theorem 1: E[f2] on rho-irrelevant abstraction",
                "Theorem 1: E[f3] on w-irrelevant abstraction",
                "ratio identity: rho = pi_phi / b_phi"})
            rec.skip(name, why);
          continue;
        }
        const auto rho_irr = check_rho_irrelevance(part, bsc.rho, tol);
        const auto w_irr = check_w_irrelevance(part, bsc.w, tol);
        rec.check("Theorem 3: rho-irrelevance under backward-model-irrelevance", rho_irr.worst, pctx);
        rec.check("Theorem 3: w-irrelevance under backward-model-irrelevance", w_irr.worst, pctx);
        const QuotientModel quo = quotient_mdp(bwd.mdp, part, bwd.pi, bwd.b, bsc.p_inf);
        const Matrix rho_phi = lift_table(abstract_is_ratio(quo), part);
        rec.check("ratio identity: rho = pi_phi / b_phi", detail::max_abs_diff(bsc.rho, rho_phi), pctx);
        const std::size_t horizon = 20;
        rec.check("Theorem 1: E[f2] on rho-irrelevant abstraction",
                  std::abs(exact_f2(bwd.mdp, bwd.b, rho_phi, horizon) -
                           exact_f2(bwd.mdp, bwd.b, bsc.rho, horizon)),
                  pctx);
        const Matrix w_phi = lift_table(abstract_mis_ratio(bsc.d_pi, bsc.p_inf, bwd.b, part), part);
        rec.check("Theorem 1: E[f3] on w-irrelevant abstraction",
                  std::abs(exact_f3(bwd.mdp, bwd.b, bsc.p_inf, w_phi) -
                           exact_f3(bwd.mdp, bwd.b, bsc.p_inf, bsc.w)),
                  pctx);
      }

      // SIS with abstract ratios under model- and pi-irrelevance, where the
      // behavior reads the irrelevant coordinate.
      const LiftedInstance sis_case =
          lift_backward_irrelevant(base, base_pi, base_b, n_noise, cs ^ 10, true);
      const auto sis_premise = check_forward_irrelevance(sis_case.truth, sis_case.mdp, sis_case.pi, tol);
      if (!sis_premise.holds) {
        rec.skip("Theorem 2: E[f2] with abstract ratios", ctx + ": " + sis_premise.to_string());
      } else {
        const QuotientModel quo = quotient_mdp(sis_case.mdp, sis_case.truth, sis_case.pi, sis_case.b);
        const Matrix rho_phi = lift_table(abstract_is_ratio(quo), sis_case.truth);
        const Matrix rho = is_ratio(sis_case.pi, sis_case.b);
        const std::size_t horizon = 20;
        rec.check("Theorem 2: E[f2] with abstract ratios",
                  std::abs(exact_f2(sis_case.mdp, sis_case.b, rho_phi, horizon) -
                           exact_f2(sis_case.mdp, sis_case.b, rho, horizon)),
                  ctx);
      }

      // Two-step procedure on the toy.
      ToyOptions opts;
      opts.gamma = gamma;
      opts.n_actions = na;
      opts.n_noise = 1 + rng.index(2);
      const ToySizes sizes{2 + rng.index(2), 2 + rng.index(2), 2 + rng.index(2)};
      const ToyInstance toy = three_group_toy(sizes, cs ^ 12, opts);
      const TwoStepResult ts = two_step(toy.mdp, toy.pi, toy.b, tol);
      if (!(ts.composed == toy.two_step)) {
        rec.fail("Theorem 4: J preserved by the two-step abstraction",
                 ctx + ": two-step partition has " + std::to_string(ts.composed.n_blocks()) +
                     " blocks, expected " + std::to_string(toy.two_step.n_blocks()));
      } else {
        const SolveCache tsc = solve(toy.mdp, toy.pi, toy.b);
        const QuotientModel limit = data_limit_mdp(toy.mdp, ts.composed, toy.pi, toy.b, tsc.p_inf);
        rec.check("Theorem 4: J preserved by the two-step abstraction",
                  std::abs(policy_value(limit.model, limit.pi) - tsc.j_pi), ctx);
        const Matrix w_phi =
            lift_table(abstract_mis_ratio(tsc.d_pi, tsc.p_inf, toy.b, ts.composed), ts.composed);
        rec.check("Theorem 4: E[f3] on the two-step abstraction",
                  std::abs(exact_f3(toy.mdp, toy.b, tsc.p_inf, w_phi) - tsc.j_pi), ctx);
      }
    } catch (const Error& e) {
      rec.fail("case setup", ctx + ": " + e.what());
    }
  }
  VerificationReport report;
  report.assertions = rec.take();
  report.cases = n_cases;
  report.tolerance = tol;
  return report;
}

}  // namespace absope
