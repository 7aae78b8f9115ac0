// Command-line front end: generate, solve, abstract, simulate, estimate,
// experiment, verify.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "absope/absope.hpp"

namespace {

using namespace absope;

constexpr int kExitInput = 2;
constexpr int kExitFailure = 1;

struct GenerateArgs {
  std::string kind = "random";
  std::uint64_t seed = 0;
  std::string prefix = "instance";
  std::size_t states = 4;
  std::size_t actions = 2;
  std::size_t noise = 2;
  double gamma = 0.9;
  double epsilon = 0.5;
  std::vector<std::size_t> sizes{2, 2, 2};
};

int run_generate(const GenerateArgs& g) {
  const std::string prefix = resolve_output_path(g.prefix);
  auto write = [&](const std::string& suffix, const Json& j) {
    save_json(prefix + "_" + suffix + ".json", j);
    std::cout << "wrote " << prefix << "_" << suffix << ".json\n";
  };
  if (g.kind == "random") {
    const MdpModel mdp = random_mdp(g.states, g.actions, g.seed, 1.0, 1.0, g.gamma);
    const PolicyTable pi = random_policy(g.states, g.actions, g.seed);
    write("mdp", to_json(mdp));
    write("pi", to_json(pi));
    write("b", to_json(epsilon_greedy(pi, g.epsilon)));
  } else if (g.kind == "lift-forward" || g.kind == "lift-backward") {
    const MdpModel base = random_mdp(g.states, g.actions, g.seed, 1.0, 1.0, g.gamma);
    const PolicyTable pi = random_policy(g.states, g.actions, derive_seed({g.seed, 1}));
    const LiftedInstance lift =
        g.kind == "lift-forward"
            ? lift_model_irrelevant(base, pi, g.noise, g.seed)
            : lift_backward_irrelevant(base, pi, epsilon_greedy(pi, g.epsilon), g.noise, g.seed);
    const PolicyTable b =
        g.kind == "lift-forward" ? epsilon_greedy(lift.pi, g.epsilon) : lift.b;
    write("mdp", to_json(lift.mdp));
    write("pi", to_json(lift.pi));
    write("b", to_json(b));
    write("partition", to_json(lift.truth));
  } else if (g.kind == "toy") {
    if (g.sizes.size() != 3) throw InvalidInput("--sizes needs three values");
    ToyOptions opts;
    opts.n_actions = g.actions;
    opts.n_noise = g.noise;
    opts.gamma = g.gamma;
    opts.epsilon = g.epsilon;
    const ToyInstance toy = three_group_toy({g.sizes[0], g.sizes[1], g.sizes[2]}, g.seed, opts);
    write("mdp", to_json(toy.mdp));
    write("pi", to_json(toy.pi));
    write("b", to_json(toy.b));
    write("forward", to_json(toy.forward));
    write("backward", to_json(toy.backward));
    write("two_step", to_json(toy.two_step));
    write("audit", Json{{"factorization", toy.factorization}});
  } else {
    throw InvalidInput("unknown --kind '" + g.kind + "'");
  }
  return 0;
}

struct AbstractArgs {
  std::string mdp, pi, b, mode = "two-step", out = "partition.json", audit;
  double tol = 1e-9;
  std::size_t rounds = 1;
};

int run_abstract(const AbstractArgs& a) {
  const MdpModel mdp = load_mdp(a.mdp);
  const PolicyTable pi = load_policy(a.pi);
  Json audit;
  Partition part;
  if (a.mode == "forward") {
    RefinementAudit ra;
    part = coarsest_forward(mdp, pi, a.tol, &ra);
    audit = Json{{"steps", Json::array({to_json(ra)})}, {"block_counts", {mdp.n_states, part.n_blocks()}}};
  } else if (a.mode == "backward" || a.mode == "two-step") {
    if (a.b.empty()) throw InvalidInput("--b is required for mode " + a.mode);
    const PolicyTable b = load_policy(a.b);
    if (a.mode == "backward") {
      RefinementAudit ra;
      part = coarsest_backward(mdp, pi, b, a.tol, &ra);
      audit = Json{{"steps", Json::array({to_json(ra)})},
                   {"block_counts", {mdp.n_states, part.n_blocks()}}};
    } else {
      const TwoStepResult ts = two_step(mdp, pi, b, a.tol, a.rounds);
      part = ts.composed;
      Json steps = Json::array();
      for (const auto& s : ts.audit) steps.push_back(to_json(s));
      audit = Json{{"steps", std::move(steps)}, {"block_counts", ts.block_counts}};
      if (a.rounds > 1) audit["note"] = "more than one forward/backward round carries no guarantee";
    }
  } else {
    throw InvalidInput("unknown --mode '" + a.mode + "'");
  }
  save_json(resolve_output_path(a.out), to_json(part));
  if (!a.audit.empty()) save_json(resolve_output_path(a.audit), audit);
  std::cout << a.mode << ": " << mdp.n_states << " states -> " << part.n_blocks() << " blocks\n";
  return 0;
}

struct EstimateArgs {
  std::string data, pi, mdp, b, method = "fqe", partition = "none", out;
  std::optional<double> gamma;
  double smoothing = 0.5;
};

int run_estimate(const EstimateArgs& e) {
  const Dataset data = load_dataset(e.data);
  const PolicyTable pi = load_policy(e.pi);
  std::optional<MdpModel> mdp;
  if (!e.mdp.empty()) mdp = load_mdp(e.mdp);
  double gamma = 0.0;
  if (e.gamma) gamma = *e.gamma;
  else if (mdp) gamma = mdp->gamma;
  else throw InvalidInput("--gamma is required when --mdp is not given");
  const Partition part =
      e.partition == "none" ? Partition::identity(pi.n_states()) : load_partition(e.partition);
  EstimatorConfig cfg;
  cfg.smoothing = e.smoothing;
  if (!e.b.empty()) cfg.known_behavior = load_policy(e.b);
  const EstimateResult r = estimate(parse_method(e.method), data, pi, part, gamma, cfg);
  Json j = to_json(r);
  if (mdp) {
    const double truth = policy_value(*mdp, pi);
    j["oracle_j"] = truth;
    j["error"] = r.estimate - truth;
  }
  if (!e.out.empty()) save_json(resolve_output_path(e.out), j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular off-policy evaluation with forward and backward state abstractions"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write an MDP, policies and ground-truth partitions");
  generate->add_option("--kind", gen.kind, "random | lift-forward | lift-backward | toy")
      ->check(CLI::IsMember({"random", "lift-forward", "lift-backward", "toy"}));
  generate->add_option("--seed", gen.seed);
  generate->add_option("--out-prefix", gen.prefix);
  generate->add_option("--states", gen.states, "base state count (random, lifts)");
  generate->add_option("--actions", gen.actions);
  generate->add_option("--noise", gen.noise, "noise coordinate size (lifts, toy)");
  generate->add_option("--gamma", gen.gamma);
  generate->add_option("--epsilon", gen.epsilon, "behavior exploration weight");
  generate->add_option("--sizes", gen.sizes, "toy group sizes g1 g2 g3")->expected(3);

  std::string mdp_path, pi_path, b_path, out_path;
  auto* solve_cmd = app.add_subcommand("solve", "Exact quantities for (MDP, pi, b)");
  solve_cmd->add_option("--mdp", mdp_path)->required();
  solve_cmd->add_option("--pi", pi_path)->required();
  solve_cmd->add_option("--b", b_path)->required();
  solve_cmd->add_option("--out", out_path)->required();

  AbstractArgs abs;
  auto* abstract = app.add_subcommand("abstract", "Coarsest forward, backward or two-step partition");
  abstract->add_option("--mdp", abs.mdp)->required();
  abstract->add_option("--pi", abs.pi)->required();
  abstract->add_option("--b", abs.b);
  abstract->add_option("--mode", abs.mode)->check(CLI::IsMember({"forward", "backward", "two-step"}));
  abstract->add_option("--tol", abs.tol);
  abstract->add_option("--rounds", abs.rounds, "forward/backward rounds (experimental beyond 1)");
  abstract->add_option("--out", abs.out);
  abstract->add_option("--audit", abs.audit);

  std::size_t n = 100, horizon = 20, jobs = 1;
  std::uint64_t seed = 0;
  std::string init = "rho0";
  auto* simulate = app.add_subcommand("simulate", "Sample trajectories under the behavior policy");
  simulate->add_option("--mdp", mdp_path)->required();
  simulate->add_option("--b", b_path)->required();
  simulate->add_option("--n", n);
  simulate->add_option("--horizon", horizon);
  simulate->add_option("--seed", seed);
  simulate->add_option("--init", init)->check(CLI::IsMember({"rho0", "stationary"}));
  simulate->add_option("--jobs", jobs);
  simulate->add_option("--out", out_path)->required();

  EstimateArgs est;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate J(pi) from a dataset");
  estimate_cmd->add_option("--data", est.data)->required();
  estimate_cmd->add_option("--pi", est.pi)->required();
  estimate_cmd->add_option("--mdp", est.mdp, "true MDP, for the oracle value");
  estimate_cmd->add_option("--b", est.b, "known ground behavior policy (SIS)");
  estimate_cmd->add_option("--method", est.method)->check(CLI::IsMember({"fqe", "sis", "mis", "drl"}));
  estimate_cmd->add_option("--partition", est.partition, "none or a partition file");
  estimate_cmd->add_option("--gamma", est.gamma);
  estimate_cmd->add_option("--smoothing", est.smoothing);
  estimate_cmd->add_option("--out", est.out);

  std::string config_path;
  bool resume = false;
  auto* experiment = app.add_subcommand("experiment", "Run an estimator sweep from a config file");
  experiment->add_option("--config", config_path)->required();
  experiment->add_option("--out", out_path, "rows CSV (overrides the config)");
  experiment->add_option("--jobs", jobs);
  experiment->add_flag("--resume", resume, "reuse rows from an earlier partial run");

  std::size_t cases = 100;
  double tol = 1e-8;
  auto* verify = app.add_subcommand("verify", "Check the theorem assertions on random instances");
  verify->add_option("--cases", cases);
  verify->add_option("--seed", seed);
  verify->add_option("--tol", tol);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return run_generate(gen);
    if (solve_cmd->parsed()) {
      const MdpModel mdp = load_mdp(mdp_path);
      const SolveCache c = solve(mdp, load_policy(pi_path), load_policy(b_path));
      save_json(resolve_output_path(out_path), to_json(c));
      std::cout << "j_pi " << c.j_pi << "\n";
      for (const auto& note : c.notes) std::cout << "note: " << note << "\n";
      return 0;
    }
    if (abstract->parsed()) return run_abstract(abs);
    if (simulate->parsed()) {
      const Dataset data = sample_trajectories(load_mdp(mdp_path), load_policy(b_path), n, horizon,
                                               seed, parse_init_mode(init), jobs);
      save_dataset(resolve_output_path(out_path), data);
      std::cout << "wrote " << data.n_steps() << " records\n";
      return 0;
    }
    if (estimate_cmd->parsed()) return run_estimate(est);
    if (experiment->parsed()) {
      ExperimentConfig config = experiment_config_from_json(detail::read_json_file(config_path));
      if (!out_path.empty()) config.output = out_path;
      ExperimentOptions opts;
      opts.jobs = jobs;
      opts.resume = resume;
      const ExperimentResult r = run_experiment(config, opts);
      std::cout << "rows: " << r.rows_path << "\nsummary: " << r.summary_path << "\n";
      std::cout << r.rows.size() << " rows, " << r.failures << " failed, " << r.resumed_rows
                << " resumed\n";
      return r.failures ? kExitFailure : 0;
    }
    if (verify->parsed()) {
      const VerificationReport report = verify_theorems(seed, cases, tol);
      std::cout << report.to_string();
      return report.ok() ? 0 : kExitFailure;
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
