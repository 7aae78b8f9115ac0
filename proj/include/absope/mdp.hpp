#pragma once

// Finite MDP data model.
//
// Index conventions (used everywhere in the library):
//   transition  T[s][a][s'] = P(S' = s' | S = s, A = a), stored flat
//   reward      R(a, s)     -> Matrix of shape (n_actions, n_states)
//   policy      p(a | s)    -> Matrix of shape (n_states, n_actions)
//   Q, rho, w   X(a, s)     -> Matrix of shape (n_actions, n_states)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absope/error.hpp"

namespace absope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kProbabilityTolerance = 1e-12;

struct MdpModel {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = 0.9;
  std::vector<double> transition;  // flat [s][a][s']
  Matrix reward;                   // (n_actions, n_states)
  double reward_noise_std = 0.0;
  Vector initial;

  static MdpModel zeros(std::size_t n_states, std::size_t n_actions,
                        double gamma) {
    MdpModel m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.transition.assign(n_states * n_actions * n_states, 0.0);
    m.reward = Matrix::Zero(static_cast<Eigen::Index>(n_actions),
                            static_cast<Eigen::Index>(n_states));
    m.initial = Vector::Zero(static_cast<Eigen::Index>(n_states));
    return m;
  }

  std::size_t offset(std::size_t s, std::size_t a) const {
    return (s * n_actions + a) * n_states;
  }
  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[offset(s, a) + next];
  }
  double& p(std::size_t s, std::size_t a, std::size_t next) {
    return transition[offset(s, a) + next];
  }
  const double* row(std::size_t s, std::size_t a) const {
    return transition.data() + offset(s, a);
  }
  double r(std::size_t a, std::size_t s) const {
    return reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
  }
  double max_abs_reward() const {
    return reward.size() == 0 ? 0.0 : reward.cwiseAbs().maxCoeff();
  }
};

struct PolicyTable {
  Matrix probs;  // (n_states, n_actions)

  std::size_t n_states() const { return static_cast<std::size_t>(probs.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(probs.cols()); }
  double operator()(std::size_t s, std::size_t a) const {
    return probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

  static PolicyTable uniform(std::size_t n_states, std::size_t n_actions) {
    return {Matrix::Constant(static_cast<Eigen::Index>(n_states),
                             static_cast<Eigen::Index>(n_actions),
                             1.0 / static_cast<double>(n_actions))};
  }
};

struct Step {
  std::size_t s = 0;
  std::size_t a = 0;
  double r = 0.0;

  friend bool operator==(const Step&, const Step&) = default;
};

using Trajectory = std::vector<Step>;

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;

  std::size_t n_steps() const {
    std::size_t n = 0;
    for (const auto& tr : trajectories) n += tr.size();
    return n;
  }
  bool empty() const { return trajectories.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Violation {
  std::string what;
  std::vector<std::size_t> indices;
  double magnitude = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  std::string to_string() const {
    if (ok()) return "ok";
    std::ostringstream os;
    for (const auto& v : violations) {
      os << v.what;
      if (!v.indices.empty()) {
        os << " at (";
        for (std::size_t i = 0; i < v.indices.size(); ++i)
          os << (i ? "," : "") << v.indices[i];
        os << ")";
      }
      os << " magnitude " << v.magnitude << "\n";
    }
    return os.str();
  }
};

namespace detail {

inline void check_distribution(ValidationReport& report, const std::string& what,
                               std::vector<std::size_t> where, const double* p,
                               std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      auto idx = where;
      idx.push_back(i);
      report.violations.push_back({what + " entry outside [0,1]", idx, p[i]});
    }
    sum += p[i];
  }
  if (!(std::abs(sum - 1.0) <= kProbabilityTolerance)) {
    report.violations.push_back(
        {what + " does not sum to 1 (deficit)", std::move(where), 1.0 - sum});
  }
}

}  // namespace detail

inline ValidationReport validate_mdp(const MdpModel& mdp) {
  ValidationReport report;
  const auto ns = mdp.n_states;
  const auto na = mdp.n_actions;
  if (ns == 0 || na == 0) {
    report.violations.push_back({"empty state or action space", {ns, na}, 0.0});
    return report;
  }
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0))
    report.violations.push_back({"discount out of range", {}, mdp.gamma});
  if (!(mdp.reward_noise_std >= 0.0))
    report.violations.push_back({"negative reward noise", {}, mdp.reward_noise_std});
  if (mdp.transition.size() != ns * na * ns) {
    report.violations.push_back(
        {"transition table has wrong size", {}, static_cast<double>(mdp.transition.size())});
    return report;
  }
  if (static_cast<std::size_t>(mdp.reward.rows()) != na ||
      static_cast<std::size_t>(mdp.reward.cols()) != ns) {
    report.violations.push_back({"reward table has wrong shape", {}, 0.0});
  } else if (!mdp.reward.allFinite()) {
    report.violations.push_back({"reward table has non-finite entries", {}, 0.0});
  }
  if (static_cast<std::size_t>(mdp.initial.size()) != ns) {
    report.violations.push_back({"initial distribution has wrong size", {}, 0.0});
  } else {
    detail::check_distribution(report, "initial distribution", {},
                               mdp.initial.data(), ns);
  }
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t a = 0; a < na; ++a)
      detail::check_distribution(report, "transition row", {s, a}, mdp.row(s, a), ns);
  return report;
}

inline ValidationReport validate_policy(const PolicyTable& policy,
                                        std::size_t n_states,
                                        std::size_t n_actions) {
  ValidationReport report;
  if (policy.n_states() != n_states || policy.n_actions() != n_actions) {
    report.violations.push_back(
        {"policy shape mismatch", {policy.n_states(), policy.n_actions()}, 0.0});
    return report;
  }
  // probs is column-major; copy each row out before checking.
  std::vector<double> row(n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) row[a] = policy(s, a);
    detail::check_distribution(report, "policy row", {s}, row.data(), n_actions);
  }
  return report;
}

inline void require_valid(const MdpModel& mdp) {
  auto report = validate_mdp(mdp);
  if (!report.ok()) throw InvalidInput("invalid MDP:\n" + report.to_string());
}

inline void require_valid(const PolicyTable& policy, const MdpModel& mdp) {
  auto report = validate_policy(policy, mdp.n_states, mdp.n_actions);
  if (!report.ok()) throw InvalidInput("invalid policy:\n" + report.to_string());
}

/// b(a|s) = (1 - epsilon) pi(a|s) + epsilon / |A|.
inline PolicyTable epsilon_greedy(const PolicyTable& pi, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw InvalidInput("epsilon must lie in [0,1], got " + std::to_string(epsilon));
  const double floor = epsilon / static_cast<double>(pi.n_actions());
  return {((1.0 - epsilon) * pi.probs).array() + floor};
}

/// (1 - epsilon) pi + epsilon * explore, for a state-dependent exploration
/// policy.
inline PolicyTable mix_policies(const PolicyTable& pi, const PolicyTable& explore,
                                double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw InvalidInput("epsilon must lie in [0,1], got " + std::to_string(epsilon));
  if (pi.probs.rows() != explore.probs.rows() || pi.probs.cols() != explore.probs.cols())
    throw InvalidInput("mix_policies: shape mismatch");
  return {(1.0 - epsilon) * pi.probs + epsilon * explore.probs};
}

/// Induced state chain P[s][s'] = sum_a policy(a|s) T(s'|a,s).
inline Matrix chain_under_policy(const MdpModel& mdp, const PolicyTable& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw InvalidInput("chain_under_policy: policy shape does not match MDP");
  const auto ns = static_cast<Eigen::Index>(mdp.n_states);
  Matrix chain = Matrix::Zero(ns, ns);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double pa = policy(s, a);
      if (pa == 0.0) continue;
      const double* row = mdp.row(s, a);
      for (std::size_t n = 0; n < mdp.n_states; ++n)
        chain(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) += pa * row[n];
    }
  return chain;
}

}  // namespace absope
