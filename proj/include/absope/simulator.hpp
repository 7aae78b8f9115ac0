#pragma once

// Offline data generation and Monte Carlo value estimates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "absope/error.hpp"
#include "absope/mdp.hpp"
#include "absope/rng.hpp"
#include "absope/solver.hpp"

namespace absope {

enum class InitMode { FromRho0, FromStationary };

inline InitMode parse_init_mode(const std::string& name) {
  if (name == "rho0") return InitMode::FromRho0;
  if (name == "stationary") return InitMode::FromStationary;
  throw InvalidInput("unknown init mode '" + name + "' (expected rho0 or stationary)");
}

namespace detail {

// Draw purposes within one (trajectory, step) counter.
inline constexpr std::uint32_t kDrawMove = 0;   // action, next state
inline constexpr std::uint32_t kDrawNoise = 1;  // reward noise
inline constexpr std::uint32_t kDrawStart = 2;  // initial state

inline Trajectory rollout(const MdpModel& mdp, const PolicyTable& policy,
                          const Vector& start, std::size_t horizon, std::uint64_t seed,
                          std::uint64_t traj) {
  Trajectory out;
  out.reserve(horizon);
  std::vector<double> action_weights(mdp.n_actions);
  std::size_t s = sample_categorical(std::span<const double>(start.data(), mdp.n_states),
                                     keyed_uniforms(seed, traj, 0, kDrawStart)[0]);
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto step = static_cast<std::uint32_t>(t);
    const auto u = keyed_uniforms(seed, traj, step, kDrawMove);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) action_weights[a] = policy(s, a);
    const std::size_t a = sample_categorical(action_weights, u[0]);
    double r = mdp.r(a, s);
    if (mdp.reward_noise_std > 0.0) {
      const auto z = keyed_uniforms(seed, traj, step, kDrawNoise);
      r += mdp.reward_noise_std * box_muller(z[0], z[1]);
    }
    out.push_back({s, a, r});
    s = sample_categorical(std::span<const double>(mdp.row(s, a), mdp.n_states), u[1]);
  }
  return out;
}

// Runs body(i) for i in [0, n) over `jobs` threads with a static split.
template <class Body>
void parallel_for(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j)
    workers.emplace_back([&, j] {
      for (std::size_t i = j; i < n; i += jobs) body(i);
    });
  for (auto& w : workers) w.join();
}

}  // namespace detail

/// n trajectories of length `horizon` under b. Every draw is keyed by
/// (seed, trajectory, step, purpose), so the output does not depend on
/// `jobs` or on scheduling.
inline Dataset sample_trajectories(const MdpModel& mdp, const PolicyTable& b, std::size_t n,
                                   std::size_t horizon, std::uint64_t seed,
                                   InitMode init = InitMode::FromRho0, std::size_t jobs = 1) {
  require_valid(mdp);
  require_valid(b, mdp);
  if (n == 0 || horizon == 0)
    throw InvalidInput("sample_trajectories: n and horizon must be at least 1");
  const Vector start =
      init == InitMode::FromRho0 ? mdp.initial : stationary_distribution(mdp, b);
  Dataset data;
  data.horizon = horizon;
  data.seed = seed;
  data.trajectories.resize(n);
  detail::parallel_for(n, jobs, [&](std::size_t i) {
    data.trajectories[i] = detail::rollout(mdp, b, start, horizon, seed, i);
  });
  return data;
}

struct MonteCarloResult {
  double estimate = 0.0;
  double standard_error = 0.0;
  double truncation_bound = 0.0;
};

/// Mean truncated discounted return over n on-policy rollouts from rho0.
inline MonteCarloResult monte_carlo_value(const MdpModel& mdp, const PolicyTable& pi,
                                          std::size_t n, std::size_t horizon,
                                          std::uint64_t seed, std::size_t jobs = 1) {
  require_valid(mdp);
  require_valid(pi, mdp);
  if (n == 0 || horizon == 0)
    throw InvalidInput("monte_carlo_value: n and horizon must be at least 1");
  std::vector<double> returns(n);
  detail::parallel_for(n, jobs, [&](std::size_t i) {
    const Trajectory tr = detail::rollout(mdp, pi, mdp.initial, horizon, seed, i);
    double g = 0.0;
    double discount = 1.0;
    for (const Step& st : tr) {
      g += discount * st.r;
      discount *= mdp.gamma;
    }
    returns[i] = g;
  });
  double mean = 0.0;
  for (double g : returns) mean += g;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double g : returns) var += (g - mean) * (g - mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n)), sis_truncation_bound(mdp, horizon)};
}

}  // namespace absope
