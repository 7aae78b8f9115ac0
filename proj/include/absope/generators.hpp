#pragma once

// Seed-deterministic MDP constructors with known abstraction structure.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "absope/error.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/rng.hpp"
#include "absope/solver.hpp"

namespace absope {

namespace detail {

inline std::vector<double> positive_row(RandomStream& rng, std::size_t n, double concentration) {
  // Dirichlet draws can underflow to exact zeros at small concentration;
  // generators that promise full support redraw until every entry is positive.
  for (;;) {
    auto row = rng.dirichlet(n, concentration);
    bool ok = true;
    for (double p : row) ok = ok && p > 0.0;
    if (ok) return row;
  }
}

inline void fill_policy_row(PolicyTable& pi, std::size_t s, const std::vector<double>& row) {
  for (std::size_t a = 0; a < row.size(); ++a)
    pi.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = row[a];
}

}  // namespace detail

/// Dirichlet(concentration) transition rows, rewards uniform on
/// [-reward_scale, reward_scale], Dirichlet(1) initial distribution.
inline MdpModel random_mdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                           double transition_concentration = 1.0, double reward_scale = 1.0,
                           double gamma = 0.9) {
  if (n_states == 0 || n_actions == 0)
    throw InvalidInput("random_mdp: sizes must be at least 1");
  if (!(transition_concentration > 0.0))
    throw InvalidInput("random_mdp: concentration must be positive");
  RandomStream rng(seed, 1);
  MdpModel m = MdpModel::zeros(n_states, n_actions, gamma);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      const auto row = rng.dirichlet(n_states, transition_concentration);
      std::copy(row.begin(), row.end(), m.transition.begin() +
                                            static_cast<std::ptrdiff_t>(m.offset(s, a)));
    }
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a)
      m.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) =
          rng.uniform(-reward_scale, reward_scale);
  const auto init = rng.dirichlet(n_states, 1.0);
  for (std::size_t s = 0; s < n_states; ++s) m.initial(static_cast<Eigen::Index>(s)) = init[s];
  return m;
}

/// Stochastic policy with Dirichlet(concentration) rows.
inline PolicyTable random_policy(std::size_t n_states, std::size_t n_actions,
                                 std::uint64_t seed, double concentration = 1.0) {
  RandomStream rng(seed, 2);
  PolicyTable pi{Matrix(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions))};
  for (std::size_t s = 0; s < n_states; ++s)
    detail::fill_policy_row(pi, s, rng.dirichlet(n_actions, concentration));
  return pi;
}

/// Policy with full support: every entry positive.
inline PolicyTable random_full_support_policy(std::size_t n_states, std::size_t n_actions,
                                              std::uint64_t seed, double concentration = 1.0) {
  RandomStream rng(seed, 3);
  PolicyTable pi{Matrix(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions))};
  for (std::size_t s = 0; s < n_states; ++s)
    detail::fill_policy_row(pi, s, detail::positive_row(rng, n_actions, concentration));
  return pi;
}

/// One uniformly chosen action per state.
inline PolicyTable deterministic_policy(std::size_t n_states, std::size_t n_actions,
                                        std::uint64_t seed) {
  RandomStream rng(seed, 4);
  PolicyTable pi{Matrix::Zero(static_cast<Eigen::Index>(n_states),
                              static_cast<Eigen::Index>(n_actions))};
  for (std::size_t s = 0; s < n_states; ++s)
    pi.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(rng.index(n_actions))) = 1.0;
  return pi;
}

struct LiftedInstance {
  MdpModel mdp;
  PolicyTable pi;
  PolicyTable b;    // lifted behavior (empty when the generator does not define one)
  Partition truth;  // (x, u) -> x
};

/// Lifted state (x, u) has index x * n_noise + u.
inline std::size_t lifted_index(std::size_t x, std::size_t u, std::size_t n_noise) {
  return x * n_noise + u;
}

inline Partition projection_partition(std::size_t n_base, std::size_t n_noise) {
  std::vector<std::size_t> block(n_base * n_noise);
  for (std::size_t s = 0; s < block.size(); ++s) block[s] = s / n_noise;
  return Partition(std::move(block));
}

/// T((x',u')|a,(x,u)) = T_base(x'|a,x) g(u'|x',u,a), R = R_base(a,x),
/// pi = base_pi(.|x). The projection is model- and pi-irrelevant exactly.
inline LiftedInstance lift_model_irrelevant(const MdpModel& base, const PolicyTable& base_pi,
                                            std::size_t n_noise, std::uint64_t seed) {
  require_valid(base);
  require_valid(base_pi, base);
  if (n_noise == 0) throw InvalidInput("lift_model_irrelevant: n_noise must be at least 1");
  RandomStream rng(seed, 5);
  const std::size_t nx = base.n_states;
  const std::size_t na = base.n_actions;
  LiftedInstance out;
  out.mdp = MdpModel::zeros(nx * n_noise, na, base.gamma);
  out.mdp.reward_noise_std = base.reward_noise_std;
  out.pi.probs = Matrix(static_cast<Eigen::Index>(nx * n_noise), static_cast<Eigen::Index>(na));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < n_noise; ++u) {
      const std::size_t s = lifted_index(x, u, n_noise);
      out.pi.probs.row(static_cast<Eigen::Index>(s)) =
          base_pi.probs.row(static_cast<Eigen::Index>(x));
      for (std::size_t a = 0; a < na; ++a) {
        out.mdp.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) = base.r(a, x);
        for (std::size_t nx2 = 0; nx2 < nx; ++nx2) {
          const auto g = rng.dirichlet(n_noise, 1.0);
          for (std::size_t u2 = 0; u2 < n_noise; ++u2)
            out.mdp.p(s, a, lifted_index(nx2, u2, n_noise)) = base.p(x, a, nx2) * g[u2];
        }
      }
    }
  for (std::size_t x = 0; x < nx; ++x) {
    const auto q = rng.dirichlet(n_noise, 1.0);
    for (std::size_t u = 0; u < n_noise; ++u)
      out.mdp.initial(static_cast<Eigen::Index>(lifted_index(x, u, n_noise))) =
          base.initial(static_cast<Eigen::Index>(x)) * q[u];
  }
  out.truth = projection_partition(nx, n_noise);
  return out;
}

/// T((x',u')|a,(x,u)) = T_base(x'|a,x) h(u'|x'): the noise coordinate is an
/// emission of the next relevant state. pi and b are lifted from x, and
/// rho0 = rho0_base(x) h(u|x). With noise_dependent_behavior the behavior
/// also reads u, which keeps the projection model- and pi-irrelevant but
/// breaks rho-irrelevance.
inline LiftedInstance lift_backward_irrelevant(const MdpModel& base, const PolicyTable& pi,
                                               const PolicyTable& b, std::size_t n_noise,
                                               std::uint64_t seed,
                                               bool noise_dependent_behavior = false) {
  require_valid(base);
  require_valid(pi, base);
  require_valid(b, base);
  if (n_noise == 0) throw InvalidInput("lift_backward_irrelevant: n_noise must be at least 1");
  const StationaryResult stationary = stationary_analysis(chain_under_policy(base, b));
  if (!stationary.transient.empty())
    throw ChainStructureError("lift_backward_irrelevant: base behavior chain has " +
                              std::to_string(stationary.transient.size()) +
                              " transient states");
  RandomStream rng(seed, 6);
  const std::size_t nx = base.n_states;
  const std::size_t na = base.n_actions;
  std::vector<std::vector<double>> h(nx);
  for (auto& row : h) row = detail::positive_row(rng, n_noise, 1.0);

  LiftedInstance out;
  out.mdp = MdpModel::zeros(nx * n_noise, na, base.gamma);
  out.mdp.reward_noise_std = base.reward_noise_std;
  const auto ns = static_cast<Eigen::Index>(nx * n_noise);
  out.pi.probs = Matrix(ns, static_cast<Eigen::Index>(na));
  out.b.probs = Matrix(ns, static_cast<Eigen::Index>(na));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < n_noise; ++u) {
      const std::size_t s = lifted_index(x, u, n_noise);
      const auto si = static_cast<Eigen::Index>(s);
      out.pi.probs.row(si) = pi.probs.row(static_cast<Eigen::Index>(x));
      out.b.probs.row(si) = b.probs.row(static_cast<Eigen::Index>(x));
      if (noise_dependent_behavior) {
        const auto beta = detail::positive_row(rng, na, 1.0);
        for (std::size_t a = 0; a < na; ++a)
          out.b.probs(si, static_cast<Eigen::Index>(a)) =
              0.5 * out.b.probs(si, static_cast<Eigen::Index>(a)) + 0.5 * beta[a];
      }
      out.mdp.initial(si) = base.initial(static_cast<Eigen::Index>(x)) * h[x][u];
      for (std::size_t a = 0; a < na; ++a) {
        out.mdp.reward(static_cast<Eigen::Index>(a), si) = base.r(a, x);
        for (std::size_t nx2 = 0; nx2 < nx; ++nx2)
          for (std::size_t u2 = 0; u2 < n_noise; ++u2)
            out.mdp.p(s, a, lifted_index(nx2, u2, n_noise)) = base.p(x, a, nx2) * h[nx2][u2];
      }
    }
  out.truth = projection_partition(nx, n_noise);
  return out;
}

// ---------------------------------------------------------------------------
// Three-group toy

struct ToySizes {
  std::size_t g1 = 2;
  std::size_t g2 = 2;
  std::size_t g3 = 2;
};

struct ToyOptions {
  std::size_t n_actions = 2;
  std::size_t n_noise = 1;  // extra coordinate with its own independent chain
  double gamma = 0.9;
  double epsilon = 0.5;  // b = (1 - epsilon) pi + epsilon beta
  double reward_noise_std = 0.0;
};

struct ToyInstance {
  MdpModel mdp;
  PolicyTable pi;       // state-agnostic
  PolicyTable explore;  // beta, depends on (G2, G3)
  PolicyTable b;
  Partition forward;   // (G1, G2)
  Partition backward;  // (G2, G3)
  Partition two_step;  // G2
  std::string factorization;
};

struct ToyCoordinates {
  std::size_t g1, g2, g3, u;
};

inline std::size_t toy_index(const ToySizes& n, std::size_t n_noise, const ToyCoordinates& c) {
  return ((c.g1 * n.g2 + c.g2) * n.g3 + c.g3) * n_noise + c.u;
}

inline ToyCoordinates toy_coordinates(const ToySizes& n, std::size_t n_noise, std::size_t s) {
  ToyCoordinates c{};
  c.u = s % n_noise;
  s /= n_noise;
  c.g3 = s % n.g3;
  s /= n.g3;
  c.g2 = s % n.g2;
  c.g1 = s / n.g2;
  return c;
}

/// Toy MDP with three groups of state variables. Within a step G2 moves
/// first, G2' ~ K2(.|G2, a), then G1' ~ K1(.|G2'); G3' ~ K3(.|G3) and the
/// optional noise coordinate U' ~ K4(.|U) evolve on their own. The reward
/// is r(a, G1). rho0 = rho0(G2, G3) K1(G1|G2) nu(U), so that G1 is already
/// in its conditional law given G2 at the first step.
inline ToyInstance three_group_toy(const ToySizes& sizes, std::uint64_t seed,
                                   const ToyOptions& opts = {}) {
  if (sizes.g1 < 2 || sizes.g2 < 2 || sizes.g3 < 2)
    throw InvalidInput("three_group_toy: every group needs at least 2 values");
  if (opts.n_actions == 0 || opts.n_noise == 0)
    throw InvalidInput("three_group_toy: n_actions and n_noise must be at least 1");
  RandomStream rng(seed, 7);
  const std::size_t na = opts.n_actions;
  const std::size_t nu = opts.n_noise;
  auto kernel = [&](std::size_t rows, std::size_t cols) {
    std::vector<std::vector<double>> k(rows);
    for (auto& row : k) row = detail::positive_row(rng, cols, 1.0);
    return k;
  };
  const auto k1 = kernel(sizes.g2, sizes.g1);        // K1(g1' | g2')
  const auto k2 = kernel(sizes.g2 * na, sizes.g2);   // K2(g2' | g2, a), row g2 * na + a
  const auto k3 = kernel(sizes.g3, sizes.g3);        // K3(g3' | g3)
  const auto k4 = kernel(nu, nu);                    // K4(u' | u)
  const auto start = detail::positive_row(rng, sizes.g2 * sizes.g3, 1.0);
  const auto nu0 = detail::positive_row(rng, nu, 1.0);
  std::vector<std::vector<double>> reward(na, std::vector<double>(sizes.g1));
  for (auto& row : reward)
    for (double& r : row) r = rng.uniform(-1.0, 1.0);

  const std::size_t ns = sizes.g1 * sizes.g2 * sizes.g3 * nu;
  ToyInstance out;
  out.mdp = MdpModel::zeros(ns, na, opts.gamma);
  out.mdp.reward_noise_std = opts.reward_noise_std;
  for (std::size_t s = 0; s < ns; ++s) {
    const ToyCoordinates c = toy_coordinates(sizes, nu, s);
    out.mdp.initial(static_cast<Eigen::Index>(s)) =
        start[c.g2 * sizes.g3 + c.g3] * k1[c.g2][c.g1] * nu0[c.u];
    for (std::size_t a = 0; a < na; ++a) {
      out.mdp.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) =
          reward[a][c.g1];
      for (std::size_t n = 0; n < ns; ++n) {
        const ToyCoordinates d = toy_coordinates(sizes, nu, n);
        out.mdp.p(s, a, n) =
            k2[c.g2 * na + a][d.g2] * k1[d.g2][d.g1] * k3[c.g3][d.g3] * k4[c.u][d.u];
      }
    }
  }

  const auto pi_row = detail::positive_row(rng, na, 1.0);
  out.pi.probs = Matrix(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
  out.explore.probs = out.pi.probs;
  std::vector<std::vector<double>> beta(sizes.g2 * sizes.g3);
  for (auto& row : beta) row = detail::positive_row(rng, na, 1.0);
  for (std::size_t s = 0; s < ns; ++s) {
    const ToyCoordinates c = toy_coordinates(sizes, nu, s);
    detail::fill_policy_row(out.pi, s, pi_row);
    detail::fill_policy_row(out.explore, s, beta[c.g2 * sizes.g3 + c.g3]);
  }
  out.b = mix_policies(out.pi, out.explore, opts.epsilon);

  std::vector<std::size_t> fwd(ns), bwd(ns), two(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const ToyCoordinates c = toy_coordinates(sizes, nu, s);
    fwd[s] = c.g1 * sizes.g2 + c.g2;
    bwd[s] = c.g2 * sizes.g3 + c.g3;
    two[s] = c.g2;
  }
  out.forward = Partition::from_labels(fwd);
  out.backward = Partition::from_labels(bwd);
  out.two_step = Partition::from_labels(two);
  out.factorization =
      "G2'~K2(.|G2,a); G1'~K1(.|G2'); G3'~K3(.|G3); U'~K4(.|U); R=r(a,G1); "
      "b=(1-eps)pi+eps*beta(.|G2,G3); rho0=rho0(G2,G3)K1(G1|G2)nu(U)";
  return out;
}

}  // namespace absope
