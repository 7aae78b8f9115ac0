#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "absope/generators.hpp"
#include "absope/simulator.hpp"
#include "absope/solver.hpp"

using namespace absope;

namespace {

MdpModel one_state(double reward, std::size_t n_actions = 1, double gamma = 0.9) {
  MdpModel m = MdpModel::zeros(1, n_actions, gamma);
  for (std::size_t a = 0; a < n_actions; ++a) {
    m.p(0, a, 0) = 1.0;
    m.reward(static_cast<Eigen::Index>(a), 0) = reward;
  }
  m.initial << 1.0;
  return m;
}

MdpModel chain_mdp(const Matrix& p) {
  const auto n = static_cast<std::size_t>(p.rows());
  MdpModel m = MdpModel::zeros(n, 1, 0.9);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t k = 0; k < n; ++k) m.p(s, 0, k) = p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
  m.initial.setConstant(1.0 / static_cast<double>(n));
  return m;
}

// (1 - gamma) sum_{t < terms} gamma^t P(S_t = s) by explicit propagation.
Vector visitation_series(const MdpModel& m, const PolicyTable& pi, int terms) {
  const Matrix p = chain_under_policy(m, pi);
  Vector marginal = m.initial;
  Vector acc = Vector::Zero(marginal.size());
  double discount = 1.0;
  for (int t = 0; t < terms; ++t) {
    acc += discount * marginal;
    marginal = (marginal.transpose() * p).transpose();
    discount *= m.gamma;
  }
  return (1.0 - m.gamma) * acc;
}

}  // namespace

TEST(QFunction, GeometricSeries) {
  const Matrix q = q_function(one_state(1.0), PolicyTable::uniform(1, 1));
  EXPECT_NEAR(q(0, 0), 10.0, 1e-12);
}

TEST(QFunction, ZeroRewardGivesZero) {
  MdpModel m = random_mdp(4, 2, 3);
  m.reward.setZero();
  EXPECT_EQ(q_function(m, random_policy(4, 2, 1)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(QFunction, ValueIterationMatchesDirectSolve) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MdpModel m = random_mdp(5, 2, seed, 1.0, 1.0, 0.9);
    const PolicyTable pi = random_policy(5, 2, seed + 50);
    SolveOptions direct, iterative;
    direct.method = QMethod::LinearSolve;
    iterative.method = QMethod::ValueIteration;
    iterative.tol = 1e-11;
    EXPECT_LE((q_function(m, pi, direct) - q_function(m, pi, iterative)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(QFunction, BellmanResidualAcrossDiscounts) {
  int count = 0;
  for (double gamma : {0.5, 0.9, 0.99})
    for (std::uint64_t seed = 0; seed < 67; ++seed, ++count) {
      const MdpModel m = random_mdp(2 + seed % 7, 1 + seed % 3, seed * 3 + 1, 1.0, 1.0, gamma);
      const PolicyTable pi = random_policy(m.n_states, m.n_actions, seed);
      SolveOptions opts;
      opts.tol = 1e-9;
      opts.method = seed % 2 ? QMethod::ValueIteration : QMethod::LinearSolve;
      EXPECT_LE(bellman_residual(m, pi, q_function(m, pi, opts)), 1e-9) << gamma << " " << seed;
    }
  EXPECT_GE(count, 200);
}

TEST(QFunction, IterationBudgetExhaustionThrows) {
  SolveOptions opts;
  opts.method = QMethod::ValueIteration;
  opts.max_iter = 3;
  EXPECT_THROW(q_function(one_state(1.0), PolicyTable::uniform(1, 1), opts), ConvergenceError);
  opts.tol = 0.0;
  EXPECT_THROW(q_function(one_state(1.0), PolicyTable::uniform(1, 1), opts), InvalidInput);
}

TEST(PolicyValue, OneState) { EXPECT_NEAR(policy_value(one_state(1.0), PolicyTable::uniform(1, 1)), 10.0, 1e-12); }

TEST(PolicyValue, PointMassInitialGivesStateValue) {
  MdpModel m = random_mdp(5, 2, 12);
  m.initial.setZero();
  m.initial(3) = 1.0;
  const PolicyTable pi = random_policy(5, 2, 2);
  EXPECT_NEAR(policy_value(m, pi), state_values(pi, q_function(m, pi))(3), 1e-12);
}

TEST(PolicyValue, MatchesMonteCarlo) {
  const MdpModel m = random_mdp(6, 2, 21, 1.0, 1.0, 0.9);
  const PolicyTable pi = random_policy(6, 2, 22);
  const auto mc = monte_carlo_value(m, pi, 100000, 200, 5);
  EXPECT_NEAR(mc.estimate, policy_value(m, pi), 3.0 * mc.standard_error + mc.truncation_bound);
}

TEST(IsRatio, EqualPoliciesGiveOnes) {
  const PolicyTable pi = random_full_support_policy(4, 3, 1);
  EXPECT_LE((is_ratio(pi, pi).array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(IsRatio, DeterministicOverUniform) {
  const PolicyTable pi = deterministic_policy(5, 2, 3);
  const Matrix rho = is_ratio(pi, PolicyTable::uniform(5, 2));
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    EXPECT_TRUE(rho.data()[i] == 0.0 || rho.data()[i] == 2.0);
}

TEST(IsRatio, EpsilonGreedyHalf) {
  const PolicyTable pi = deterministic_policy(3, 2, 4);
  const Matrix rho = is_ratio(pi, epsilon_greedy(pi, 0.5));
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      EXPECT_NEAR(rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)),
                  pi(s, a) > 0 ? 1.0 / 0.75 : 0.0, 1e-15);
}

TEST(IsRatio, CoverageViolationAndZeroOverZero) {
  PolicyTable pi{Matrix(1, 3)}, b{Matrix(1, 3)};
  pi.probs << 0.5, 0.5, 0.0;
  b.probs << 1.0, 0.0, 0.0;
  EXPECT_THROW(is_ratio(pi, b), CoverageError);
  pi.probs << 1.0, 0.0, 0.0;
  Notes notes;
  const Matrix rho = is_ratio(pi, b, &notes);
  EXPECT_EQ(rho(2, 0), 0.0);
  EXPECT_EQ(notes.size(), 2u);
}

TEST(Stationary, DoublyStochasticIsUniform) {
  Matrix p(3, 3);
  p << 0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3;
  const Vector d = stationary_distribution(chain_mdp(p), PolicyTable::uniform(3, 1));
  EXPECT_LE((d.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-12);
}

TEST(Stationary, TwoStateByHand) {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.5, 0.5;
  const Vector d = stationary_distribution(chain_mdp(p), PolicyTable::uniform(2, 1));
  EXPECT_NEAR(d(0), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(d(1), 1.0 / 6.0, 1e-12);
}

TEST(Stationary, PeriodicTwoCycle) {
  Matrix p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  const MdpModel m = chain_mdp(p);
  const auto result = stationary_analysis(chain_under_policy(m, PolicyTable::uniform(2, 1)));
  EXPECT_NEAR(result.distribution(0), 0.5, 1e-12);
  EXPECT_EQ(result.period, 2u);
  const SolveCache c = solve(m, PolicyTable::uniform(2, 1), PolicyTable::uniform(2, 1));
  ASSERT_FALSE(c.notes.empty());
  EXPECT_NE(c.notes.front().find("periodic"), std::string::npos);
}

TEST(Stationary, MultipleRecurrentClassesNamed) {
  Matrix p(3, 3);
  p << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.25, 0.25;
  try {
    stationary_distribution(chain_mdp(p), PolicyTable::uniform(3, 1));
    FAIL() << "expected ChainStructureError";
  } catch (const ChainStructureError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("{0}"), std::string::npos) << msg;
    EXPECT_NE(msg.find("{1}"), std::string::npos) << msg;
  }
}

TEST(Stationary, TransientStatesGetZeroMass) {
  Matrix p(3, 3);
  p << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.3, 0.3, 0.4;
  const auto r = stationary_analysis(p);
  EXPECT_EQ(r.transient, (std::vector<std::size_t>{2}));
  EXPECT_EQ(r.distribution(2), 0.0);
  MdpModel m = chain_mdp(p);
  m.initial << 0.5, 0.5, 0.0;
  const SolveCache c = solve(m, PolicyTable::uniform(3, 1), PolicyTable::uniform(3, 1));
  EXPECT_TRUE(c.backward.values.empty());
}

TEST(DiscountedVisitation, OneState) {
  const PolicyTable pi = random_policy(1, 3, 4);
  const Matrix d = discounted_visitation(one_state(1.0, 3), pi);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(d(static_cast<Eigen::Index>(a), 0), pi(0, a), 1e-14);
}

TEST(DiscountedVisitation, SmallDiscountFirstOrder) {
  const MdpModel m = random_mdp(4, 2, 5, 1.0, 1.0, 0.01);
  const PolicyTable pi = random_policy(4, 2, 6);
  const Vector d = discounted_state_visitation(m, pi);
  EXPECT_LE((d - visitation_series(m, pi, 50)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((d - m.initial).cwiseAbs().maxCoeff(), 2.0 * m.gamma);
}

TEST(DiscountedVisitation, MatchesSeriesAndSumsToOne) {
  const MdpModel m = random_mdp(5, 2, 7, 1.0, 1.0, 0.9);
  const PolicyTable pi = random_policy(5, 2, 8);
  EXPECT_LE((discounted_state_visitation(m, pi) - visitation_series(m, pi, 2000)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(discounted_visitation(m, pi).sum(), 1.0, 1e-10);
}

TEST(MisRatio, OnPolicyStationaryStartIsOne) {
  MdpModel m = random_mdp(5, 2, 9);
  const PolicyTable b = random_full_support_policy(5, 2, 1);
  m.initial = stationary_distribution(m, b);
  EXPECT_LE((mis_ratio(m, b, b).array() - 1.0).abs().maxCoeff(), 1e-10);
}

TEST(MisRatio, OneStateIsPolicyRatio) {
  const MdpModel m = one_state(1.0, 3);
  const PolicyTable pi = random_policy(1, 3, 1), b = random_full_support_policy(1, 3, 2);
  const Matrix w = mis_ratio(m, pi, b);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(w(static_cast<Eigen::Index>(a), 0), pi(0, a) / b(0, a), 1e-12);
}

TEST(MisRatio, IdentitiesOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const MdpModel m = random_mdp(4, 2, seed + 100);
    const PolicyTable pi = random_policy(4, 2, seed), b = random_full_support_policy(4, 2, seed);
    const SolveCache c = solve(m, pi, b);
    double mass = 0.0, value = 0.0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        const double wt = c.p_inf(static_cast<Eigen::Index>(s)) * b(s, a);
        mass += wt * c.w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
        value += wt * c.w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) * m.r(a, s);
      }
    EXPECT_NEAR(mass, 1.0, 1e-10);
    EXPECT_NEAR(value / (1.0 - m.gamma), c.j_pi, 1e-9);
  }
}

TEST(MisRatio, SupportViolationThrows) {
  MdpModel m = random_mdp(3, 2, 1);
  PolicyTable b{Matrix(3, 2)};
  b.probs << 1, 0, 1, 0, 1, 0;
  EXPECT_THROW(mis_ratio(m, PolicyTable::uniform(3, 2), b), CoverageError);
}

TEST(BackwardKernel, OneStateIsBehavior) {
  const PolicyTable b = random_full_support_policy(1, 3, 5);
  const BackwardKernel k = backward_kernel(one_state(0.0, 3), b);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(k(0, a, 0), b(0, a), 1e-14);
}

TEST(BackwardKernel, ReversibleWalkMatchesForward) {
  Matrix p(2, 2);
  p << 0.3, 0.7, 0.7, 0.3;
  const BackwardKernel k = backward_kernel(chain_mdp(p), PolicyTable::uniform(2, 1));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 2; ++s)
      EXPECT_NEAR(k(n, 0, s), p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(s)), 1e-12);
}

TEST(BackwardKernel, SlicesSumToOneAndBayesIdentity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MdpModel m = random_mdp(5, 3, seed);
    const PolicyTable b = random_full_support_policy(5, 3, seed);
    const Vector p_inf = stationary_distribution(m, b);
    const BackwardKernel k = backward_kernel(m, b, p_inf);
    for (std::size_t n = 0; n < 5; ++n) {
      double total = 0.0, forward = 0.0;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t s = 0; s < 5; ++s) {
          total += k(n, a, s);
          forward += p_inf(static_cast<Eigen::Index>(s)) * b(s, a) * m.p(s, a, n);
        }
      EXPECT_NEAR(total, 1.0, 1e-10);
      EXPECT_NEAR(total * p_inf(static_cast<Eigen::Index>(n)), forward, 1e-10);
      EXPECT_NEAR(forward, p_inf(static_cast<Eigen::Index>(n)), 1e-10);
    }
  }
}

TEST(BackwardKernel, RecoveredFromLongRollout) {
  const MdpModel m = random_mdp(4, 2, 31);
  const PolicyTable b = random_full_support_policy(4, 2, 32);
  const BackwardKernel k = backward_kernel(m, b);
  const Dataset data = sample_trajectories(m, b, 1, 1'000'000, 3, InitMode::FromStationary);
  const Trajectory& tr = data.trajectories.front();
  std::vector<double> joint(4 * 2 * 4, 0.0), marginal(4, 0.0);
  for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
    joint[(tr[t + 1].s * 2 + tr[t].a) * 4 + tr[t].s] += 1.0;
    marginal[tr[t + 1].s] += 1.0;
  }
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t s = 0; s < 4; ++s)
        EXPECT_NEAR(joint[(n * 2 + a) * 4 + s] / marginal[n], k(n, a, s), 5e-3);
}

TEST(BackwardKernel, TimeReversalIsMarkov) {
  // Empirical P(S_{t-1} | S_t, S_{t+1}) against the exact reversed state
  // kernel P(S_{t-1} | S_t), by a chi-square statistic per (S_t, S_{t+1}).
  const MdpModel m = random_mdp(3, 2, 41);
  const PolicyTable b = random_full_support_policy(3, 2, 42);
  const BackwardKernel k = backward_kernel(m, b);
  const Dataset data = sample_trajectories(m, b, 1, 1'000'000, 4, InitMode::FromStationary);
  const Trajectory& tr = data.trajectories.front();
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> counts;
  for (std::size_t t = 1; t + 1 < tr.size(); ++t) {
    auto& c = counts[{tr[t].s, tr[t + 1].s}];
    c.resize(3, 0.0);
    c[tr[t - 1].s] += 1.0;
  }
  double chi2 = 0.0;
  std::size_t dof = 0;
  for (const auto& [key, c] : counts) {
    double total = 0.0;
    for (double x : c) total += x;
    for (std::size_t prev = 0; prev < 3; ++prev) {
      double expected = 0.0;
      for (std::size_t a = 0; a < 2; ++a) expected += k(key.first, a, prev);
      expected *= total;
      chi2 += (c[prev] - expected) * (c[prev] - expected) / expected;
    }
    dof += 2;
  }
  // Mean dof, sd sqrt(2 dof); allow 5 sd.
  EXPECT_LT(chi2, static_cast<double>(dof) + 5.0 * std::sqrt(2.0 * static_cast<double>(dof)));
}

TEST(SisTruncationBound, Values) {
  MdpModel m = one_state(1.0);
  EXPECT_NEAR(sis_truncation_bound(m, 40), std::pow(0.9, 40) / 0.1, 1e-12);
  EXPECT_NEAR(sis_truncation_bound(m, 40), 0.1478, 1e-4);
  EXPECT_LT(sis_truncation_bound(m, 2000), 1e-80);
  m.reward.setZero();
  EXPECT_EQ(sis_truncation_bound(m, 5), 0.0);
}

TEST(Solve, CacheInvariants) {
  const MdpModel m = random_mdp(6, 3, 77);
  const PolicyTable pi = random_policy(6, 3, 1), b = random_full_support_policy(6, 3, 2);
  const SolveCache c = solve(m, pi, b);
  EXPECT_LE((c.v - state_values(pi, c.q)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(c.p_inf.sum(), 1.0, 1e-10);
  EXPECT_LE((c.p_inf.transpose() * chain_under_policy(m, b) - c.p_inf.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(c.d_pi.sum(), 1.0, 1e-10);
  EXPECT_NEAR(c.j_pi, policy_value(m, pi), 1e-12);
}
