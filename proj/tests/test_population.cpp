#include <gtest/gtest.h>

#include "absope/generators.hpp"
#include "absope/population.hpp"

using namespace absope;

namespace {

struct Case {
  MdpModel mdp;
  PolicyTable pi, b;
  SolveCache cache;
};

Case make_case(std::uint64_t seed, double gamma = 0.9) {
  Case c;
  c.mdp = random_mdp(2 + seed % 5, 1 + seed % 3, seed, 1.0, 1.0, gamma);
  c.pi = random_policy(c.mdp.n_states, c.mdp.n_actions, seed + 7);
  c.b = random_full_support_policy(c.mdp.n_states, c.mdp.n_actions, seed + 9);
  c.cache = solve(c.mdp, c.pi, c.b);
  return c;
}

}  // namespace

TEST(Population, IdentitiesAgreeWithValue) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Case c = make_case(seed);
    EXPECT_NEAR(exact_f1(c.mdp, c.pi, c.cache.q), c.cache.j_pi, 1e-10);
    EXPECT_NEAR(exact_f3(c.mdp, c.b, c.cache.p_inf, c.cache.w), c.cache.j_pi, 1e-9);
    EXPECT_NEAR(exact_f4(c.mdp, c.pi, c.b, c.cache.p_inf, c.cache.q, c.cache.w), c.cache.j_pi, 1e-9);
  }
}

TEST(Population, SequentialIsWithinTruncationBound) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Case c = make_case(seed);
    for (std::size_t horizon : {5u, 10u, 40u}) {
      const double f2 = exact_f2(c.mdp, c.b, c.cache.rho, horizon);
      EXPECT_LE(std::abs(f2 - c.cache.j_pi), sis_truncation_bound(c.mdp, horizon) + 1e-12);
    }
    EXPECT_NEAR(exact_f2(c.mdp, c.b, c.cache.rho, 600), c.cache.j_pi, 1e-9);
  }
}

TEST(Population, DoublyRobustWithOneWrongNuisance) {
  const Case c = make_case(4);
  const Matrix q_zero = Matrix::Zero(c.cache.q.rows(), c.cache.q.cols());
  const Matrix w_one = Matrix::Ones(c.cache.w.rows(), c.cache.w.cols());
  EXPECT_NEAR(exact_f4(c.mdp, c.pi, c.b, c.cache.p_inf, q_zero, c.cache.w), c.cache.j_pi, 1e-9);
  EXPECT_NEAR(exact_f4(c.mdp, c.pi, c.b, c.cache.p_inf, c.cache.q, w_one), c.cache.j_pi, 1e-9);
  EXPECT_GT(std::abs(exact_f4(c.mdp, c.pi, c.b, c.cache.p_inf, q_zero, w_one) - c.cache.j_pi), 1e-3);
}

TEST(Population, LiftTable) {
  Matrix abstract(2, 2);
  abstract << 1, 2, 3, 4;
  const Matrix ground = lift_table(abstract, Partition(std::vector<std::size_t>{1, 0, 1}));
  Matrix expect(2, 3);
  expect << 2, 1, 2, 4, 3, 4;
  EXPECT_TRUE(ground.isApprox(expect, 0.0));
}

TEST(Population, AbstractQOfForwardQuotientIsGroundQ) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MdpModel base = random_mdp(3, 2, seed);
    const LiftedInstance f = lift_model_irrelevant(base, random_policy(3, 2, seed), 3, seed);
    const PolicyTable b = random_full_support_policy(9, 2, seed);
    const QuotientModel quotient = quotient_mdp(f.mdp, f.truth, f.pi, b);
    const Matrix lifted = lift_table(abstract_q(quotient), f.truth);
    EXPECT_LE((lifted - q_function(f.mdp, f.pi)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Population, AbstractRatiosOnIdentityMatchGround) {
  const Case c = make_case(3);
  const Partition id = Partition::identity(c.mdp.n_states);
  const Matrix w = abstract_mis_ratio(c.cache.d_pi, c.cache.p_inf, c.b, id);
  EXPECT_LE((w - c.cache.w).cwiseAbs().maxCoeff(), 1e-12);
  const QuotientModel q = quotient_mdp(c.mdp, id, c.pi, c.b, c.cache.p_inf);
  EXPECT_LE((abstract_is_ratio(q) - c.cache.rho).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Population, DataLimitOnIdentityIsGround) {
  const Case c = make_case(6);
  const Partition id = Partition::identity(c.mdp.n_states);
  const QuotientModel q = data_limit_mdp(c.mdp, id, c.pi, c.b, c.cache.p_inf);
  for (std::size_t i = 0; i < c.mdp.transition.size(); ++i)
    EXPECT_NEAR(q.model.transition[i], c.mdp.transition[i], 1e-12);
  EXPECT_LE((q.model.reward - c.mdp.reward).cwiseAbs().maxCoeff(), 1e-12);
}
