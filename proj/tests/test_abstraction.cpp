#include <gtest/gtest.h>

#include "absope/abstraction.hpp"
#include "absope/generators.hpp"

using namespace absope;

namespace {

// Three base states lifted with two noise values: six ground states.
LiftedInstance small_forward_instance(std::uint64_t seed) {
  const MdpModel base = random_mdp(3, 2, seed);
  return lift_model_irrelevant(base, random_policy(3, 2, seed + 1), 2, seed + 2);
}

LiftedInstance small_backward_instance(std::uint64_t seed, bool noisy_behavior = false) {
  const MdpModel base = random_mdp(3, 2, seed);
  return lift_backward_irrelevant(base, random_policy(3, 2, seed + 1),
                                  random_full_support_policy(3, 2, seed + 2), 2, seed + 3,
                                  noisy_behavior);
}

}  // namespace

TEST(PartitionBasics, FromLabelsIsCanonical) {
  const Partition p = Partition::from_labels({5, 3, 5, 9});
  EXPECT_EQ(p.block_of(), (std::vector<std::size_t>{0, 1, 0, 2}));
  EXPECT_EQ(p.n_blocks(), 3u);
  EXPECT_TRUE(p.is_canonical());
  EXPECT_EQ(p.representatives(), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_THROW(Partition(std::vector<std::size_t>{0, 2}), InvalidInput);
}

TEST(PartitionBasics, Compose) {
  const Partition inner(std::vector<std::size_t>{0, 1, 1, 2});
  const Partition outer(std::vector<std::size_t>{0, 0, 1});
  EXPECT_EQ(compose(outer, inner).block_of(), (std::vector<std::size_t>{0, 0, 0, 1}));
  EXPECT_EQ(compose(Partition::identity(3), inner), inner);
  EXPECT_THROW(compose(Partition::identity(2), inner), InvalidInput);
}

TEST(Checkers, PiIrrelevanceWitness) {
  PolicyTable pi{Matrix(3, 2)};
  pi.probs << 0.5, 0.5, 0.7, 0.3, 0.2, 0.8;
  const Partition part(std::vector<std::size_t>{0, 0, 1});
  const auto report = check_pi_irrelevance(part, pi, 1e-9);
  ASSERT_FALSE(report.holds);
  ASSERT_TRUE(report.witness.has_value());
  EXPECT_EQ(report.witness->first, 0u);
  EXPECT_EQ(report.witness->second, 1u);
  EXPECT_NEAR(report.worst, 0.2, 1e-12);
  EXPECT_TRUE(check_pi_irrelevance(part, pi, 0.25).holds);
}

TEST(Checkers, IdentityAlwaysHolds) {
  const MdpModel m = random_mdp(5, 2, 3);
  const PolicyTable pi = random_policy(5, 2, 4), b = random_full_support_policy(5, 2, 5);
  const Partition id = Partition::identity(5);
  EXPECT_TRUE(check_forward_irrelevance(id, m, pi, 0.0).holds);
  EXPECT_TRUE(check_backward_model_irrelevance(id, m, b, pi, 0.0).holds);
}

TEST(Checkers, TransitionWitnessNamesBlock) {
  MdpModel m = MdpModel::zeros(3, 1, 0.9);
  m.p(0, 0, 0) = 1.0;
  m.p(1, 0, 2) = 1.0;
  m.p(2, 0, 2) = 1.0;
  m.initial << 1, 0, 0;
  const Partition part(std::vector<std::size_t>{0, 0, 1});
  const auto report = check_transition_irrelevance(part, m, 1e-9);
  ASSERT_FALSE(report.holds);
  ASSERT_TRUE(report.witness && report.witness->block);
  EXPECT_EQ(report.witness->second, 1u);
  EXPECT_NEAR(report.worst, 1.0, 1e-12);
}

TEST(Checkers, LiftedInstancesSatisfyTheirConditions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto f = small_forward_instance(seed);
    EXPECT_TRUE(check_forward_irrelevance(f.truth, f.mdp, f.pi, 1e-12).holds);
    const auto g = small_backward_instance(seed);
    EXPECT_TRUE(check_backward_model_irrelevance(g.truth, g.mdp, g.b, g.pi, 1e-10).holds)
        << check_backward_model_irrelevance(g.truth, g.mdp, g.b, g.pi, 1e-10).to_string();
    const auto h = small_backward_instance(seed, true);
    EXPECT_FALSE(check_rho_irrelevance(h.truth, is_ratio(h.pi, h.b), 1e-6).holds);
  }
}

TEST(Refinement, ForwardRecoversProjection) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto f = small_forward_instance(seed);
    RefinementAudit audit;
    const Partition p = coarsest_forward(f.mdp, f.pi, 1e-10, &audit);
    EXPECT_EQ(p, f.truth) << "seed " << seed;
    EXPECT_EQ(audit.final_blocks, p.n_blocks());
    for (const auto& r : audit.rounds) EXPECT_GE(r.blocks_after, r.blocks_before);
  }
}

TEST(Refinement, BackwardRecoversProjection) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = small_backward_instance(seed);
    EXPECT_EQ(coarsest_backward(g.mdp, g.pi, g.b, 1e-10), g.truth) << "seed " << seed;
  }
}

TEST(Refinement, ConstantMdpCollapsesToOneBlock) {
  MdpModel m = MdpModel::zeros(4, 2, 0.9);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t n = 0; n < 4; ++n) m.p(s, a, n) = 0.25;
  m.initial.setConstant(0.25);
  const PolicyTable u = PolicyTable::uniform(4, 2);
  EXPECT_EQ(coarsest_forward(m, u, 1e-12).n_blocks(), 1u);
  EXPECT_EQ(coarsest_backward(m, u, u, 1e-12).n_blocks(), 1u);
}

TEST(Refinement, GenericMdpStaysIdentity) {
  const MdpModel m = random_mdp(5, 2, 17);
  const PolicyTable pi = random_policy(5, 2, 1), b = random_full_support_policy(5, 2, 2);
  EXPECT_EQ(coarsest_forward(m, pi, 1e-10).n_blocks(), 5u);
  EXPECT_EQ(coarsest_backward(m, pi, b, 1e-10).n_blocks(), 5u);
}

TEST(Refinement, ResultsSatisfyCheckers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = small_backward_instance(seed, seed % 2 == 1);
    const Partition f = coarsest_forward(g.mdp, g.pi, 1e-10);
    EXPECT_TRUE(check_forward_irrelevance(f, g.mdp, g.pi, 1e-10).holds);
    const Partition b = coarsest_backward(g.mdp, g.pi, g.b, 1e-10);
    EXPECT_TRUE(check_backward_model_irrelevance(b, g.mdp, g.b, g.pi, 1e-10).holds);
  }
}

TEST(BruteForce, AgreesWithRefinement) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto f = small_forward_instance(seed);
    const PolicyTable b = random_full_support_policy(6, 2, seed);
    EXPECT_EQ(brute_force_coarsest(f.mdp, f.pi, b, Condition::Forward, 1e-10),
              coarsest_forward(f.mdp, f.pi, 1e-10));
    const auto g = small_backward_instance(seed);
    EXPECT_EQ(brute_force_coarsest(g.mdp, g.pi, g.b, Condition::Backward, 1e-10),
              coarsest_backward(g.mdp, g.pi, g.b, 1e-10));
  }
}

TEST(BruteForce, RefusesLargeInstances) {
  const MdpModel m = random_mdp(9, 1, 1);
  const PolicyTable u = PolicyTable::uniform(9, 1);
  EXPECT_THROW(brute_force_coarsest(m, u, u, Condition::Forward, 1e-9), InvalidInput);
}

TEST(Quotient, IdentityRoundTrip) {
  const MdpModel m = random_mdp(4, 3, 5);
  const PolicyTable pi = random_policy(4, 3, 6), b = random_full_support_policy(4, 3, 7);
  const QuotientModel q = quotient_mdp(m, Partition::identity(4), pi, b);
  ASSERT_EQ(q.model.transition.size(), m.transition.size());
  for (std::size_t i = 0; i < m.transition.size(); ++i) EXPECT_NEAR(q.model.transition[i], m.transition[i], 1e-15);
  EXPECT_TRUE(q.model.reward.isApprox(m.reward, 0.0));
  EXPECT_LE((q.model.initial - m.initial).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((q.pi.probs - pi.probs).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((q.b.probs - b.probs).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Quotient, SingleBlock) {
  const MdpModel m = random_mdp(4, 2, 8);
  const PolicyTable pi = random_policy(4, 2, 9), b = random_full_support_policy(4, 2, 10);
  const Vector p_inf = stationary_distribution(m, b);
  const QuotientModel q = quotient_mdp(m, Partition::single_block(4), pi, b, p_inf);
  EXPECT_TRUE(validate_mdp(q.model).ok());
  EXPECT_NEAR(q.model.p(0, 0, 0), 1.0, 1e-12);
  for (std::size_t a = 0; a < 2; ++a) {
    double expect = 0.0;
    for (std::size_t s = 0; s < 4; ++s) expect += p_inf(static_cast<Eigen::Index>(s)) * m.r(a, s);
    EXPECT_NEAR(q.model.r(a, 0), expect, 1e-12);
  }
}

TEST(Quotient, ZeroMassBlockIsReported) {
  MdpModel m = random_mdp(3, 1, 2);
  for (std::size_t s = 0; s < 3; ++s) {
    m.p(s, 0, 0) = 0.5;
    m.p(s, 0, 1) = 0.5;
    m.p(s, 0, 2) = 0.0;
  }
  const PolicyTable u = PolicyTable::uniform(3, 1);
  EXPECT_THROW(quotient_mdp(m, Partition::identity(3), u, u), ChainStructureError);
}

TEST(TwoStep, ToyBinaryCounts) {
  const ToyInstance toy = three_group_toy({2, 2, 2}, 3);
  const TwoStepResult r = two_step(toy.mdp, toy.pi, toy.b, 1e-9);
  EXPECT_EQ(r.forward, toy.forward);
  EXPECT_EQ(r.composed, toy.two_step);
  EXPECT_EQ(r.block_counts, (std::vector<std::size_t>{8, 4, 2}));
  EXPECT_EQ(coarsest_backward(toy.mdp, toy.pi, toy.b, 1e-9), toy.backward);
}

TEST(TwoStep, RejectsZeroRounds) {
  const ToyInstance toy = three_group_toy({2, 2, 2}, 3);
  EXPECT_THROW(two_step(toy.mdp, toy.pi, toy.b, 1e-9, 0), InvalidInput);
}
