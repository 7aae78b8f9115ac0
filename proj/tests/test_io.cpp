#include <gtest/gtest.h>

#include <sstream>

#include "absope/generators.hpp"
#include "absope/io.hpp"
#include "absope/simulator.hpp"

using namespace absope;

TEST(MdpJson, RoundTripIsExact) {
  MdpModel m = random_mdp(4, 3, 12);
  m.reward_noise_std = 0.25;
  const MdpModel back = mdp_from_json(Json::parse(to_json(m).dump()));
  EXPECT_EQ(back.transition, m.transition);
  EXPECT_TRUE(back.reward == m.reward);
  EXPECT_TRUE(back.initial == m.initial);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.reward_noise_std, 0.25);
}

TEST(MdpJson, RejectsMalformed) {
  Json j = to_json(random_mdp(2, 2, 1));
  Json missing = j;
  missing.erase("reward");
  EXPECT_THROW(mdp_from_json(missing), InvalidInput);
  Json deficit = j;
  deficit["transition"][0][0] = {0.5, 0.4};
  EXPECT_THROW(mdp_from_json(deficit), InvalidInput);
  Json ragged = j;
  ragged["transition"][1] = Json::array({Json::array({1.0, 0.0})});
  EXPECT_THROW(mdp_from_json(ragged), InvalidInput);
}

TEST(PolicyJson, RoundTrip) {
  const PolicyTable pi = random_policy(5, 3, 2);
  EXPECT_TRUE(policy_from_json(Json::parse(to_json(pi).dump())).probs == pi.probs);
  EXPECT_THROW(policy_from_json(Json{{"probs", {{0.5, 0.6}}}}), InvalidInput);
}

TEST(PartitionJson, RoundTrip) {
  const Partition p = Partition::from_labels({0, 1, 1, 2, 0});
  EXPECT_EQ(partition_from_json(Json::parse(to_json(p).dump())), p);
  EXPECT_THROW(partition_from_json(Json::array({0, 2})), InvalidInput);
}

TEST(DatasetNdjson, RoundTrip) {
  MdpModel m = random_mdp(3, 2, 3);
  m.reward_noise_std = 0.7;
  const Dataset d = sample_trajectories(m, random_full_support_policy(3, 2, 1), 25, 8, 99);
  std::stringstream buffer;
  write_dataset(buffer, d);
  const Dataset back = read_dataset(buffer);
  EXPECT_EQ(back.horizon, 8u);
  EXPECT_EQ(back.seed, d.seed);
  EXPECT_EQ(back.trajectories, d.trajectories);
}

TEST(DatasetNdjson, ReordersRecords) {
  std::stringstream in(
      "{\"traj\":0,\"t\":1,\"s\":1,\"a\":0,\"r\":2.0}\n"
      "{\"traj\":0,\"t\":0,\"s\":0,\"a\":1,\"r\":1.0}\n");
  const Dataset d = read_dataset(in);
  ASSERT_EQ(d.trajectories.size(), 1u);
  EXPECT_EQ(d.trajectories[0][0], (Step{0, 1, 1.0}));
  EXPECT_EQ(d.horizon, 2u);
}

TEST(DatasetNdjson, RejectsBadInput) {
  std::stringstream gap("{\"traj\":0,\"t\":0,\"s\":0,\"a\":0,\"r\":0}\n{\"traj\":0,\"t\":2,\"s\":0,\"a\":0,\"r\":0}\n");
  EXPECT_THROW(read_dataset(gap), InvalidInput);
  std::stringstream dup("{\"traj\":0,\"t\":0,\"s\":0,\"a\":0,\"r\":0}\n{\"traj\":0,\"t\":0,\"s\":1,\"a\":0,\"r\":0}\n");
  EXPECT_THROW(read_dataset(dup), InvalidInput);
  std::stringstream junk("not json\n");
  EXPECT_THROW(read_dataset(junk), InvalidInput);
  std::stringstream empty("");
  EXPECT_THROW(read_dataset(empty), InvalidInput);
}
