#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "nip/errors.hpp"
#include "nip/occupancy.hpp"
#include "oracles.hpp"

using namespace nip;

namespace {

// Same dynamics and rewards, every action budget set to N so no budget row binds.
RmabInstance unconstrained(const RmabInstance& inst) {
  return RmabInstance(inst.n_arms(), inst.n_states(), inst.n_actions(), inst.transitions(),
                      inst.rewards(), std::vector<int>(inst.n_actions(), inst.n_arms()),
                      inst.seed());
}

RmabInstance small_instance(std::uint64_t seed) {
  return generate_instance(2, 2, 2, std::vector<double>{0.5}, seed);
}

double arm_lp_value(const RmabInstance& inst, const OccupancyMeasure& om, int n) {
  double v = 0.0;
  for (int s = 0; s < inst.n_states(); ++s)
    for (int a = 0; a < inst.n_actions(); ++a) v += om.at(n, s, a) * inst.reward(n, s, a);
  return v;
}

}  // namespace

TEST(OccupancyLp, RowAndColumnCounts) {
  const auto lp = build_occupancy_lp(small_instance(0));
  EXPECT_EQ(lp.n_cols, 8);
  EXPECT_EQ(lp.n_rows, 8);
  const OccupancyLayout layout{2, 2, 2};
  EXPECT_EQ(lp.senses[layout.budget_row(0)], RowSense::LessEqual);
  EXPECT_EQ(lp.senses[layout.budget_row(1)], RowSense::LessEqual);
  EXPECT_EQ(lp.senses[layout.flow_row(1, 1)], RowSense::Equal);
  EXPECT_EQ(lp.senses[layout.normalization_row(1)], RowSense::Equal);
  EXPECT_EQ(lp.rhs[layout.normalization_row(0)], 1.0);
}

TEST(OccupancyLp, SmallLpMatchesVertexEnumeration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = small_instance(seed);
    const auto lp = build_occupancy_lp(inst);
    const auto expected = nip::testing::vertex_enumeration_max(lp);
    ASSERT_TRUE(expected.has_value());
    EXPECT_NEAR(solve_occupancy(inst).objective_value, *expected, 1e-6) << "seed " << seed;
  }
}

TEST(OccupancyLp, NonBindingBudgetsGiveSumOfArmOptima) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = unconstrained(generate_instance(5, 4, 3, std::vector<double>{0.2, 0.2}, seed));
    double expected = 0.0;
    for (int n = 0; n < inst.n_arms(); ++n) expected += nip::testing::policy_iteration_gain(inst, n);
    EXPECT_NEAR(solve_occupancy(inst).objective_value, expected, 1e-5) << "seed " << seed;
  }
}

TEST(OccupancyLp, InvariantsHoldOnFiftyInstances) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int N = 3 + static_cast<int>(seed % 8);
    const auto inst = generate_instance(N, 4, 3, std::vector<double>{0.3, 0.2}, seed);
    const auto om = solve_occupancy(inst);
    const auto issues = check_occupancy(inst, om);
    EXPECT_TRUE(issues.empty()) << "seed " << seed << ": " << (issues.empty() ? "" : issues[0]);
    const auto pi = extract_policy(om);
    for (int n = 0; n < N; ++n)
      for (int s = 0; s < 4; ++s) {
        double row = 0.0;
        for (double p : pi.row(n, s)) {
          EXPECT_GE(p, 0.0);
          row += p;
        }
        EXPECT_NEAR(row, 1.0, 1e-9);
      }
  }
}

TEST(OccupancyLp, BudgetsBindWhenTight) {
  const auto inst = generate_instance(20, 5, 4, std::vector<double>{0.1, 0.05, 0.05}, 3);
  const auto bound = solve_occupancy(inst).objective_value;
  const auto loose = solve_occupancy(unconstrained(inst)).objective_value;
  EXPECT_LT(bound, loose);
}

TEST(ExtractPolicy, ConditionalRowsAndFallback) {
  OccupancyMeasure om;
  om.n_arms = 1;
  om.n_states = 2;
  om.n_actions = 2;
  om.omega = {0.2, 0.0, 0.0, 0.0};
  const auto pi = extract_policy(om);
  EXPECT_EQ(pi.row(0, 0)[0], 1.0);
  EXPECT_EQ(pi.row(0, 0)[1], 0.0);
  EXPECT_EQ(pi.row(0, 1)[0], 0.5);
  EXPECT_EQ(pi.row(0, 1)[1], 0.5);
}

TEST(ExtractPolicy, MatchesLpConditionals) {
  const auto inst = small_instance(4);
  const auto om = solve_occupancy(inst);
  const auto pi = extract_policy(om);
  for (int n = 0; n < 2; ++n)
    for (int s = 0; s < 2; ++s) {
      const double tot = om.at(n, s, 0) + om.at(n, s, 1);
      if (tot < 1e-12) continue;
      for (int a = 0; a < 2; ++a) EXPECT_NEAR(pi.row(n, s)[a], om.at(n, s, a) / tot, 1e-12);
    }
}

TEST(SingleArmReward, UniformChainAveragesRewards) {
  const int S = 3, A = 2;
  std::vector<double> p(S * A * S, 1.0 / S);
  std::vector<double> r{1, 5, 2, 6, 4, 9};
  const RmabInstance inst(1, S, A, p, r, {0, 1}, 0);
  Matrix policy(S, A, 0.0);
  for (int s = 0; s < S; ++s) policy(s, 1) = 1.0;
  EXPECT_NEAR(single_arm_average_reward(inst, 0, policy), (5.0 + 6.0 + 9.0) / 3.0, 1e-12);
}

TEST(SingleArmReward, OraclePolicyReproducesLpPerArm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = unconstrained(generate_instance(4, 4, 3, std::vector<double>{0.25, 0.25}, seed));
    const auto om = solve_occupancy(inst);
    const auto pi = extract_policy(om);
    double total = 0.0;
    for (int n = 0; n < inst.n_arms(); ++n) {
      const double v = single_arm_average_reward(inst, n, arm_policy(pi, n));
      EXPECT_NEAR(v, arm_lp_value(inst, om, n), 1e-6);
      total += v;
    }
    EXPECT_NEAR(total, om.objective_value, 1e-5);
  }
}

TEST(SingleArmReward, RandomPoliciesBelowArmOptimum) {
  const auto inst = generate_instance(3, 4, 3, std::vector<double>{0.3, 0.3}, 8);
  Rng rng = make_stream(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = trial % 3;
    Matrix policy(4, 3);
    for (int s = 0; s < 4; ++s) {
      double tot = 0.0;
      for (int a = 0; a < 3; ++a) tot += policy(s, a) = uniform01(rng) + 1e-3;
      for (int a = 0; a < 3; ++a) policy(s, a) /= tot;
    }
    EXPECT_LE(single_arm_average_reward(inst, n, policy),
              nip::testing::policy_iteration_gain(inst, n) + 1e-9);
  }
}

TEST(SingleArmReward, SingularChainReported) {
  const int S = 2, A = 1;
  const RmabInstance inst(1, S, A, {1, 0, 0, 1}, {1, 2}, {1}, 0);
  Matrix policy(S, A, 1.0);
  EXPECT_THROW(single_arm_average_reward(inst, 0, policy), NumericalError);
}

TEST(OccupancyLp, RewardScalingIsLinear) {
  const auto inst = generate_instance(6, 4, 3, std::vector<double>{0.3, 0.2}, 5);
  const double c = 2.5;
  std::vector<double> r = inst.rewards();
  for (double& v : r) v *= c;
  const RmabInstance scaled(6, 4, 3, inst.transitions(), r, inst.budgets(), 5);
  const auto om = solve_occupancy(inst);
  const auto om_c = solve_occupancy(scaled);
  EXPECT_NEAR(om_c.objective_value, c * om.objective_value, 1e-9 * c * om.objective_value);
  const auto pi = extract_policy(om), pi_c = extract_policy(om_c);
  for (std::size_t k = 0; k < pi.pi.size(); ++k) EXPECT_NEAR(pi.pi[k], pi_c.pi[k], 1e-9);
}

TEST(OccupancyLp, UpperBoundsSimulatedFeasiblePolicies) {
  Rng rng = make_stream(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = generate_instance(4, 3, 3, std::vector<double>{0.25, 0.25}, 100 + trial);
    const double bound = solve_occupancy(inst).objective_value;
    std::vector<double> score(static_cast<std::size_t>(4) * 3 * 3);
    for (double& v : score) v = uniform01(rng);
    const auto est = nip::testing::simulate_score_policy(inst, score, 10000, 500, trial);
    EXPECT_LE(est.mean, bound + 3 * est.std_error) << "trial " << trial;
  }
}

TEST(OccupancyLp, SerializationRoundTrip) {
  const auto inst = generate_instance(3, 3, 2, std::vector<double>{0.4}, 2);
  const auto om = solve_occupancy(inst);
  const auto om2 = occupancy_from_document(KvDocument::parse(occupancy_to_document(om).to_string()));
  EXPECT_EQ(om2.omega, om.omega);
  EXPECT_EQ(om2.objective_value, om.objective_value);
  const auto pi = extract_policy(om);
  const auto pi2 = policy_from_document(KvDocument::parse(policy_to_document(pi).to_string()));
  EXPECT_EQ(pi2.pi, pi.pi);
  KvDocument bad = occupancy_to_document(om);
  bad.set("omega", std::span<const double>(std::vector<double>{1.0}));
  EXPECT_THROW(occupancy_from_document(bad), DataError);
}
