#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "nip/errors.hpp"
#include "nip/rmab.hpp"

using namespace nip;

namespace {

const std::vector<double> kFractions{0.2, 0.1, 0.1};

// N arms, S states, A actions, every transition the identity.
RmabInstance identity_instance(int N, int S, int A, std::vector<int> budgets) {
  std::vector<double> p(static_cast<std::size_t>(N) * S * A * S, 0.0);
  std::vector<double> r(static_cast<std::size_t>(N) * S * A);
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        p[((static_cast<std::size_t>(n) * S + s) * A + a) * S + s] = 1.0;
        r[(static_cast<std::size_t>(n) * S + s) * A + a] = 1.0 + n + 0.5 * s + 0.25 * a;
      }
  return RmabInstance(N, S, A, p, r, std::move(budgets), 0);
}

}  // namespace

TEST(Generate, ReferenceBudgets) {
  const auto inst = generate_instance(10, 5, 4, kFractions, 7);
  EXPECT_EQ(inst.budgets(), (std::vector<int>{6, 2, 1, 1}));
  EXPECT_TRUE(validate_instance(inst).empty());
}

TEST(Generate, SingleArmFullBudget) {
  const std::vector<double> f{1.0};
  const auto inst = generate_instance(1, 2, 2, f, 0);
  EXPECT_EQ(inst.budgets(), (std::vector<int>{0, 1}));
}

TEST(Generate, SameSeedIdentical) {
  EXPECT_EQ(generate_instance(10, 5, 4, kFractions, 3), generate_instance(10, 5, 4, kFractions, 3));
  EXPECT_NE(generate_instance(10, 5, 4, kFractions, 3).transitions(),
            generate_instance(10, 5, 4, kFractions, 4).transitions());
}

TEST(Generate, RejectsBadArguments) {
  const std::vector<double> too_much{0.6, 0.3, 0.2};
  EXPECT_THROW(generate_instance(10, 5, 4, too_much, 0), std::invalid_argument);
  EXPECT_THROW(generate_instance(0, 5, 4, kFractions, 0), std::invalid_argument);
  EXPECT_THROW(generate_instance(10, 1, 4, kFractions, 0), std::invalid_argument);
  EXPECT_THROW(generate_instance(10, 5, 1, {}, 0), std::invalid_argument);
  EXPECT_THROW(generate_instance(10, 5, 3, kFractions, 0), std::invalid_argument);
}

TEST(Generate, HundredSeedsValidWithFullSupport) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = generate_instance(6, 4, 3, std::vector<double>{0.3, 0.2}, seed);
    ASSERT_TRUE(validate_instance(inst).empty()) << "seed " << seed;
    for (double p : inst.transitions()) ASSERT_GT(p, 0.0);
  }
}

TEST(Generate, HigherActionsMoveUpward) {
  // Expected next state is nondecreasing in action strength for every (n, s).
  const auto inst = generate_instance(20, 5, 4, kFractions, 11);
  for (int n = 0; n < 20; ++n)
    for (int s = 0; s < 5; ++s) {
      double prev = -1.0;
      for (int a = 0; a < 4; ++a) {
        double mean = 0.0;
        for (int k = 0; k < 5; ++k) mean += k * inst.transition(n, s, a, k);
        EXPECT_GE(mean, prev - 1e-12);
        prev = mean;
      }
    }
}

TEST(Validate, ScaledRowIsNamed) {
  auto inst = generate_instance(3, 3, 2, std::vector<double>{0.5}, 1);
  std::vector<double> p = inst.transitions();
  const std::size_t off = ((1 * 3 + 2) * 2 + 1) * 3;  // arm 1, state 2, action 1
  for (int k = 0; k < 3; ++k) p[off + k] *= 0.5;
  const RmabInstance bad(3, 3, 2, p, inst.rewards(), inst.budgets(), 1);
  const auto issues = validate_instance(bad);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("arm 1, state 2, action 1"), std::string::npos);
}

TEST(Validate, BudgetPaddingViolation) {
  auto inst = generate_instance(4, 2, 2, std::vector<double>{0.5}, 1);
  const RmabInstance bad(4, 2, 2, inst.transitions(), inst.rewards(), {1, 2}, 1);
  const auto issues = validate_instance(bad);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("budgets sum"), std::string::npos);
}

TEST(Validate, NegativeRewardAndMissingSupport) {
  auto inst = identity_instance(1, 2, 2, {0, 1});
  auto issues = validate_instance(inst);
  EXPECT_EQ(issues.size(), 4u);  // identity rows lack full support
  std::vector<double> r = inst.rewards();
  r[0] = -1.0;
  const RmabInstance neg(1, 2, 2, inst.transitions(), r, {0, 1}, 0);
  issues = validate_instance(neg);
  EXPECT_EQ(issues.size(), 5u);
}

TEST(Step, IdentityTransitionsKeepStates) {
  const auto inst = identity_instance(3, 3, 2, {2, 1});
  Rng rng = make_stream(0);
  const StateVector s{{0, 2, 1}};
  const ActionVector a{{0, 1, 0}};
  const StepResult r = step(inst, s, a, rng);
  EXPECT_EQ(r.next, s);
  double expected = 0.0;
  for (int n = 0; n < 3; ++n) expected += inst.reward(n, s.states[n], a.actions[n]);
  EXPECT_DOUBLE_EQ(r.total_reward, expected);
}

TEST(Step, DeterministicJump) {
  std::vector<double> p{0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0};  // always to state 1
  const RmabInstance inst(1, 2, 2, p, {1, 1, 1, 1}, {0, 1}, 0);
  Rng rng = make_stream(0);
  EXPECT_EQ(step(inst, StateVector{{0}}, ActionVector{{1}}, rng).next.states[0], 1);
}

TEST(Step, BudgetViolationRefused) {
  const auto inst = identity_instance(3, 2, 3, {1, 1, 1});
  Rng rng = make_stream(0);
  try {
    step(inst, StateVector{{0, 0, 0}}, ActionVector{{2, 2, 0}}, rng);
    FAIL() << "expected refusal";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("action 2"), std::string::npos);
  }
  // Passive overflow is allowed: idle arms never consume a resource.
  EXPECT_NO_THROW(step(inst, StateVector{{0, 0, 0}}, ActionVector{{0, 0, 1}}, rng));
}

TEST(Step, EmpiricalFrequenciesMatchRow) {
  const auto inst = generate_instance(1, 4, 2, std::vector<double>{1.0}, 5);
  Rng rng = make_stream(9);
  const int draws = 100000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[step(inst, StateVector{{2}}, ActionVector{{1}}, rng).next.states[0]];
  for (int k = 0; k < 4; ++k) {
    const double p = inst.transition(0, 2, 1, k);
    EXPECT_NEAR(counts[k], draws * p, 3 * std::sqrt(draws * p * (1 - p)) + 1) << "state " << k;
  }
}

TEST(Step, FuzzedAcceptedVectorsRespectBudgets) {
  const auto inst = generate_instance(20, 3, 4, kFractions, 2);
  Rng rng = make_stream(4);
  int accepted = 0, refused = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    // Mostly passive so that a fair share of the vectors is feasible.
    ActionVector a;
    for (int n = 0; n < 20; ++n)
      a.actions.push_back(uniform01(rng) < 0.6 ? 0 : 1 + uniform_int(rng, 3));
    StateVector s = sample_uniform_states(inst, rng);
    try {
      step(inst, s, a, rng);
    } catch (const std::invalid_argument&) {
      ++refused;
      continue;
    }
    ++accepted;
    std::vector<int> counts(4, 0);
    for (int x : a.actions) ++counts[x];
    for (int k = 1; k < 4; ++k) ASSERT_LE(counts[k], inst.budgets()[k]);
  }
  EXPECT_GT(accepted, 0);
  EXPECT_GT(refused, 0);
}

TEST(Step, ReproducibleWithSeed) {
  const auto inst = generate_instance(10, 5, 4, kFractions, 1);
  Rng a = make_stream(77), b = make_stream(77);
  const StateVector s{{0, 1, 2, 3, 4, 0, 1, 2, 3, 4}};
  const ActionVector acts{{1, 1, 2, 3, 0, 0, 0, 0, 0, 0}};
  EXPECT_EQ(step(inst, s, acts, a).next, step(inst, s, acts, b).next);
}

TEST(Serialization, RoundTrip) {
  const auto inst = generate_instance(7, 3, 3, std::vector<double>{0.3, 0.3}, 12);
  const auto path = std::filesystem::temp_directory_path() / "nip_rmab_roundtrip.txt";
  write_instance(inst, path);
  EXPECT_EQ(read_instance(path), inst);
  std::filesystem::remove(path);
}

TEST(Serialization, WrongLengthIsDataError) {
  KvDocument doc = instance_to_document(generate_instance(2, 2, 2, std::vector<double>{0.5}, 0));
  doc.set("rewards", std::span<const double>(std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(instance_from_document(doc), DataError);
}
