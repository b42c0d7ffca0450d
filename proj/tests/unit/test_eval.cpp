#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nip/eval.hpp"
#include "oracles.hpp"

using namespace nip;

namespace {

RmabInstance unconstrained(const RmabInstance& inst) {
  return RmabInstance(inst.n_arms(), inst.n_states(), inst.n_actions(), inst.transitions(),
                      inst.rewards(), std::vector<int>(inst.n_actions(), inst.n_arms()),
                      inst.seed());
}

nip::testing::MeanEstimate batch_means(const std::vector<double>& x, int burn_in, int batches) {
  const int len = (static_cast<int>(x.size()) - burn_in) / batches;
  std::vector<double> m(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (int k = 0; k < len; ++k) m[b] += x[burn_in + b * len + k];
    m[b] /= len;
  }
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= batches;
  double var = 0.0;
  for (double v : m) var += (v - mean) * (v - mean);
  var /= batches - 1;
  return {mean, std::sqrt(var / batches)};
}

EvalConfig small_eval(std::uint64_t seed) {
  EvalConfig c;
  c.batches = 6;
  c.horizon = 12;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Simulate, ZeroHorizonEmpty) {
  const auto inst = generate_instance(3, 2, 2, std::vector<double>{0.4}, 0);
  Rng rng = make_stream(0);
  EXPECT_TRUE(simulate_policy(inst, random_policy_callback(inst, true), StateVector{{0, 0, 1}}, 0, rng).empty());
}

TEST(Simulate, IdentityTransitionsConstantReward) {
  const int N = 3, S = 2, A = 2;
  std::vector<double> p(N * S * A * S, 0.0), r(N * S * A);
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        p[((n * S + s) * A + a) * S + s] = 1.0;
        r[(n * S + s) * A + a] = 1.0 + n + s + 2 * a;
      }
  const RmabInstance inst(N, S, A, p, r, {2, 1}, 0);
  const PolicyFn first_active = [](const StateVector& s, Rng&) {
    ActionVector a{std::vector<int>(s.states.size(), 0)};
    a.actions[0] = 1;
    return a;
  };
  Rng rng = make_stream(1);
  const auto series = simulate_policy(inst, first_active, StateVector{{1, 0, 1}}, 7, rng);
  ASSERT_EQ(series.size(), 7u);
  for (double v : series) EXPECT_EQ(v, (1 + 1 + 2) + (2 + 0) + (3 + 1));
}

TEST(Simulate, ViolationAbortsWithTimestep) {
  const auto inst = generate_instance(4, 3, 3, std::vector<double>{0.25, 0.25}, 1);
  int calls = 0;
  const PolicyFn greedy = [&calls](const StateVector& s, Rng&) {
    ActionVector a{std::vector<int>(s.states.size(), 0)};
    if (++calls == 3) a.actions = {2, 2, 0, 0};
    return a;
  };
  Rng rng = make_stream(2);
  try {
    simulate_policy(inst, greedy, StateVector{{0, 0, 0, 0}}, 10, rng);
    FAIL() << "expected a budget violation";
  } catch (const BudgetViolation& v) {
    EXPECT_EQ(v.timestep, 3);
    EXPECT_EQ(v.action, 2);
  }
}

TEST(Simulate, UnenforcedCountsViolations) {
  const auto inst = generate_instance(10, 3, 4, std::vector<double>{0.1, 0.1, 0.1}, 1);
  Rng rng = make_stream(3);
  long violations = 0;
  simulate_policy(inst, random_policy_callback(inst, false), sample_uniform_states(inst, rng), 50,
                  rng, false, &violations);
  EXPECT_GT(violations, 0);
}

TEST(OraclePolicy, LongRunMatchesBoundWhenUnconstrained) {
  const auto inst = unconstrained(generate_instance(3, 3, 3, std::vector<double>{0.3, 0.3}, 9));
  const auto om = solve_occupancy(inst);
  Rng rng = make_stream(4);
  const auto series =
      simulate_policy(inst, oracle_policy_callback(om, inst), sample_uniform_states(inst, rng), 10000, rng);
  const auto est = batch_means(series, 0, 20);
  EXPECT_NEAR(est.mean, om.objective_value, 2 * est.std_error);
}

TEST(OraclePolicy, OneHotRowsAreDeterministic) {
  const auto inst = generate_instance(3, 2, 2, std::vector<double>{0.4}, 3);
  OraclePolicy pi;
  pi.n_arms = 3;
  pi.n_states = 2;
  pi.n_actions = 2;
  pi.pi = {1, 0, 0, 1, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto cb = oracle_policy_callback(pi, inst);
  Rng rng = make_stream(5);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(cb(StateVector{{1, 0, 1}}, rng).actions, (std::vector<int>{1, 0, 0}));
}

TEST(Policies, EveryEmittedVectorFeasibleAndBelowBound) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = generate_instance(5, 3, 3, std::vector<double>{0.2, 0.2}, 20 + seed);
    const auto om = solve_occupancy(inst);
    const IndexNetwork net = make_index_network(inst, seed, 16);
    const PolicyFn policies[3] = {oracle_policy_callback(om, inst),
                                  predicted_policy_callback(net, inst, PlanMode::Round),
                                  random_policy_callback(inst, true)};
    for (int k = 0; k < 3; ++k) {
      Rng rng = make_stream(seed, {static_cast<std::uint64_t>(k)});
      const auto series =
          simulate_policy(inst, policies[k], sample_uniform_states(inst, rng), 6000, rng);
      const auto est = batch_means(series, 1000, 20);
      EXPECT_LE(est.mean, om.objective_value + 3 * est.std_error) << "seed " << seed << " policy " << k;
    }
  }
}

TEST(RandomPolicy, UniformActionFrequencies) {
  const auto inst = generate_instance(1, 2, 4, std::vector<double>{0.3, 0.3, 0.3}, 0);
  const auto cb = random_policy_callback(inst, false);
  Rng rng = make_stream(6);
  const int draws = 10000;
  std::vector<int> counts(4, 0);
  for (int k = 0; k < draws; ++k) ++counts[cb(StateVector{{0}}, rng).actions[0]];
  for (int c : counts) EXPECT_NEAR(c, 0.25 * draws, 3 * std::sqrt(draws * 0.25 * 0.75));
}

TEST(RandomPolicy, BudgetedAlwaysFeasibleAndSeeded) {
  const auto inst = generate_instance(12, 3, 4, std::vector<double>{0.2, 0.1, 0.1}, 2);
  for (bool respect : {true, false}) {
    const auto cb = random_policy_callback(inst, respect);
    Rng a = make_stream(7), b = make_stream(7);
    for (int k = 0; k < 200; ++k) {
      const StateVector s = sample_uniform_states(inst, a);
      sample_uniform_states(inst, b);
      const auto x = cb(s, a);
      EXPECT_EQ(x, cb(s, b));
      if (respect) EXPECT_TRUE(is_budget_feasible(inst.budgets(), x));
    }
  }
}

TEST(PredictedPolicy, RoundModeDeterministicGivenStates) {
  const auto inst = generate_instance(8, 4, 3, std::vector<double>{0.25, 0.25}, 3);
  const auto cb = predicted_policy_callback(make_index_network(inst, 1, 16), inst);
  Rng a = make_stream(1), b = make_stream(99);
  const StateVector s = sample_uniform_states(inst, a);
  EXPECT_EQ(cb(s, a), cb(s, b));
}

TEST(PredictedPolicy, RoundDominatesSampleOnRandomIndices) {
  Rng rng = make_stream(8);
  const std::vector<int> b{5, 3, 2};
  for (int trial = 0; trial < 100; ++trial) {
    Matrix index(10, 3);
    for (double& v : index.data()) v = uniform01(rng);
    const double exact = solve_knapsack_exact(index, b).objective;
    const auto plan = sinkhorn_forward(index, b, {.epsilon = 0.1});
    double sampled = 0.0;
    for (int k = 0; k < 50; ++k) {
      const auto acts = plan_to_actions(plan, PlanMode::Sample, rng);
      for (int n = 0; n < 10; ++n) sampled += index(n, acts.actions[n]);
    }
    EXPECT_GE(exact, sampled / 50 - 1e-12);
  }
}

TEST(GapMetric, ClosedForms) {
  const std::vector<double> o{1, 3, 6, 10};
  EXPECT_EQ(*percentage_reward_gap(o, o), 0.0);
  std::vector<double> p;
  for (double v : o) p.push_back(0.95 * v);
  EXPECT_NEAR(*percentage_reward_gap(o, p), 5.0, 1e-12);
  EXPECT_FALSE(percentage_reward_gap(std::vector<double>{0, 0}, std::vector<double>{1, 2}).has_value());
  // Zero prefix is skipped: only t = 2 counts, (2 - 1) / 2.
  EXPECT_NEAR(*percentage_reward_gap(std::vector<double>{0, 2}, std::vector<double>{0, 1}), 50.0, 1e-12);
  EXPECT_EQ(cumulative(std::vector<double>{1, 2, 3}), (std::vector<double>{1, 3, 6}));
}

TEST(Evaluate, SerialParallelAndRepeatAgree) {
  const auto inst = generate_instance(8, 4, 3, std::vector<double>{0.25, 0.25}, 4);
  const auto om = solve_occupancy(inst);
  const IndexNetwork net = make_index_network(inst, 2, 16);
  for (PlanMode mode : {PlanMode::Round, PlanMode::Sample}) {
    EvalConfig c = small_eval(5);
    c.mode = mode;
    const auto a = evaluate_serial(inst, om, net, c);
    const auto b = evaluate_parallel(inst, om, net, c);
    const auto d = evaluate(inst, om, net, c);
    std::ostringstream sa, sb, sd;
    write_series_csv(a, sa);
    write_series_csv(b, sb);
    write_series_csv(d, sd);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str(), sd.str());
    EXPECT_EQ(a.gap_pct, b.gap_pct);
    EXPECT_EQ(a.random_unbudgeted_violations, b.random_unbudgeted_violations);
  }
}

TEST(Evaluate, ReportShapeAndMonotoneSeries) {
  const auto inst = generate_instance(8, 4, 3, std::vector<double>{0.25, 0.25}, 4);
  const auto om = solve_occupancy(inst);
  const auto r = evaluate(inst, om, make_index_network(inst, 2, 16), small_eval(6));
  EXPECT_EQ(r.oracle_cum.size(), 12u);
  EXPECT_EQ(r.feasible_steps_checked, 2L * 12 * 6);
  EXPECT_EQ(r.oracle_bound, om.objective_value);
  for (const auto* s : {&r.oracle_cum, &r.pred_cum, &r.random_cum, &r.random_unbudgeted_cum})
    for (std::size_t t = 1; t < s->size(); ++t) EXPECT_GE((*s)[t], (*s)[t - 1]);
  EXPECT_TRUE(std::isfinite(r.gap_pct));
  std::ostringstream dat;
  write_series_dat(r, dat);
  EXPECT_EQ(dat.str().substr(0, 1), "#");
}

TEST(Evaluate, ShapeMismatchIsDataError) {
  const auto inst = generate_instance(8, 4, 3, std::vector<double>{0.25, 0.25}, 4);
  const auto other = generate_instance(9, 4, 3, std::vector<double>{0.25, 0.25}, 4);
  const auto om = solve_occupancy(inst);
  EXPECT_THROW(evaluate(inst, om, make_index_network(other, 2, 16), small_eval(0)), DataError);
}

TEST(Sweep, GridShapeAndHeatmap) {
  SweepConfig c;
  c.arms = {4, 6};
  c.epsilons = {0.5, 0.1};
  c.seeds = {0};
  c.n_states = 3;
  c.n_actions = 3;
  c.budget_fractions = {0.25, 0.25};
  c.hidden = 8;
  c.train.epochs = 2;
  c.train.batch_size = 2;
  c.train.validation_samples = 2;
  c.eval.batches = 2;
  c.eval.horizon = 5;
  const auto cells = run_sweep(c);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].n_arms, 4);
  EXPECT_EQ(cells[1].epsilon, 0.1);
  EXPECT_EQ(cells[2].n_arms, 6);
  for (const auto& cell : cells) EXPECT_TRUE(cell.error.empty()) << cell.error;
  std::ostringstream csv, heat;
  write_summary_csv(cells, csv, false);
  write_heatmap_dat(c, cells, heat);
  int lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 5);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "N,epsilon,seed,gap_pct,oracle_bound,runtime_s,random_gap_pct,status");
  std::istringstream hs(heat.str());
  std::string line;
  int rows = 0;
  while (std::getline(hs, line))
    if (!line.empty() && line[0] != '#') ++rows;
  EXPECT_EQ(rows, 2);
}

TEST(Sweep, SingleCellEqualsTrainThenEvaluate) {
  SweepConfig c;
  c.arms = {5};
  c.epsilons = {0.1};
  c.seeds = {3};
  c.n_states = 3;
  c.n_actions = 3;
  c.budget_fractions = {0.2, 0.2};
  c.hidden = 8;
  c.train.epochs = 3;
  c.train.batch_size = 2;
  c.train.validation_samples = 2;
  c.eval.batches = 3;
  c.eval.horizon = 6;
  const auto cells = run_sweep(c);
  ASSERT_EQ(cells.size(), 1u);

  const auto inst = generate_instance(5, 3, 3, c.budget_fractions, 3);
  const auto om = solve_occupancy(inst);
  IndexNetwork net = make_index_network(inst, 3, 8);
  TrainConfig tc = c.train;
  tc.seed = 3;
  tc.epsilon = 0.1;
  train(inst, &om, net, tc);
  EvalConfig ec = c.eval;
  ec.seed = 3;
  ec.epsilon = 0.1;
  EXPECT_EQ(evaluate(inst, om, net, ec).gap_pct, cells[0].gap_pct);
}
