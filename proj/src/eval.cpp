#include "nip/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace nip {

std::vector<double> simulate_policy(const RmabInstance& inst, const PolicyFn& policy,
                                    StateVector s0, int horizon, Rng& rng, bool enforce_budgets,
                                    long* violations) {
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  std::vector<double> rewards;
  rewards.reserve(horizon);
  StateVector s = std::move(s0);
  for (int t = 1; t <= horizon; ++t) {
    const ActionVector acts = policy(s, rng);
    if (acts.actions.size() != s.states.size()) {
      throw std::invalid_argument("policy returned " + std::to_string(acts.actions.size()) +
                                  " actions for " + std::to_string(s.states.size()) + " arms");
    }
    if (auto bad = budget_violation(inst.budgets(), acts)) {
      if (enforce_budgets || *bad < 0 || *bad >= inst.n_actions()) throw BudgetViolation(t, *bad);
      if (violations) ++*violations;
    }
    StepResult r = step(inst, s, acts, rng, /*check_budgets=*/enforce_budgets);
    rewards.push_back(r.total_reward);
    s = std::move(r.next);
  }
  return rewards;
}

PolicyFn oracle_policy_callback(const OraclePolicy& policy, const RmabInstance& inst) {
  auto pi = std::make_shared<const OraclePolicy>(policy);
  const std::vector<int> budgets = inst.budgets();
  return [pi, budgets](const StateVector& s, Rng& rng) {
    const int N = pi->n_arms, A = pi->n_actions;
    Matrix probs(N, A);
    ActionVector acts;
    acts.actions.resize(N);
    for (int n = 0; n < N; ++n) {
      const auto row = pi->row(n, s.states[n]);
      std::copy(row.begin(), row.end(), probs.row(n).begin());
      acts.actions[n] = sample_categorical(row, rng);
    }
    repair_budget_overflow(acts, budgets, probs);
    return acts;
  };
}

PolicyFn oracle_policy_callback(const OccupancyMeasure& om, const RmabInstance& inst) {
  return oracle_policy_callback(extract_policy(om), inst);
}

PolicyFn predicted_policy_callback(const IndexNetwork& net, const RmabInstance& inst,
                                   PlanMode mode, double epsilon) {
  auto model = std::make_shared<const IndexNetwork>(net);
  const int N = inst.n_arms(), S = inst.n_states();
  const std::vector<int> budgets = inst.budgets();
  return [model, N, S, budgets, mode, epsilon](const StateVector& s, Rng& rng) {
    const Matrix index = model->forward(encode(N, S, s));
    if (mode == PlanMode::Round) return solve_knapsack_exact(index, budgets).assignment;
    SinkhornOptions opt;
    opt.epsilon = epsilon;
    const TransportPlan plan = sinkhorn_forward(index, budgets, opt);
    return plan_to_actions(plan, PlanMode::Sample, rng);
  };
}

PolicyFn random_policy_callback(const RmabInstance& inst, bool respect_budgets) {
  const int N = inst.n_arms(), A = inst.n_actions();
  const std::vector<int> budgets = inst.budgets();
  if (!respect_budgets) {
    return [N, A](const StateVector&, Rng& rng) {
      ActionVector acts;
      acts.actions.resize(N);
      for (int& a : acts.actions) a = uniform_int(rng, A);
      return acts;
    };
  }
  return [N, A, budgets](const StateVector&, Rng& rng) {
    Matrix index(N, A);
    for (double& v : index.data()) v = uniform01(rng);
    return solve_knapsack_exact(index, budgets).assignment;
  };
}

std::vector<double> cumulative(std::span<const double> per_step) {
  std::vector<double> out(per_step.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    acc += per_step[t];
    out[t] = acc;
  }
  return out;
}

std::optional<double> percentage_reward_gap(std::span<const double> oracle_cumulative,
                                            std::span<const double> pred_cumulative) {
  if (oracle_cumulative.size() != pred_cumulative.size()) {
    throw std::invalid_argument("reward series lengths differ");
  }
  double total = 0.0;
  int counted = 0;
  for (std::size_t t = 0; t < oracle_cumulative.size(); ++t) {
    const double ro = oracle_cumulative[t];
    if (!(ro > 0.0)) continue;
    total += (ro - pred_cumulative[t]) / ro * 100.0;
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return total / counted;
}

namespace {

struct BatchSeries {
  std::vector<double> oracle, pred, random, random_unbudgeted;
  long unbudgeted_violations = 0;
};

struct EvalPolicies {
  PolicyFn oracle, pred, random, random_unbudgeted;
};

EvalPolicies make_policies(const RmabInstance& inst, const OccupancyMeasure& om,
                           const IndexNetwork& net, const EvalConfig& config) {
  return {oracle_policy_callback(om, inst),
          predicted_policy_callback(net, inst, config.mode, config.epsilon),
          random_policy_callback(inst, true), random_policy_callback(inst, false)};
}

BatchSeries run_batch(const RmabInstance& inst, const EvalPolicies& pol, const EvalConfig& config,
                      int b) {
  const auto tag = static_cast<std::uint64_t>(b);
  Rng init = make_stream(config.seed, {tag, 0});
  const StateVector s0 = sample_uniform_states(inst, init);
  BatchSeries out;
  Rng r1 = make_stream(config.seed, {tag, 1});
  out.oracle = simulate_policy(inst, pol.oracle, s0, config.horizon, r1);
  Rng r2 = make_stream(config.seed, {tag, 2});
  out.pred = simulate_policy(inst, pol.pred, s0, config.horizon, r2);
  Rng r3 = make_stream(config.seed, {tag, 3});
  out.random = simulate_policy(inst, pol.random, s0, config.horizon, r3);
  Rng r4 = make_stream(config.seed, {tag, 4});
  out.random_unbudgeted = simulate_policy(inst, pol.random_unbudgeted, s0, config.horizon, r4,
                                          /*enforce_budgets=*/false, &out.unbudgeted_violations);
  return out;
}

EvalReport assemble(const RmabInstance& inst, const OccupancyMeasure& om, const EvalConfig& config,
                    const std::vector<BatchSeries>& batches) {
  EvalReport rep;
  rep.n_arms = inst.n_arms();
  rep.n_states = inst.n_states();
  rep.n_actions = inst.n_actions();
  rep.horizon = config.horizon;
  rep.batches = config.batches;
  rep.epsilon = config.epsilon;
  rep.seed = config.seed;
  rep.oracle_bound = om.objective_value;
  const int K = config.horizon;
  std::vector<double> mo(K, 0.0), mp(K, 0.0), mr(K, 0.0), mu(K, 0.0);
  for (const auto& b : batches) {
    for (int t = 0; t < K; ++t) {
      mo[t] += b.oracle[t];
      mp[t] += b.pred[t];
      mr[t] += b.random[t];
      mu[t] += b.random_unbudgeted[t];
    }
    rep.random_unbudgeted_violations += b.unbudgeted_violations;
  }
  const double inv = batches.empty() ? 0.0 : 1.0 / static_cast<double>(batches.size());
  double oracle_total = 0.0;
  for (int t = 0; t < K; ++t) {
    mo[t] *= inv;
    mp[t] *= inv;
    mr[t] *= inv;
    mu[t] *= inv;
    oracle_total += mo[t];
  }
  rep.oracle_mean_step_reward = K > 0 ? oracle_total / K : 0.0;
  rep.oracle_cum = cumulative(mo);
  rep.pred_cum = cumulative(mp);
  rep.random_cum = cumulative(mr);
  rep.random_unbudgeted_cum = cumulative(mu);
  const double nan = std::nan("");
  rep.gap_pct = percentage_reward_gap(rep.oracle_cum, rep.pred_cum).value_or(nan);
  rep.random_gap_pct = percentage_reward_gap(rep.oracle_cum, rep.random_cum).value_or(nan);
  rep.random_unbudgeted_gap_pct =
      percentage_reward_gap(rep.oracle_cum, rep.random_unbudgeted_cum).value_or(nan);
  rep.feasible_steps_checked = 2L * K * static_cast<long>(batches.size());
  return rep;
}

void check_eval_inputs(const RmabInstance& inst, const OccupancyMeasure& om,
                       const IndexNetwork& net, const EvalConfig& config) {
  if (config.batches < 1) throw std::invalid_argument("eval batches must be >= 1");
  if (config.horizon < 0) throw std::invalid_argument("eval horizon must be >= 0");
  if (om.n_arms != inst.n_arms() || om.n_states != inst.n_states() ||
      om.n_actions != inst.n_actions()) {
    throw DataError("occupancy measure shape does not match the instance");
  }
  if (net.input_dim() != inst.n_arms() + inst.n_states() || net.n_actions() != inst.n_actions()) {
    throw DataError("checkpoint shape (input " + std::to_string(net.input_dim()) + ", actions " +
                    std::to_string(net.n_actions()) + ") does not match the instance");
  }
}

}  // namespace

EvalReport evaluate_serial(const RmabInstance& inst, const OccupancyMeasure& om,
                           const IndexNetwork& net, const EvalConfig& config) {
  check_eval_inputs(inst, om, net, config);
  const EvalPolicies pol = make_policies(inst, om, net, config);
  std::vector<BatchSeries> batches(config.batches);
  for (int b = 0; b < config.batches; ++b) batches[b] = run_batch(inst, pol, config, b);
  return assemble(inst, om, config, batches);
}

EvalReport evaluate_parallel(const RmabInstance& inst, const OccupancyMeasure& om,
                             const IndexNetwork& net, const EvalConfig& config) {
  check_eval_inputs(inst, om, net, config);
  const EvalPolicies pol = make_policies(inst, om, net, config);
  std::vector<BatchSeries> batches(config.batches);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < config.batches; ++b) {
    try {
      batches[b] = run_batch(inst, pol, config, b);
    } catch (...) {
#pragma omp critical(nip_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return assemble(inst, om, config, batches);
}

EvalReport evaluate(const RmabInstance& inst, const OccupancyMeasure& om, const IndexNetwork& net,
                    const EvalConfig& config) {
  return config.parallel ? evaluate_parallel(inst, om, net, config)
                         : evaluate_serial(inst, om, net, config);
}

void write_series_csv(const EvalReport& report, std::ostream& out) {
  out << "t,oracle,predicted,random,random_unbudgeted\n";
  char buf[256];
  for (std::size_t t = 0; t < report.oracle_cum.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g,%.12g\n", t + 1, report.oracle_cum[t],
                  report.pred_cum[t], report.random_cum[t], report.random_unbudgeted_cum[t]);
    out << buf;
  }
}

void write_series_dat(const EvalReport& report, std::ostream& out) {
  out << "# t oracle predicted random random_unbudgeted\n";
  char buf[256];
  for (std::size_t t = 0; t < report.oracle_cum.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu %.12g %.12g %.12g %.12g\n", t + 1, report.oracle_cum[t],
                  report.pred_cum[t], report.random_cum[t], report.random_unbudgeted_cum[t]);
    out << buf;
  }
}

SweepCell summarize(const EvalReport& report, double runtime_s) {
  SweepCell c;
  c.n_arms = report.n_arms;
  c.seed = report.seed;
  c.gap_pct = report.gap_pct;
  c.random_gap_pct = report.random_gap_pct;
  c.oracle_bound = report.oracle_bound;
  c.runtime_s = runtime_s;
  c.feasible_steps_checked = report.feasible_steps_checked;
  return c;
}

std::vector<SweepCell> run_sweep(const SweepConfig& config) {
  if (config.arms.empty() || config.epsilons.empty() || config.seeds.empty()) {
    throw std::invalid_argument("sweep grid must be non-empty");
  }
  struct Job {
    int n_arms;
    double epsilon;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int n : config.arms)
    for (double e : config.epsilons)
      for (std::uint64_t s : config.seeds) jobs.push_back({n, e, s});

  std::vector<SweepCell> cells(jobs.size());
  const int n_jobs = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(config.jobs > 0 ? config.jobs : 1)
  for (int j = 0; j < n_jobs; ++j) {
    const Job& job = jobs[j];
    const auto start = std::chrono::steady_clock::now();
    SweepCell cell;
    try {
      const RmabInstance inst = generate_instance(job.n_arms, config.n_states, config.n_actions,
                                                  config.budget_fractions, job.seed);
      const OccupancyMeasure om = solve_occupancy(inst);
      IndexNetwork net = make_index_network(inst, job.seed, config.hidden);
      TrainConfig tc = config.train;
      tc.epsilon = job.epsilon;
      tc.seed = job.seed;
      train(inst, &om, net, tc);
      EvalConfig ec = config.eval;
      ec.seed = job.seed;
      ec.epsilon = job.epsilon;
      const EvalReport rep = evaluate(inst, om, net, ec);
      cell = summarize(rep, 0.0);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cell.n_arms = job.n_arms;
    cell.epsilon = job.epsilon;
    cell.seed = job.seed;
    cell.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    cells[j] = cell;
  }
  return cells;
}

void write_summary_csv(std::span<const SweepCell> cells, std::ostream& out, bool include_timing) {
  out << "N,epsilon,seed,gap_pct,oracle_bound,runtime_s,random_gap_pct,status\n";
  char buf[512];
  for (const auto& c : cells) {
    std::string status = c.error.empty() ? "ok" : c.error;
    for (char& ch : status)
      if (ch == ',' || ch == '\n') ch = ';';
    std::snprintf(buf, sizeof buf, "%d,%.6g,%llu,%.12g,%.12g,%.3f,%.12g,", c.n_arms, c.epsilon,
                  static_cast<unsigned long long>(c.seed), c.gap_pct, c.oracle_bound,
                  include_timing ? c.runtime_s : 0.0, c.random_gap_pct);
    out << buf << status << '\n';
  }
}

void write_heatmap_dat(const SweepConfig& config, std::span<const SweepCell> cells,
                       std::ostream& out) {
  out << "# rows: N, columns: epsilon; entries: mean gap_pct over seeds\n# N";
  char buf[64];
  for (double e : config.epsilons) {
    std::snprintf(buf, sizeof buf, " %.6g", e);
    out << buf;
  }
  out << '\n';
  for (int n : config.arms) {
    out << n;
    for (double e : config.epsilons) {
      double total = 0.0;
      int count = 0;
      for (const auto& c : cells) {
        if (c.n_arms == n && c.epsilon == e && c.error.empty() && std::isfinite(c.gap_pct)) {
          total += c.gap_pct;
          ++count;
        }
      }
      std::snprintf(buf, sizeof buf, " %.12g", count ? total / count : std::nan(""));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace nip
