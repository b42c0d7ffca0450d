#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nip/index_net.hpp"
#include "nip/occupancy.hpp"
#include "nip/rmab.hpp"
#include "nip/trainer.hpp"
#include "nip/transport.hpp"

namespace nip {

using PolicyFn = std::function<ActionVector(const StateVector&, Rng&)>;

class BudgetViolation : public std::runtime_error {
 public:
  BudgetViolation(int timestep, int action)
      : std::runtime_error("budget violated at timestep " + std::to_string(timestep) +
                           " by action " + std::to_string(action)),
        timestep(timestep),
        action(action) {}
  int timestep;
  int action;
};

/// Rolls the instance forward `horizon` epochs from s0 and returns the total
/// reward collected at each epoch. With enforce_budgets the first infeasible
/// action vector aborts with BudgetViolation; otherwise violations are
/// counted into *violations (if given) and the step proceeds.
std::vector<double> simulate_policy(const RmabInstance& inst, const PolicyFn& policy,
                                    StateVector s0, int horizon, Rng& rng,
                                    bool enforce_budgets = true, long* violations = nullptr);

/// Samples a_n ~ pi*_n(. | s_n) per arm and demotes overflow arms (lowest
/// probability first) to the passive action.
PolicyFn oracle_policy_callback(const OraclePolicy& policy, const RmabInstance& inst);
PolicyFn oracle_policy_callback(const OccupancyMeasure& om, const RmabInstance& inst);

/// encode -> forward -> exact knapsack (Round) or Sinkhorn + sampling (Sample).
/// The callback holds a copy of the network.
PolicyFn predicted_policy_callback(const IndexNetwork& net, const RmabInstance& inst,
                                   PlanMode mode = PlanMode::Round, double epsilon = 0.1);

/// respect_budgets=false: uniform action per arm, ignoring budgets.
/// respect_budgets=true: exact knapsack on a uniformly random index, which
/// yields a uniformly random feasible assignment.
PolicyFn random_policy_callback(const RmabInstance& inst, bool respect_budgets);

std::vector<double> cumulative(std::span<const double> per_step);

/// (1/K') sum_t (R_oracle(t) - R_pred(t)) / R_oracle(t) * 100 over the K'
/// timesteps with R_oracle(t) > 0. nullopt when no such timestep exists.
std::optional<double> percentage_reward_gap(std::span<const double> oracle_cumulative,
                                            std::span<const double> pred_cumulative);

struct EvalConfig {
  int batches = 50;
  int horizon = 50;
  std::uint64_t seed = 0;
  PlanMode mode = PlanMode::Round;
  double epsilon = 0.1;  // only used in Sample mode
  bool parallel = true;  // OpenMP over batches
};

struct EvalReport {
  int n_arms = 0, n_states = 0, n_actions = 0;
  int horizon = 0;
  int batches = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  // Batch-mean cumulative rewards per timestep.
  std::vector<double> oracle_cum, pred_cum, random_cum, random_unbudgeted_cum;
  double gap_pct = 0.0;
  double random_gap_pct = 0.0;             // budget-respecting random baseline
  double random_unbudgeted_gap_pct = 0.0;  // ignores budgets; flagged below
  long random_unbudgeted_violations = 0;
  long feasible_steps_checked = 0;  // oracle + predicted action vectors verified
  double oracle_bound = 0.0;  // LP objective (per-step average reward bound)
  double oracle_mean_step_reward = 0.0;
};

/// Every batch b draws shared initial states from make_stream(seed, {b, 0})
/// and runs each policy with its own stream. Batches reduce in order, so the
/// serial and parallel variants produce identical reports.
EvalReport evaluate_serial(const RmabInstance& inst, const OccupancyMeasure& om,
                           const IndexNetwork& net, const EvalConfig& config);
EvalReport evaluate_parallel(const RmabInstance& inst, const OccupancyMeasure& om,
                             const IndexNetwork& net, const EvalConfig& config);
EvalReport evaluate(const RmabInstance& inst, const OccupancyMeasure& om,
                    const IndexNetwork& net, const EvalConfig& config);

// t,oracle,predicted,random,random_unbudgeted (cumulative means).
void write_series_csv(const EvalReport& report, std::ostream& out);
// Same columns, whitespace separated, for gnuplot.
void write_series_dat(const EvalReport& report, std::ostream& out);

struct SweepConfig {
  std::vector<int> arms{50};
  std::vector<double> epsilons{0.1};
  std::vector<std::uint64_t> seeds{0};
  int n_states = 5;
  int n_actions = 4;
  std::vector<double> budget_fractions{0.2, 0.1, 0.1};
  TrainConfig train;  // epsilon and seed overridden per cell
  EvalConfig eval;    // seed overridden per cell
  int hidden = 64;
  int jobs = 1;
};

struct SweepCell {
  int n_arms = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double gap_pct = 0.0;
  double random_gap_pct = 0.0;
  double oracle_bound = 0.0;
  double runtime_s = 0.0;
  long feasible_steps_checked = 0;
  std::string error;    // non-empty if the cell failed
};

// One cell per (N, epsilon, seed) in that nesting order. Failing cells are
// recorded and the sweep continues.
std::vector<SweepCell> run_sweep(const SweepConfig& config);

// N,epsilon,seed,gap_pct,oracle_bound,runtime_s,random_gap_pct,status
void write_summary_csv(std::span<const SweepCell> cells, std::ostream& out,
                       bool include_timing = true);
// Heatmap table: one row per N, one column per epsilon (mean gap over seeds).
void write_heatmap_dat(const SweepConfig& config, std::span<const SweepCell> cells,
                       std::ostream& out);

SweepCell summarize(const EvalReport& report, double runtime_s);

}  // namespace nip
