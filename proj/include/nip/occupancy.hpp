#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nip/lp.hpp"
#include "nip/matrix.hpp"
#include "nip/rmab.hpp"
#include "nip/text_format.hpp"

namespace nip {

/// Variable layout of the occupancy LP: omega_n(s, a) lives at column
/// (n * S + s) * A + a. Rows are ordered budgets (A rows, one per action,
/// passive included), then flow balance (N * S rows), then per-arm
/// normalization (N rows).
struct OccupancyLayout {
  int n_arms;
  int n_states;
  int n_actions;
  int var(int arm, int state, int action) const {
    return (arm * n_states + state) * n_actions + action;
  }
  int budget_row(int action) const { return action; }
  int flow_row(int arm, int state) const { return n_actions + arm * n_states + state; }
  int normalization_row(int arm) const { return n_actions + n_arms * n_states + arm; }
};

// Long-run state-action frequencies per arm plus the LP optimum, which
// upper-bounds the average reward of any budget-feasible policy.
struct OccupancyMeasure {
  int n_arms = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> omega;  // [arm][state][action]
  double objective_value = 0.0;

  double at(int arm, int state, int action) const {
    return omega[(static_cast<std::size_t>(arm) * n_states + state) * n_actions + action];
  }
};

// Conditional policy pi_n(a | s), rows stochastic over actions.
struct OraclePolicy {
  int n_arms = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> pi;  // [arm][state][action]

  std::span<const double> row(int arm, int state) const {
    return {pi.data() + (static_cast<std::size_t>(arm) * n_states + state) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
};

LpProblem build_occupancy_lp(const RmabInstance& inst);

// Builds and solves the LP; throws NumericalError unless the status is Optimal.
OccupancyMeasure solve_occupancy(const RmabInstance& inst, const LpSolver& solver);
OccupancyMeasure solve_occupancy(const RmabInstance& inst);

// Checks normalization, flow balance, budgets and nonnegativity.
std::vector<std::string> check_occupancy(const RmabInstance& inst, const OccupancyMeasure& om,
                                         double tol = 1e-7);

// Row-normalizes omega per (arm, state); states with total mass below 1e-12
// get a uniform row.
OraclePolicy extract_policy(const OccupancyMeasure& om);

// Stationary distribution of one arm's chain under an S x A stochastic policy.
// Throws NumericalError when the stationary system is singular.
std::vector<double> stationary_distribution(const RmabInstance& inst, int arm,
                                            const Matrix& policy);

// sum_s sum_a mu(s) policy(a|s) r(s,a) for the policy's stationary mu.
double single_arm_average_reward(const RmabInstance& inst, int arm, const Matrix& policy);

// S x A slice of an oracle policy for one arm.
Matrix arm_policy(const OraclePolicy& policy, int arm);

KvDocument occupancy_to_document(const OccupancyMeasure& om);
OccupancyMeasure occupancy_from_document(const KvDocument& doc);
KvDocument policy_to_document(const OraclePolicy& policy);
OraclePolicy policy_from_document(const KvDocument& doc);
void write_occupancy(const OccupancyMeasure& om, const std::filesystem::path& path);
OccupancyMeasure read_occupancy(const std::filesystem::path& path);

}  // namespace nip
