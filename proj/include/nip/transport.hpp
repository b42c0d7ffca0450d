#pragma once

#include <span>
#include <vector>

#include "nip/matrix.hpp"
#include "nip/rmab.hpp"
#include "nip/rng.hpp"

namespace nip {

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iter = 500;
  double tol = 1e-6;  // on the L1 row-marginal violation after each column update
};

/// Entropic transport plan between arms (unit supply each) and actions
/// (demand b_a each). Columns with zero budget carry no mass and are
/// excluded from the iterations; every other entry is strictly positive.
struct TransportPlan {
  Matrix gamma;      // N x A
  Matrix log_gamma;  // log of gamma from the potentials, finite where gamma underflows; -inf on
                     // zero-budget columns
  std::vector<int> budgets;
  double epsilon = 0.0;
  int iterations = 0;
  bool converged = false;
  double violation = 0.0;                 // final L1 marginal violation
  std::vector<double> violation_history;  // one entry per iteration
};

/// Log-domain potentials recorded by sinkhorn_forward for the reverse pass.
struct SinkhornTape {
  Matrix index;
  std::vector<int> active;                 // actions with positive budget
  std::vector<std::vector<double>> f;      // row potentials after each iteration
  std::vector<std::vector<double>> g;      // column potentials (active only)
  bool empty() const { return f.empty(); }
};

/// Solves  min <Gamma, C> + eps * sum Gamma (log Gamma - 1)  with C = -index,
/// row sums 1 and column sums b_a, by alternating log-domain row and column
/// updates starting from zero column potentials. Stops when the L1 row
/// violation drops below tol or after max_iter iterations.
TransportPlan sinkhorn_forward(const Matrix& index, std::span<const int> budgets,
                               const SinkhornOptions& options, SinkhornTape* tape = nullptr);

/// Reverse-mode derivative of the unrolled iterations: maps dL/dGamma to
/// dL/dindex.
Matrix sinkhorn_backward(const TransportPlan& plan, const SinkhornTape& tape,
                         const Matrix& dloss_dgamma);
/// Same chain starting from dL/dlog(Gamma). Losses such as KL whose
/// gradient -t/Gamma overflows on underflowed entries use this form.
Matrix sinkhorn_backward_log(const TransportPlan& plan, const SinkhornTape& tape,
                             const Matrix& dloss_dlog_gamma);

struct HardAssignment {
  ActionVector assignment;
  double objective = 0.0;
};

/// Integral optimum of  max sum index[n][a] c[n][a]  over one action per arm
/// and at most b_a arms per action (all budgets tight since they sum to N).
/// Solved as an LP over the transportation polytope, whose vertices are
/// integral; ties resolve through the simplex's smallest-index pivoting.
HardAssignment solve_knapsack_exact(const Matrix& index, std::span<const int> budgets);

enum class PlanMode { Sample, Round };

/// Sample: draw a_n ~ Gamma[n] independently, then for each over-subscribed
/// active action keep the arms with the largest Gamma[n][a] and demote the
/// rest to the passive action. Round: exact knapsack on log Gamma.
ActionVector plan_to_actions(const TransportPlan& plan, PlanMode mode, Rng& rng);

// Demotes overflow arms of each active action to passive, keeping the arms
// with the largest score[n][a] (ties to the lower arm index).
void repair_budget_overflow(ActionVector& acts, std::span<const int> budgets,
                            const Matrix& score);

}  // namespace nip
