#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nip {

enum class RowSense { LessEqual, Equal, GreaterEqual };

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string to_string(LpStatus status);

struct LpEntry {
  int row;
  int col;
  double value;
};

/// maximize objective . x  subject to  rows (sense) rhs,  x >= 0.
/// The constraint matrix is given as sparse (row, col, value) triplets;
/// duplicate triplets are summed.
struct LpProblem {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<double> objective;
  std::vector<LpEntry> entries;
  std::vector<RowSense> senses;
  std::vector<double> rhs;
};

struct LpSolution {
  LpStatus status = LpStatus::IterationLimit;
  std::vector<double> x;
  double objective = 0.0;
  long iterations = 0;
};

struct SimplexOptions {
  double tol = 1e-9;              // reduced-cost and primal feasibility tolerance
  double pivot_tol = 1e-9;        // smallest usable pivot element
  long max_iterations = 0;        // 0: 50 * (rows + cols)
  int refactor_every = 100;       // lower bound; raised to n_rows for large bases
  int degenerate_streak_for_bland = 20;
};

class LpSolver {
 public:
  virtual ~LpSolver() = default;
  virtual LpSolution solve(const LpProblem& lp) const = 0;
};

/// Dense revised simplex with an explicit basis inverse (periodically
/// refactorized) and a two-phase start. Pricing is Dantzig's rule; after a
/// streak of degenerate pivots it switches to Bland's smallest-index rule
/// until the objective moves again, which rules out cycling. Ratio-test ties
/// always go to the smallest variable index.
class RevisedSimplex final : public LpSolver {
 public:
  explicit RevisedSimplex(SimplexOptions options = {}) : options_(options) {}
  LpSolution solve(const LpProblem& lp) const override;

 private:
  SimplexOptions options_;
};

LpSolution solve_lp(const LpProblem& lp, double tol = 1e-9);

// Max violation of rows and nonnegativity at x (0 when feasible).
double max_constraint_violation(const LpProblem& lp, const std::vector<double>& x);

}  // namespace nip
