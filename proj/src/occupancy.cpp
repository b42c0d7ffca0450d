#include "nip/occupancy.hpp"

#include <cmath>
#include <stdexcept>

#include "nip/errors.hpp"

namespace nip {

LpProblem build_occupancy_lp(const RmabInstance& inst) {
  const int N = inst.n_arms(), S = inst.n_states(), A = inst.n_actions();
  const OccupancyLayout layout{N, S, A};
  LpProblem lp;
  lp.n_cols = N * S * A;
  lp.n_rows = A + N * S + N;
  lp.objective.assign(lp.n_cols, 0.0);
  lp.senses.assign(lp.n_rows, RowSense::Equal);
  lp.rhs.assign(lp.n_rows, 0.0);
  for (int a = 0; a < A; ++a) {
    lp.senses[layout.budget_row(a)] = RowSense::LessEqual;
    lp.rhs[layout.budget_row(a)] = inst.budgets()[a];
  }
  for (int n = 0; n < N; ++n) lp.rhs[layout.normalization_row(n)] = 1.0;

  lp.entries.reserve(static_cast<std::size_t>(lp.n_cols) * (S + 2));
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const int j = layout.var(n, s, a);
        lp.objective[j] = inst.reward(n, s, a);
        lp.entries.push_back({layout.budget_row(a), j, 1.0});
        // Outflow from (n, s) minus inflow into every next state.
        const auto row = inst.transition_row(n, s, a);
        for (int next = 0; next < S; ++next) {
          const double coef = (next == s ? 1.0 : 0.0) - row[next];
          if (coef != 0.0) lp.entries.push_back({layout.flow_row(n, next), j, coef});
        }
        lp.entries.push_back({layout.normalization_row(n), j, 1.0});
      }
    }
  }
  return lp;
}

OccupancyMeasure solve_occupancy(const RmabInstance& inst, const LpSolver& solver) {
  const LpProblem lp = build_occupancy_lp(inst);
  const LpSolution sol = solver.solve(lp);
  if (sol.status != LpStatus::Optimal) {
    throw NumericalError("occupancy LP not solved: status " + to_string(sol.status));
  }
  OccupancyMeasure om;
  om.n_arms = inst.n_arms();
  om.n_states = inst.n_states();
  om.n_actions = inst.n_actions();
  om.omega = sol.x;
  om.objective_value = sol.objective;
  return om;
}

OccupancyMeasure solve_occupancy(const RmabInstance& inst) {
  return solve_occupancy(inst, RevisedSimplex());
}

std::vector<std::string> check_occupancy(const RmabInstance& inst, const OccupancyMeasure& om,
                                         double tol) {
  std::vector<std::string> issues;
  const int N = inst.n_arms(), S = inst.n_states(), A = inst.n_actions();
  if (om.n_arms != N || om.n_states != S || om.n_actions != A ||
      om.omega.size() != static_cast<std::size_t>(N) * S * A) {
    issues.push_back("occupancy shape does not match instance");
    return issues;
  }
  std::vector<double> usage(A, 0.0);
  for (int n = 0; n < N; ++n) {
    double total = 0.0;
    std::vector<double> inflow(S, 0.0), outflow(S, 0.0);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double w = om.at(n, s, a);
        if (w < -tol) {
          issues.push_back("negative omega at (arm " + std::to_string(n) + ", state " +
                           std::to_string(s) + ", action " + std::to_string(a) + ")");
        }
        total += w;
        usage[a] += w;
        outflow[s] += w;
        const auto row = inst.transition_row(n, s, a);
        for (int next = 0; next < S; ++next) inflow[next] += w * row[next];
      }
    }
    if (std::abs(total - 1.0) > tol) {
      issues.push_back("arm " + std::to_string(n) + " mass " + format_real(total) + " != 1");
    }
    for (int s = 0; s < S; ++s) {
      if (std::abs(outflow[s] - inflow[s]) > tol) {
        issues.push_back("flow imbalance at (arm " + std::to_string(n) + ", state " +
                         std::to_string(s) + ")");
      }
    }
  }
  for (int a = 0; a < A; ++a) {
    if (usage[a] > inst.budgets()[a] + tol) {
      issues.push_back("budget exceeded in expectation for action " + std::to_string(a));
    }
  }
  return issues;
}

OraclePolicy extract_policy(const OccupancyMeasure& om) {
  OraclePolicy p;
  p.n_arms = om.n_arms;
  p.n_states = om.n_states;
  p.n_actions = om.n_actions;
  p.pi.assign(om.omega.size(), 0.0);
  const int A = om.n_actions;
  for (int n = 0; n < om.n_arms; ++n) {
    for (int s = 0; s < om.n_states; ++s) {
      const std::size_t base = (static_cast<std::size_t>(n) * om.n_states + s) * A;
      double total = 0.0;
      for (int a = 0; a < A; ++a) total += std::max(om.omega[base + a], 0.0);
      for (int a = 0; a < A; ++a) {
        p.pi[base + a] = total < 1e-12 ? 1.0 / A : std::max(om.omega[base + a], 0.0) / total;
      }
    }
  }
  return p;
}

std::vector<double> stationary_distribution(const RmabInstance& inst, int arm,
                                            const Matrix& policy) {
  const int S = inst.n_states(), A = inst.n_actions();
  if (policy.rows() != static_cast<std::size_t>(S) || policy.cols() != static_cast<std::size_t>(A)) {
    throw std::invalid_argument("policy must be n_states x n_actions");
  }
  // Solve mu^T (P_pi - I) = 0 with the last equation replaced by sum(mu) = 1.
  // M is stored as the transposed system: M[next][s] = P_pi(next | s) - [s == next].
  Matrix m(S, S + 1, 0.0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      const auto row = inst.transition_row(arm, s, a);
      for (int next = 0; next < S; ++next) m(next, s) += w * row[next];
    }
    m(s, s) -= 1.0;
  }
  for (int s = 0; s < S; ++s) m(S - 1, s) = 1.0;
  m(S - 1, S) = 1.0;
  for (int c = 0; c < S; ++c) {
    int p = c;
    for (int r = c + 1; r < S; ++r)
      if (std::abs(m(r, c)) > std::abs(m(p, c))) p = r;
    if (std::abs(m(p, c)) < 1e-14) {
      throw NumericalError("degenerate chain: stationary system is singular for arm " +
                           std::to_string(arm));
    }
    if (p != c)
      for (int k = 0; k <= S; ++k) std::swap(m(p, k), m(c, k));
    for (int r = 0; r < S; ++r) {
      if (r == c) continue;
      const double f = m(r, c) / m(c, c);
      if (f == 0.0) continue;
      for (int k = c; k <= S; ++k) m(r, k) -= f * m(c, k);
    }
  }
  std::vector<double> mu(S);
  for (int s = 0; s < S; ++s) mu[s] = m(s, S) / m(s, s);
  return mu;
}

double single_arm_average_reward(const RmabInstance& inst, int arm, const Matrix& policy) {
  const auto mu = stationary_distribution(inst, arm, policy);
  double value = 0.0;
  for (int s = 0; s < inst.n_states(); ++s)
    for (int a = 0; a < inst.n_actions(); ++a) value += mu[s] * policy(s, a) * inst.reward(arm, s, a);
  return value;
}

Matrix arm_policy(const OraclePolicy& policy, int arm) {
  Matrix m(policy.n_states, policy.n_actions);
  for (int s = 0; s < policy.n_states; ++s) {
    const auto row = policy.row(arm, s);
    for (int a = 0; a < policy.n_actions; ++a) m(s, a) = row[a];
  }
  return m;
}

namespace {

void read_shape(const KvDocument& doc, int& n, int& s, int& a) {
  n = static_cast<int>(doc.get_int("n_arms"));
  s = static_cast<int>(doc.get_int("n_states"));
  a = static_cast<int>(doc.get_int("n_actions"));
  if (n < 1 || s < 1 || a < 1) throw DataError("non-positive dimensions");
}

}  // namespace

KvDocument occupancy_to_document(const OccupancyMeasure& om) {
  KvDocument doc;
  doc.set("n_arms", om.n_arms);
  doc.set("n_states", om.n_states);
  doc.set("n_actions", om.n_actions);
  doc.set("objective_value", om.objective_value);
  doc.set("omega", std::span<const double>(om.omega));
  return doc;
}

OccupancyMeasure occupancy_from_document(const KvDocument& doc) {
  OccupancyMeasure om;
  read_shape(doc, om.n_arms, om.n_states, om.n_actions);
  om.objective_value = doc.get_real("objective_value");
  om.omega = doc.get_reals("omega");
  if (om.omega.size() != static_cast<std::size_t>(om.n_arms) * om.n_states * om.n_actions) {
    throw DataError("omega has the wrong number of entries");
  }
  return om;
}

KvDocument policy_to_document(const OraclePolicy& policy) {
  KvDocument doc;
  doc.set("n_arms", policy.n_arms);
  doc.set("n_states", policy.n_states);
  doc.set("n_actions", policy.n_actions);
  doc.set("pi", std::span<const double>(policy.pi));
  return doc;
}

OraclePolicy policy_from_document(const KvDocument& doc) {
  OraclePolicy p;
  read_shape(doc, p.n_arms, p.n_states, p.n_actions);
  p.pi = doc.get_reals("pi");
  if (p.pi.size() != static_cast<std::size_t>(p.n_arms) * p.n_states * p.n_actions) {
    throw DataError("pi has the wrong number of entries");
  }
  return p;
}

void write_occupancy(const OccupancyMeasure& om, const std::filesystem::path& path) {
  occupancy_to_document(om).write_file(path);
}

OccupancyMeasure read_occupancy(const std::filesystem::path& path) {
  return occupancy_from_document(KvDocument::read_file(path));
}

}  // namespace nip
