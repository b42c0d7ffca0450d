#include "nip/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nip/errors.hpp"
#include "nip/lp.hpp"

namespace nip {
namespace {

void check_inputs(const Matrix& index, std::span<const int> budgets) {
  if (budgets.size() != index.cols()) {
    throw std::invalid_argument("budget vector length must equal the number of actions");
  }
  long total = 0;
  for (int b : budgets) {
    if (b < 0) throw std::invalid_argument("budgets must be nonnegative");
    total += b;
  }
  if (total != static_cast<long>(index.rows())) {
    throw std::invalid_argument("unbalanced budgets: sum of budgets (" + std::to_string(total) +
                                ") must equal the number of arms (" +
                                std::to_string(index.rows()) + ")");
  }
  for (double v : index.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("index contains NaN or Inf");
  }
}

}  // namespace

TransportPlan sinkhorn_forward(const Matrix& index, std::span<const int> budgets,
                               const SinkhornOptions& options, SinkhornTape* tape) {
  check_inputs(index, budgets);
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");

  const int N = static_cast<int>(index.rows());
  const int A = static_cast<int>(index.cols());
  const double eps = options.epsilon;
  std::vector<int> active;
  for (int a = 0; a < A; ++a)
    if (budgets[a] > 0) active.push_back(a);
  const int K = static_cast<int>(active.size());

  std::vector<double> log_b(K);
  for (int k = 0; k < K; ++k) log_b[k] = std::log(static_cast<double>(budgets[active[k]]));

  std::vector<double> f(N, 0.0), g(K, 0.0), buf(std::max(N, K));
  TransportPlan plan;
  plan.budgets.assign(budgets.begin(), budgets.end());
  plan.epsilon = eps;
  if (tape) {
    tape->index = index;
    tape->active = active;
    tape->f.clear();
    tape->g.clear();
  }

  for (int it = 0; it < options.max_iter; ++it) {
    // Row update: f_n = -eps * logsumexp_a((g_a + I_na) / eps).
    for (int n = 0; n < N; ++n) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        buf[k] = (g[k] + index(n, active[k])) / eps;
        mx = std::max(mx, buf[k]);
      }
      double sum = 0.0;
      for (int k = 0; k < K; ++k) sum += std::exp(buf[k] - mx);
      f[n] = -eps * (mx + std::log(sum));
    }
    // Column update: g_a = eps * log b_a - eps * logsumexp_n((f_n + I_na) / eps).
    for (int k = 0; k < K; ++k) {
      const int a = active[k];
      double mx = -std::numeric_limits<double>::infinity();
      for (int n = 0; n < N; ++n) mx = std::max(mx, (f[n] + index(n, a)) / eps);
      double sum = 0.0;
      for (int n = 0; n < N; ++n) sum += std::exp((f[n] + index(n, a)) / eps - mx);
      g[k] = eps * log_b[k] - eps * (mx + std::log(sum));
    }
    double violation = 0.0;
    for (int n = 0; n < N; ++n) {
      double row = 0.0;
      for (int k = 0; k < K; ++k) row += std::exp((f[n] + g[k] + index(n, active[k])) / eps);
      violation += std::abs(row - 1.0);
    }
    plan.violation_history.push_back(violation);
    if (tape) {
      tape->f.push_back(f);
      tape->g.push_back(g);
    }
    plan.iterations = it + 1;
    plan.violation = violation;
    if (violation < options.tol) {
      plan.converged = true;
      break;
    }
  }

  plan.gamma = Matrix(N, A, 0.0);
  plan.log_gamma = Matrix(N, A, -std::numeric_limits<double>::infinity());
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const double z = (f[n] + g[k] + index(n, active[k])) / eps;
      plan.log_gamma(n, active[k]) = z;
      plan.gamma(n, active[k]) = std::exp(z);
    }
  }
  return plan;
}

Matrix sinkhorn_backward(const TransportPlan& plan, const SinkhornTape& tape,
                         const Matrix& dloss_dgamma) {
  if (dloss_dgamma.rows() != plan.gamma.rows() || dloss_dgamma.cols() != plan.gamma.cols()) {
    throw std::invalid_argument("sinkhorn_backward: tape does not match plan");
  }
  Matrix dlog(plan.gamma.rows(), plan.gamma.cols(), 0.0);
  for (std::size_t i = 0; i < dlog.size(); ++i) {
    if (plan.gamma.data()[i] != 0.0) dlog.data()[i] = plan.gamma.data()[i] * dloss_dgamma.data()[i];
  }
  return sinkhorn_backward_log(plan, tape, dlog);
}

Matrix sinkhorn_backward_log(const TransportPlan& plan, const SinkhornTape& tape,
                             const Matrix& dloss_dgamma) {
  if (tape.empty()) throw std::invalid_argument("sinkhorn_backward: missing forward tape");
  const int N = static_cast<int>(plan.gamma.rows());
  const int A = static_cast<int>(plan.gamma.cols());
  if (dloss_dgamma.rows() != plan.gamma.rows() || dloss_dgamma.cols() != plan.gamma.cols() ||
      tape.index.rows() != plan.gamma.rows() || tape.index.cols() != plan.gamma.cols() ||
      static_cast<int>(tape.f.size()) != plan.iterations) {
    throw std::invalid_argument("sinkhorn_backward: tape does not match plan");
  }
  const double eps = plan.epsilon;
  const auto& active = tape.active;
  const int K = static_cast<int>(active.size());
  const Matrix& index = tape.index;

  Matrix d_index(N, A, 0.0);
  std::vector<double> df(N, 0.0), dg(K, 0.0), dg_prev(K);

  // Output log Gamma_na = (f_n + g_a + I_na) / eps.
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const int a = active[k];
      const double w = dloss_dgamma(n, a) / eps;
      d_index(n, a) += w;
      df[n] += w;
      dg[k] += w;
    }
  }

  for (int it = plan.iterations - 1; it >= 0; --it) {
    const auto& f = tape.f[it];
    const auto& g = tape.g[it];
    // g_a = eps log b_a - eps LSE_n((f_n + I_na)/eps); d g_a / d(f_n + I_na) = -P_na,
    // with P_na the column softmax.
    for (int k = 0; k < K; ++k) {
      if (dg[k] == 0.0) continue;
      const int a = active[k];
      const double inv_b = 1.0 / plan.budgets[a];
      for (int n = 0; n < N; ++n) {
        const double p = std::exp((f[n] + g[k] + index(n, a)) / eps) * inv_b;
        const double t = dg[k] * p;
        df[n] -= t;
        d_index(n, a) -= t;
      }
    }
    // f_n = -eps LSE_a((g_prev_a + I_na)/eps); d f_n / d(g_prev_a + I_na) = -Q_na,
    // with Q_na the row softmax.
    std::fill(dg_prev.begin(), dg_prev.end(), 0.0);
    if (it > 0) {
      const auto& g_prev = tape.g[it - 1];
      for (int n = 0; n < N; ++n) {
        if (df[n] == 0.0) continue;
        for (int k = 0; k < K; ++k) {
          const int a = active[k];
          const double q = std::exp((g_prev[k] + index(n, a) + f[n]) / eps);
          const double t = df[n] * q;
          dg_prev[k] -= t;
          d_index(n, a) -= t;
        }
      }
    } else {
      for (int n = 0; n < N; ++n) {
        if (df[n] == 0.0) continue;
        for (int k = 0; k < K; ++k) {
          const int a = active[k];
          d_index(n, a) -= df[n] * std::exp((index(n, a) + f[n]) / eps);
        }
      }
    }
    std::fill(df.begin(), df.end(), 0.0);
    std::swap(dg, dg_prev);
  }
  for (double v : d_index.data()) {
    if (!std::isfinite(v)) throw NumericalError("sinkhorn_backward produced a non-finite gradient");
  }
  return d_index;
}

HardAssignment solve_knapsack_exact(const Matrix& index, std::span<const int> budgets) {
  check_inputs(index, budgets);
  const int N = static_cast<int>(index.rows());
  const int A = static_cast<int>(index.cols());
  HardAssignment out;
  out.assignment.actions.assign(N, 0);

  // Row-wise argmax is optimal whenever it already fits the budgets.
  std::vector<int> counts(A, 0);
  for (int n = 0; n < N; ++n) {
    int best = 0;
    for (int a = 1; a < A; ++a)
      if (index(n, a) > index(n, best)) best = a;
    out.assignment.actions[n] = best;
    ++counts[best];
  }
  bool fits = true;
  for (int a = 0; a < A; ++a) fits &= counts[a] <= budgets[a];

  if (!fits) {
    std::vector<int> active;
    for (int a = 0; a < A; ++a)
      if (budgets[a] > 0) active.push_back(a);
    const int K = static_cast<int>(active.size());
    LpProblem lp;
    lp.n_cols = N * K;
    lp.n_rows = N + K;
    lp.objective.resize(lp.n_cols);
    lp.senses.assign(lp.n_rows, RowSense::Equal);
    lp.rhs.assign(lp.n_rows, 1.0);
    for (int k = 0; k < K; ++k) {
      lp.senses[N + k] = RowSense::LessEqual;
      lp.rhs[N + k] = budgets[active[k]];
    }
    for (int n = 0; n < N; ++n) {
      for (int k = 0; k < K; ++k) {
        const int j = n * K + k;
        lp.objective[j] = index(n, active[k]);
        lp.entries.push_back({n, j, 1.0});
        lp.entries.push_back({N + k, j, 1.0});
      }
    }
    const LpSolution sol = solve_lp(lp);
    if (sol.status != LpStatus::Optimal) {
      throw NumericalError("knapsack LP not solved: status " + to_string(sol.status));
    }
    for (int n = 0; n < N; ++n) {
      int chosen = -1;
      for (int k = 0; k < K; ++k) {
        if (sol.x[n * K + k] > 0.5) {
          if (chosen >= 0) throw NumericalError("knapsack LP returned a fractional vertex");
          chosen = active[k];
        }
      }
      if (chosen < 0) throw NumericalError("knapsack LP returned a fractional vertex");
      out.assignment.actions[n] = chosen;
    }
  }
  for (int n = 0; n < N; ++n) out.objective += index(n, out.assignment.actions[n]);
  return out;
}

void repair_budget_overflow(ActionVector& acts, std::span<const int> budgets,
                            const Matrix& score) {
  const int N = static_cast<int>(acts.actions.size());
  const int A = static_cast<int>(budgets.size());
  std::vector<int> members;
  for (int a = 1; a < A; ++a) {
    members.clear();
    for (int n = 0; n < N; ++n)
      if (acts.actions[n] == a) members.push_back(n);
    if (static_cast<int>(members.size()) <= budgets[a]) continue;
    std::stable_sort(members.begin(), members.end(),
                     [&](int x, int y) { return score(x, a) > score(y, a); });
    for (std::size_t i = budgets[a]; i < members.size(); ++i) acts.actions[members[i]] = kPassiveAction;
  }
}

ActionVector plan_to_actions(const TransportPlan& plan, PlanMode mode, Rng& rng) {
  const int N = static_cast<int>(plan.gamma.rows());
  const int A = static_cast<int>(plan.gamma.cols());
  if (mode == PlanMode::Round) {
    Matrix log_gamma(N, A);
    for (std::size_t i = 0; i < log_gamma.size(); ++i)
      log_gamma.data()[i] = std::log(std::max(plan.gamma.data()[i], 1e-300));
    return solve_knapsack_exact(log_gamma, plan.budgets).assignment;
  }
  ActionVector acts;
  acts.actions.resize(N);
  for (int n = 0; n < N; ++n) acts.actions[n] = sample_categorical(plan.gamma.row(n), rng);
  repair_budget_overflow(acts, plan.budgets, plan.gamma);
  return acts;
}

}  // namespace nip
