#include "nip/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nip/errors.hpp"

namespace nip {

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
    case LpStatus::IterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

namespace {

struct SparseColumn {
  std::vector<int> rows;
  std::vector<double> values;
};

enum class ColumnKind { Structural, Slack, Artificial };

class SimplexRun {
 public:
  SimplexRun(const LpProblem& lp, const SimplexOptions& opt) : opt_(opt), m_(lp.n_rows) {
    n_struct_ = lp.n_cols;
    // Normalize so every rhs is nonnegative.
    std::vector<double> sign(m_, 1.0);
    b_.assign(m_, 0.0);
    std::vector<RowSense> senses = lp.senses;
    for (int i = 0; i < m_; ++i) {
      if (lp.rhs[i] < 0.0) {
        sign[i] = -1.0;
        if (senses[i] == RowSense::LessEqual) senses[i] = RowSense::GreaterEqual;
        else if (senses[i] == RowSense::GreaterEqual) senses[i] = RowSense::LessEqual;
      }
      b_[i] = sign[i] * lp.rhs[i];
    }
    // Structural columns, merging duplicate triplets.
    std::vector<std::vector<std::pair<int, double>>> raw(n_struct_);
    for (const auto& e : lp.entries) raw[e.col].emplace_back(e.row, sign[e.row] * e.value);
    for (auto& col : raw) {
      std::sort(col.begin(), col.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      SparseColumn sc;
      for (const auto& [r, v] : col) {
        if (!sc.rows.empty() && sc.rows.back() == r) {
          sc.values.back() += v;
        } else {
          sc.rows.push_back(r);
          sc.values.push_back(v);
        }
      }
      columns_.push_back(std::move(sc));
      kinds_.push_back(ColumnKind::Structural);
    }
    cost_.assign(lp.objective.begin(), lp.objective.end());

    basis_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      if (senses[i] == RowSense::Equal) continue;
      const double coef = senses[i] == RowSense::LessEqual ? 1.0 : -1.0;
      add_unit_column(i, coef, ColumnKind::Slack);
      if (coef > 0.0) basis_[i] = static_cast<int>(columns_.size()) - 1;
    }
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] >= 0) continue;
      add_unit_column(i, 1.0, ColumnKind::Artificial);
      basis_[i] = static_cast<int>(columns_.size()) - 1;
    }
    n_total_ = static_cast<int>(columns_.size());
    is_basic_.assign(n_total_, false);
    for (int j : basis_) is_basic_[j] = true;

    // Initial basis is the identity.
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) binv_[idx(i, i)] = 1.0;
    xb_ = b_;

    max_iter_ = opt.max_iterations > 0 ? opt.max_iterations : 50L * (m_ + n_struct_);
    refactor_every_ = std::max(opt.refactor_every, m_);
  }

  LpSolution run() {
    bool has_artificial = false;
    for (int j : basis_) has_artificial |= kinds_[j] == ColumnKind::Artificial;

    if (has_artificial) {
      std::vector<double> phase1(n_total_, 0.0);
      for (int j = 0; j < n_total_; ++j)
        if (kinds_[j] == ColumnKind::Artificial) phase1[j] = -1.0;
      const LpStatus st = iterate(phase1, /*allow_artificial=*/true);
      if (st == LpStatus::IterationLimit) return finish(LpStatus::IterationLimit);
      double infeasibility = 0.0;
      for (int i = 0; i < m_; ++i)
        if (kinds_[basis_[i]] == ColumnKind::Artificial) infeasibility += xb_[i];
      double scale = 1.0;
      for (double v : b_) scale = std::max(scale, std::abs(v));
      if (infeasibility > 1e-7 * scale) return finish(LpStatus::Infeasible);
      drive_out_artificials();
    }
    std::vector<double> phase2(n_total_, 0.0);
    std::copy(cost_.begin(), cost_.end(), phase2.begin());
    return finish(iterate(phase2, /*allow_artificial=*/false));
  }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * m_ + c; }

  void add_unit_column(int row, double coef, ColumnKind kind) {
    SparseColumn sc;
    sc.rows.push_back(row);
    sc.values.push_back(coef);
    columns_.push_back(std::move(sc));
    kinds_.push_back(kind);
  }

  // alpha = B^{-1} a_j
  void ftran(int j, std::vector<double>& alpha) const {
    alpha.assign(m_, 0.0);
    const auto& col = columns_[j];
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      const int r = col.rows[k];
      const double v = col.values[k];
      for (int i = 0; i < m_; ++i) alpha[i] += binv_[idx(i, r)] * v;
    }
  }

  void pivot(int leave_row, const std::vector<double>& alpha) {
    const double piv = alpha[leave_row];
    double* prow = &binv_[idx(leave_row, 0)];
    for (int c = 0; c < m_; ++c) prow[c] /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == leave_row) continue;
      const double f = alpha[i];
      if (f == 0.0) continue;
      double* row = &binv_[idx(i, 0)];
      for (int c = 0; c < m_; ++c) row[c] -= f * prow[c];
    }
  }

  // Rebuilds B^{-1} by Gauss-Jordan with partial pivoting and recomputes x_B.
  void refactor() {
    std::vector<double> B(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int k = 0; k < m_; ++k) {
      const auto& col = columns_[basis_[k]];
      for (std::size_t t = 0; t < col.rows.size(); ++t) B[idx(col.rows[t], k)] = col.values[t];
    }
    std::vector<double>& inv = binv_;
    inv.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) inv[idx(i, i)] = 1.0;
    for (int c = 0; c < m_; ++c) {
      int p = c;
      for (int r = c + 1; r < m_; ++r)
        if (std::abs(B[idx(r, c)]) > std::abs(B[idx(p, c)])) p = r;
      if (std::abs(B[idx(p, c)]) < 1e-13) throw NumericalError("simplex: singular basis");
      if (p != c) {
        for (int k = 0; k < m_; ++k) {
          std::swap(B[idx(p, k)], B[idx(c, k)]);
          std::swap(inv[idx(p, k)], inv[idx(c, k)]);
        }
      }
      const double d = B[idx(c, c)];
      for (int k = 0; k < m_; ++k) {
        B[idx(c, k)] /= d;
        inv[idx(c, k)] /= d;
      }
      for (int r = 0; r < m_; ++r) {
        if (r == c) continue;
        const double f = B[idx(r, c)];
        if (f == 0.0) continue;
        for (int k = 0; k < m_; ++k) {
          B[idx(r, k)] -= f * B[idx(c, k)];
          inv[idx(r, k)] -= f * inv[idx(c, k)];
        }
      }
    }
    for (int i = 0; i < m_; ++i) {
      double v = 0.0;
      for (int k = 0; k < m_; ++k) v += binv_[idx(i, k)] * b_[k];
      xb_[i] = (v < 0.0 && v > -opt_.tol) ? 0.0 : v;
    }
    since_refactor_ = 0;
  }

  LpStatus iterate(const std::vector<double>& cost, bool allow_artificial) {
    std::vector<double> y(m_), alpha;
    int degenerate_streak = 0;
    while (true) {
      if (iterations_ >= max_iter_) return LpStatus::IterationLimit;
      if (since_refactor_ >= refactor_every_) refactor();

      // Simplex multipliers y = c_B^T B^{-1}.
      std::fill(y.begin(), y.end(), 0.0);
      for (int i = 0; i < m_; ++i) {
        const double cb = cost[basis_[i]];
        if (cb == 0.0) continue;
        const double* row = &binv_[idx(i, 0)];
        for (int c = 0; c < m_; ++c) y[c] += cb * row[c];
      }

      const bool bland = degenerate_streak >= opt_.degenerate_streak_for_bland;
      int entering = -1;
      double best = opt_.tol;
      for (int j = 0; j < n_total_; ++j) {
        if (is_basic_[j]) continue;
        if (!allow_artificial && kinds_[j] == ColumnKind::Artificial) continue;
        double d = cost[j];
        const auto& col = columns_[j];
        for (std::size_t t = 0; t < col.rows.size(); ++t) d -= y[col.rows[t]] * col.values[t];
        if (d > best) {
          entering = j;
          if (bland) break;
          best = d;
        }
      }
      if (entering < 0) return LpStatus::Optimal;

      ftran(entering, alpha);
      int leave = -1;
      double theta = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        if (alpha[i] <= opt_.pivot_tol) continue;
        const double ratio = std::max(xb_[i], 0.0) / alpha[i];
        if (leave < 0 || ratio < theta - 1e-12 ||
            (ratio <= theta + 1e-12 && basis_[i] < basis_[leave])) {
          theta = ratio;
          leave = i;
        }
      }
      if (leave < 0) return LpStatus::Unbounded;

      degenerate_streak = theta <= opt_.tol ? degenerate_streak + 1 : 0;
      for (int i = 0; i < m_; ++i) {
        xb_[i] -= theta * alpha[i];
        if (xb_[i] < 0.0 && xb_[i] > -opt_.tol) xb_[i] = 0.0;
      }
      xb_[leave] = theta;
      pivot(leave, alpha);
      is_basic_[basis_[leave]] = false;
      basis_[leave] = entering;
      is_basic_[entering] = true;
      ++iterations_;
      ++since_refactor_;
    }
  }

  // Replaces zero-level artificial basics by structural/slack columns where
  // possible. Rows where no replacement exists are redundant; their
  // artificial stays basic at zero and is never priced again.
  void drive_out_artificials() {
    std::vector<double> alpha;
    for (int r = 0; r < m_; ++r) {
      if (kinds_[basis_[r]] != ColumnKind::Artificial) continue;
      const double* brow = &binv_[idx(r, 0)];
      int best_j = -1;
      double best_v = 1e-7;
      for (int j = 0; j < n_total_; ++j) {
        if (is_basic_[j] || kinds_[j] == ColumnKind::Artificial) continue;
        double v = 0.0;
        const auto& col = columns_[j];
        for (std::size_t t = 0; t < col.rows.size(); ++t) v += brow[col.rows[t]] * col.values[t];
        if (std::abs(v) > best_v) {
          best_v = std::abs(v);
          best_j = j;
        }
      }
      if (best_j < 0) continue;
      ftran(best_j, alpha);
      const double level = xb_[r];
      for (int i = 0; i < m_; ++i) xb_[i] -= (level / alpha[r]) * alpha[i];
      xb_[r] = level / alpha[r];
      pivot(r, alpha);
      is_basic_[basis_[r]] = false;
      basis_[r] = best_j;
      is_basic_[best_j] = true;
      ++since_refactor_;
    }
  }

  LpSolution finish(LpStatus status) {
    LpSolution sol;
    sol.status = status;
    sol.iterations = iterations_;
    sol.x.assign(n_struct_, 0.0);
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_struct_) sol.x[basis_[i]] = std::max(xb_[i], 0.0);
    }
    for (int j = 0; j < n_struct_; ++j) sol.objective += cost_[j] * sol.x[j];
    return sol;
  }

  SimplexOptions opt_;
  int m_;
  int n_struct_ = 0;
  int n_total_ = 0;
  std::vector<SparseColumn> columns_;
  std::vector<ColumnKind> kinds_;
  std::vector<double> cost_;
  std::vector<double> b_;
  std::vector<int> basis_;
  std::vector<bool> is_basic_;
  std::vector<double> binv_;
  std::vector<double> xb_;
  long iterations_ = 0;
  long max_iter_ = 0;
  int refactor_every_ = 100;
  int since_refactor_ = 0;
};

void check_shape(const LpProblem& lp) {
  if (lp.n_rows < 0 || lp.n_cols < 0) throw std::invalid_argument("LP: negative dimensions");
  if (lp.objective.size() != static_cast<std::size_t>(lp.n_cols) ||
      lp.senses.size() != static_cast<std::size_t>(lp.n_rows) ||
      lp.rhs.size() != static_cast<std::size_t>(lp.n_rows)) {
    throw std::invalid_argument("LP: inconsistent vector sizes");
  }
  for (const auto& e : lp.entries) {
    if (e.row < 0 || e.row >= lp.n_rows || e.col < 0 || e.col >= lp.n_cols) {
      throw std::invalid_argument("LP: triplet index out of range");
    }
  }
}

}  // namespace

LpSolution RevisedSimplex::solve(const LpProblem& lp) const {
  check_shape(lp);
  SimplexRun run(lp, options_);
  return run.run();
}

LpSolution solve_lp(const LpProblem& lp, double tol) {
  SimplexOptions opt;
  opt.tol = tol;
  return RevisedSimplex(opt).solve(lp);
}

double max_constraint_violation(const LpProblem& lp, const std::vector<double>& x) {
  std::vector<double> lhs(lp.n_rows, 0.0);
  for (const auto& e : lp.entries) lhs[e.row] += e.value * x[e.col];
  double worst = 0.0;
  for (int i = 0; i < lp.n_rows; ++i) {
    const double d = lhs[i] - lp.rhs[i];
    switch (lp.senses[i]) {
      case RowSense::LessEqual: worst = std::max(worst, d); break;
      case RowSense::GreaterEqual: worst = std::max(worst, -d); break;
      case RowSense::Equal: worst = std::max(worst, std::abs(d)); break;
    }
  }
  for (double v : x) worst = std::max(worst, -v);
  return worst;
}

}  // namespace nip
