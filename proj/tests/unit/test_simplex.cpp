#include <gtest/gtest.h>

#include "nip/lp.hpp"
#include "nip/rng.hpp"
#include "oracles.hpp"

using namespace nip;

namespace {

LpProblem dense_lp(const std::vector<std::vector<double>>& a, const std::vector<RowSense>& senses,
                   const std::vector<double>& rhs, const std::vector<double>& c) {
  LpProblem lp;
  lp.n_rows = static_cast<int>(a.size());
  lp.n_cols = static_cast<int>(c.size());
  lp.objective = c;
  lp.senses = senses;
  lp.rhs = rhs;
  for (int i = 0; i < lp.n_rows; ++i)
    for (int j = 0; j < lp.n_cols; ++j)
      if (a[i][j] != 0.0) lp.entries.push_back({i, j, a[i][j]});
  return lp;
}

}  // namespace

TEST(Simplex, UnitBox) {
  const auto lp = dense_lp({{1, 0}, {0, 1}}, {RowSense::LessEqual, RowSense::LessEqual}, {1, 1},
                           {1, 1});
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, 2.0, 1e-12);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-12);
  EXPECT_NEAR(sol.x[1], 1.0, 1e-12);
}

TEST(Simplex, EqualityAndGreaterRows) {
  // max x + 2y s.t. x + y = 3, x >= 1, y <= 1.5
  const auto lp = dense_lp({{1, 1}, {1, 0}, {0, 1}},
                           {RowSense::Equal, RowSense::GreaterEqual, RowSense::LessEqual},
                           {3, 1, 1.5}, {1, 2});
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, 4.5, 1e-12);
}

TEST(Simplex, Infeasible) {
  const auto lp = dense_lp({{1, 1}, {1, 1}}, {RowSense::LessEqual, RowSense::GreaterEqual}, {1, 2},
                           {1, 1});
  EXPECT_EQ(solve_lp(lp).status, LpStatus::Infeasible);
}

TEST(Simplex, Unbounded) {
  const auto lp = dense_lp({{1, -1}}, {RowSense::LessEqual}, {1}, {1, 1});
  EXPECT_EQ(solve_lp(lp).status, LpStatus::Unbounded);
}

TEST(Simplex, NegativeRhsNormalized) {
  // -x <= -2  (x >= 2), x <= 5, maximize -x  ->  -2
  const auto lp = dense_lp({{-1}, {1}}, {RowSense::LessEqual, RowSense::LessEqual}, {-2, 5}, {-1});
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, -2.0, 1e-12);
}

TEST(Simplex, IterationLimitReported) {
  const auto lp = dense_lp({{1, 1, 1}, {1, 2, 3}}, {RowSense::LessEqual, RowSense::LessEqual},
                           {4, 6}, {1, 2, 4});
  SimplexOptions opt;
  opt.max_iterations = 1;
  EXPECT_EQ(RevisedSimplex(opt).solve(lp).status, LpStatus::IterationLimit);
}

TEST(Simplex, DuplicateTripletsAreSummed) {
  LpProblem lp;
  lp.n_rows = 1;
  lp.n_cols = 1;
  lp.objective = {1};
  lp.senses = {RowSense::LessEqual};
  lp.rhs = {4};
  lp.entries = {{0, 0, 1.0}, {0, 0, 1.0}};
  EXPECT_NEAR(solve_lp(lp).objective, 2.0, 1e-12);
}

TEST(Simplex, DegenerateKleeMintyStyleCycleFree) {
  // A classic cycling example for Dantzig's rule without anti-cycling.
  const auto lp = dense_lp({{0.5, -5.5, -2.5, 9}, {0.5, -1.5, -0.5, 1}, {1, 0, 0, 0}},
                           {RowSense::LessEqual, RowSense::LessEqual, RowSense::LessEqual},
                           {0, 0, 1}, {10, -57, -9, -24});
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, 1.0, 1e-9);
}

TEST(Simplex, RandomSixVariableLpsMatchVertexEnumeration) {
  Rng rng = make_stream(2024);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 6;
    const int m = 3 + uniform_int(rng, 3);
    std::vector<std::vector<double>> a(m + 1, std::vector<double>(n));
    std::vector<RowSense> senses;
    std::vector<double> rhs, c(n);
    for (int i = 0; i < m; ++i) {
      for (double& v : a[i]) v = std::round((uniform01(rng) * 4.0 - 1.0) * 4.0) / 4.0;
      const int kind = uniform_int(rng, 4);
      senses.push_back(kind == 0 ? RowSense::Equal
                                 : (kind == 1 ? RowSense::GreaterEqual : RowSense::LessEqual));
      rhs.push_back(std::round(uniform01(rng) * 8.0) / 2.0);
    }
    // Bounding row keeps every instance bounded.
    for (double& v : a[m]) v = 1.0;
    senses.push_back(RowSense::LessEqual);
    rhs.push_back(10.0);
    for (double& v : c) v = uniform01(rng) * 2.0 - 0.5;
    const auto lp = dense_lp(a, senses, rhs, c);
    const auto expected = nip::testing::vertex_enumeration_max(lp);
    const auto sol = solve_lp(lp);
    if (!expected) {
      EXPECT_EQ(sol.status, LpStatus::Infeasible) << "trial " << trial;
      continue;
    }
    ASSERT_EQ(sol.status, LpStatus::Optimal) << "trial " << trial;
    EXPECT_NEAR(sol.objective, *expected, 1e-8) << "trial " << trial;
    EXPECT_LE(max_constraint_violation(lp, sol.x), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}
