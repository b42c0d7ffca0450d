#include <gtest/gtest.h>

#include "nip/gradcheck.hpp"

using namespace nip;

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_EQ(gradcheck_relative_error(1.0, 1.0), 0.0);
  EXPECT_NEAR(gradcheck_relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_NEAR(gradcheck_relative_error(0.0, 1e-12), 1e-4, 1e-16);
}

TEST(GradCheck, SuiteAtInitAndAfterTraining) {
  GradCheckSuiteConfig c;
  c.sinkhorn_problems = 10;
  const auto results = run_gradcheck_suite(c);
  ASSERT_FALSE(results.empty());
  bool saw_trained = false;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed()) << r.name << " " << r.max_rel_error;
    EXPECT_GT(r.checked, 0u) << r.name;
    if (r.name.find("trained") != std::string::npos) saw_trained = true;
  }
  EXPECT_TRUE(saw_trained);
}
