#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nip/index_net.hpp"
#include "nip/matrix.hpp"
#include "nip/occupancy.hpp"
#include "nip/rmab.hpp"

namespace nip {

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  double worst_analytic = 0.0, worst_numeric = 0.0;  // entry with the largest relative error
  bool passed() const { return max_rel_error < tolerance; }
};

// |a - n| / max(|a|, |n|, 1e-8)
double gradcheck_relative_error(double analytic, double numeric);

// Derivatives use the fourth-order central stencil at +-step, +-2 step.

/// Loss sum(weights * Gamma) through a fixed number of Sinkhorn iterations
/// (tol 0, so perturbations cannot change the iteration count). Every index
/// entry is checked against central differences of an extended-precision
/// evaluation of the same iteration.
GradCheckResult check_sinkhorn_gradient(const Matrix& index, std::span<const int> budgets,
                                        double epsilon, const Matrix& weights,
                                        int iterations = 200, double step = 1e-5,
                                        double tolerance = 1e-4);

/// Loss sum(weights * forward(features)); one result per layer (W and b).
std::vector<GradCheckResult> check_network_gradient(const IndexNetwork& net,
                                                    const Matrix& features, const Matrix& weights,
                                                    double step = 1e-3, double tolerance = 1e-4);

/// Directional derivative along `direction` in parameter space vs. central
/// differences of sum(weights * forward).
GradCheckResult check_network_jvp(const IndexNetwork& net, const Matrix& features,
                                  const Matrix& weights, std::span<const double> direction,
                                  double step = 1e-3, double tolerance = 1e-4);

/// encode -> forward -> Sinkhorn -> KL against the oracle target, every
/// parameter.
GradCheckResult check_chain_gradient(const RmabInstance& inst, const OraclePolicy& oracle,
                                     const IndexNetwork& net, const StateVector& s,
                                     double epsilon, int iterations = 200, double step = 1e-3,
                                     double tolerance = 1e-3);

struct GradCheckSuiteConfig {
  std::uint64_t seed = 0;
  int sinkhorn_problems = 50;
  int train_steps = 100;
};

/// Sinkhorn checks on random small problems for eps in {0.1, 0.05}, layer
/// checks at initialization and after training, and the full chain on a
/// generated 4-arm, 3-state, 3-action instance.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckSuiteConfig& config);

}  // namespace nip
