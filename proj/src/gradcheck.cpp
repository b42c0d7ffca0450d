#include "nip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "nip/rng.hpp"
#include "nip/trainer.hpp"
#include "nip/transport.hpp"

namespace nip {

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

using Real = long double;
using RealVec = std::vector<Real>;

// The numeric side of every check is evaluated in extended precision: in
// double, rounding noise in the loss divided by the step swamps entries whose
// true derivative is tiny (saturated plan entries, shift-invariant biases).

template <class F>
double central_difference(F&& f, double step) {
  const Real h = step;
  return static_cast<double>((8.0L * (f(h) - f(-h)) - (f(2.0L * h) - f(-2.0L * h))) /
                             (12.0L * h));
}

void record(GradCheckResult& r, double analytic, double numeric) {
  r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic - numeric));
  const double rel = gradcheck_relative_error(analytic, numeric);
  if (rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
  ++r.checked;
}

// Gamma (N x A, row-major) after `iterations` row/column updates, mirroring
// sinkhorn_forward.
RealVec extended_sinkhorn(const RealVec& index, int N, int A, std::span<const int> budgets,
                          Real eps, int iterations) {
  std::vector<int> active;
  for (int a = 0; a < A; ++a)
    if (budgets[a] > 0) active.push_back(a);
  const int K = static_cast<int>(active.size());
  auto at = [&](int n, int a) { return index[static_cast<std::size_t>(n) * A + a]; };
  RealVec f(N, 0.0L), g(K, 0.0L);
  for (int it = 0; it < iterations; ++it) {
    for (int n = 0; n < N; ++n) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int k = 0; k < K; ++k) mx = std::max(mx, (g[k] + at(n, active[k])) / eps);
      Real sum = 0.0L;
      for (int k = 0; k < K; ++k) sum += std::exp((g[k] + at(n, active[k])) / eps - mx);
      f[n] = -eps * (mx + std::log(sum));
    }
    for (int k = 0; k < K; ++k) {
      const int a = active[k];
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int n = 0; n < N; ++n) mx = std::max(mx, (f[n] + at(n, a)) / eps);
      Real sum = 0.0L;
      for (int n = 0; n < N; ++n) sum += std::exp((f[n] + at(n, a)) / eps - mx);
      g[k] = eps * std::log(static_cast<Real>(budgets[a])) - eps * (mx + std::log(sum));
    }
  }
  RealVec gamma(static_cast<std::size_t>(N) * A, 0.0L);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      gamma[static_cast<std::size_t>(n) * A + active[k]] =
          std::exp((f[n] + g[k] + at(n, active[k])) / eps);
  return gamma;
}

// Row-wise MLP over the flat parameter layout of IndexNetwork.
RealVec extended_forward(const IndexNetwork& net, const RealVec& params, const Matrix& features) {
  const int dims[4] = {net.input_dim(), net.hidden(), net.hidden(), net.n_actions()};
  const int N = static_cast<int>(features.rows());
  RealVec in(features.data().begin(), features.data().end());
  for (int layer = 0; layer < 3; ++layer) {
    const int I = dims[layer], O = dims[layer + 1];
    const Real* w = params.data() + net.weight_offset(layer);
    const Real* b = params.data() + net.bias_offset(layer);
    RealVec out(static_cast<std::size_t>(N) * O);
    for (int n = 0; n < N; ++n) {
      for (int o = 0; o < O; ++o) {
        Real z = b[o];
        for (int i = 0; i < I; ++i) z += w[static_cast<std::size_t>(o) * I + i] * in[n * I + i];
        if (layer < 2) {
          z = net.activation() == Activation::Tanh ? std::tanh(z)
                                                   : (z > 30.0L ? z : std::log1p(std::exp(z)));
        }
        out[static_cast<std::size_t>(n) * O + o] = z;
      }
    }
    in = std::move(out);
  }
  return in;
}

Real weighted_sum(const RealVec& a, const Matrix& w) {
  Real s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w.data()[i];
  return s;
}

Matrix random_matrix(int rows, int cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = lo + (hi - lo) * uniform01(rng);
  return m;
}

std::vector<double> network_grad(const IndexNetwork& net, const Matrix& features,
                                 const Matrix& weights) {
  IndexNetwork::Tape tape;
  net.forward(features, &tape);
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.backward_into(tape, weights, grad);
  return grad;
}

}  // namespace

GradCheckResult check_sinkhorn_gradient(const Matrix& index, std::span<const int> budgets,
                                        double epsilon, const Matrix& weights, int iterations,
                                        double step, double tolerance) {
  const SinkhornOptions opt{epsilon, iterations, 0.0};
  SinkhornTape tape;
  const TransportPlan plan = sinkhorn_forward(index, budgets, opt, &tape);
  const Matrix analytic = sinkhorn_backward(plan, tape, weights);

  GradCheckResult r;
  r.name = "sinkhorn";
  r.tolerance = tolerance;
  const int N = static_cast<int>(index.rows()), A = static_cast<int>(index.cols());
  RealVec probe(index.data().begin(), index.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Real orig = probe[i];
    const double numeric = central_difference(
        [&](Real d) {
          probe[i] = orig + d;
          return weighted_sum(extended_sinkhorn(probe, N, A, budgets, epsilon, iterations),
                              weights);
        },
        step);
    probe[i] = orig;
    record(r, analytic.data()[i], numeric);
  }
  return r;
}

std::vector<GradCheckResult> check_network_gradient(const IndexNetwork& net,
                                                    const Matrix& features, const Matrix& weights,
                                                    double step, double tolerance) {
  const std::vector<double> grad = network_grad(net, features, weights);
  RealVec params(net.parameters().begin(), net.parameters().end());
  std::vector<GradCheckResult> out;
  for (int layer = 0; layer < 3; ++layer) {
    GradCheckResult r;
    r.name = "layer" + std::to_string(layer + 1);
    r.tolerance = tolerance;
    const std::size_t begin = net.weight_offset(layer);
    const std::size_t end = layer + 1 < 3 ? net.weight_offset(layer + 1) : net.parameter_count();
    for (std::size_t k = begin; k < end; ++k) {
      const Real orig = params[k];
      const double numeric = central_difference(
          [&](Real d) {
            params[k] = orig + d;
            return weighted_sum(extended_forward(net, params, features), weights);
          },
          step);
      params[k] = orig;
      record(r, grad[k], numeric);
    }
    out.push_back(r);
  }
  return out;
}

GradCheckResult check_network_jvp(const IndexNetwork& net, const Matrix& features,
                                  const Matrix& weights, std::span<const double> direction,
                                  double step, double tolerance) {
  const std::vector<double> grad = network_grad(net, features, weights);
  double analytic = 0.0;
  for (std::size_t k = 0; k < grad.size(); ++k) analytic += grad[k] * direction[k];
  const double numeric = central_difference(
      [&](Real d) {
        RealVec params(net.parameters().begin(), net.parameters().end());
        for (std::size_t k = 0; k < params.size(); ++k) params[k] += d * direction[k];
        return weighted_sum(extended_forward(net, params, features), weights);
      },
      step);
  GradCheckResult r;
  r.name = "jvp";
  r.tolerance = tolerance;
  record(r, analytic, numeric);
  return r;
}

GradCheckResult check_chain_gradient(const RmabInstance& inst, const OraclePolicy& oracle,
                                     const IndexNetwork& net, const StateVector& s,
                                     double epsilon, int iterations, double step,
                                     double tolerance) {
  TrainingProblem problem{&inst, &oracle, {}};
  problem.config.loss = LossKind::Kl;
  problem.config.lambda_kl = 1.0;
  problem.config.epsilon = epsilon;
  problem.config.sinkhorn_max_iter = iterations;
  problem.config.sinkhorn_tol = 0.0;

  Rng rng = make_stream(0, {});
  std::vector<double> grad(net.parameter_count(), 0.0);
  element_loss(problem, net, s, rng, grad);

  const Matrix features = encode(inst, s);
  const Matrix target = kl_target(oracle, s, inst.budgets());
  const int N = inst.n_arms(), A = inst.n_actions();
  auto loss = [&](const RealVec& params) {
    const RealVec gamma = extended_sinkhorn(extended_forward(net, params, features), N, A,
                                            inst.budgets(), epsilon, iterations);
    Real kl = 0.0L;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      const Real t = target.data()[i];
      if (t > 0.0L) kl += t * (std::log(t) - std::log(gamma[i]));
    }
    return kl;
  };

  GradCheckResult r;
  r.name = "chain";
  r.tolerance = tolerance;
  RealVec params(net.parameters().begin(), net.parameters().end());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const Real orig = params[k];
    const double numeric = central_difference(
        [&](Real d) {
          params[k] = orig + d;
          return loss(params);
        },
        step);
    params[k] = orig;
    record(r, grad[k], numeric);
  }
  return r;
}

namespace {

void merge(GradCheckResult& into, const GradCheckResult& r) {
  into.checked += r.checked;
  into.max_abs_error = std::max(into.max_abs_error, r.max_abs_error);
  if (r.max_rel_error >= into.max_rel_error) {
    into.max_rel_error = r.max_rel_error;
    into.worst_analytic = r.worst_analytic;
    into.worst_numeric = r.worst_numeric;
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckSuiteConfig& config) {
  std::vector<GradCheckResult> out;
  Rng rng = make_stream(config.seed, {0x6c});

  for (double eps : {0.1, 0.05}) {
    GradCheckResult agg;
    char name[64];
    std::snprintf(name, sizeof name, "sinkhorn eps=%g", eps);
    agg.name = name;
    agg.tolerance = 1e-4;
    for (int p = 0; p < config.sinkhorn_problems; ++p) {
      const int N = 2 + uniform_int(rng, 4);
      const int A = 2 + uniform_int(rng, 2);
      std::vector<int> budgets(A, 0);
      for (int n = 0; n < N; ++n) ++budgets[uniform_int(rng, A)];
      const Matrix index = random_matrix(N, A, rng, -1.0, 1.0);
      const Matrix weights = random_matrix(N, A, rng, -1.0, 1.0);
      merge(agg, check_sinkhorn_gradient(index, budgets, eps, weights));
    }
    out.push_back(agg);
  }

  const std::vector<double> fractions{0.25, 0.25};
  const RmabInstance inst = generate_instance(4, 3, 3, fractions, config.seed);
  const OccupancyMeasure om = solve_occupancy(inst);
  const OraclePolicy oracle = extract_policy(om);
  IndexNetwork net = make_index_network(inst, config.seed);

  auto layer_and_chain = [&](const std::string& when) {
    Rng r = make_stream(config.seed, {0x6d});
    const StateVector s = sample_uniform_states(inst, r);
    const Matrix features = encode(inst, s);
    const Matrix weights = random_matrix(inst.n_arms(), inst.n_actions(), r, -1.0, 1.0);
    for (auto res : check_network_gradient(net, features, weights)) {
      res.name += " " + when;
      out.push_back(res);
    }
    GradCheckResult chain = check_chain_gradient(inst, oracle, net, s, 0.1);
    chain.name += " " + when;
    out.push_back(chain);
  };

  layer_and_chain("init");
  TrainConfig tc;
  tc.epochs = config.train_steps;
  tc.batch_size = 4;
  tc.seed = config.seed;
  tc.validation_samples = 1;
  train(inst, &om, net, tc);
  layer_and_chain("trained");
  return out;
}

}  // namespace nip
