#include "nip/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>


namespace nip {

std::string to_string(LossKind kind) { return kind == LossKind::Kl ? "kl" : "reward"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "kl") return LossKind::Kl;
  if (name == "reward") return LossKind::Reward;
  throw std::invalid_argument("unknown loss '" + name + "' (expected kl or reward)");
}

void validate_config(const TrainConfig& c, bool has_oracle) {
  if (c.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (c.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (c.batches_per_epoch < 1) throw std::invalid_argument("batches per epoch must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(c.epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(c.lambda_kl >= 0.0)) throw std::invalid_argument("lambda_kl must be >= 0");
  if (c.rollout_horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  if (c.validation_samples < 0) throw std::invalid_argument("validation samples must be >= 0");
  if (c.eval_every < 0 || c.checkpoint_every < 0) throw std::invalid_argument("cadences must be >= 0");
  if (c.sinkhorn_max_iter < 1) throw std::invalid_argument("sinkhorn max_iter must be >= 1");
  const bool needs_oracle = c.loss == LossKind::Kl;
  if (needs_oracle && !has_oracle) {
    throw std::invalid_argument("kl loss requires an oracle occupancy measure");
  }
}

void write_train_log_csv(const TrainLog& log, std::ostream& out, bool include_timing) {
  out << "epoch,train_loss,val_loss,reward_gap_pct,seconds\n";
  char buf[256];
  for (const auto& r : log.records) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.3f\n", r.epoch, r.train_loss, r.val_loss,
                  r.reward_gap_pct, include_timing ? r.seconds : 0.0);
    out << buf;
  }
}

Matrix kl_target(const OraclePolicy& policy, const StateVector& s, std::span<const int> budgets) {
  const int N = policy.n_arms, A = policy.n_actions;
  if (s.states.size() != static_cast<std::size_t>(N)) {
    throw std::invalid_argument("state vector length does not match the policy");
  }
  Matrix t(N, A);
  for (int n = 0; n < N; ++n) {
    const auto row = policy.row(n, s.states[n]);
    double total = 0.0;
    for (int a = 0; a < A; ++a) {
      const bool usable = budgets.empty() || budgets[a] > 0;
      t(n, a) = usable ? row[a] : 0.0;
      total += t(n, a);
    }
    if (total <= 0.0) {
      int usable_count = 0;
      for (int a = 0; a < A; ++a) usable_count += budgets.empty() || budgets[a] > 0;
      for (int a = 0; a < A; ++a)
        t(n, a) = (budgets.empty() || budgets[a] > 0) ? 1.0 / usable_count : 0.0;
    } else if (total != 1.0) {
      for (int a = 0; a < A; ++a) t(n, a) /= total;
    }
  }
  return t;
}

LossResult kl_loss(const TransportPlan& plan, const Matrix& target) {
  const Matrix& gamma = plan.gamma;
  if (gamma.rows() != target.rows() || gamma.cols() != target.cols()) {
    throw std::invalid_argument("kl_loss: plan and target shapes differ");
  }
  const bool have_log = plan.log_gamma.size() == gamma.size();
  LossResult out;
  out.grad = Matrix(gamma.rows(), gamma.cols(), 0.0);
  out.grad_log = Matrix(gamma.rows(), gamma.cols(), 0.0);
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    const double t = target.data()[k];
    if (t <= 0.0) continue;
    const double g = gamma.data()[k];
    const double log_g = have_log ? plan.log_gamma.data()[k] : std::log(g);
    if (!std::isfinite(log_g) || g < 0.0) {
      throw std::invalid_argument("kl_loss: nonpositive transport plan entry");
    }
    out.loss += t * (std::log(t) - log_g);
    out.grad.data()[k] = -t / g;
    out.grad_log.data()[k] = -t;
  }
  return out;
}

LossResult reward_loss(const RmabInstance& inst, const TransportPlan& plan, const StateVector& s) {
  const int N = inst.n_arms(), A = inst.n_actions();
  LossResult out;
  out.grad = Matrix(N, A);
  out.grad_log = Matrix(N, A);
  for (int n = 0; n < N; ++n) {
    const auto r = inst.rewards_at(n, s.states[n]);
    for (int a = 0; a < A; ++a) {
      out.loss -= r[a] * plan.gamma(n, a);
      out.grad(n, a) = -r[a];
      out.grad_log(n, a) = -r[a] * plan.gamma(n, a);
    }
  }
  return out;
}

double element_loss(const TrainingProblem& problem, const IndexNetwork& net, StateVector s,
                    Rng& rng, std::span<double> grad) {
  const RmabInstance& inst = *problem.inst;
  const TrainConfig& cfg = problem.config;
  const bool use_kl = cfg.loss == LossKind::Kl;
  const bool use_reward = cfg.loss == LossKind::Reward || cfg.add_reward_loss;
  const int horizon = use_reward ? cfg.rollout_horizon : 1;
  const SinkhornOptions sk{cfg.epsilon, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol};

  double total = 0.0;
  IndexNetwork::Tape tape;
  SinkhornTape sk_tape;
  for (int k = 0; k < horizon; ++k) {
    const Matrix features = encode(inst, s);
    const Matrix index = net.forward(features, grad.empty() ? nullptr : &tape);
    const TransportPlan plan =
        sinkhorn_forward(index, inst.budgets(), sk, grad.empty() ? nullptr : &sk_tape);
    double loss = 0.0;
    Matrix dlog(plan.gamma.rows(), plan.gamma.cols(), 0.0);
    if (use_kl) {
      const Matrix target = kl_target(*problem.oracle, s, inst.budgets());
      const LossResult kl = kl_loss(plan, target);
      loss += cfg.lambda_kl * kl.loss;
      for (std::size_t i = 0; i < dlog.size(); ++i)
        dlog.data()[i] += cfg.lambda_kl * kl.grad_log.data()[i];
    }
    if (use_reward) {
      const LossResult rl = reward_loss(inst, plan, s);
      loss += rl.loss;
      for (std::size_t i = 0; i < dlog.size(); ++i) dlog.data()[i] += rl.grad_log.data()[i];
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("non-finite training loss", plan.gamma, index,
                             std::vector<double>(net.parameters().begin(), net.parameters().end()));
    }
    total += loss;
    if (!grad.empty()) {
      const Matrix dindex = sinkhorn_backward_log(plan, sk_tape, dlog);
      net.backward_into(tape, dindex, grad);
    }
    if (k + 1 < horizon) {
      const ActionVector acts = plan_to_actions(plan, PlanMode::Sample, rng);
      s = step(inst, s, acts, rng).next;
    }
  }
  return total;
}

namespace {

constexpr std::uint64_t kValidationTag = 0x7a11d;

BatchGradient reduce(std::vector<double>& losses, std::vector<std::vector<double>>& grads) {
  BatchGradient out;
  const double inv = 1.0 / static_cast<double>(losses.size());
  out.grad.assign(grads.front().size(), 0.0);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    out.loss += losses[e];
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += grads[e][k];
  }
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

void compute_element(const TrainingProblem& problem, const IndexNetwork& net, int epoch, int batch,
                     int e, double& loss, std::vector<double>& grad) {
  Rng rng = make_stream(problem.config.seed, {static_cast<std::uint64_t>(epoch),
                                              static_cast<std::uint64_t>(batch),
                                              static_cast<std::uint64_t>(e)});
  StateVector s = sample_uniform_states(*problem.inst, rng);
  grad.assign(net.parameter_count(), 0.0);
  loss = element_loss(problem, net, std::move(s), rng, grad);
}

}  // namespace

BatchGradient batch_gradient_serial(const TrainingProblem& problem, const IndexNetwork& net,
                                    int epoch, int batch) {
  const int B = problem.config.batch_size;
  std::vector<double> losses(B);
  std::vector<std::vector<double>> grads(B);
  for (int e = 0; e < B; ++e) compute_element(problem, net, epoch, batch, e, losses[e], grads[e]);
  return reduce(losses, grads);
}

BatchGradient batch_gradient_parallel(const TrainingProblem& problem, const IndexNetwork& net,
                                      int epoch, int batch) {
  const int B = problem.config.batch_size;
  std::vector<double> losses(B);
  std::vector<std::vector<double>> grads(B);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int e = 0; e < B; ++e) {
    try {
      compute_element(problem, net, epoch, batch, e, losses[e], grads[e]);
    } catch (...) {
#pragma omp critical(nip_batch_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return reduce(losses, grads);
}

double validation_loss(const TrainingProblem& problem, const IndexNetwork& net, int epoch) {
  const int V = problem.config.validation_samples;
  if (V == 0) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (int v = 0; v < V; ++v) {
    Rng rng = make_stream(problem.config.seed,
                          {kValidationTag, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(v)});
    StateVector s = sample_uniform_states(*problem.inst, rng);
    total += element_loss(problem, net, std::move(s), rng, {});
  }
  return total / V;
}

TrainLog train(const RmabInstance& inst, const OccupancyMeasure* om, IndexNetwork& net,
               const TrainConfig& config, const TrainHooks& hooks) {
  validate_config(config, om != nullptr);
  TrainLog log;
  if (config.epochs == 0) return log;
  if (net.input_dim() != inst.n_arms() + inst.n_states() || net.n_actions() != inst.n_actions()) {
    throw std::invalid_argument("network shape does not match the instance");
  }
  OraclePolicy policy;
  if (om) policy = extract_policy(*om);

  TrainingProblem problem;
  problem.inst = &inst;
  problem.oracle = om ? &policy : nullptr;
  problem.config = config;

  const auto start = std::chrono::steady_clock::now();
  const int first = net.epochs_completed + 1;
  for (int epoch = first; epoch < first + config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      BatchGradient bg = config.parallel ? batch_gradient_parallel(problem, net, epoch, b)
                                         : batch_gradient_serial(problem, net, epoch, b);
      std::copy(bg.grad.begin(), bg.grad.end(), net.gradients().begin());
      net.sgd_step(config.learning_rate, config.momentum);
      loss_sum += bg.loss;
    }
    net.epochs_completed = epoch;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / config.batches_per_epoch;
    rec.val_loss = validation_loss(problem, net, epoch);
    rec.reward_gap_pct = std::numeric_limits<double>::quiet_NaN();
    if (hooks.reward_gap && config.eval_every > 0 &&
        (epoch == first || epoch % config.eval_every == 0)) {
      rec.reward_gap_pct = hooks.reward_gap(net, epoch);
    }
    if (hooks.checkpoint && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      hooks.checkpoint(net, epoch);
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.records.push_back(rec);
  }
  return log;
}

IndexNetwork make_index_network(const RmabInstance& inst, std::uint64_t seed, int hidden,
                                Activation act) {
  return IndexNetwork(inst.n_arms() + inst.n_states(), hidden, inst.n_actions(), act, seed);
}

}  // namespace nip
