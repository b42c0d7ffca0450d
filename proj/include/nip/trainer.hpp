#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nip/errors.hpp"
#include "nip/index_net.hpp"
#include "nip/matrix.hpp"
#include "nip/occupancy.hpp"
#include "nip/rmab.hpp"
#include "nip/transport.hpp"

namespace nip {

enum class LossKind { Kl, Reward };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;         // state vectors per batch
  int batches_per_epoch = 1;
  double learning_rate = 0.004;
  double momentum = 0.9;       // 0 gives plain gradient descent
  double epsilon = 0.1;        // Sinkhorn regularization
  LossKind loss = LossKind::Kl;
  double lambda_kl = 1.0;
  bool add_reward_loss = false;  // with loss = kl: total = lambda_kl * KL + reward loss
  int rollout_horizon = 1;       // visited states per element for the reward loss
  std::uint64_t seed = 0;
  int validation_samples = 16;
  int eval_every = 0;            // reward-gap probe cadence in epochs, 0 = off
  int checkpoint_every = 0;      // 0 = off
  int sinkhorn_max_iter = 500;
  double sinkhorn_tol = 1e-6;
  bool parallel = true;          // OpenMP over batch elements
};

// Throws std::invalid_argument on out-of-range fields or kl without an oracle.
void validate_config(const TrainConfig& config, bool has_oracle);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double reward_gap_pct = 0.0;  // NaN on epochs without a probe
  double seconds = 0.0;         // cumulative wall clock
};

struct TrainLog {
  std::vector<EpochRecord> records;
};

// CSV columns: epoch,train_loss,val_loss,reward_gap_pct,seconds. With
// include_timing=false the seconds column is written as 0.
void write_train_log_csv(const TrainLog& log, std::ostream& out, bool include_timing = true);

struct TrainHooks {
  std::function<double(const IndexNetwork&, int epoch)> reward_gap;
  std::function<void(const IndexNetwork&, int epoch)> checkpoint;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;      // dL/dGamma, N x A
  Matrix grad_log;  // dL/dlog(Gamma), what the training chain backpropagates
};

/// Row n is the oracle conditional policy pi*_n(. | s_n). Actions with a
/// zero budget (if `budgets` is given) are removed and the row renormalized,
/// since the transport plan carries no mass there.
Matrix kl_target(const OraclePolicy& policy, const StateVector& s,
                 std::span<const int> budgets = {});

/// sum t (log t - log Gamma) with 0 log 0 = 0; gradient -t / Gamma.
/// log Gamma is taken from the plan's potentials, so entries that underflow
/// in Gamma still give a finite loss. Throws std::invalid_argument if
/// Gamma is exactly zero (a zero-budget column) where t > 0.
LossResult kl_loss(const TransportPlan& plan, const Matrix& target);

/// -sum r_n(s_n, a) Gamma_na; gradient -r_n(s_n, a).
LossResult reward_loss(const RmabInstance& inst, const TransportPlan& plan, const StateVector& s);

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, Matrix gamma, Matrix index, std::vector<double> params)
      : NumericalError(what),
        gamma(std::move(gamma)),
        index(std::move(index)),
        parameters(std::move(params)) {}
  Matrix gamma;
  Matrix index;
  std::vector<double> parameters;
};

/// Everything a single loss evaluation needs besides the network.
struct TrainingProblem {
  const RmabInstance* inst = nullptr;
  const OraclePolicy* oracle = nullptr;  // required for the KL loss
  TrainConfig config;
};

/// Loss of one sampled element starting at `s` (rollout for the reward
/// loss). Adds dL/dtheta into `grad` when it is non-empty.
double element_loss(const TrainingProblem& problem, const IndexNetwork& net, StateVector s,
                    Rng& rng, std::span<double> grad);

struct BatchGradient {
  double loss = 0.0;          // mean over the batch
  std::vector<double> grad;   // mean over the batch
};

/// Element e of batch (epoch, batch) draws its states from
/// make_stream(seed, {epoch, batch, e}). Per-element gradients are reduced
/// in element order, so both variants agree bit for bit.
BatchGradient batch_gradient_serial(const TrainingProblem& problem, const IndexNetwork& net,
                                    int epoch, int batch);
BatchGradient batch_gradient_parallel(const TrainingProblem& problem, const IndexNetwork& net,
                                      int epoch, int batch);

// Mean loss over held-out states drawn fresh for this epoch.
double validation_loss(const TrainingProblem& problem, const IndexNetwork& net, int epoch);

/// Runs config.epochs further epochs, continuing the network's epoch counter
/// so that a resumed checkpoint replays exactly the batches an uninterrupted
/// run would have seen.
TrainLog train(const RmabInstance& inst, const OccupancyMeasure* om, IndexNetwork& net,
               const TrainConfig& config, const TrainHooks& hooks = {});

// Default network shape for an instance: input N + S, width 64.
IndexNetwork make_index_network(const RmabInstance& inst, std::uint64_t seed, int hidden = 64,
                                Activation act = Activation::Tanh);

}  // namespace nip
