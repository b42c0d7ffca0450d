#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nip/matrix.hpp"
#include "nip/rmab.hpp"
#include "nip/text_format.hpp"

namespace nip {

/// Row n = onehot(n) ++ onehot(s_n), shape N x (N + S). When `arm_features`
/// (N x F) is given it replaces the arm one-hot: row n = features[n] ++ onehot(s_n).
Matrix encode(const RmabInstance& inst, const StateVector& s,
              const Matrix* arm_features = nullptr);
Matrix encode(int n_arms, int n_states, const StateVector& s,
              const Matrix* arm_features = nullptr);

enum class Activation { Tanh, Softplus };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Per-arm MLP  input -> H -> H -> A  applied row-wise with shared weights.
/// Parameters live in one flat vector laid out layer by layer as
/// W (out x in, row-major) followed by b (out); gradient and momentum
/// buffers mirror that layout.
class IndexNetwork {
 public:
  struct Tape {
    Matrix input;
    Matrix z1, h1, z2, h2;
    std::uint64_t version = 0;
  };

  IndexNetwork() = default;
  IndexNetwork(int input_dim, int hidden, int n_actions, Activation act, std::uint64_t seed);

  int input_dim() const { return dims_[0]; }
  int hidden() const { return dims_[1]; }
  int n_actions() const { return dims_[3]; }
  Activation activation() const { return activation_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<const double> gradients() const { return grads_; }
  std::span<double> gradients() { return grads_; }
  std::span<const double> velocity() const { return velocity_; }

  // Offsets of W and b for layer l (0..2) in the flat parameter vector.
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(dims_[layer]) * dims_[layer + 1];
  }

  // Index matrix N x A. Throws std::invalid_argument on width mismatch.
  Matrix forward(const Matrix& features, Tape* tape = nullptr) const;

  // Accumulates parameter gradients of <dloss_dindex, forward(input)> into
  // `grad` (length parameter_count()). Throws on a stale or mismatched tape.
  void backward_into(const Tape& tape, const Matrix& dloss_dindex,
                     std::span<double> grad) const;
  // Same, into the network's own gradient buffers.
  void backward(const Tape& tape, const Matrix& dloss_dindex);

  void zero_grad();

  /// theta -= lr * v with v = momentum * v + grad (momentum 0 is plain
  /// gradient descent); clears gradients. Throws NumericalError and leaves
  /// the parameters untouched if any gradient is non-finite.
  void sgd_step(double learning_rate, double momentum = 0.0);

  // Number of completed training epochs; persisted in checkpoints.
  int epochs_completed = 0;

  // Parameter updates invalidate outstanding tapes.
  std::uint64_t version() const { return version_; }

  bool same_parameters(const IndexNetwork& other) const { return params_ == other.params_; }

  KvDocument to_document() const;
  static IndexNetwork from_document(const KvDocument& doc);
  void save(const std::filesystem::path& path) const;
  static IndexNetwork load(const std::filesystem::path& path);

 private:
  void layout();

  std::vector<int> dims_{0, 0, 0, 0};  // input, H, H, A
  Activation activation_ = Activation::Tanh;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<double> velocity_;
  std::uint64_t version_ = 0;
};

}  // namespace nip
