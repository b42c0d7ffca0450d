#include "nip/index_net.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "nip/errors.hpp"
#include "nip/rng.hpp"

namespace nip {

Matrix encode(int n_arms, int n_states, const StateVector& s, const Matrix* arm_features) {
  if (s.states.size() != static_cast<std::size_t>(n_arms)) {
    throw std::invalid_argument("state vector length does not match n_arms");
  }
  const int arm_width = arm_features ? static_cast<int>(arm_features->cols()) : n_arms;
  if (arm_features && arm_features->rows() != static_cast<std::size_t>(n_arms)) {
    throw std::invalid_argument("arm feature matrix must have one row per arm");
  }
  Matrix x(n_arms, arm_width + n_states, 0.0);
  for (int n = 0; n < n_arms; ++n) {
    if (arm_features) {
      for (int k = 0; k < arm_width; ++k) x(n, k) = (*arm_features)(n, k);
    } else {
      x(n, n) = 1.0;
    }
    const int st = s.states[n];
    if (st < 0 || st >= n_states) throw std::invalid_argument("state out of range");
    x(n, arm_width + st) = 1.0;
  }
  return x;
}

Matrix encode(const RmabInstance& inst, const StateVector& s, const Matrix* arm_features) {
  return encode(inst.n_arms(), inst.n_states(), s, arm_features);
}

std::string to_string(Activation act) { return act == Activation::Tanh ? "tanh" : "softplus"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  throw DataError("unknown activation '" + name + "'");
}

namespace {

double activate(Activation act, double z) {
  if (act == Activation::Tanh) return std::tanh(z);
  return z > 30.0 ? z : std::log1p(std::exp(z));
}

// Derivative expressed through the pre-activation z and output h.
double activate_grad(Activation act, double z, double h) {
  if (act == Activation::Tanh) return 1.0 - h * h;
  return 1.0 / (1.0 + std::exp(-z));
}

// out(N x O) = in(N x I) * W^T + b
void dense(const Matrix& in, const double* w, const double* b, int out_dim, Matrix& out) {
  const std::size_t N = in.rows();
  const std::size_t I = in.cols();
  out = Matrix(N, out_dim);
  for (std::size_t n = 0; n < N; ++n) {
    const double* x = &in.data()[n * I];
    for (int o = 0; o < out_dim; ++o) {
      const double* wr = w + static_cast<std::size_t>(o) * I;
      double acc = b[o];
      for (std::size_t i = 0; i < I; ++i) acc += wr[i] * x[i];
      out(n, o) = acc;
    }
  }
}

}  // namespace

IndexNetwork::IndexNetwork(int input_dim, int hidden, int n_actions, Activation act,
                           std::uint64_t seed)
    : dims_{input_dim, hidden, hidden, n_actions}, activation_(act), seed_(seed) {
  if (input_dim < 1 || hidden < 1 || n_actions < 1) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  layout();
  Rng rng = make_stream(seed, {0x1d3a});
  for (int l = 0; l < 3; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
    const std::size_t count = static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    for (std::size_t k = 0; k < count; ++k) {
      params_[offsets_[l] + k] = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
}

void IndexNetwork::layout() {
  offsets_.assign(4, 0);
  for (int l = 0; l < 3; ++l) {
    offsets_[l + 1] =
        offsets_[l] + static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
  }
  params_.assign(offsets_[3], 0.0);
  grads_.assign(offsets_[3], 0.0);
  velocity_.assign(offsets_[3], 0.0);
}

Matrix IndexNetwork::forward(const Matrix& features, Tape* tape) const {
  if (features.cols() != static_cast<std::size_t>(dims_[0])) {
    throw std::invalid_argument("feature width " + std::to_string(features.cols()) +
                                " does not match network input " + std::to_string(dims_[0]));
  }
  Matrix z1, z2, out;
  dense(features, &params_[weight_offset(0)], &params_[bias_offset(0)], dims_[1], z1);
  Matrix h1 = z1;
  for (double& v : h1.data()) v = activate(activation_, v);
  dense(h1, &params_[weight_offset(1)], &params_[bias_offset(1)], dims_[2], z2);
  Matrix h2 = z2;
  for (double& v : h2.data()) v = activate(activation_, v);
  dense(h2, &params_[weight_offset(2)], &params_[bias_offset(2)], dims_[3], out);
  if (tape) {
    tape->input = features;
    tape->z1 = std::move(z1);
    tape->h1 = std::move(h1);
    tape->z2 = std::move(z2);
    tape->h2 = std::move(h2);
    tape->version = version_;
  }
  return out;
}

void IndexNetwork::backward_into(const Tape& tape, const Matrix& dloss_dindex,
                                 std::span<double> grad) const {
  if (tape.version != version_) throw std::invalid_argument("stale tape: parameters changed since forward");
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  const std::size_t N = tape.input.rows();
  if (dloss_dindex.rows() != N || dloss_dindex.cols() != static_cast<std::size_t>(dims_[3]) ||
      tape.h2.rows() != N) {
    throw std::invalid_argument("backward: shape mismatch between tape and upstream gradient");
  }
  const std::array<const Matrix*, 3> inputs{&tape.input, &tape.h1, &tape.h2};
  const std::array<const Matrix*, 2> pre{&tape.z1, &tape.z2};
  Matrix delta = dloss_dindex;  // dL/dz for the current layer (output layer is linear)
  for (int l = 2; l >= 0; --l) {
    const int in_dim = dims_[l];
    const int out_dim = dims_[l + 1];
    const Matrix& x = *inputs[l];
    double* gw = &grad[weight_offset(l)];
    double* gb = &grad[bias_offset(l)];
    for (std::size_t n = 0; n < N; ++n) {
      const double* xr = &x.data()[n * in_dim];
      for (int o = 0; o < out_dim; ++o) {
        const double d = delta(n, o);
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwr = gw + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) gwr[i] += d * xr[i];
      }
    }
    if (l == 0) break;
    // Propagate to the previous layer's pre-activation.
    const double* w = &params_[weight_offset(l)];
    Matrix next(N, in_dim, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      double* nr = &next.data()[n * in_dim];
      for (int o = 0; o < out_dim; ++o) {
        const double d = delta(n, o);
        if (d == 0.0) continue;
        const double* wr = w + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) nr[i] += d * wr[i];
      }
    }
    const Matrix& z = *pre[l - 1];
    const Matrix& h = x;
    for (std::size_t k = 0; k < next.size(); ++k) {
      next.data()[k] *= activate_grad(activation_, z.data()[k], h.data()[k]);
    }
    delta = std::move(next);
  }
}

void IndexNetwork::backward(const Tape& tape, const Matrix& dloss_dindex) {
  backward_into(tape, dloss_dindex, grads_);
}

void IndexNetwork::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void IndexNetwork::sgd_step(double learning_rate, double momentum) {
  for (std::size_t k = 0; k < grads_.size(); ++k) {
    if (!std::isfinite(grads_[k])) {
      throw NumericalError("non-finite gradient at parameter " + std::to_string(k) +
                           "; update skipped");
    }
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    velocity_[k] = momentum * velocity_[k] + grads_[k];
    params_[k] -= learning_rate * velocity_[k];
  }
  zero_grad();
  ++version_;
}

KvDocument IndexNetwork::to_document() const {
  KvDocument doc;
  doc.set("kind", "index_network");
  doc.set("layer_dims", std::span<const int>(dims_));
  doc.set("activation", to_string(activation_));
  doc.set("seed", seed_);
  doc.set("epochs_completed", epochs_completed);
  doc.set("parameter_count", static_cast<std::int64_t>(params_.size()));
  doc.set("parameters", std::span<const double>(params_));
  doc.set("velocity", std::span<const double>(velocity_));
  return doc;
}

IndexNetwork IndexNetwork::from_document(const KvDocument& doc) {
  IndexNetwork net;
  const auto dims = doc.get_ints("layer_dims");
  if (dims.size() != 4 || dims[1] != dims[2]) {
    throw DataError("checkpoint: layer_dims must be [input, hidden, hidden, actions]");
  }
  for (int k = 0; k < 4; ++k) {
    if (dims[k] < 1 || dims[k] > 1'000'000) throw DataError("checkpoint: bad layer width");
    net.dims_[k] = static_cast<int>(dims[k]);
  }
  net.activation_ = activation_from_string(doc.get_string("activation"));
  net.seed_ = doc.has("seed") ? doc.get_uint("seed") : 0;
  net.layout();
  auto params = doc.get_reals("parameters");
  if (params.size() != net.params_.size() ||
      (doc.has("parameter_count") &&
       doc.get_int("parameter_count") != static_cast<std::int64_t>(params.size()))) {
    throw DataError("checkpoint: parameter count " + std::to_string(params.size()) +
                    " does not match layer_dims (expected " +
                    std::to_string(net.params_.size()) + ")");
  }
  net.params_ = std::move(params);
  if (doc.has("velocity")) {
    auto vel = doc.get_reals("velocity");
    if (vel.size() != net.velocity_.size()) throw DataError("checkpoint: velocity size mismatch");
    net.velocity_ = std::move(vel);
  }
  net.epochs_completed = doc.has("epochs_completed")
                             ? static_cast<int>(doc.get_int("epochs_completed"))
                             : 0;
  return net;
}

void IndexNetwork::save(const std::filesystem::path& path) const { to_document().write_file(path); }

IndexNetwork IndexNetwork::load(const std::filesystem::path& path) {
  return from_document(KvDocument::read_file(path));
}

}  // namespace nip
