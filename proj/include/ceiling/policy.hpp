#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ceiling/replay_buffer.hpp"
#include "ceiling/types.hpp"
#include "json.hpp"

namespace ceiling::policy {

struct PolicyConfig {
  std::size_t input_dim = kObservationDim;
  std::vector<std::size_t> hidden{64, 64};
  // Replaces the last hidden layer with an Elman (tanh) recurrent layer.
  bool recurrent = true;
  std::size_t output_dim = kActionDim;
  // State-independent standard deviation per action dimension.
  std::vector<double> sigma{0.002, 0.002, 0.01};
  double learning_rate = 3e-4;
  double weight_decay = 3e-6;
  std::size_t batch_trajectories = 16;
  // Bound applied to the translational part of the mean action at inference.
  double delta_max = kDefaultDeltaMax;
  // Fixed affine map applied to observations (x' = scale * x + shift). The defaults map
  // unit-square coordinates and the grasp flag to [-1, 1]; the gripper already is.
  // Empty means identity.
  std::vector<double> input_scale{2.0, 2.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0};
  std::vector<double> input_shift{-1.0, -1.0, 0.0, -1.0, -1.0, -1.0, -1.0, -1.0};
  // Fixed per-dimension multiplier on the network output (mean = scale * f(s)), so the
  // network works in units of delta_max. The gripper channel is damped because its sigma
  // is five times larger relative to its range. Empty means 1.
  std::vector<double> output_scale{kDefaultDeltaMax, kDefaultDeltaMax, 0.2};

  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig config_from_json(const nlohmann::json& j);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct TensorShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  int rank = 2;  // biases are rank 1
};

// Parameter tensors in storage order: per layer weight, [recurrent], bias.
std::vector<TensorShape> parameter_layout(const PolicyConfig& config);

template <typename T>
struct BasicPolicyParams {
  std::vector<Matrix<T>> tensors;
  // Adam moments; empty until the first optimizer step.
  std::vector<Matrix<T>> adam_m;
  std::vector<Matrix<T>> adam_v;
  std::uint64_t adam_step = 0;
  std::uint64_t version = 0;

  template <typename U>
  BasicPolicyParams<U> cast() const;
  std::size_t parameter_count() const;
};

template <typename T>
struct BasicGradientSet {
  std::vector<Matrix<T>> tensors;
};

// Training storage is 32-bit; the 64-bit instantiation backs gradient checks.
using PolicyParams = BasicPolicyParams<float>;
using GradientSet = BasicGradientSet<float>;
using PolicyParams64 = BasicPolicyParams<double>;
using GradientSet64 = BasicGradientSet<double>;

// Glorot-uniform weights, zero biases. Deterministic per seed.
template <typename T>
BasicPolicyParams<T> init_params(const PolicyConfig& config, std::uint64_t seed);

// Zero-valued parameters with the configured shapes.
template <typename T>
BasicPolicyParams<T> zero_params(const PolicyConfig& config);

// Throws std::invalid_argument when the tensors do not match the layout.
template <typename T>
void check_shapes(const BasicPolicyParams<T>& params, const PolicyConfig& config);

// Mean action for every step; recurrent state starts at zero. Returns output_dim x steps.
template <typename T>
Matrix<T> forward(const BasicPolicyParams<T>& params, const PolicyConfig& config,
                  std::span<const Observation> sequence);

template <typename T>
Vector<T> initial_hidden(const PolicyConfig& config);

template <typename T>
struct ActResult {
  Action action;
  Vector<T> hidden;
};

// Deterministic inference: the clipped distribution mean, carrying recurrent state.
template <typename T>
ActResult<T> act(const BasicPolicyParams<T>& params, const PolicyConfig& config, const Observation& obs,
                 const Vector<T>& hidden);

// Diagonal Gaussian log density.
double log_prob(std::span<const double> mu, std::span<const double> sigma, std::span<const double> action);

enum class Reduction { Mean, Sum };

template <typename T>
struct LossAndGradient {
  double loss = 0.0;
  BasicGradientSet<T> gradients;
};

// Weighted negative log-likelihood, averaged over every step of every trajectory
// (Reduction::Mean) or summed. Weight decay is not part of the reported loss.
template <typename T>
double loss(const BasicPolicyParams<T>& params, const PolicyConfig& config, const Batch& batch,
            Reduction reduction = Reduction::Mean);

// Exact gradient of loss(), backpropagated through time within each trajectory.
template <typename T>
LossAndGradient<T> loss_and_gradient(const BasicPolicyParams<T>& params, const PolicyConfig& config,
                                     const Batch& batch, Reduction reduction = Reduction::Mean);

template <typename T>
BasicGradientSet<T> backward(const BasicPolicyParams<T>& params, const PolicyConfig& config, const Batch& batch,
                             Reduction reduction = Reduction::Mean) {
  return loss_and_gradient(params, config, batch, reduction).gradients;
}

struct AdamOptions {
  double learning_rate = 3e-4;
  double weight_decay = 3e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamOptions from(const PolicyConfig& config) {
    return {config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8};
  }
};

// Adam with decoupled weight decay (applied first), bias-corrected moments. Bumps version.
template <typename T>
void adam_step(BasicPolicyParams<T>& params, const BasicGradientSet<T>& grads, const AdamOptions& options);

template <typename T>
void adam_step(BasicPolicyParams<T>& params, const BasicGradientSet<T>& grads, const PolicyConfig& config) {
  adam_step(params, grads, AdamOptions::from(config));
}

}  // namespace ceiling::policy
