#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "bkd/core_math.hpp"

namespace bkd {

/// Affine layer y = W x + b with W stored row-major (fan_out x fan_in).
struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Vector weights;
  Vector bias;

  double& w(std::size_t out, std::size_t in) { return weights[out * fan_in + in]; }
  double w(std::size_t out, std::size_t in) const { return weights[out * fan_in + in]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of dense layers with ReLU between them; the last layer emits logits.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().fan_in; }
  std::size_t output_dim() const { return layers.back().fan_out; }
  std::vector<std::size_t> dims() const;
  std::size_t num_parameters() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Gradients share the parameter layout.
using MlpGradients = MlpParams;

MlpParams zeros_like(const MlpParams& params);

/// Weights uniform in +-sqrt(6 / fan_in), biases zero.
/// dims = {input, hidden..., output}; needs at least two entries, all >= 1.
MlpParams init_mlp(std::span<const std::size_t> dims, std::uint64_t seed);

/// Per-layer activations recorded by forward().
struct ForwardCache {
  Vector input;
  std::vector<Vector> pre;   // affine outputs, one per layer
  std::vector<Vector> post;  // ReLU(pre) for hidden layers, logits for the last
};

struct ForwardResult {
  Vector logits;
  ForwardCache cache;
};

ForwardResult forward(const MlpParams& params, std::span<const double> x);

/// Inference-only forward pass; no cache.
Vector forward_logits(const MlpParams& params, std::span<const double> x);

/// Reverse-mode pass. Adds dL/dparams into `grads` (which must have the
/// parameter layout). ReLU'(0) is taken as 0.
void backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                         std::span<const double> grad_logits, MlpGradients& grads);

MlpGradients backward(const MlpParams& params, const ForwardCache& cache,
                      std::span<const double> grad_logits);

/// Momentum buffers for plain (heavy-ball) SGD.
struct OptimizerState {
  double momentum = 0.9;
  MlpParams velocity;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState make_optimizer_state(const MlpParams& params, double momentum = 0.9);

/// v <- momentum * v + g;  params <- params - lr * v.
void sgd_momentum_step(MlpParams& params, const MlpGradients& grads, OptimizerState& state, double lr);

enum class ScheduleKind { kConstant, kStep, kCosine };

ScheduleKind parse_schedule_kind(std::string_view s);
std::string_view to_string(ScheduleKind k);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::kCosine;
  double base_lr = 0.1;
  /// (epoch, factor): the factor applies from that epoch onward. Epochs strictly increasing.
  std::vector<std::pair<int, double>> steps;

  void validate() const;
};

/// Learning rate for a zero-based epoch.
///   constant: base
///   step:     base * prod{factor : step_epoch <= epoch}
///   cosine:   base * 0.5 * (1 + cos(pi * epoch / total))
double lr_at(const LrSchedule& schedule, int epoch, int total_epochs);

// mlp-v1: magic `mlp-v1`, u64 layer count, then per layer u64 fan_in,
// u64 fan_out, row-major weights and bias as f64. Little-endian throughout.
void save_params(std::ostream& os, const MlpParams& params);
MlpParams load_params(std::istream& is);
void save_params(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_params(const std::filesystem::path& path);

}  // namespace bkd
