#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bkd {

using Vector = std::vector<double>;

/// softmax(z / T) via max-shifted exponentials.
/// Throws std::invalid_argument for empty or non-finite z, or T <= 0.
Vector softmax_with_temperature(std::span<const double> z, double temperature = 1.0);

/// max(z) + ln sum exp(z_i - max(z)). Throws std::invalid_argument on empty input.
double log_sum_exp(std::span<const double> z);

/// Indicator vector of length num_classes with a 1 at `label`.
Vector one_hot(std::size_t label, std::size_t num_classes);

/// Shannon entropy in nats; 0 log 0 is taken as 0.
double entropy(std::span<const double> p);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// SplitMix64 generator (Steele, Lea & Flood). The whole state is one
/// 64-bit word, so checkpoints can capture it exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform in (0, 1]; safe as a log argument.
  double uniform_open_low();

  /// Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call.
  double normal();

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// In-place Fisher-Yates shuffle driven by `rng`.
void shuffle_indices(std::span<std::size_t> idx, Rng& rng);

}  // namespace bkd
