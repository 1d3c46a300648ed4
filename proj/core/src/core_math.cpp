#include "bkd/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bkd {

namespace {

void require_finite(std::span<const double> z, const char* what) {
  if (z.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

}  // namespace

Vector softmax_with_temperature(std::span<const double> z, double temperature) {
  require_finite(z, "softmax_with_temperature");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax_with_temperature: temperature must be positive");
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - zmax) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double log_sum_exp(std::span<const double> z) {
  require_finite(z, "log_sum_exp");
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return zmax + std::log(sum);
}

Vector one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw std::invalid_argument("one_hot: label " + std::to_string(label) +
                                " out of range for " + std::to_string(num_classes) + " classes");
  }
  Vector v(num_classes, 0.0);
  v[label] = 1.0;
  return v;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open_low() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
  // Reject the incomplete top bucket so every residue is equally likely.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void shuffle_indices(std::span<std::size_t> idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace bkd
