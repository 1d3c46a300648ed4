#include "bkd/weights.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bkd {

WeightMode parse_weight_mode(std::string_view s) {
  if (s == "raw") return WeightMode::kRaw;
  if (s == "mean-one") return WeightMode::kMeanOne;
  throw std::invalid_argument("unknown weight mode '" + std::string(s) + "' (expected raw|mean-one)");
}

std::string_view to_string(WeightMode m) { return m == WeightMode::kRaw ? "raw" : "mean-one"; }

WeightVector effective_number_weights(const ClassCounts& counts, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("effective_number_weights: beta must lie in (0, 1)");
  }
  if (counts.empty()) throw std::invalid_argument("effective_number_weights: no classes");
  const double log_beta = std::log(beta);
  WeightVector w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto n = counts[i];
    if (n < 1) {
      throw std::invalid_argument("effective_number_weights: class " + std::to_string(i) +
                                  " has count " + std::to_string(n) + " (need >= 1)");
    }
    if (n == 1) {
      w[i] = 1.0;
      continue;
    }
    w[i] = (1.0 - beta) / -std::expm1(static_cast<double>(n) * log_beta);
  }
  return w;
}

WeightVector normalize_weights(const WeightVector& w, WeightMode mode) {
  if (mode == WeightMode::kRaw) return w;
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  const double scale = static_cast<double>(w.size()) / sum;
  WeightVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * scale;
  return out;
}

}  // namespace bkd
