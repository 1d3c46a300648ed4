#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "bkd/core_math.hpp"

namespace bkd {

/// Per-class training-sample counts n_i.
using ClassCounts = std::vector<std::int64_t>;

/// Per-class weights omega_i.
using WeightVector = std::vector<double>;

enum class WeightMode { kRaw, kMeanOne };

WeightMode parse_weight_mode(std::string_view s);
std::string_view to_string(WeightMode m);

/// omega_i = (1 - beta) / (1 - beta^{n_i}).
///
/// The denominator is evaluated as -expm1(n * log(beta)) so that beta close
/// to one does not cancel. Counts of 1 give exactly 1.
/// Throws std::invalid_argument if beta is outside (0, 1) or any count < 1.
WeightVector effective_number_weights(const ClassCounts& counts, double beta);

/// raw: identity. mean-one: rescale so the weights sum to their count.
WeightVector normalize_weights(const WeightVector& w, WeightMode mode);

}  // namespace bkd
