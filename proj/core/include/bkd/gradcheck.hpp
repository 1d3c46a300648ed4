#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bkd/core_math.hpp"

namespace bkd {

/// Central differences (f(z + h e_k) - f(z - h e_k)) / 2h for every k.
Vector central_difference(const std::function<double(std::span<const double>)>& f, std::span<const double> z,
                          double h = 1e-5);

struct GradcheckCase {
  std::string name;
  std::size_t trials = 0;
  double max_abs_error = 0.0;
  std::size_t worst_trial = 0;
  std::size_t worst_classes = 0;
  double worst_temperature = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double tolerance = 1e-6;

  bool passed() const;
  const GradcheckCase& worst() const;
};

/// Randomised analytic-vs-finite-difference comparison for every loss
/// (C in [2, 10], T in {1, 2, 4}, random positive weights), the two
/// closed-form diagnostic gradients, and each loss composed with a small
/// two-layer MLP.
GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed, double h = 1e-5, double tolerance = 1e-6);

void print_gradcheck(std::ostream& os, const GradcheckReport& report);

}  // namespace bkd
