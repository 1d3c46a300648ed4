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
#include "bkd/weights.hpp"

namespace bkd {

enum class ProfileKind { kExponential, kStep };

ProfileKind parse_profile_kind(std::string_view s);
std::string_view to_string(ProfileKind k);

struct ImbalanceProfile {
  ProfileKind kind = ProfileKind::kExponential;
  double rho = 100.0;  // n_max / n_min
  std::int64_t n_max = 500;
  std::size_t num_classes = 10;
};

/// Class counts for a long-tailed profile, sorted nonincreasing.
///
/// exponential: n_i = round(n_max * rho^{-i/(C-1)}), i = 0..C-1, clamped >= 1.
/// step: the first ceil(C/2) classes get n_max, the rest round(n_max / rho).
ClassCounts make_longtail_counts(const ImbalanceProfile& profile);

/// Dense row-major feature matrix with integer labels.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t num_classes, std::size_t dim);

  /// Appends one row; validates label range, dimension and finiteness.
  void push_back(std::span<const double> x, std::size_t label);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<double>& features() const { return features_; }

  /// Per-class row counts derived from the labels. May contain zeros.
  ClassCounts class_counts() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t num_classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<std::size_t> labels_;
};

struct SyntheticSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Isotropic unit-variance Gaussian classes in R^d.
///
/// Class means are Gram-Schmidt orthonormalised Gaussian directions (plain
/// normalised directions once C > d) scaled to length `separation`. The
/// train split follows `counts`; the test split holds `per_class_test`
/// rows per class. Rows are grouped by class in label order.
SyntheticSplit synth_gaussian_mixture(const ClassCounts& counts, std::size_t dim, double separation,
                                      std::uint64_t seed, std::size_t per_class_test);

/// Uniform per-class subset without replacement. Selected rows keep their
/// original relative order. Throws std::invalid_argument naming the class
/// if a request exceeds what is available.
LabeledDataset downsample_to_profile(const LabeledDataset& data, const ClassCounts& counts,
                                     std::uint64_t seed);

enum class Subset { kMany, kMedium, kFew };

std::string_view to_string(Subset s);

struct SubsetTags {
  std::vector<Subset> tags;
  std::int64_t many_thresh = 100;
  std::int64_t few_thresh = 20;
};

/// n > many -> Many, few <= n <= many -> Medium, n < few -> Few.
SubsetTags subset_tags(const ClassCounts& counts, std::int64_t many_thresh = 100,
                       std::int64_t few_thresh = 20);

// longtail-csv v1: a header `longtail-csv v1, C=<int>, d=<int>` then one
// `label,f_1,...,f_d` row per sample, features in shortest round-trip form.
void write_dataset(std::ostream& os, const LabeledDataset& data);
void write_dataset(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset(std::istream& is);
LabeledDataset read_dataset(const std::filesystem::path& path);

}  // namespace bkd
