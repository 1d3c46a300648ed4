#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bkd/data.hpp"
#include "bkd/mlp.hpp"

namespace bkd {

/// Argmax class per row; ties go to the lowest index.
std::vector<std::size_t> predict(const MlpParams& params, const LabeledDataset& data);

/// Accuracy overall, per class and per Many/Medium/Few subset.
/// A class or subset with no evaluation samples reports std::nullopt.
struct EvalReport {
  double overall = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::vector<std::optional<double>> per_class;
  std::size_t n = 0;
  std::size_t correct = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport accuracy_report(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                           const SubsetTags& tags);

/// Keys: overall, many, medium, few, per_class, n. Absent values are null.
std::string to_json(const EvalReport& report);

/// counts(i, j) = number of class-i samples predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return num_classes_; }
  std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * num_classes_ + pred]; }
  std::int64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * num_classes_ + pred]; }

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::size_t truth) const;

  /// Row i divided by its sum; all-zero rows stay zero.
  std::vector<double> row_normalized() const;

 private:
  std::size_t num_classes_;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t num_classes);

// Header row `true,0,1,...,C-1`, then one row per true class.
void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm);
void write_confusion_normalized_csv(std::ostream& os, const ConfusionMatrix& cm);

}  // namespace bkd
