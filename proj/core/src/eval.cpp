#include "bkd/eval.hpp"

#include <json.hpp>
#include <ostream>
#include <stdexcept>
#include <string>

#include "bkd/format.hpp"

namespace bkd {

std::vector<std::size_t> predict(const MlpParams& params, const LabeledDataset& data) {
  if (data.size() > 0 && params.input_dim() != data.dim()) {
    throw std::invalid_argument("predict: model expects " + std::to_string(params.input_dim()) +
                                " features, data has " + std::to_string(data.dim()));
  }
  std::vector<std::size_t> preds(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) preds[i] = argmax(forward_logits(params, data.row(i)));
  return preds;
}

namespace {

std::optional<double> ratio(std::size_t hit, std::size_t total) {
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

EvalReport accuracy_report(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                           const SubsetTags& tags) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("accuracy_report: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  const auto c = tags.tags.size();
  std::vector<std::size_t> hit(c, 0), total(c, 0);
  std::size_t sub_hit[3] = {0, 0, 0};
  std::size_t sub_total[3] = {0, 0, 0};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i];
    if (y >= c) throw std::invalid_argument("accuracy_report: label " + std::to_string(y) + " has no subset tag");
    const bool ok = preds[i] == y;
    const auto s = static_cast<std::size_t>(tags.tags[y]);
    ++total[y];
    ++sub_total[s];
    if (ok) {
      ++hit[y];
      ++sub_hit[s];
      ++correct;
    }
  }
  EvalReport r;
  r.n = labels.size();
  r.correct = correct;
  r.overall = r.n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.n);
  r.many = ratio(sub_hit[0], sub_total[0]);
  r.medium = ratio(sub_hit[1], sub_total[1]);
  r.few = ratio(sub_hit[2], sub_total[2]);
  r.per_class.reserve(c);
  for (std::size_t k = 0; k < c; ++k) r.per_class.push_back(ratio(hit[k], total[k]));
  return r;
}

std::string to_json(const EvalReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::ordered_json j;
  j["overall"] = report.overall;
  j["many"] = opt(report.many);
  j["medium"] = opt(report.medium);
  j["few"] = opt(report.few);
  auto per_class = nlohmann::json::array();
  for (const auto& v : report.per_class) per_class.push_back(opt(v));
  j["per_class"] = per_class;
  j["n"] = report.n;
  return j.dump(2) + "\n";
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto v : counts_) t += v;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < num_classes_; ++i) t += at(i, i);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::int64_t t = 0;
  for (std::size_t j = 0; j < num_classes_; ++j) t += at(truth, j);
  return t;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts_.size(), 0.0);
  for (std::size_t i = 0; i < num_classes_; ++i) {
    const auto s = row_sum(i);
    if (s == 0) continue;
    for (std::size_t j = 0; j < num_classes_; ++j) {
      out[i * num_classes_ + j] = static_cast<double>(at(i, j)) / static_cast<double>(s);
    }
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t num_classes) {
  if (preds.size() != labels.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || preds[i] >= num_classes) {
      throw std::invalid_argument("confusion_matrix: entry " + std::to_string(i) + " out of range for " +
                                  std::to_string(num_classes) + " classes");
    }
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

namespace {

template <typename Cell>
void write_matrix(std::ostream& os, std::size_t c, Cell cell) {
  os << "true";
  for (std::size_t j = 0; j < c; ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < c; ++i) {
    os << i;
    for (std::size_t j = 0; j < c; ++j) os << ',' << cell(i, j);
    os << '\n';
  }
}

}  // namespace

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
  write_matrix(os, cm.num_classes(), [&](std::size_t i, std::size_t j) { return cm.at(i, j); });
}

void write_confusion_normalized_csv(std::ostream& os, const ConfusionMatrix& cm) {
  const auto norm = cm.row_normalized();
  const auto c = cm.num_classes();
  write_matrix(os, c, [&](std::size_t i, std::size_t j) { return format_double(norm[i * c + j]); });
}

}  // namespace bkd
