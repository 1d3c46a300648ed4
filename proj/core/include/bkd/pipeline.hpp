#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bkd/data.hpp"
#include "bkd/eval.hpp"
#include "bkd/losses.hpp"
#include "bkd/mlp.hpp"
#include "bkd/weights.hpp"

namespace bkd {

enum class LossKind { kCe, kCb, kKd, kBkd };

LossKind parse_loss_kind(std::string_view s);
std::string_view to_string(LossKind k);

struct TrainConfig {
  LossKind loss = LossKind::kCe;
  int epochs = 100;
  std::size_t batch_size = 64;
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden_dims{64, 64};
  KDConfig kd;
  BKDConfig bkd;
  /// Epochs before this one train with kd_loss, the rest with bkd_loss.
  std::optional<int> defer_epoch;
  bool shuffle = true;
  std::int64_t many_thresh = 100;
  std::int64_t few_thresh = 20;
  /// Intra-batch fan-out. Results do not depend on it.
  std::size_t workers = 1;

  void validate() const;

  /// Stable text form of every field that affects the trajectory.
  std::string canonical() const;
  std::uint64_t digest() const;
};

struct MetricRow {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double acc_all = 0.0;
  std::optional<double> acc_many;
  std::optional<double> acc_medium;
  std::optional<double> acc_few;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

using MetricLog = std::vector<MetricRow>;

/// CSV `epoch,loss,lr,acc_all,acc_many,acc_medium,acc_few`; absent subsets are empty cells.
void write_metric_log(std::ostream& os, const MetricLog& log);

struct StepRecord {
  int epoch = 0;
  std::size_t batch = 0;
  LossKind loss = LossKind::kCe;
  double mean_loss = 0.0;
};

/// Everything needed to continue a run bit-exactly.
struct Checkpoint {
  std::uint64_t config_digest = 0;
  int epoch = 0;  // completed epochs
  std::uint64_t rng_state = 0;
  MlpParams params;
  OptimizerState optimizer;
  MetricLog log;
};

// ckpt-v1: magic `ckpt-v1`, u64 config digest, u64 epoch, u64 rng state,
// f64 momentum, an mlp-v1 block for the parameters, an mlp-v1 block for the
// momentum buffers, u64 row count and the metric rows, then a u64 FNV-1a
// checksum of everything before it. Little-endian throughout.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters from either a ckpt-v1 or an mlp-v1 file.
MlpParams load_model(const std::filesystem::path& path);

/// Minibatch SGD over one student (or teacher) model.
///
/// ce and cb ignore the teacher; kd and bkd query it per sample in inference
/// mode. Class weights come from the training split once, at construction.
class Trainer {
 public:
  Trainer(const LabeledDataset& train, const LabeledDataset& test, TrainConfig cfg,
          const MlpParams* teacher = nullptr);

  void run_epoch();

  /// Runs until `stop_epoch` epochs are complete (default: all of them).
  void run(std::optional<int> stop_epoch = std::nullopt);

  bool done() const { return epoch_ >= cfg_.epochs; }
  int epoch() const { return epoch_; }

  const TrainConfig& config() const { return cfg_; }
  const MlpParams& params() const { return params_; }
  const OptimizerState& optimizer() const { return opt_; }
  const MetricLog& log() const { return log_; }
  const WeightVector& class_weights() const { return weights_; }
  const SubsetTags& tags() const { return tags_; }

  void set_step_observer(std::function<void(const StepRecord&)> fn) { observer_ = std::move(fn); }

  Checkpoint snapshot() const;
  void save_checkpoint(const std::filesystem::path& path) const;

  /// Replaces the training state with a checkpoint taken under the same config.
  void restore(const Checkpoint& ckpt);
  void resume(const std::filesystem::path& path);

 private:
  LossKind loss_for_epoch(int epoch) const;
  double sample_loss(std::size_t row, LossKind kind, MlpGradients& grads) const;

  const LabeledDataset& train_;
  const LabeledDataset& test_;
  TrainConfig cfg_;
  const MlpParams* teacher_;
  WeightVector weights_;
  SubsetTags tags_;
  MlpParams params_;
  OptimizerState opt_;
  Rng rng_;
  int epoch_ = 0;
  MetricLog log_;
  std::function<void(const StepRecord&)> observer_;
};

struct TrainResult {
  MlpParams params;
  MetricLog log;
};

/// Phase one: plain cross-entropy on the long-tailed data. cfg.loss is forced to ce.
TrainResult train_teacher(const LabeledDataset& train, const LabeledDataset& test, TrainConfig cfg);

/// Phase two: student against the frozen teacher with cfg.loss.
TrainResult train_student(const LabeledDataset& train, const LabeledDataset& test, const MlpParams& teacher,
                          const TrainConfig& cfg);

struct SweepRow {
  double temperature = 0.0;
  double accuracy = 0.0;
};

/// One full student run per temperature, same teacher and seeds; returns
/// final overall test accuracy per temperature in input order.
std::vector<SweepRow> temperature_sweep(const LabeledDataset& train, const LabeledDataset& test,
                                        const MlpParams& teacher, const TrainConfig& base_cfg,
                                        const std::vector<double>& temps);

/// CSV `temperature,accuracy`.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace bkd
