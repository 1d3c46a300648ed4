#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "experiment_config.hpp"

namespace bkd::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

struct DataSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Synthesizes (kind = synthetic) or reads data_dir/{train,test}.csv (kind = file).
DataSplit load_data(const ExperimentConfig& cfg);

struct MakeDataArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
};

struct TrainArgs {
  std::filesystem::path config;
  std::string role = "teacher";
  std::optional<std::filesystem::path> teacher;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> resume;
  int checkpoint_every = 0;
  std::size_t workers = 1;
};

struct EvalArgs {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::filesystem::path config;
  std::optional<std::filesystem::path> train_data;
  std::optional<std::filesystem::path> out;
};

struct GradcheckArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

struct SweepArgs {
  std::filesystem::path config;
  std::vector<double> temps;
  std::optional<std::filesystem::path> teacher;
  std::optional<std::filesystem::path> out;
  std::size_t workers = 1;
};

// Each command throws UsageError for bad input and returns an ExitCode otherwise.
int cmd_make_data(const MakeDataArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_gradcheck(const GradcheckArgs& args);
int cmd_sweep_temp(const SweepArgs& args);

/// Parses argv and dispatches; maps exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace bkd::cli
