#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bkd/data.hpp"
#include "bkd/pipeline.hpp"

namespace bkd::cli {

/// Bad config file or bad command line; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataKind { kSynthetic, kFile };

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every accepted key with its default, in echo order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` experiment description. `#` starts a comment.
struct ExperimentConfig {
  // dataset
  DataKind kind = DataKind::kSynthetic;
  ImbalanceProfile profile;
  std::size_t dim = 20;
  double separation = 0.0;
  std::size_t per_class_test = 100;
  std::uint64_t data_seed = 0;
  // model + training
  TrainConfig train;
  std::uint64_t student_seed = 0;
  // paths
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;

  /// Raw resolved values, defaults filled in.
  std::map<std::string, std::string> values;

  /// Training config for a role: the teacher always trains with ce and `seed`,
  /// the student uses `loss` and `student_seed`.
  TrainConfig for_teacher() const;
  TrainConfig for_student() const;

  /// One `key = value` line per key, in config_keys() order.
  std::string resolved_text() const;
};

/// Throws UsageError on unknown keys, malformed lines or invalid values.
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig default_config();

}  // namespace bkd::cli
