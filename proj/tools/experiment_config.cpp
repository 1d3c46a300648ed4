#include "experiment_config.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include "bkd/format.hpp"

namespace bkd::cli {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"kind", "synthetic", "synthetic: generate a Gaussian mixture; file: read data_dir/{train,test}.csv"},
      {"C", "10", "number of classes"},
      {"d", "20", "feature dimension"},
      {"rho", "100", "imbalance ratio n_max / n_min"},
      {"n_max", "500", "training samples in the largest class"},
      {"profile", "exponential", "exponential | step"},
      {"separation", "3", "distance of each class mean from the origin"},
      {"per_class_test", "100", "balanced test samples per class"},
      {"data_seed", "7", "dataset generation / downsampling seed"},
      {"hidden_dims", "64,64", "hidden layer widths, comma separated"},
      {"loss", "bkd", "student loss: ce | cb | kd | bkd"},
      {"epochs", "100", "training epochs"},
      {"batch_size", "64", "minibatch size"},
      {"lr", "0.05", "base learning rate"},
      {"schedule", "cosine", "constant | step | cosine"},
      {"lr_steps", "", "step schedule as epoch:factor pairs, e.g. 160:0.01,180:0.01"},
      {"momentum", "0.9", "SGD momentum"},
      {"weight_decay", "0", "L2 penalty added to the gradient"},
      {"seed", "1", "teacher initialisation / shuffling seed"},
      {"student_seed", "2", "student initialisation / shuffling seed"},
      {"alpha", "0.5", "kd: weight of the cross-entropy term"},
      {"beta", "0.9999", "effective-number beta for class weights"},
      {"temperature", "2", "distillation temperature"},
      {"weight_mode", "raw", "raw | mean-one"},
      {"defer_epoch", "none", "bkd only: train with kd before this epoch"},
      {"shuffle", "true", "reshuffle the training set every epoch"},
      {"many_thresh", "100", "classes with more training samples are Many-shot"},
      {"few_thresh", "20", "classes with fewer training samples are Few-shot"},
      {"data_dir", "data", "dataset directory"},
      {"out_dir", "out", "output directory"},
  };
  return keys;
}

namespace {

std::string get(const std::map<std::string, std::string>& v, const std::string& k) { return v.at(k); }

double as_double(const std::map<std::string, std::string>& v, const std::string& k) {
  try {
    return parse_double(get(v, k));
  } catch (const std::invalid_argument& e) {
    throw UsageError("config key '" + k + "': " + e.what());
  }
}

std::int64_t as_int(const std::map<std::string, std::string>& v, const std::string& k, std::int64_t min) {
  std::int64_t x = 0;
  try {
    x = parse_int(get(v, k));
  } catch (const std::invalid_argument& e) {
    throw UsageError("config key '" + k + "': " + e.what());
  }
  if (x < min) throw UsageError("config key '" + k + "' must be >= " + std::to_string(min));
  return x;
}

bool as_bool(const std::map<std::string, std::string>& v, const std::string& k) {
  const auto s = get(v, k);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw UsageError("config key '" + k + "' expects true|false, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    const auto t = trim(cur);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

template <typename F>
auto checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

ExperimentConfig resolve(std::map<std::string, std::string> v) {
  ExperimentConfig c;
  const auto kind = get(v, "kind");
  if (kind == "synthetic") {
    c.kind = DataKind::kSynthetic;
  } else if (kind == "file") {
    c.kind = DataKind::kFile;
  } else {
    throw UsageError("config key 'kind' expects synthetic|file, got '" + kind + "'");
  }
  c.profile.num_classes = static_cast<std::size_t>(as_int(v, "C", 1));
  c.dim = static_cast<std::size_t>(as_int(v, "d", 2));
  c.profile.rho = as_double(v, "rho");
  if (!(c.profile.rho >= 1.0)) throw UsageError("config key 'rho' must be >= 1");
  c.profile.n_max = as_int(v, "n_max", 1);
  c.profile.kind = checked("profile", [&] { return parse_profile_kind(get(v, "profile")); });
  c.separation = as_double(v, "separation");
  if (!(c.separation >= 0.0)) throw UsageError("config key 'separation' must be >= 0");
  c.per_class_test = static_cast<std::size_t>(as_int(v, "per_class_test", 1));
  c.data_seed = static_cast<std::uint64_t>(as_int(v, "data_seed", 0));

  auto& t = c.train;
  t.hidden_dims.clear();
  for (const auto& h : split(get(v, "hidden_dims"), ',')) {
    const auto w = checked("hidden_dims", [&] { return parse_int(h); });
    if (w < 1) throw UsageError("config key 'hidden_dims' entries must be >= 1");
    t.hidden_dims.push_back(static_cast<std::size_t>(w));
  }
  t.loss = checked("loss", [&] { return parse_loss_kind(get(v, "loss")); });
  t.epochs = static_cast<int>(as_int(v, "epochs", 0));
  t.batch_size = static_cast<std::size_t>(as_int(v, "batch_size", 1));
  t.schedule.base_lr = as_double(v, "lr");
  t.schedule.kind = checked("schedule", [&] { return parse_schedule_kind(get(v, "schedule")); });
  for (const auto& step : split(get(v, "lr_steps"), ',')) {
    const auto colon = step.find(':');
    if (colon == std::string::npos) throw UsageError("config key 'lr_steps': expected epoch:factor, got '" + step + "'");
    const auto epoch = checked("lr_steps", [&] { return parse_int(step.substr(0, colon)); });
    const auto factor = checked("lr_steps", [&] { return parse_double(step.substr(colon + 1)); });
    t.schedule.steps.emplace_back(static_cast<int>(epoch), factor);
  }
  t.momentum = as_double(v, "momentum");
  t.weight_decay = as_double(v, "weight_decay");
  t.seed = static_cast<std::uint64_t>(as_int(v, "seed", 0));
  c.student_seed = static_cast<std::uint64_t>(as_int(v, "student_seed", 0));
  t.kd.alpha = as_double(v, "alpha");
  t.kd.temperature = as_double(v, "temperature");
  t.bkd.beta = as_double(v, "beta");
  t.bkd.temperature = t.kd.temperature;
  t.bkd.weight_mode = checked("weight_mode", [&] { return parse_weight_mode(get(v, "weight_mode")); });
  const auto defer = get(v, "defer_epoch");
  if (defer != "none" && !defer.empty()) t.defer_epoch = static_cast<int>(as_int(v, "defer_epoch", 0));
  t.shuffle = as_bool(v, "shuffle");
  t.many_thresh = as_int(v, "many_thresh", 1);
  t.few_thresh = as_int(v, "few_thresh", 1);
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw UsageError("config key 'momentum' must lie in [0, 1)");

  c.data_dir = get(v, "data_dir");
  c.out_dir = get(v, "out_dir");

  // Validate the student view here so config mistakes surface as usage errors.
  try {
    c.for_student().validate();
    c.for_teacher().validate();
    make_longtail_counts(c.profile);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  c.values = std::move(v);
  return c;
}

}  // namespace

TrainConfig ExperimentConfig::for_teacher() const {
  TrainConfig t = train;
  t.loss = LossKind::kCe;
  t.defer_epoch.reset();
  return t;
}

TrainConfig ExperimentConfig::for_student() const {
  TrainConfig t = train;
  t.seed = student_seed;
  return t;
}

std::string ExperimentConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k.name << " = " << values.at(k.name) << '\n';
  return os.str();
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  std::map<std::string, std::string> v;
  for (const auto& k : config_keys()) v[k.name] = k.default_value;
  std::map<std::string, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (!v.contains(key)) throw UsageError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (seen[key]++) throw UsageError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    v[key] = value;
  }
  return resolve(std::move(v));
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config '" + path.string() + "'");
  return parse_config(is, path.string());
}

ExperimentConfig default_config() {
  std::istringstream empty;
  return parse_config(empty);
}

}  // namespace bkd::cli
