#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"

namespace bkd::cli {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("bkd_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int run(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"bkd"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

/// Small config rooted in `dir`; `overrides` replace or add keys.
fs::path write_config(const fs::path& dir, const std::map<std::string, std::string>& overrides = {}) {
  std::map<std::string, std::string> kv{
      {"C", "4"},           {"d", "5"},           {"rho", "10"},
      {"n_max", "60"},      {"per_class_test", "20"}, {"separation", "2.5"},
      {"hidden_dims", "8"}, {"epochs", "4"},      {"batch_size", "16"},
      {"many_thresh", "30"}, {"few_thresh", "10"},
      {"data_dir", (dir / "data").string()},      {"out_dir", (dir / "out").string()}};
  for (const auto& [k, v] : overrides) kv[k] = v;
  const auto path = dir / "exp.cfg";
  std::ofstream os(path);
  os << "# tiny experiment\n";
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  return path;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

TEST(Config, DefaultsAndResolvedEcho) {
  const auto c = default_config();
  EXPECT_EQ(c.profile.num_classes, 10u);
  EXPECT_EQ(c.profile.rho, 100.0);
  EXPECT_EQ(c.train.loss, LossKind::kBkd);
  EXPECT_EQ(c.train.bkd.beta, 0.9999);
  EXPECT_EQ(c.train.kd.temperature, 2.0);
  EXPECT_EQ(c.train.bkd.temperature, 2.0);
  EXPECT_FALSE(c.train.defer_epoch.has_value());

  const auto text = c.resolved_text();
  std::istringstream lines(text);
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    ASSERT_LT(i, config_keys().size());
    EXPECT_EQ(line.substr(0, line.find(" = ")), config_keys()[i].name);
    ++i;
  }
  EXPECT_EQ(i, config_keys().size());
  // The echo parses back to the same config.
  EXPECT_EQ(parse(text).resolved_text(), text);
}

TEST(Config, ValuesAndComments) {
  const auto c = parse("loss = kd  # comment\n\n  alpha=0.25\ntemperature = 4\ndefer_epoch = none\nhidden_dims = 3,5\n");
  EXPECT_EQ(c.train.loss, LossKind::kKd);
  EXPECT_EQ(c.train.kd.alpha, 0.25);
  EXPECT_EQ(c.train.kd.temperature, 4.0);
  EXPECT_EQ(c.train.bkd.temperature, 4.0);
  EXPECT_EQ(c.train.hidden_dims, (std::vector<std::size_t>{3, 5}));
  EXPECT_EQ(c.for_teacher().loss, LossKind::kCe);
  EXPECT_EQ(c.for_teacher().seed, 1u);
  EXPECT_EQ(c.for_student().seed, 2u);
}

TEST(Config, Rejections) {
  for (const char* bad : {"nope = 1\n", "loss = bkd\nloss = ce\n", "loss\n", "loss = xyz\n", "C = -3\n",
                          "beta = 1\n", "temperature = 0\n", "rho = 0.5\n", "alpha = 2\n", "shuffle = maybe\n",
                          "weight_mode = huge\n", "epochs = 4\ndefer_epoch = 9\n"}) {
    EXPECT_THROW(parse(bad), UsageError) << bad;
  }
  EXPECT_THROW(load_config("/nonexistent/exp.cfg"), UsageError);
}

TEST(Cli, UsageErrorsExitOne) {
  const auto dir = temp_dir("usage");
  const auto cfg = write_config(dir);
  EXPECT_EQ(run({}), kUsage);
  EXPECT_EQ(run({"frobnicate"}), kUsage);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--role", "student"}), kUsage);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--role", "coach"}), kUsage);
  EXPECT_EQ(run({"make-data", "--config", (dir / "missing.cfg").string()}), kUsage);
  EXPECT_EQ(run({"sweep-temp", "--config", cfg.string(), "--temps", "0"}), kUsage);
}

TEST(Cli, MakeDataCountsAndDeterminism) {
  const auto dir = temp_dir("make_data");
  const auto cfg = write_config(dir);
  ASSERT_EQ(run({"make-data", "--config", cfg.string()}), kOk);
  const auto train = read_dataset(dir / "data" / "train.csv");
  const auto counts = train.class_counts();
  EXPECT_EQ(counts.front() / counts.back(), 10);
  EXPECT_EQ(read_dataset(dir / "data" / "test.csv").class_counts(), ClassCounts(4, 20));
  EXPECT_EQ(slurp(dir / "data" / "counts.csv").substr(0, 19), "class,count,subset\n");
  EXPECT_TRUE(fs::exists(dir / "data" / "config.resolved"));

  ASSERT_EQ(run({"make-data", "--config", cfg.string(), "--out", (dir / "again").string()}), kOk);
  for (const char* f : {"train.csv", "test.csv", "counts.csv"}) {
    EXPECT_EQ(slurp(dir / "data" / f), slurp(dir / "again" / f)) << f;
  }

  const auto bal_dir = temp_dir("make_data_balanced");
  ASSERT_EQ(run({"make-data", "--config", write_config(bal_dir, {{"rho", "1"}}).string()}), kOk);
  EXPECT_EQ(read_dataset(bal_dir / "data" / "train.csv").class_counts(), ClassCounts(4, 60));
}

TEST(Cli, MakeDataDownsamplesAFile) {
  const auto src = temp_dir("downsample_src");
  ASSERT_EQ(run({"make-data", "--config", write_config(src, {{"rho", "1"}}).string()}), kOk);
  const auto dir = temp_dir("downsample");
  std::ofstream(dir / "exp.cfg") << "kind = file\nC = 4\nd = 5\nrho = 10\nn_max = 60\n"
                                 << "data_dir = " << (src / "data").string() << "\n";
  ASSERT_EQ(run({"make-data", "--config", (dir / "exp.cfg").string(), "--out", (dir / "lt").string()}), kOk);
  const auto counts = read_dataset(dir / "lt" / "train.csv").class_counts();
  EXPECT_EQ(counts.front(), 60);
  EXPECT_EQ(counts.back(), 6);
  EXPECT_EQ(slurp(dir / "lt" / "test.csv"), slurp(src / "data" / "test.csv"));
}

TEST(Cli, TeacherThenStudentEndToEnd) {
  const auto dir = temp_dir("e2e");
  const auto cfg = write_config(dir);
  const auto out = dir / "out";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--role", "teacher"}), kOk);
  for (const char* f : {"teacher.ckpt", "teacher_metrics.csv", "teacher_report.json", "teacher_confusion.csv",
                        "teacher_confusion_normalized.csv", "config.resolved"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--role", "student", "--teacher", (out / "teacher.ckpt").string()}),
            kOk);
  const auto report = nlohmann::json::parse(slurp(out / "student_report.json"));
  EXPECT_GE(report["overall"].get<double>(), 0.0);
  EXPECT_EQ(report["n"], 80);

  std::istringstream metrics(slurp(out / "student_metrics.csv"));
  std::string line;
  std::getline(metrics, line);
  EXPECT_EQ(line, "epoch,loss,lr,acc_all,acc_many,acc_medium,acc_few");
  int rows = 0;
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 4);

  // Same inputs, same bytes.
  const auto first = slurp(out / "student.ckpt");
  const auto first_metrics = slurp(out / "student_metrics.csv");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--role", "student", "--teacher", (out / "teacher.ckpt").string(),
                 "--workers", "2"}),
            kOk);
  EXPECT_EQ(slurp(out / "student.ckpt"), first);
  EXPECT_EQ(slurp(out / "student_metrics.csv"), first_metrics);
}

TEST(Cli, ResumeFromCheckpointMatches) {
  const auto dir = temp_dir("resume");
  const auto out = dir / "out";
  ASSERT_EQ(run({"train", "--config", write_config(dir).string()}), kOk);
  const auto full = slurp(out / "teacher.ckpt");

  const auto half_dir = temp_dir("resume_half");
  ASSERT_EQ(run({"train", "--config", write_config(half_dir, {{"epochs", "2"}}).string()}), kOk);
  // A two-epoch run has a different digest and must not be resumable under the four-epoch config.
  EXPECT_EQ(run({"train", "--config", write_config(dir).string(), "--resume",
                 (half_dir / "out" / "teacher.ckpt").string()}),
            kRuntime);

  ASSERT_EQ(run({"train", "--config", write_config(dir).string(), "--checkpoint-every", "1", "--out",
                 (dir / "periodic").string()}),
            kOk);
  EXPECT_EQ(slurp(dir / "periodic" / "teacher.ckpt"), full);
}

TEST(Cli, CbLossIsFinite) {
  const auto dir = temp_dir("cb");
  ASSERT_EQ(run({"train", "--config", write_config(dir, {{"loss", "cb"}}).string(), "--role", "student", "--teacher",
                 "/nonexistent.ckpt"}),
            kRuntime);
  ASSERT_EQ(run({"train", "--config", write_config(dir, {{"loss", "cb"}}).string()}), kOk);
  std::istringstream metrics(slurp(dir / "out" / "teacher_metrics.csv"));
  std::string line;
  std::getline(metrics, line);
  while (std::getline(metrics, line)) {
    const auto loss = std::stod(line.substr(line.find(',') + 1));
    EXPECT_TRUE(std::isfinite(loss));
  }
}

TEST(Cli, EvalOnTrainingDataOfMemorisedModel) {
  // Four well separated points, long training: the model fits them exactly.
  const auto dir = temp_dir("eval");
  const auto data = dir / "data";
  fs::create_directories(data);
  std::ofstream(data / "train.csv") << "longtail-csv v1, C=2, d=2\n0,1,0\n0,2,0\n1,0,1\n1,0,2\n";
  std::ofstream(data / "test.csv") << "longtail-csv v1, C=2, d=2\n0,1,0\n0,2,0\n1,0,1\n1,0,2\n";
  std::ofstream(dir / "exp.cfg") << "kind = file\nC = 2\nd = 2\nhidden_dims = 4\nepochs = 200\nbatch_size = 4\n"
                                 << "data_dir = " << data.string() << "\nout_dir = " << (dir / "out").string() << "\n";
  ASSERT_EQ(run({"train", "--config", (dir / "exp.cfg").string()}), kOk);
  ASSERT_EQ(run({"eval", "--ckpt", (dir / "out" / "teacher.ckpt").string(), "--data", (data / "test.csv").string(),
                 "--config", (dir / "exp.cfg").string()}),
            kOk);
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "eval_report.json"));
  EXPECT_EQ(report["overall"], 1.0);
  EXPECT_EQ(slurp(dir / "out" / "eval_confusion.csv"), "true,0,1\n0,2,0\n1,0,2\n");
  EXPECT_EQ(run({"eval", "--ckpt", (dir / "missing.ckpt").string(), "--data", (data / "test.csv").string(), "--config",
                 (dir / "exp.cfg").string()}),
            kRuntime);
}

TEST(Cli, Gradcheck) {
  EXPECT_EQ(run({"gradcheck", "--trials", "10", "--seed", "3"}), kOk);
  EXPECT_EQ(run({"gradcheck", "--trials", "0"}), kUsage);
}

TEST(Cli, SweepTemperatures) {
  const auto dir = temp_dir("sweep");
  const auto cfg = write_config(dir, {{"epochs", "2"}});
  ASSERT_EQ(run({"sweep-temp", "--config", cfg.string(), "--temps", "1", "2", "3", "4"}), kOk);
  std::istringstream csv(slurp(dir / "out" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "temperature,accuracy");
  int rows = 0;
  while (std::getline(csv, line)) {
    const double acc = std::stod(line.substr(line.find(',') + 1));
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

}  // namespace
}  // namespace bkd::cli
