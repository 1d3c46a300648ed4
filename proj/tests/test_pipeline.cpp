#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bkd/pipeline.hpp"
#include "support/oracles.hpp"

namespace bkd {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("bkd_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

TrainConfig small_config(LossKind loss, int epochs = 6) {
  TrainConfig c;
  c.loss = loss;
  c.epochs = epochs;
  c.batch_size = 16;
  c.schedule = {ScheduleKind::kCosine, 0.05, {}};
  c.hidden_dims = {12};
  c.seed = 3;
  c.many_thresh = 40;
  c.few_thresh = 10;
  return c;
}

struct Fixture {
  SyntheticSplit data = synth_gaussian_mixture({80, 30, 12, 5}, 6, 2.5, 21, 20);
  MlpParams teacher = train_teacher(data.train, data.test, small_config(LossKind::kCe, 8)).params;
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

double nearest_mean_accuracy(const LabeledDataset& train, const LabeledDataset& test) {
  std::vector<Vector> means(train.num_classes(), Vector(train.dim(), 0.0));
  const auto counts = train.class_counts();
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t k = 0; k < train.dim(); ++k) means[train.label(i)][k] += train.row(i)[k] / counts[train.label(i)];
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < means.size(); ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < test.dim(); ++k) d += (test.row(i)[k] - means[c][k]) * (test.row(i)[k] - means[c][k]);
      if (d < best_d) best_d = d, best = c;
    }
    hit += best == test.label(i);
  }
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

TEST(TrainTeacher, LearnsSeparableData) {
  const auto s = synth_gaussian_mixture({60, 60}, 4, 4.0, 5, 100);
  ASSERT_GE(nearest_mean_accuracy(s.train, s.test), 0.95);
  auto cfg = small_config(LossKind::kCe, 50);
  const auto r = train_teacher(s.train, s.test, cfg);
  ASSERT_EQ(r.log.size(), 50u);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
  EXPECT_GE(r.log.back().acc_all, 0.95);
}

TEST(TrainTeacher, ZeroEpochsReturnsInitialisation) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kCe, 0);
  const auto r = train_teacher(f.data.train, f.data.test, cfg);
  const std::size_t dims[] = {6, 12, 4};
  EXPECT_EQ(r.params, init_mlp(dims, cfg.seed));
  EXPECT_TRUE(r.log.empty());
}

TEST(TrainTeacher, Deterministic) {
  const auto& f = fixture();
  const auto a = train_teacher(f.data.train, f.data.test, small_config(LossKind::kCe));
  const auto b = train_teacher(f.data.train, f.data.test, small_config(LossKind::kCe));
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(a.params, b.params);
}

TEST(TrainTeacher, RejectsMismatchedSplits) {
  const auto a = synth_gaussian_mixture({10, 10}, 3, 1.0, 1, 2);
  const auto b = synth_gaussian_mixture({10, 10}, 4, 1.0, 1, 2);
  EXPECT_THROW(train_teacher(a.train, b.test, small_config(LossKind::kCe)), std::invalid_argument);
}

TEST(TrainStudent, KdWithAlphaOneMatchesTeacherTraining) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kKd);
  cfg.kd.alpha = 1.0;
  const auto student = train_student(f.data.train, f.data.test, f.teacher, cfg);
  const auto plain = train_teacher(f.data.train, f.data.test, cfg);
  EXPECT_EQ(student.params, plain.params);
  EXPECT_EQ(student.log, plain.log);
}

TEST(TrainStudent, KdAlphaOneAndCeGiveIdenticalStepLossesWithoutShuffle) {
  const auto& f = fixture();
  auto run = [&](LossKind loss) {
    auto cfg = small_config(loss);
    cfg.shuffle = false;
    cfg.kd.alpha = 1.0;
    Trainer t(f.data.train, f.data.test, cfg, &f.teacher);
    std::vector<double> steps;
    t.set_step_observer([&](const StepRecord& r) { steps.push_back(r.mean_loss); });
    t.run();
    return steps;
  };
  const auto kd = run(LossKind::kKd);
  EXPECT_FALSE(kd.empty());
  EXPECT_EQ(kd, run(LossKind::kCe));
}

TEST(TrainStudent, BalancedDataBkdStepLossIsCePlusScaledKl) {
  const auto s = synth_gaussian_mixture({20, 20, 20}, 5, 2.0, 8, 5);
  auto tcfg = small_config(LossKind::kCe, 3);
  const auto teacher = train_teacher(s.train, s.test, tcfg).params;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto cfg = small_config(LossKind::kBkd, 1);
    cfg.seed = seed;
    cfg.batch_size = s.train.size();
    Trainer t(s.train, s.test, cfg, &teacher);
    const auto w = t.class_weights();
    for (double v : w) EXPECT_EQ(v, w[0]);
    const MlpParams start = t.params();
    double observed = 0.0;
    t.set_step_observer([&](const StepRecord& r) { observed = r.mean_loss; });
    t.run();

    const double temp = cfg.bkd.temperature;
    double expected = 0.0;
    for (std::size_t i = 0; i < s.train.size(); ++i) {
      const auto z = test::ref_forward(start, {s.train.row(i).begin(), s.train.row(i).end()});
      const auto zt = test::ref_forward(teacher, {s.train.row(i).begin(), s.train.row(i).end()});
      const auto pt = test::softmax_extended(zt, temp);
      std::vector<double> phat(pt.begin(), pt.end());
      expected += test::ref_ce(z, s.train.label(i)) + temp * temp * test::ref_kl_target(phat, z, temp);
    }
    expected /= static_cast<double>(s.train.size());
    EXPECT_NEAR(observed, expected, 1e-10);
  }
}

TEST(TrainStudent, TeacherIsNotModified) {
  const auto& f = fixture();
  const MlpParams before = f.teacher;
  train_student(f.data.train, f.data.test, f.teacher, small_config(LossKind::kBkd));
  EXPECT_EQ(f.teacher, before);
}

TEST(TrainStudent, WeightsDependOnTrainingCountsOnly) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kBkd);
  Trainer t(f.data.train, f.data.test, cfg, &f.teacher);
  const auto expected = effective_number_weights(f.data.train.class_counts(), cfg.bkd.beta);
  EXPECT_EQ(t.class_weights(), expected);
  t.run(3);
  EXPECT_EQ(t.class_weights(), expected);

  cfg.bkd.weight_mode = WeightMode::kMeanOne;
  Trainer m(f.data.train, f.data.test, cfg, &f.teacher);
  EXPECT_EQ(m.class_weights(), normalize_weights(expected, WeightMode::kMeanOne));
}

TEST(TrainStudent, DeferredScheduleSwitchesLoss) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kBkd, 6);
  cfg.defer_epoch = 4;
  Trainer t(f.data.train, f.data.test, cfg, &f.teacher);
  std::vector<std::pair<int, LossKind>> seen;
  t.set_step_observer([&](const StepRecord& r) { seen.emplace_back(r.epoch, r.loss); });
  t.run();
  for (const auto& [epoch, loss] : seen) EXPECT_EQ(loss, epoch < 4 ? LossKind::kKd : LossKind::kBkd);
}

TEST(TrainStudent, ConfigValidation) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kKd, 6);
  cfg.defer_epoch = 2;
  EXPECT_THROW(train_student(f.data.train, f.data.test, f.teacher, cfg), std::invalid_argument);
  cfg = small_config(LossKind::kBkd, 6);
  cfg.defer_epoch = 6;
  EXPECT_THROW(train_student(f.data.train, f.data.test, f.teacher, cfg), std::invalid_argument);
  EXPECT_THROW(Trainer(f.data.train, f.data.test, small_config(LossKind::kBkd), nullptr), std::invalid_argument);
}

TEST(TrainStudent, TeacherClassCountMismatch) {
  const auto& f = fixture();
  const std::size_t dims[] = {6, 5};
  const auto wrong = init_mlp(dims, 1);
  EXPECT_THROW(train_student(f.data.train, f.data.test, wrong, small_config(LossKind::kKd)), std::invalid_argument);
}

TEST(TrainStudent, CeAndCbIgnoreTheTeacher) {
  const auto& f = fixture();
  const auto a = train_student(f.data.train, f.data.test, f.teacher, small_config(LossKind::kCb));
  const std::size_t dims[] = {6, 4};
  const auto b = train_student(f.data.train, f.data.test, init_mlp(dims, 77), small_config(LossKind::kCb));
  EXPECT_EQ(a.params, b.params);
}

TEST(Trainer, WorkerCountDoesNotChangeResults) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kBkd);
  const auto one = train_student(f.data.train, f.data.test, f.teacher, cfg);
  cfg.workers = 3;
  const auto three = train_student(f.data.train, f.data.test, f.teacher, cfg);
  EXPECT_EQ(one.params, three.params);
  EXPECT_EQ(one.log, three.log);
}

TEST(Trainer, DivergenceAborts) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kCe, 30);
  cfg.schedule = {ScheduleKind::kConstant, 1e6, {}};
  try {
    train_teacher(f.data.train, f.data.test, cfg);
    FAIL() << "expected divergence";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(Checkpoint, ResumeReproducesUninterruptedRun) {
  const auto& f = fixture();
  const auto dir = temp_dir("resume");
  auto cfg = small_config(LossKind::kBkd, 10);
  Trainer full(f.data.train, f.data.test, cfg, &f.teacher);
  full.run();
  full.save_checkpoint(dir / "full.ckpt");

  Trainer first(f.data.train, f.data.test, cfg, &f.teacher);
  first.run(5);
  first.save_checkpoint(dir / "half.ckpt");

  Trainer second(f.data.train, f.data.test, cfg, &f.teacher);
  second.resume(dir / "half.ckpt");
  EXPECT_EQ(second.epoch(), 5);
  second.run();
  EXPECT_EQ(second.params(), full.params());
  EXPECT_EQ(second.optimizer(), full.optimizer());
  EXPECT_EQ(second.log(), full.log());
  second.save_checkpoint(dir / "resumed.ckpt");
  EXPECT_EQ(slurp(dir / "resumed.ckpt"), slurp(dir / "full.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "resumed.ckpt.tmp"));
}

TEST(Checkpoint, RightAfterInit) {
  const auto& f = fixture();
  const auto dir = temp_dir("init");
  const auto cfg = small_config(LossKind::kCe);
  Trainer t(f.data.train, f.data.test, cfg);
  t.save_checkpoint(dir / "c.ckpt");
  const auto c = read_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(c.epoch, 0);
  EXPECT_EQ(c.params, t.params());
  EXPECT_TRUE(c.log.empty());
  EXPECT_EQ(load_model(dir / "c.ckpt"), t.params());
}

TEST(Checkpoint, Errors) {
  const auto& f = fixture();
  const auto dir = temp_dir("errors");
  auto cfg = small_config(LossKind::kCe);
  Trainer t(f.data.train, f.data.test, cfg);
  EXPECT_THROW(t.resume(dir / "missing.ckpt"), std::runtime_error);

  t.run(2);
  t.save_checkpoint(dir / "good.ckpt");
  auto bytes = slurp(dir / "good.ckpt");
  EXPECT_EQ(bytes.substr(0, 7), "ckpt-v1");
  bytes[bytes.size() / 2] ^= 0x5A;
  std::ofstream(dir / "corrupt.ckpt", std::ios::binary) << bytes;
  EXPECT_THROW(t.resume(dir / "corrupt.ckpt"), std::runtime_error);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << "ckpt";
  EXPECT_THROW(t.resume(dir / "short.ckpt"), std::runtime_error);

  auto other = cfg;
  other.seed = 99;
  Trainer u(f.data.train, f.data.test, other);
  EXPECT_THROW(u.resume(dir / "good.ckpt"), std::runtime_error);
}

TEST(MetricLog, CsvFormat) {
  MetricLog log{{0, 1.5, 0.1, 0.25, 0.5, std::nullopt, 0.0}};
  std::ostringstream os;
  write_metric_log(os, log);
  EXPECT_EQ(os.str(), "epoch,loss,lr,acc_all,acc_many,acc_medium,acc_few\n0,1.5,0.1,0.25,0.5,,0\n");
}

TEST(MetricLog, AllLossesFinite) {
  const auto& f = fixture();
  for (auto loss : {LossKind::kCe, LossKind::kCb, LossKind::kKd, LossKind::kBkd}) {
    const auto r = train_student(f.data.train, f.data.test, f.teacher, small_config(loss));
    ASSERT_EQ(r.log.size(), 6u);
    for (const auto& row : r.log) {
      EXPECT_TRUE(std::isfinite(row.loss));
      EXPECT_EQ(row.epoch, &row - r.log.data());
    }
  }
}

TEST(TemperatureSweep, SingleTemperatureMatchesStandaloneRun) {
  const auto& f = fixture();
  auto cfg = small_config(LossKind::kBkd, 4);
  const auto rows = temperature_sweep(f.data.train, f.data.test, f.teacher, cfg, {2.0});
  ASSERT_EQ(rows.size(), 1u);
  cfg.bkd.temperature = 2.0;
  cfg.kd.temperature = 2.0;
  const auto r = train_student(f.data.train, f.data.test, f.teacher, cfg);
  EXPECT_EQ(rows[0].accuracy, r.log.back().acc_all);
}

TEST(TemperatureSweep, RowsPerTemperatureAndDuplicatesAgree) {
  const auto& f = fixture();
  const auto rows = temperature_sweep(f.data.train, f.data.test, f.teacher, small_config(LossKind::kBkd, 3),
                                      {1.0, 2.0, 3.0, 4.0, 2.0});
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
  }
  EXPECT_EQ(rows[1].accuracy, rows[4].accuracy);
  std::ostringstream os;
  write_sweep_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "temperature,accuracy");
  EXPECT_THROW(temperature_sweep(f.data.train, f.data.test, f.teacher, small_config(LossKind::kBkd), {}),
               std::invalid_argument);
}

}  // namespace
}  // namespace bkd
