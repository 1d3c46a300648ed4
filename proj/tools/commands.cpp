#include "commands.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bkd/eval.hpp"
#include "bkd/format.hpp"
#include "bkd/gradcheck.hpp"

namespace bkd::cli {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory '" + dir.string() + "'");
  return dir;
}

std::string counts_csv(const ClassCounts& counts, const SubsetTags& tags) {
  std::ostringstream os;
  os << "class,count,subset\n";
  for (std::size_t i = 0; i < counts.size(); ++i) os << i << ',' << counts[i] << ',' << to_string(tags.tags[i]) << '\n';
  return os.str();
}

void write_eval_outputs(const fs::path& dir, const std::string& prefix, const MlpParams& params,
                        const LabeledDataset& test, const SubsetTags& tags) {
  const auto preds = predict(params, test);
  const auto report = accuracy_report(preds, test.labels(), tags);
  const auto cm = confusion_matrix(preds, test.labels(), test.num_classes());
  write_file(dir / (prefix + "report.json"), to_json(report));
  std::ostringstream counts, norm;
  write_confusion_csv(counts, cm);
  write_confusion_normalized_csv(norm, cm);
  write_file(dir / (prefix + "confusion.csv"), counts.str());
  write_file(dir / (prefix + "confusion_normalized.csv"), norm.str());
}

}  // namespace

DataSplit load_data(const ExperimentConfig& cfg) {
  if (cfg.kind == DataKind::kFile) {
    DataSplit s{read_dataset(cfg.data_dir / "train.csv"), read_dataset(cfg.data_dir / "test.csv")};
    if (s.train.num_classes() != cfg.profile.num_classes || s.train.dim() != cfg.dim) {
      throw UsageError("dataset in '" + cfg.data_dir.string() + "' does not match config C/d");
    }
    return s;
  }
  const auto counts = make_longtail_counts(cfg.profile);
  auto split = synth_gaussian_mixture(counts, cfg.dim, cfg.separation, cfg.data_seed, cfg.per_class_test);
  return {std::move(split.train), std::move(split.test)};
}

int cmd_make_data(const MakeDataArgs& args) {
  const auto cfg = load_config(args.config);
  const auto dir = prepare_dir(args.out.value_or(cfg.data_dir));
  const auto counts = make_longtail_counts(cfg.profile);
  DataSplit split;
  if (cfg.kind == DataKind::kFile) {
    // Downsample an existing (typically balanced) dataset to the profile.
    auto source = load_data(cfg);
    split.train = downsample_to_profile(source.train, counts, cfg.data_seed);
    split.test = std::move(source.test);
  } else {
    split = load_data(cfg);
  }
  write_dataset(dir / "train.csv", split.train);
  write_dataset(dir / "test.csv", split.test);
  const auto train_counts = split.train.class_counts();
  write_file(dir / "counts.csv",
             counts_csv(train_counts, subset_tags(train_counts, cfg.train.many_thresh, cfg.train.few_thresh)));
  write_file(dir / "config.resolved", cfg.resolved_text());
  std::cout << "wrote " << split.train.size() << " train / " << split.test.size() << " test rows to " << dir.string()
            << '\n';
  return kOk;
}

int cmd_train(const TrainArgs& args) {
  if (args.role != "teacher" && args.role != "student") {
    throw UsageError("--role must be teacher or student");
  }
  const bool student = args.role == "student";
  if (student && !args.teacher) throw UsageError("--role student requires --teacher <ckpt>");
  if (args.checkpoint_every < 0) throw UsageError("--checkpoint-every must be >= 0");
  const auto cfg = load_config(args.config);
  const auto dir = prepare_dir(args.out.value_or(cfg.out_dir));
  const auto data = load_data(cfg);

  TrainConfig tc = student ? cfg.for_student() : cfg.for_teacher();
  tc.workers = args.workers;
  std::optional<MlpParams> teacher;
  if (student) teacher = load_model(*args.teacher);

  Trainer trainer(data.train, data.test, tc, teacher ? &*teacher : nullptr);
  if (args.resume) trainer.resume(*args.resume);
  const auto ckpt_path = dir / (args.role + ".ckpt");
  while (!trainer.done()) {
    trainer.run_epoch();
    if (args.checkpoint_every > 0 && trainer.epoch() % args.checkpoint_every == 0) trainer.save_checkpoint(ckpt_path);
  }
  trainer.save_checkpoint(ckpt_path);

  std::ostringstream log;
  write_metric_log(log, trainer.log());
  write_file(dir / (args.role + "_metrics.csv"), log.str());
  write_eval_outputs(dir, args.role + "_", trainer.params(), data.test, trainer.tags());
  write_file(dir / "config.resolved", cfg.resolved_text());

  const auto report = accuracy_report(predict(trainer.params(), data.test), data.test.labels(), trainer.tags());
  std::cout << args.role << " (" << to_string(tc.loss) << "): overall " << format_double(report.overall);
  if (report.few) std::cout << ", few " << format_double(*report.few);
  std::cout << '\n';
  return kOk;
}

int cmd_eval(const EvalArgs& args) {
  const auto cfg = load_config(args.config);
  const auto params = load_model(args.ckpt);
  const auto test = read_dataset(args.data);
  const ClassCounts train_counts =
      args.train_data ? read_dataset(*args.train_data).class_counts() : load_data(cfg).train.class_counts();
  if (train_counts.size() != test.num_classes()) {
    throw UsageError("training counts and evaluation data disagree on the number of classes");
  }
  const auto tags = subset_tags(train_counts, cfg.train.many_thresh, cfg.train.few_thresh);
  const auto dir = prepare_dir(args.out.value_or(cfg.out_dir));
  write_eval_outputs(dir, "eval_", params, test, tags);
  std::cout << to_json(accuracy_report(predict(params, test), test.labels(), tags));
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& args) {
  if (args.trials == 0) throw UsageError("--trials must be positive");
  const auto report = run_gradcheck(args.trials, args.seed);
  print_gradcheck(std::cout, report);
  const auto& w = report.worst();
  std::cout << "worst: " << w.name << " error " << format_double(w.max_abs_error) << " (trial " << w.worst_trial
            << ", C=" << w.worst_classes << ", T=" << format_double(w.worst_temperature) << ")\n";
  return report.passed() ? kOk : kRuntime;
}

int cmd_sweep_temp(const SweepArgs& args) {
  if (args.temps.empty()) throw UsageError("--temps needs at least one value");
  for (double t : args.temps) {
    if (!(t > 0.0)) throw UsageError("temperatures must be positive");
  }
  const auto cfg = load_config(args.config);
  const auto dir = prepare_dir(args.out.value_or(cfg.out_dir));
  const auto data = load_data(cfg);
  MlpParams teacher;
  if (args.teacher) {
    teacher = load_model(*args.teacher);
  } else {
    auto tc = cfg.for_teacher();
    tc.workers = args.workers;
    teacher = train_teacher(data.train, data.test, tc).params;
  }
  auto sc = cfg.for_student();
  sc.workers = args.workers;
  const auto rows = temperature_sweep(data.train, data.test, teacher, sc, args.temps);
  std::ostringstream os;
  write_sweep_csv(os, rows);
  write_file(dir / "sweep.csv", os.str());
  std::cout << os.str();
  return kOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Balanced knowledge distillation toolkit for long-tailed classification"};
  app.require_subcommand(1);

  MakeDataArgs make_data;
  auto* mk = app.add_subcommand("make-data", "Generate long-tailed train/test files");
  mk->add_option("--config", make_data.config, "Experiment config")->required();
  mk->add_option("--out", make_data.out, "Output directory (default: data_dir)");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a teacher (ce) or a student (configured loss)");
  tr->add_option("--config", train.config, "Experiment config")->required();
  tr->add_option("--role", train.role, "teacher | student")->check(CLI::IsMember({"teacher", "student"}));
  tr->add_option("--teacher", train.teacher, "Teacher checkpoint (student role)");
  tr->add_option("--out", train.out, "Output directory (default: out_dir)");
  tr->add_option("--resume", train.resume, "Continue from a checkpoint");
  tr->add_option("--checkpoint-every", train.checkpoint_every, "Write a checkpoint every N epochs");
  tr->add_option("--workers", train.workers, "Intra-batch worker threads")->check(CLI::PositiveNumber);

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  ev->add_option("--ckpt", eval.ckpt, "Checkpoint or mlp-v1 parameter file")->required();
  ev->add_option("--data", eval.data, "longtail-csv evaluation file")->required();
  ev->add_option("--config", eval.config, "Experiment config")->required();
  ev->add_option("--train-data", eval.train_data, "Training file whose counts define the subsets");
  ev->add_option("--out", eval.out, "Output directory (default: out_dir)");

  GradcheckArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gc->add_option("--trials", grad.trials, "Random instances per loss");
  gc->add_option("--seed", grad.seed, "Seed");

  SweepArgs sweep;
  auto* sw = app.add_subcommand("sweep-temp", "Train one student per temperature");
  sw->add_option("--config", sweep.config, "Experiment config")->required();
  sw->add_option("--temps", sweep.temps, "Temperatures")->required()->expected(1, -1);
  sw->add_option("--teacher", sweep.teacher, "Teacher checkpoint (trained from config if absent)");
  sw->add_option("--out", sweep.out, "Output directory (default: out_dir)");
  sw->add_option("--workers", sweep.workers, "Intra-batch worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*mk) return cmd_make_data(make_data);
    if (*tr) return cmd_train(train);
    if (*ev) return cmd_eval(eval);
    if (*gc) return cmd_gradcheck(grad);
    if (*sw) return cmd_sweep_temp(sweep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace bkd::cli
