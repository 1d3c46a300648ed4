#include "bkd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "binary_io.hpp"
#include "bkd/format.hpp"
#include "file_util.hpp"

namespace bkd {

LossKind parse_loss_kind(std::string_view s) {
  if (s == "ce") return LossKind::kCe;
  if (s == "cb") return LossKind::kCb;
  if (s == "kd") return LossKind::kKd;
  if (s == "bkd") return LossKind::kBkd;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "' (expected ce|cb|kd|bkd)");
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kCe: return "ce";
    case LossKind::kCb: return "cb";
    case LossKind::kKd: return "kd";
    case LossKind::kBkd: return "bkd";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  schedule.validate();
  kd.validate();
  bkd.validate();
  if (defer_epoch) {
    if (loss != LossKind::kBkd) throw std::invalid_argument("defer_epoch is only valid with loss = bkd");
    if (*defer_epoch < 0 || *defer_epoch >= epochs) {
      throw std::invalid_argument("defer_epoch must lie in [0, epochs)");
    }
  }
  for (auto h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("hidden layer widths must be >= 1");
  }
  if (!(many_thresh > few_thresh && few_thresh > 0)) {
    throw std::invalid_argument("need many_thresh > few_thresh > 0");
  }
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "loss=" << to_string(loss) << ";epochs=" << epochs << ";batch_size=" << batch_size
     << ";schedule=" << to_string(schedule.kind) << ";lr=" << format_double(schedule.base_lr) << ";steps=";
  for (const auto& [e, f] : schedule.steps) os << e << ':' << format_double(f) << ',';
  os << ";momentum=" << format_double(momentum) << ";weight_decay=" << format_double(weight_decay)
     << ";seed=" << seed << ";hidden=";
  for (auto h : hidden_dims) os << h << ',';
  os << ";alpha=" << format_double(kd.alpha) << ";kd_t=" << format_double(kd.temperature)
     << ";beta=" << format_double(bkd.beta) << ";bkd_t=" << format_double(bkd.temperature)
     << ";weight_mode=" << to_string(bkd.weight_mode)
     << ";defer=" << (defer_epoch ? std::to_string(*defer_epoch) : std::string("none"))
     << ";shuffle=" << shuffle << ";many=" << many_thresh << ";few=" << few_thresh;
  return os.str();
}

std::uint64_t TrainConfig::digest() const { return detail::fnv1a(canonical()); }

void write_metric_log(std::ostream& os, const MetricLog& log) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  os << "epoch,loss,lr,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& r : log) {
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ','
       << format_double(r.acc_all) << ',' << opt(r.acc_many) << ',' << opt(r.acc_medium) << ','
       << opt(r.acc_few) << '\n';
  }
}

namespace {

constexpr std::string_view kCheckpointMagic = "ckpt-v1";

void put_opt(std::ostream& os, const std::optional<double>& v) {
  detail::put_u64(os, v ? 1 : 0);
  detail::put_f64(os, v.value_or(0.0));
}

std::optional<double> get_opt(std::istream& is) {
  const auto flag = detail::get_u64(is);
  const double v = detail::get_f64(is);
  if (flag > 1) throw std::runtime_error("bad optional flag");
  return flag ? std::optional<double>(v) : std::nullopt;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  detail::put_magic(os, kCheckpointMagic);
  detail::put_u64(os, ckpt.config_digest);
  detail::put_u64(os, static_cast<std::uint64_t>(ckpt.epoch));
  detail::put_u64(os, ckpt.rng_state);
  detail::put_f64(os, ckpt.optimizer.momentum);
  save_params(os, ckpt.params);
  save_params(os, ckpt.optimizer.velocity);
  detail::put_u64(os, ckpt.log.size());
  for (const auto& r : ckpt.log) {
    detail::put_u64(os, static_cast<std::uint64_t>(r.epoch));
    detail::put_f64(os, r.loss);
    detail::put_f64(os, r.lr);
    detail::put_f64(os, r.acc_all);
    put_opt(os, r.acc_many);
    put_opt(os, r.acc_medium);
    put_opt(os, r.acc_few);
  }
  std::string bytes = os.str();
  std::ostringstream tail(std::ios::binary);
  detail::put_u64(tail, detail::fnv1a(bytes));
  bytes += tail.str();
  detail::atomic_write(path, bytes);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  try {
    if (bytes.size() < kCheckpointMagic.size() + 8) throw std::runtime_error("file too short");
    const std::string_view body(bytes.data(), bytes.size() - 8);
    std::istringstream tail(bytes.substr(bytes.size() - 8), std::ios::binary);
    if (detail::get_u64(tail) != detail::fnv1a(body)) throw std::runtime_error("checksum mismatch (corrupt file)");

    std::istringstream is(std::string(body), std::ios::binary);
    detail::expect_magic(is, kCheckpointMagic);
    Checkpoint c;
    c.config_digest = detail::get_u64(is);
    c.epoch = static_cast<int>(detail::get_u64(is));
    c.rng_state = detail::get_u64(is);
    c.optimizer.momentum = detail::get_f64(is);
    c.params = load_params(is);
    c.optimizer.velocity = load_params(is);
    if (c.optimizer.velocity.dims() != c.params.dims()) {
      throw std::runtime_error("momentum buffers do not match parameter shapes");
    }
    const auto rows = detail::get_u64(is);
    if (rows > (1u << 24)) throw std::runtime_error("implausible metric row count");
    for (std::uint64_t i = 0; i < rows; ++i) {
      MetricRow r;
      r.epoch = static_cast<int>(detail::get_u64(is));
      r.loss = detail::get_f64(is);
      r.lr = detail::get_f64(is);
      r.acc_all = detail::get_f64(is);
      r.acc_many = get_opt(is);
      r.acc_medium = get_opt(is);
      r.acc_few = get_opt(is);
      c.log.push_back(r);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes");
    return c;
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "': " + e.what());
  }
}

MlpParams load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model file '" + path.string() + "'");
  char head[4] = {};
  is.read(head, 4);
  if (std::string_view(head, 4) == "ckpt") return read_checkpoint(path).params;
  return load_params(path);
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5DEECE66DULL;

void scale_and_decay(MlpGradients& g, const MlpParams& p, double scale, double decay) {
  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    auto& gl = g.layers[li];
    const auto& pl = p.layers[li];
    for (std::size_t i = 0; i < gl.weights.size(); ++i) gl.weights[i] = gl.weights[i] * scale + decay * pl.weights[i];
    for (std::size_t i = 0; i < gl.bias.size(); ++i) gl.bias[i] = gl.bias[i] * scale + decay * pl.bias[i];
  }
}

void add_into(MlpGradients& acc, const MlpGradients& g) {
  for (std::size_t li = 0; li < acc.layers.size(); ++li) {
    auto& a = acc.layers[li];
    const auto& b = g.layers[li];
    for (std::size_t i = 0; i < a.weights.size(); ++i) a.weights[i] += b.weights[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
}

void fill_zero(MlpGradients& g) {
  for (auto& l : g.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

std::vector<std::size_t> model_dims(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

Trainer::Trainer(const LabeledDataset& train, const LabeledDataset& test, TrainConfig cfg, const MlpParams* teacher)
    : train_(train), test_(test), cfg_(std::move(cfg)), teacher_(teacher), rng_(0) {
  cfg_.validate();
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  if (test.dim() != train.dim() || test.num_classes() != train.num_classes()) {
    throw std::invalid_argument("train and test sets disagree on dimension or class count");
  }
  const bool needs_teacher = cfg_.loss == LossKind::kKd || cfg_.loss == LossKind::kBkd;
  if (needs_teacher) {
    if (teacher_ == nullptr) throw std::invalid_argument("loss " + std::string(to_string(cfg_.loss)) + " needs a teacher");
    if (teacher_->layers.empty() || teacher_->output_dim() != train.num_classes() ||
        teacher_->input_dim() != train.dim()) {
      throw std::invalid_argument("teacher model does not match the data's dimension or class count");
    }
  }

  const auto counts = train.class_counts();
  tags_ = subset_tags(counts, cfg_.many_thresh, cfg_.few_thresh);
  if (cfg_.loss == LossKind::kCb || cfg_.loss == LossKind::kBkd) {
    weights_ = normalize_weights(effective_number_weights(counts, cfg_.bkd.beta), cfg_.bkd.weight_mode);
  }

  params_ = init_mlp(model_dims(train.dim(), cfg_.hidden_dims, train.num_classes()), cfg_.seed);
  opt_ = make_optimizer_state(params_, cfg_.momentum);
  rng_ = Rng(cfg_.seed ^ kShuffleStream);
}

LossKind Trainer::loss_for_epoch(int epoch) const {
  if (cfg_.defer_epoch && epoch < *cfg_.defer_epoch) return LossKind::kKd;
  return cfg_.loss;
}

double Trainer::sample_loss(std::size_t row, LossKind kind, MlpGradients& grads) const {
  const auto x = train_.row(row);
  const auto y = train_.label(row);
  const auto fwd = forward(params_, x);
  // Overflowed logits: report a non-finite loss and let run_epoch abort.
  for (double v : fwd.logits) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  }
  LossResult r;
  switch (kind) {
    case LossKind::kCe:
      r = ce_loss(fwd.logits, y);
      break;
    case LossKind::kCb:
      r = cb_loss(fwd.logits, y, weights_);
      break;
    case LossKind::kKd: {
      const auto soft = TeacherSoftTargets::from_logits(forward_logits(*teacher_, x), cfg_.kd.temperature);
      r = kd_loss(fwd.logits, soft, y, cfg_.kd);
      break;
    }
    case LossKind::kBkd: {
      const auto soft = TeacherSoftTargets::from_logits(forward_logits(*teacher_, x), cfg_.bkd.temperature);
      r = bkd_loss(fwd.logits, soft, y, weights_, cfg_.bkd);
      break;
    }
  }
  backward_accumulate(params_, fwd.cache, r.grad_logits, grads);
  return r.value;
}

void Trainer::run_epoch() {
  if (done()) return;
  const int epoch = epoch_;
  const double lr = lr_at(cfg_.schedule, epoch, cfg_.epochs);
  const LossKind kind = loss_for_epoch(epoch);

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg_.shuffle) shuffle_indices(order, rng_);

  MlpGradients grads = zeros_like(params_);
  std::vector<MlpGradients> per_sample;
  std::vector<double> losses;
  double epoch_loss = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    const std::size_t count = end - start;
    fill_zero(grads);
    double batch_loss = 0.0;
    if (cfg_.workers <= 1 || count < 2) {
      for (std::size_t i = start; i < end; ++i) batch_loss += sample_loss(order[i], kind, grads);
    } else {
      // Each sample owns its buffer; the reduction below runs in sample
      // order, so the sum is identical to the sequential path.
      per_sample.resize(count);
      losses.assign(count, 0.0);
      for (std::size_t s = 0; s < count; ++s) {
        if (per_sample[s].layers.empty()) {
          per_sample[s] = zeros_like(params_);
        } else {
          fill_zero(per_sample[s]);
        }
      }
      const std::size_t nw = std::min(cfg_.workers, count);
      std::vector<std::exception_ptr> errors(nw);
      {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < nw; ++w) {
          pool.emplace_back([&, w] {
            try {
              for (std::size_t s = w; s < count; s += nw) losses[s] = sample_loss(order[start + s], kind, per_sample[s]);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
      }
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      for (std::size_t s = 0; s < count; ++s) {
        batch_loss += losses[s];
        add_into(grads, per_sample[s]);
      }
    }
    if (!std::isfinite(batch_loss)) {
      throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index));
    }
    epoch_loss += batch_loss;
    const double inv = 1.0 / static_cast<double>(count);
    scale_and_decay(grads, params_, inv, cfg_.weight_decay);
    sgd_momentum_step(params_, grads, opt_, lr);
    if (observer_) observer_({epoch, batch_index, kind, batch_loss * inv});
  }

  MetricRow row;
  row.epoch = epoch;
  row.loss = epoch_loss / static_cast<double>(train_.size());
  row.lr = lr;
  const auto report = accuracy_report(predict(params_, test_), test_.labels(), tags_);
  row.acc_all = report.overall;
  row.acc_many = report.many;
  row.acc_medium = report.medium;
  row.acc_few = report.few;
  log_.push_back(row);
  ++epoch_;
}

void Trainer::run(std::optional<int> stop_epoch) {
  const int stop = std::min(stop_epoch.value_or(cfg_.epochs), cfg_.epochs);
  while (epoch_ < stop) run_epoch();
}

Checkpoint Trainer::snapshot() const {
  return {cfg_.digest(), epoch_, rng_.state(), params_, opt_, log_};
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { write_checkpoint(path, snapshot()); }

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_digest != cfg_.digest()) {
    throw std::runtime_error("checkpoint was written under a different training configuration");
  }
  if (ckpt.params.dims() != params_.dims()) throw std::runtime_error("checkpoint model shape does not match");
  if (ckpt.epoch < 0 || ckpt.epoch > cfg_.epochs || ckpt.log.size() != static_cast<std::size_t>(ckpt.epoch)) {
    throw std::runtime_error("checkpoint epoch index is inconsistent");
  }
  params_ = ckpt.params;
  opt_ = ckpt.optimizer;
  rng_.set_state(ckpt.rng_state);
  epoch_ = ckpt.epoch;
  log_ = ckpt.log;
}

void Trainer::resume(const std::filesystem::path& path) { restore(read_checkpoint(path)); }

TrainResult train_teacher(const LabeledDataset& train, const LabeledDataset& test, TrainConfig cfg) {
  cfg.loss = LossKind::kCe;
  cfg.defer_epoch.reset();
  Trainer t(train, test, std::move(cfg));
  t.run();
  return {t.params(), t.log()};
}

TrainResult train_student(const LabeledDataset& train, const LabeledDataset& test, const MlpParams& teacher,
                          const TrainConfig& cfg) {
  Trainer t(train, test, cfg, &teacher);
  t.run();
  return {t.params(), t.log()};
}

std::vector<SweepRow> temperature_sweep(const LabeledDataset& train, const LabeledDataset& test,
                                        const MlpParams& teacher, const TrainConfig& base_cfg,
                                        const std::vector<double>& temps) {
  if (temps.empty()) throw std::invalid_argument("temperature_sweep: no temperatures given");
  const SubsetTags tags = subset_tags(train.class_counts(), base_cfg.many_thresh, base_cfg.few_thresh);
  std::vector<SweepRow> rows;
  for (double t : temps) {
    TrainConfig cfg = base_cfg;
    cfg.kd.temperature = t;
    cfg.bkd.temperature = t;
    const auto result = train_student(train, test, teacher, cfg);
    const auto report = accuracy_report(predict(result.params, test), test.labels(), tags);
    rows.push_back({t, report.overall});
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "temperature,accuracy\n";
  for (const auto& r : rows) os << format_double(r.temperature) << ',' << format_double(r.accuracy) << '\n';
}

}  // namespace bkd
