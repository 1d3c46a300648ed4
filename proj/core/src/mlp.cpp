#include "bkd/mlp.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "file_util.hpp"

namespace bkd {

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().fan_in);
  for (const auto& l : layers) d.push_back(l.fan_out);
  return d;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    z.layers.push_back({l.fan_in, l.fan_out, Vector(l.weights.size(), 0.0), Vector(l.bias.size(), 0.0)});
  }
  return z;
}

MlpParams init_mlp(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need an input and an output dimension");
  for (auto d : dims) {
    if (d < 1) throw std::invalid_argument("init_mlp: layer dimensions must be >= 1");
  }
  Rng rng(seed);
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l{dims[i], dims[i + 1], Vector(dims[i] * dims[i + 1]), Vector(dims[i + 1], 0.0)};
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in));
    for (double& w : l.weights) w = (2.0 * rng.uniform() - 1.0) * bound;
    p.layers.push_back(std::move(l));
  }
  return p;
}

namespace {

void check_input(const MlpParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw std::invalid_argument("forward: model has no layers");
  if (x.size() != params.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " features, model expects " + std::to_string(params.input_dim()));
  }
}

void affine(const DenseLayer& l, std::span<const double> in, Vector& out) {
  out.assign(l.bias.begin(), l.bias.end());
  for (std::size_t o = 0; o < l.fan_out; ++o) {
    const double* row = l.weights.data() + o * l.fan_in;
    double acc = 0.0;
    for (std::size_t i = 0; i < l.fan_in; ++i) acc += row[i] * in[i];
    out[o] += acc;
  }
}

}  // namespace

ForwardResult forward(const MlpParams& params, std::span<const double> x) {
  check_input(params, x);
  ForwardResult r;
  auto& c = r.cache;
  c.input.assign(x.begin(), x.end());
  c.pre.resize(params.layers.size());
  c.post.resize(params.layers.size());
  std::span<const double> in = c.input;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    affine(params.layers[li], in, c.pre[li]);
    c.post[li] = c.pre[li];
    if (li + 1 < params.layers.size()) {
      for (double& v : c.post[li]) v = v > 0.0 ? v : 0.0;
    }
    in = c.post[li];
  }
  r.logits = c.post.back();
  return r;
}

Vector forward_logits(const MlpParams& params, std::span<const double> x) {
  check_input(params, x);
  Vector cur(x.begin(), x.end());
  Vector next;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    affine(params.layers[li], cur, next);
    if (li + 1 < params.layers.size()) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    std::swap(cur, next);
  }
  return cur;
}

void backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                         std::span<const double> grad_logits, MlpGradients& grads) {
  const auto n = params.layers.size();
  if (cache.pre.size() != n || cache.post.size() != n || grads.layers.size() != n) {
    throw std::invalid_argument("backward: cache or gradient buffer does not match the model");
  }
  if (grad_logits.size() != params.output_dim()) {
    throw std::invalid_argument("backward: gradient has length " + std::to_string(grad_logits.size()) +
                                ", model emits " + std::to_string(params.output_dim()) + " logits");
  }
  Vector delta(grad_logits.begin(), grad_logits.end());
  Vector prev_delta;
  for (std::size_t li = n; li-- > 0;) {
    const auto& l = params.layers[li];
    auto& g = grads.layers[li];
    if (g.weights.size() != l.weights.size() || g.bias.size() != l.bias.size()) {
      throw std::invalid_argument("backward: gradient buffer shape mismatch");
    }
    const Vector& in = li == 0 ? cache.input : cache.post[li - 1];
    for (std::size_t o = 0; o < l.fan_out; ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      double* grow = g.weights.data() + o * l.fan_in;
      for (std::size_t i = 0; i < l.fan_in; ++i) grow[i] += d * in[i];
    }
    if (li == 0) break;
    prev_delta.assign(l.fan_in, 0.0);
    for (std::size_t o = 0; o < l.fan_out; ++o) {
      const double d = delta[o];
      const double* row = l.weights.data() + o * l.fan_in;
      for (std::size_t i = 0; i < l.fan_in; ++i) prev_delta[i] += row[i] * d;
    }
    const Vector& pre = cache.pre[li - 1];
    for (std::size_t i = 0; i < l.fan_in; ++i) {
      if (!(pre[i] > 0.0)) prev_delta[i] = 0.0;
    }
    std::swap(delta, prev_delta);
  }
}

MlpGradients backward(const MlpParams& params, const ForwardCache& cache,
                      std::span<const double> grad_logits) {
  MlpGradients g = zeros_like(params);
  backward_accumulate(params, cache, grad_logits, g);
  return g;
}

OptimizerState make_optimizer_state(const MlpParams& params, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  return {momentum, zeros_like(params)};
}

void sgd_momentum_step(MlpParams& params, const MlpGradients& grads, OptimizerState& state, double lr) {
  if (grads.layers.size() != params.layers.size() || state.velocity.layers.size() != params.layers.size()) {
    throw std::invalid_argument("sgd_momentum_step: shape mismatch");
  }
  const double mu = state.momentum;
  auto update = [&](Vector& p, const Vector& g, Vector& v) {
    if (g.size() != p.size() || v.size() != p.size()) {
      throw std::invalid_argument("sgd_momentum_step: shape mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  };
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    update(params.layers[li].weights, grads.layers[li].weights, state.velocity.layers[li].weights);
    update(params.layers[li].bias, grads.layers[li].bias, state.velocity.layers[li].bias);
  }
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "step") return ScheduleKind::kStep;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule '" + std::string(s) + "' (expected constant|step|cosine)");
}

std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kStep: return "step";
    case ScheduleKind::kCosine: return "cosine";
  }
  return "?";
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("base learning rate must be positive");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0 && steps[i].first <= steps[i - 1].first) {
      throw std::invalid_argument("step schedule epochs must be strictly increasing");
    }
    if (!(steps[i].second > 0.0)) throw std::invalid_argument("step schedule factors must be positive");
  }
}

double lr_at(const LrSchedule& schedule, int epoch, int total_epochs) {
  if (epoch < 0 || epoch >= total_epochs) {
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(total_epochs) + ")");
  }
  switch (schedule.kind) {
    case ScheduleKind::kConstant:
      return schedule.base_lr;
    case ScheduleKind::kStep: {
      double lr = schedule.base_lr;
      for (const auto& [at, factor] : schedule.steps) {
        if (at <= epoch) lr *= factor;
      }
      return lr;
    }
    case ScheduleKind::kCosine:
      return schedule.base_lr * 0.5 *
             (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
  }
  return schedule.base_lr;
}

namespace {
constexpr std::string_view kParamsMagic = "mlp-v1";
}

void save_params(std::ostream& os, const MlpParams& params) {
  detail::put_magic(os, kParamsMagic);
  detail::put_u64(os, params.layers.size());
  for (const auto& l : params.layers) {
    detail::put_u64(os, l.fan_in);
    detail::put_u64(os, l.fan_out);
    for (double w : l.weights) detail::put_f64(os, w);
    for (double b : l.bias) detail::put_f64(os, b);
  }
}

MlpParams load_params(std::istream& is) {
  detail::expect_magic(is, kParamsMagic);
  const auto n = detail::get_u64(is);
  if (n == 0 || n > 1024) throw std::runtime_error("mlp-v1: implausible layer count " + std::to_string(n));
  MlpParams p;
  for (std::uint64_t li = 0; li < n; ++li) {
    DenseLayer l;
    l.fan_in = detail::get_u64(is);
    l.fan_out = detail::get_u64(is);
    if (l.fan_in == 0 || l.fan_out == 0 || l.fan_in > (1u << 24) || l.fan_out > (1u << 24)) {
      throw std::runtime_error("mlp-v1: implausible layer shape");
    }
    if (!p.layers.empty() && p.layers.back().fan_out != l.fan_in) {
      throw std::runtime_error("mlp-v1: layer dimensions do not chain");
    }
    l.weights.resize(l.fan_in * l.fan_out);
    l.bias.resize(l.fan_out);
    for (double& w : l.weights) w = detail::get_f64(is);
    for (double& b : l.bias) b = detail::get_f64(is);
    p.layers.push_back(std::move(l));
  }
  return p;
}

void save_params(const std::filesystem::path& path, const MlpParams& params) {
  std::ostringstream os(std::ios::binary);
  save_params(os, params);
  detail::atomic_write(path, os.str());
}

MlpParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open parameter file '" + path.string() + "'");
  try {
    return load_params(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("'" + path.string() + "': " + e.what());
  }
}

}  // namespace bkd
