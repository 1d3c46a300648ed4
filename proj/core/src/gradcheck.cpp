#include "bkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "bkd/format.hpp"
#include "bkd/losses.hpp"
#include "bkd/mlp.hpp"

namespace bkd {

Vector central_difference(const std::function<double(std::span<const double>)>& f, std::span<const double> z,
                          double h) {
  Vector x(z.begin(), z.end());
  Vector g(z.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

bool GradcheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [&](const auto& c) { return c.max_abs_error <= tolerance; });
}

const GradcheckCase& GradcheckReport::worst() const {
  if (cases.empty()) throw std::logic_error("GradcheckReport::worst: no cases");
  return *std::max_element(cases.begin(), cases.end(),
                           [](const auto& a, const auto& b) { return a.max_abs_error < b.max_abs_error; });
}

namespace {

constexpr double kTemperatures[] = {1.0, 2.0, 4.0};

struct Instance {
  Vector z;
  Vector teacher_logits;
  Vector weights;
  std::size_t label = 0;
  double temperature = 1.0;
  double alpha = 0.5;
};

Vector uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  Vector v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

Instance draw_instance(Rng& rng) {
  Instance in;
  const auto c = 2 + static_cast<std::size_t>(rng.uniform_index(9));
  in.z = uniform_vector(rng, c, -3.0, 3.0);
  in.teacher_logits = uniform_vector(rng, c, -3.0, 3.0);
  in.weights = uniform_vector(rng, c, 0.05, 1.0);
  in.label = static_cast<std::size_t>(rng.uniform_index(c));
  in.temperature = kTemperatures[rng.uniform_index(3)];
  in.alpha = rng.uniform();
  return in;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void record(GradcheckCase& c, std::size_t trial, const Instance& in, double err) {
  ++c.trials;
  if (err > c.max_abs_error || c.trials == 1) {
    c.max_abs_error = std::max(c.max_abs_error, err);
    c.worst_trial = trial;
    c.worst_classes = in.z.size();
    c.worst_temperature = in.temperature;
  }
}

// Loss value and gradient for one of the four losses at a fixed instance.
LossResult eval_loss(int which, std::span<const double> z, const Instance& in) {
  const auto soft = TeacherSoftTargets::from_logits(in.teacher_logits, in.temperature);
  switch (which) {
    case 0: return ce_loss(z, in.label);
    case 1: return cb_loss(z, in.label, in.weights);
    case 2: return kd_loss(z, soft, in.label, KDConfig{in.alpha, in.temperature});
    default: return bkd_loss(z, soft, in.label, in.weights, BKDConfig{0.9999, in.temperature, WeightMode::kRaw});
  }
}

// Flat views over every parameter, in layer order: weights then bias.
std::vector<double*> parameter_slots(MlpParams& p) {
  std::vector<double*> out;
  for (auto& l : p.layers) {
    for (double& w : l.weights) out.push_back(&w);
    for (double& b : l.bias) out.push_back(&b);
  }
  return out;
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed, double h, double tolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  const char* names[] = {"ce", "cb", "kd", "bkd", "cb_formula", "bkd_formula",
                         "mlp+ce", "mlp+cb", "mlp+kd", "mlp+bkd"};
  for (const char* n : names) report.cases.push_back({n});

  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const Instance in = draw_instance(rng);
    for (int which = 0; which < 4; ++which) {
      const auto analytic = eval_loss(which, in.z, in).grad_logits;
      const auto numeric =
          central_difference([&](std::span<const double> z) { return eval_loss(which, z, in).value; }, in.z, h);
      record(report.cases[static_cast<std::size_t>(which)], t, in, max_abs_diff(analytic, numeric));
    }

    const auto cb_numeric =
        central_difference([&](std::span<const double> z) { return cb_loss(z, in.label, in.weights).value; }, in.z, h);
    record(report.cases[4], t, in, max_abs_diff(cb_grad_formula(in.z, in.label, in.weights), cb_numeric));

    // The closed-form distillation gradient is the gradient of
    // -sum_i t_i log softmax(z)_i with its own renormalized target t.
    const auto soft1 = TeacherSoftTargets::from_logits(in.teacher_logits, 1.0);
    Vector target(in.z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      target[i] = in.weights[i] * soft1.probs()[i] + (i == in.label ? 1.0 : 0.0);
      s += target[i];
    }
    for (double& v : target) v /= s;
    const auto bkd_numeric = central_difference(
        [&](std::span<const double> z) {
          const double lse = log_sum_exp(z);
          double loss = 0.0;
          for (std::size_t i = 0; i < z.size(); ++i) loss -= target[i] * (z[i] - lse);
          return loss;
        },
        in.z, h);
    Instance unit = in;
    unit.temperature = 1.0;
    record(report.cases[5], t, unit,
           max_abs_diff(bkd_grad_formula(in.z, soft1, in.label, in.weights), bkd_numeric));
  }

  // Composition with a 6-8-4 MLP; fewer trials since every parameter is perturbed.
  const std::size_t mlp_trials = std::min<std::size_t>(trials, 20);
  const std::size_t dims[] = {6, 8, 4};
  for (std::size_t t = 0; t < mlp_trials; ++t) {
    MlpParams params = init_mlp(dims, rng.next_u64());
    for (auto& l : params.layers) {
      for (double& b : l.bias) b = 0.2 * (2.0 * rng.uniform() - 1.0);
    }
    Vector x;
    // Stay clear of ReLU kinks so central differences are valid.
    for (;;) {
      x = uniform_vector(rng, dims[0], -2.0, 2.0);
      const auto fwd = forward(params, x);
      const auto& pre = fwd.cache.pre.front();
      if (std::all_of(pre.begin(), pre.end(), [](double v) { return std::abs(v) > 1e-3; })) break;
    }
    Instance in = draw_instance(rng);
    in.teacher_logits = uniform_vector(rng, dims[2], -3.0, 3.0);
    in.weights = uniform_vector(rng, dims[2], 0.05, 1.0);
    in.label = static_cast<std::size_t>(rng.uniform_index(dims[2]));

    for (int which = 0; which < 4; ++which) {
      const auto fwd = forward(params, x);
      const auto analytic = backward(params, fwd.cache, eval_loss(which, fwd.logits, in).grad_logits);
      MlpParams probe = params;
      auto slots = parameter_slots(probe);
      MlpParams analytic_copy = analytic;
      auto analytic_slots = parameter_slots(analytic_copy);
      double err = 0.0;
      for (std::size_t k = 0; k < slots.size(); ++k) {
        const double orig = *slots[k];
        *slots[k] = orig + h;
        const double up = eval_loss(which, forward_logits(probe, x), in).value;
        *slots[k] = orig - h;
        const double down = eval_loss(which, forward_logits(probe, x), in).value;
        *slots[k] = orig;
        err = std::max(err, std::abs((up - down) / (2.0 * h) - *analytic_slots[k]));
      }
      Instance shown = in;
      shown.z.assign(dims[2], 0.0);
      record(report.cases[6 + static_cast<std::size_t>(which)], t, shown, err);
    }
  }
  return report;
}

void print_gradcheck(std::ostream& os, const GradcheckReport& report) {
  os << "case,trials,max_abs_error,worst_trial,classes,temperature,status\n";
  for (const auto& c : report.cases) {
    os << c.name << ',' << c.trials << ',' << format_double(c.max_abs_error) << ',' << c.worst_trial << ','
       << c.worst_classes << ',' << format_double(c.worst_temperature) << ','
       << (c.max_abs_error <= report.tolerance ? "ok" : "FAIL") << '\n';
  }
}

}  // namespace bkd
