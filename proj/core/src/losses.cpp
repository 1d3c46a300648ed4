#include "bkd/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bkd {

namespace {

void check_label(std::span<const double> z, std::size_t y) {
  if (y >= z.size()) {
    throw std::invalid_argument("label " + std::to_string(y) + " out of range for " +
                                std::to_string(z.size()) + " classes");
  }
}

void check_sizes(std::span<const double> z, std::size_t other, const char* what) {
  if (z.size() != other) {
    throw std::invalid_argument(std::string(what) + " has length " + std::to_string(other) +
                                ", expected " + std::to_string(z.size()));
  }
}

void check_weights(std::span<const double> z, std::span<const double> w) {
  check_sizes(z, w.size(), "weight vector");
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("weights must be finite and >= 0");
  }
}

// log softmax(z / T)_i for all i.
Vector log_softmax(std::span<const double> z, double temperature) {
  Vector scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / temperature;
  const double lse = log_sum_exp(scaled);
  for (double& v : scaled) v -= lse;
  return scaled;
}

// sum_i target_i (log target_i - logp_i), skipping zero targets.
double kl_from_log(std::span<const double> target, std::span<const double> logp) {
  double kl = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] > 0.0) kl += target[i] * (std::log(target[i]) - logp[i]);
  }
  return kl;
}

}  // namespace

TeacherSoftTargets TeacherSoftTargets::from_logits(std::span<const double> teacher_logits,
                                                   double temperature) {
  return TeacherSoftTargets(softmax_with_temperature(teacher_logits, temperature));
}

TeacherSoftTargets TeacherSoftTargets::from_probs(Vector probs) {
  if (probs.empty()) throw std::invalid_argument("teacher probabilities: empty");
  double sum = 0.0;
  for (double v : probs) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("teacher probabilities must be finite and non-negative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("teacher probabilities must sum to 1");
  return TeacherSoftTargets(std::move(probs));
}

void KDConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("kd alpha must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("kd temperature must be positive");
  }
}

void BKDConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("bkd beta must lie in (0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("bkd temperature must be positive");
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

LossResult ce_loss(std::span<const double> z, std::size_t y) {
  check_label(z, y);
  LossResult r;
  r.value = log_sum_exp(z) - z[y];
  r.grad_logits = softmax_with_temperature(z, 1.0);
  r.grad_logits[y] -= 1.0;
  return r;
}

LossResult cb_loss(std::span<const double> z, std::size_t y, std::span<const double> w) {
  check_label(z, y);
  check_weights(z, w);
  LossResult r = ce_loss(z, y);
  const double wy = w[y];
  r.value *= wy;
  for (double& g : r.grad_logits) g *= wy;
  return r;
}

LossResult kd_loss(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                   const KDConfig& cfg) {
  cfg.validate();
  check_label(z, y);
  check_sizes(z, teacher.size(), "teacher distribution");
  const double t = cfg.temperature;
  const auto& target = teacher.probs();

  LossResult r = ce_loss(z, y);
  const Vector logp_t = log_softmax(z, t);
  const double kl = kl_from_log(target, logp_t);

  const double a = cfg.alpha;
  r.value = a * r.value + (1.0 - a) * t * t * kl;
  for (std::size_t k = 0; k < z.size(); ++k) {
    r.grad_logits[k] = a * r.grad_logits[k] + (1.0 - a) * t * (std::exp(logp_t[k]) - target[k]);
  }
  return r;
}

Vector balanced_teacher_target(const TeacherSoftTargets& teacher, std::span<const double> w) {
  const auto& p = teacher.probs();
  if (p.size() != w.size()) throw std::invalid_argument("weight vector length mismatch");
  Vector q(p.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = w[i] * p[i];
    mass += q[i];
  }
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw std::logic_error("balanced_teacher_target: weighted teacher mass is " + std::to_string(mass));
  }
  for (double& v : q) v /= mass;
  return q;
}

double balanced_distillation_term(std::span<const double> z, const TeacherSoftTargets& teacher,
                                  std::span<const double> w, double temperature) {
  check_sizes(z, teacher.size(), "teacher distribution");
  check_weights(z, w);
  const Vector q = balanced_teacher_target(teacher, w);
  return temperature * temperature * kl_from_log(q, log_softmax(z, temperature));
}

LossResult bkd_loss(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                    std::span<const double> w, const BKDConfig& cfg) {
  cfg.validate();
  check_label(z, y);
  check_sizes(z, teacher.size(), "teacher distribution");
  check_weights(z, w);
  const double t = cfg.temperature;
  const Vector q = balanced_teacher_target(teacher, w);
  const Vector logp_t = log_softmax(z, t);

  LossResult r = ce_loss(z, y);
  r.value += t * t * kl_from_log(q, logp_t);
  for (std::size_t k = 0; k < z.size(); ++k) {
    r.grad_logits[k] += t * (std::exp(logp_t[k]) - q[k]);
  }
  return r;
}

Vector cb_grad_formula(std::span<const double> z, std::size_t y, std::span<const double> w) {
  check_label(z, y);
  check_weights(z, w);
  const Vector p = softmax_with_temperature(z, 1.0);
  Vector g(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    g[k] = (k == y) ? w[y] * (p[y] - 1.0) : w[y] * p[k];
  }
  return g;
}

Vector bkd_grad_formula(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                        std::span<const double> w) {
  check_label(z, y);
  check_sizes(z, teacher.size(), "teacher distribution");
  check_weights(z, w);
  const auto& phat = teacher.probs();
  const Vector p = softmax_with_temperature(z, 1.0);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += w[i] * phat[i] + (i == y ? 1.0 : 0.0);
  Vector g(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double target = (w[k] * phat[k] + (k == y ? 1.0 : 0.0)) / s;
    g[k] = p[k] - target;
  }
  return g;
}

}  // namespace bkd
