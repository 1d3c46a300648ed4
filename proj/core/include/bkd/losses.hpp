#pragma once

#include <cstddef>
#include <span>

#include "bkd/core_math.hpp"
#include "bkd/weights.hpp"

namespace bkd {

/// Scalar loss plus its gradient with respect to the student logits.
struct LossResult {
  double value = 0.0;
  Vector grad_logits;
};

/// Teacher probabilities at a fixed temperature. Treated as constants by
/// every loss: nothing flows back into the teacher.
class TeacherSoftTargets {
 public:
  /// softmax(teacher_logits / T).
  static TeacherSoftTargets from_logits(std::span<const double> teacher_logits, double temperature);

  /// Wraps an existing probability vector; validates non-negativity and unit sum.
  static TeacherSoftTargets from_probs(Vector probs);

  const Vector& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

 private:
  explicit TeacherSoftTargets(Vector p) : probs_(std::move(p)) {}
  Vector probs_;
};

struct KDConfig {
  double alpha = 0.5;
  double temperature = 2.0;

  void validate() const;
};

struct BKDConfig {
  double beta = 0.9999;
  double temperature = 2.0;
  WeightMode weight_mode = WeightMode::kRaw;

  void validate() const;
};

/// Softmax cross-entropy: -log p_y, gradient p - onehot(y).
LossResult ce_loss(std::span<const double> z, std::size_t y);

/// Class-balanced cross-entropy: -w_y log p_y.
LossResult cb_loss(std::span<const double> z, std::size_t y, std::span<const double> w);

/// alpha * CE(z, y) + (1 - alpha) * T^2 * KL(p_teacher || softmax(z / T)).
/// The CE term is always at T = 1.
LossResult kd_loss(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                   const KDConfig& cfg);

/// Balanced distillation loss.
///
/// The teacher probabilities are reweighted by `w` and renormalized,
/// q_i = w_i p_i / sum_j w_j p_j, and the student at temperature T is pulled
/// toward q:
///
///   L = CE(z, y) + T^2 * sum_i q_i log(q_i / softmax(z / T)_i)
///   dL/dz = (softmax(z) - onehot(y)) + T * (softmax(z / T) - q)
///
/// `cfg.beta` and `cfg.weight_mode` describe how `w` was built; only
/// `cfg.temperature` is read here.
LossResult bkd_loss(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                    std::span<const double> w, const BKDConfig& cfg);

/// The weighted, renormalized teacher distribution q used by bkd_loss.
Vector balanced_teacher_target(const TeacherSoftTargets& teacher, std::span<const double> w);

/// T^2 * KL(q || softmax(z / T)) with q from balanced_teacher_target. Non-negative.
double balanced_distillation_term(std::span<const double> z, const TeacherSoftTargets& teacher,
                                  std::span<const double> w, double temperature);

/// KL(p || q) in nats with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Closed-form class-balanced gradient, written out case by case:
/// w_y (p_y - 1) at k = y, w_y p_k elsewhere. Diagnostic cross-check for cb_loss.
Vector cb_grad_formula(std::span<const double> z, std::size_t y, std::span<const double> w);

/// Closed-form balanced-distillation gradient at T = 1 under the
/// "target = w * p_teacher + onehot(y), renormalized" convention:
/// returns p_k - t_k with t_k = (w_k p_k + y_k) / sum_i (w_i p_i + y_i).
/// This is the gradient of -sum_i t_i log softmax(z)_i. Diagnostic only.
Vector bkd_grad_formula(std::span<const double> z, const TeacherSoftTargets& teacher, std::size_t y,
                        std::span<const double> w);

}  // namespace bkd
