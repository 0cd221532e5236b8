#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "reactor/mdp.hpp"

namespace reactor {

/// Single-state setting for the off-policy gradient estimators.
///
/// grad_pi(a, k) holds d pi(a) / d theta_k. q_est are the critic's current
/// estimates; q_true the exact Q^pi values (only known in tests).
struct PgContext {
  Eigen::VectorXd pi;
  Eigen::VectorXd mu;
  Eigen::VectorXd q_est;
  Eigen::VectorXd q_true;
  double baseline = 0.0;
  Eigen::MatrixXd grad_pi;

  std::size_t n_actions() const { return static_cast<std::size_t>(pi.size()); }
  /// Throws std::invalid_argument when shapes disagree or pi/mu are not distributions.
  void validate() const;
};

/// Policy (1 - eps) softmax(logits) + eps / |A| and its Jacobian
/// d pi(a) / d logit_b = (1 - eps) softmax_a (1{a=b} - softmax_b).
struct MixedSoftmax {
  Eigen::VectorXd probs;
  Eigen::MatrixXd jacobian;
};
MixedSoftmax mixed_softmax(std::span<const double> logits, double epsilon);

/// Builds a context for the tabular mixed-softmax parameterization, with the
/// baseline defaulting to sum_a pi(a) q_est(a).
PgContext make_softmax_context(std::span<const double> logits, double epsilon, Eigen::VectorXd mu,
                               Eigen::VectorXd q_est, Eigen::VectorXd q_true);

enum class QSource { estimate, truth };

/// beta either constant or truncated inverse behavior probability min(c, 1/mu(a)).
struct BetaLooConfig {
  enum class Mode { constant, truncated };
  Mode mode = Mode::constant;
  double value = 1.0;  // beta in constant mode, c (>= 1) in truncated mode
  /// Test hook: flips the sign of the sampled-action correction term.
  bool fault_flip_correction = false;

  static BetaLooConfig constant(double beta) { return {Mode::constant, beta, false}; }
  static BetaLooConfig truncated(double c);

  double beta(double mu_prob) const;
};

/// sum_a Q(a) grad pi(a).
Eigen::VectorXd g_exact(const PgContext& ctx, QSource source);

/// (pi(a)/mu(a)) (R - V) grad log pi(a) for the sampled action a.
Eigen::VectorXd estimate_islr(const PgContext& ctx, ActionId sampled, double ret);

/// beta (R - Q(a)) grad pi(a) + sum_b Q(b) grad pi(b).
Eigen::VectorXd estimate_beta_loo(const PgContext& ctx, const BetaLooConfig& cfg, ActionId sampled, double ret);

/// min(c, rho(a)) (R - V) grad log pi(a)
///   + sum_b (rho(b) - c)_+ mu(b) (Q(b) - V) grad log pi(b),
/// with Q taken from q_true or q_est per `correction_q`.
Eigen::VectorXd estimate_tislr(const PgContext& ctx, double c, ActionId sampled, double ret,
                               QSource correction_q = QSource::truth);

/// Closed-form bias of beta-LOO, sum_a (1 - mu(a) beta(a)) grad pi(a) (Q(a) - Q^pi(a)).
Eigen::VectorXd bias_beta_loo(const PgContext& ctx, const BetaLooConfig& cfg);

}  // namespace reactor
