#include "reactor/policy_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "reactor/categorical.hpp"

namespace reactor {

void PgContext::validate() const {
  const auto n = pi.size();
  if (n == 0 || mu.size() != n || q_est.size() != n || grad_pi.rows() != n)
    throw std::invalid_argument("PgContext: inconsistent action dimensions");
  if (q_true.size() != 0 && q_true.size() != n) throw std::invalid_argument("PgContext: q_true has wrong size");
  if (std::abs(pi.sum() - 1.0) > 1e-9 || std::abs(mu.sum() - 1.0) > 1e-9 || pi.minCoeff() < 0.0 ||
      mu.minCoeff() < 0.0)
    throw std::invalid_argument("PgContext: pi and mu must be distributions");
}

MixedSoftmax mixed_softmax(std::span<const double> logits, double epsilon) {
  const std::vector<double> sm = softmax(logits);
  const auto n = static_cast<Eigen::Index>(sm.size());
  MixedSoftmax out;
  out.probs.resize(n);
  out.jacobian.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    out.probs(a) = (1.0 - epsilon) * sm[a] + epsilon / static_cast<double>(n);
    for (Eigen::Index b = 0; b < n; ++b)
      out.jacobian(a, b) = (1.0 - epsilon) * sm[a] * ((a == b ? 1.0 : 0.0) - sm[b]);
  }
  return out;
}

PgContext make_softmax_context(std::span<const double> logits, double epsilon, Eigen::VectorXd mu,
                               Eigen::VectorXd q_est, Eigen::VectorXd q_true) {
  MixedSoftmax ms = mixed_softmax(logits, epsilon);
  PgContext ctx;
  ctx.pi = std::move(ms.probs);
  ctx.grad_pi = std::move(ms.jacobian);
  ctx.mu = std::move(mu);
  ctx.q_est = std::move(q_est);
  ctx.q_true = std::move(q_true);
  ctx.baseline = ctx.pi.dot(ctx.q_est);
  ctx.validate();
  return ctx;
}

BetaLooConfig BetaLooConfig::truncated(double c) {
  if (c < 1.0) throw std::invalid_argument("BetaLooConfig: truncation constant must be >= 1");
  return {Mode::truncated, c, false};
}

double BetaLooConfig::beta(double mu_prob) const {
  if (mode == Mode::constant) return value;
  return std::min(value, 1.0 / mu_prob);
}

namespace {

const Eigen::VectorXd& q_values(const PgContext& ctx, QSource source) {
  if (source == QSource::truth) {
    if (ctx.q_true.size() != ctx.pi.size()) throw std::invalid_argument("PgContext: q_true not provided");
    return ctx.q_true;
  }
  return ctx.q_est;
}

void check_sampled(const PgContext& ctx, ActionId a) {
  if (a >= ctx.n_actions()) throw std::invalid_argument("sampled action out of range");
  if (!(ctx.mu(static_cast<Eigen::Index>(a)) > 0.0))
    throw std::invalid_argument("sampled action has zero behavior probability");
}

}  // namespace

Eigen::VectorXd g_exact(const PgContext& ctx, QSource source) {
  return ctx.grad_pi.transpose() * q_values(ctx, source);
}

Eigen::VectorXd estimate_islr(const PgContext& ctx, ActionId sampled, double ret) {
  check_sampled(ctx, sampled);
  const auto a = static_cast<Eigen::Index>(sampled);
  const double ratio = ctx.pi(a) / ctx.mu(a);
  // grad log pi = grad pi / pi.
  return (ratio * (ret - ctx.baseline) / ctx.pi(a)) * ctx.grad_pi.row(a).transpose();
}

Eigen::VectorXd estimate_beta_loo(const PgContext& ctx, const BetaLooConfig& cfg, ActionId sampled, double ret) {
  check_sampled(ctx, sampled);
  const auto a = static_cast<Eigen::Index>(sampled);
  double correction = cfg.beta(ctx.mu(a)) * (ret - ctx.q_est(a));
  if (cfg.fault_flip_correction) correction = -correction;
  return correction * ctx.grad_pi.row(a).transpose() + g_exact(ctx, QSource::estimate);
}

Eigen::VectorXd estimate_tislr(const PgContext& ctx, double c, ActionId sampled, double ret, QSource correction_q) {
  check_sampled(ctx, sampled);
  const auto a = static_cast<Eigen::Index>(sampled);
  const Eigen::VectorXd& q = q_values(ctx, correction_q);
  Eigen::VectorXd g = (std::min(c, ctx.pi(a) / ctx.mu(a)) * (ret - ctx.baseline) / ctx.pi(a)) *
                      ctx.grad_pi.row(a).transpose();
  for (Eigen::Index b = 0; b < ctx.pi.size(); ++b) {
    if (!(ctx.mu(b) > 0.0)) throw std::invalid_argument("estimate_tislr: mu must be positive everywhere");
    const double excess = std::max(0.0, ctx.pi(b) / ctx.mu(b) - c);
    if (excess == 0.0) continue;
    g += (excess * ctx.mu(b) * (q(b) - ctx.baseline) / ctx.pi(b)) * ctx.grad_pi.row(b).transpose();
  }
  return g;
}

Eigen::VectorXd bias_beta_loo(const PgContext& ctx, const BetaLooConfig& cfg) {
  const Eigen::VectorXd& q_true = q_values(ctx, QSource::truth);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(ctx.grad_pi.cols());
  for (Eigen::Index a = 0; a < ctx.pi.size(); ++a) {
    const double factor = (1.0 - ctx.mu(a) * cfg.beta(ctx.mu(a))) * (ctx.q_est(a) - q_true(a));
    bias += factor * ctx.grad_pi.row(a).transpose();
  }
  return bias;
}

}  // namespace reactor
