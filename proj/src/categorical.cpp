#include "reactor/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reactor {

SupportGrid::SupportGrid(double v_min, double v_max, std::size_t n_atoms)
    : v_min_(v_min), v_max_(v_max), n_atoms_(n_atoms), spacing_(0.0) {
  if (!(v_min < v_max)) throw std::invalid_argument("SupportGrid: v_min must be < v_max");
  if (n_atoms < 2) throw std::invalid_argument("SupportGrid: n_atoms must be >= 2");
  if (!std::isfinite(v_min) || !std::isfinite(v_max))
    throw std::invalid_argument("SupportGrid: bounds must be finite");
  spacing_ = (v_max - v_min) / static_cast<double>(n_atoms - 1);
}

std::vector<double> SupportGrid::atoms() const {
  std::vector<double> out(n_atoms_);
  for (std::size_t i = 0; i < n_atoms_; ++i) out[i] = atom(i);
  return out;
}

namespace {

void check_sum(std::span<const double> w, const char* what) {
  double s = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite weight");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(what) + ": weights sum to " + std::to_string(s));
}

}  // namespace

CategoricalDist::CategoricalDist(SupportGrid grid, std::vector<double> probs)
    : grid_(grid), probs_(std::move(probs)) {
  if (probs_.size() != grid_.size()) throw std::invalid_argument("CategoricalDist: size mismatch");
  for (double p : probs_)
    if (p < 0.0) throw std::invalid_argument("CategoricalDist: negative probability");
  check_sum(probs_, "CategoricalDist");
}

CategoricalDist CategoricalDist::projected(double x, const SupportGrid& grid) {
  std::vector<double> probs(grid.size(), 0.0);
  accumulate_projection(x, 1.0, grid, probs);
  return CategoricalDist(grid, std::move(probs));
}

SignedTarget::SignedTarget(SupportGrid grid, std::vector<double> weights)
    : grid_(grid), weights_(std::move(weights)) {
  if (weights_.size() != grid_.size()) throw std::invalid_argument("SignedTarget: size mismatch");
  check_sum(weights_, "SignedTarget");
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

CategoricalDist softmax_dist(const SupportGrid& grid, const Logits& logits) {
  if (logits.values.size() != grid.size()) throw std::invalid_argument("softmax_dist: size mismatch");
  return CategoricalDist(grid, softmax(logits.values));
}

double mean(const SupportGrid& grid, std::span<const double> weights) {
  double m = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * grid.atom(i);
  return m;
}

KlLossAndGrad kl_loss_and_grad(std::span<const double> target, std::span<const double> logits) {
  if (target.size() != logits.size()) throw std::invalid_argument("kl_loss_and_grad: size mismatch");
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double log_z = m + std::log(z);

  KlLossAndGrad out;
  out.grad.resize(logits.size());
  double target_mass = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double log_q = logits[i] - log_z;
    out.loss -= target[i] * log_q;
    out.grad[i] = std::exp(log_q);
    target_mass += target[i];
  }
  // d/dl_j of -sum_i t_i (l_i - log Z) = -t_j + (sum_i t_i) q_j; the target
  // mass is 1 up to rounding, kept explicit so the gradient is exact.
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = target_mass * out.grad[i] - target[i];
  return out;
}

KlLossAndGrad kl_loss_and_grad(const SignedTarget& target, const Logits& logits) {
  return kl_loss_and_grad(target.weights(), logits.values);
}

double total_variation(const SupportGrid& grid_a, std::span<const double> a,
                       const SupportGrid& grid_b, std::span<const double> b) {
  if (!(grid_a == grid_b) || a.size() != b.size())
    throw std::invalid_argument("total_variation: grid mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return tv;
}

DistTable::DistTable(SupportGrid grid, std::size_t n_states, std::size_t n_actions)
    : grid_(grid),
      n_states_(n_states),
      n_actions_(n_actions),
      probs_(n_states * n_actions * grid.size(), 1.0 / static_cast<double>(grid.size())) {}

void DistTable::set(std::size_t s, std::size_t a, std::span<const double> probs) {
  if (probs.size() != grid_.size()) throw std::invalid_argument("DistTable::set: size mismatch");
  std::copy(probs.begin(), probs.end(), dist(s, a).begin());
}

}  // namespace reactor
