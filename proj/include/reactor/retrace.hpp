#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "reactor/categorical.hpp"
#include "reactor/mdp.hpp"

namespace reactor {

enum class TraceKind { retrace, tree_backup, importance_sampling };

struct TraceScheme {
  TraceKind kind = TraceKind::retrace;
  double lambda = 1.0;
};

/// c = lambda * min(1, pi/mu) for Retrace, lambda * pi for TB(lambda),
/// lambda * pi/mu for plain importance sampling. mu_prob must be positive.
double trace_coefficient(const TraceScheme& scheme, double pi_prob, double mu_prob);

/// Corrected returns Q(x_t, a_t) + Delta Q(x_t, a_t) for every position t of
/// the sequence. The sum over future TD errors is truncated at the sequence
/// end, where the last step bootstraps fully on E_pi Q(x_N, .). Per-step
/// discounts from the record replace the constant gamma.
std::vector<double> retrace_target_expected(const QTable& q, const SequenceRecord& seq,
                                            const TabularPolicy& pi, const TraceScheme& scheme);

/// Mixture weights alpha_{n,a} that rewrite the Retrace target at position t
/// as a combination of n-step backups, n = 1..horizon with horizon = N - t.
class AlphaCoefficients {
 public:
  AlphaCoefficients(std::size_t horizon, std::size_t n_actions)
      : horizon_(horizon), n_actions_(n_actions), values_(horizon * n_actions, 0.0) {}

  std::size_t horizon() const { return horizon_; }
  std::size_t n_actions() const { return n_actions_; }

  /// n is 1-based, matching the n-step backup it weights.
  double operator()(std::size_t n, ActionId a) const { return values_[(n - 1) * n_actions_ + a]; }
  double& operator()(std::size_t n, ActionId a) { return values_[(n - 1) * n_actions_ + a]; }
  double sum() const;

 private:
  std::size_t horizon_;
  std::size_t n_actions_;
  std::vector<double> values_;
};

/// alpha_{n,a} = (c_{t+1} ... c_{t+n-1}) (pi(a|x_{t+n}) - 1{a = a_{t+n}} c_{t+n}),
/// with c_{t+horizon} taken as 0 so the final row bootstraps fully.
AlphaCoefficients alpha_coefficients(const SequenceRecord& seq, const TabularPolicy& pi,
                                     const TraceScheme& scheme, std::size_t t);

/// n-step projected backup of q(x_{t+n}, a): atoms shifted to
/// sum_{s<t+n} Gamma_{t,s} r_s + Gamma_{t,t+n} z_j and projected with h.
SignedTarget nstep_dist_backup(const DistTable& q_dists, const SequenceRecord& seq, std::size_t t,
                               std::size_t n, ActionId a);

/// Distributional Retrace target at position t: the alpha-weighted mixture of
/// projected n-step backups, using q(x_{t+n}, a) for the alpha_{n,a} term.
SignedTarget distributional_retrace_target(const DistTable& q_dists, const SequenceRecord& seq,
                                           const TabularPolicy& pi, const TraceScheme& scheme,
                                           std::size_t t);

/// Targets for every position of the sequence.
std::vector<SignedTarget> distributional_retrace_targets(const DistTable& q_dists, const SequenceRecord& seq,
                                                         const TabularPolicy& pi, const TraceScheme& scheme);

/// A learning target for one (state, action): either a scalar corrected return
/// or a signed distribution.
struct RetraceTarget {
  StateId state = 0;
  ActionId action = 0;
  std::variant<double, SignedTarget> value;
};

enum class PriorityKind { expected, distributional };

/// Mean over positions of |signal|: absolute TD errors for the expected kind,
/// total variations between target and current distribution for the
/// distributional kind. Throws on an empty sequence.
double sequence_priority(PriorityKind kind, std::span<const double> td_signals);

}  // namespace reactor
