#include "reactor/retrace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reactor {

double trace_coefficient(const TraceScheme& scheme, double pi_prob, double mu_prob) {
  if (!(mu_prob > 0.0)) throw std::invalid_argument("trace_coefficient: behavior probability must be > 0");
  if (pi_prob < 0.0) throw std::invalid_argument("trace_coefficient: negative target probability");
  switch (scheme.kind) {
    case TraceKind::retrace:
      return scheme.lambda * std::min(1.0, pi_prob / mu_prob);
    case TraceKind::tree_backup:
      return scheme.lambda * pi_prob;
    case TraceKind::importance_sampling:
      return scheme.lambda * pi_prob / mu_prob;
  }
  return 0.0;
}

namespace {

void check_sequence(const SequenceRecord& seq, const TabularPolicy& pi) {
  seq.validate();
  for (StateId s : seq.states)
    if (s >= pi.n_states()) throw std::invalid_argument("sequence state outside policy table");
  for (ActionId a : seq.actions)
    if (a >= pi.n_actions()) throw std::invalid_argument("sequence action outside policy table");
}

double expected_q(const QTable& q, const TabularPolicy& pi, StateId s) {
  double v = 0.0;
  for (ActionId a = 0; a < q.n_actions; ++a) v += pi.prob(s, a) * q(s, a);
  return v;
}

// c_s for each step s of the sequence.
std::vector<double> trace_coefficients(const SequenceRecord& seq, const TabularPolicy& pi,
                                       const TraceScheme& scheme) {
  std::vector<double> c(seq.length());
  for (std::size_t s = 0; s < seq.length(); ++s)
    c[s] = trace_coefficient(scheme, pi.prob(seq.states[s], seq.actions[s]), seq.behavior_probs[s]);
  return c;
}

}  // namespace

std::vector<double> retrace_target_expected(const QTable& q, const SequenceRecord& seq,
                                            const TabularPolicy& pi, const TraceScheme& scheme) {
  check_sequence(seq, pi);
  const std::size_t n = seq.length();
  const std::vector<double> c = trace_coefficients(seq, pi, scheme);
  std::vector<double> target(n);
  // Backward recursion:
  //   G_t = r_t + d_t (E_pi Q(x_{t+1}) + c_{t+1} (G_{t+1} - Q(x_{t+1}, a_{t+1}))),
  // with the correction dropped at the last step.
  for (std::size_t i = n; i-- > 0;) {
    double cont = expected_q(q, pi, seq.states[i + 1]);
    if (i + 1 < n) cont += c[i + 1] * (target[i + 1] - q(seq.states[i + 1], seq.actions[i + 1]));
    target[i] = seq.rewards[i] + seq.discounts[i] * cont;
  }
  return target;
}

double AlphaCoefficients::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

AlphaCoefficients alpha_coefficients(const SequenceRecord& seq, const TabularPolicy& pi,
                                     const TraceScheme& scheme, std::size_t t) {
  check_sequence(seq, pi);
  if (t >= seq.length()) throw std::invalid_argument("alpha_coefficients: position outside sequence");
  const std::size_t horizon = seq.length() - t;
  const std::vector<double> c = trace_coefficients(seq, pi, scheme);
  AlphaCoefficients alpha(horizon, pi.n_actions());
  double prod = 1.0;  // c_{t+1} ... c_{t+n-1}
  for (std::size_t n = 1; n <= horizon; ++n) {
    const std::size_t s = t + n;
    const StateId x = seq.states[s];
    const double c_next = n == horizon ? 0.0 : c[s];
    for (ActionId a = 0; a < pi.n_actions(); ++a) {
      const double indicator = (n < horizon && seq.actions[s] == a) ? c_next : 0.0;
      alpha(n, a) = prod * (pi.prob(x, a) - indicator);
    }
    prod *= c_next;
  }
  return alpha;
}

namespace {

// Accumulated discounted reward and discount product after n steps from t.
struct Shift {
  double reward = 0.0;
  double scale = 1.0;
};

Shift shift_after(const SequenceRecord& seq, std::size_t t, std::size_t n) {
  Shift sh;
  for (std::size_t s = t; s < t + n; ++s) {
    sh.reward += sh.scale * seq.rewards[s];
    sh.scale *= seq.discounts[s];
  }
  return sh;
}

void check_table(const DistTable& q_dists, const SequenceRecord& seq) {
  seq.validate();
  for (StateId s : seq.states)
    if (s >= q_dists.n_states()) throw std::invalid_argument("sequence state outside distribution table");
}

SignedTarget distributional_target_checked(const DistTable& q_dists, const SequenceRecord& seq,
                                           const TabularPolicy& pi, const std::vector<double>& c,
                                           std::size_t t) {
  const SupportGrid& grid = q_dists.grid();
  const std::size_t n_atoms = grid.size();
  const std::size_t horizon = seq.length() - t;
  const std::size_t n_actions = pi.n_actions();
  std::vector<double> out(n_atoms, 0.0);
  std::vector<double> mixture(n_atoms);

  Shift sh;
  double prod = 1.0;
  for (std::size_t n = 1; n <= horizon; ++n) {
    const std::size_t s = t + n;
    sh.reward += sh.scale * seq.rewards[s - 1];
    sh.scale *= seq.discounts[s - 1];
    if (sh.scale == 0.0) {
      // Every remaining backup collapses onto the same return; their alpha
      // weights telescope to the current product.
      accumulate_projection(sh.reward, prod, grid, out);
      break;
    }
    const StateId x = seq.states[s];
    const double c_next = n == horizon ? 0.0 : c[s];
    std::fill(mixture.begin(), mixture.end(), 0.0);
    for (ActionId a = 0; a < n_actions; ++a) {
      const double indicator = (n < horizon && seq.actions[s] == a) ? c_next : 0.0;
      const double alpha = prod * (pi.prob(x, a) - indicator);
      if (alpha == 0.0) continue;
      const auto q = q_dists.dist(x, a);
      for (std::size_t j = 0; j < n_atoms; ++j) mixture[j] += alpha * q[j];
    }
    for (std::size_t j = 0; j < n_atoms; ++j)
      if (mixture[j] != 0.0) accumulate_projection(sh.reward + sh.scale * grid.atom(j), mixture[j], grid, out);
    prod *= c_next;
    if (prod == 0.0) break;
  }
  return SignedTarget(grid, std::move(out));
}

}  // namespace

SignedTarget nstep_dist_backup(const DistTable& q_dists, const SequenceRecord& seq, std::size_t t,
                               std::size_t n, ActionId a) {
  check_table(q_dists, seq);
  if (n == 0 || t + n > seq.length()) throw std::invalid_argument("nstep_dist_backup: t + n outside sequence");
  if (a >= q_dists.n_actions()) throw std::invalid_argument("nstep_dist_backup: invalid action");
  const SupportGrid& grid = q_dists.grid();
  const Shift sh = shift_after(seq, t, n);
  const auto q = q_dists.dist(seq.states[t + n], a);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j)
    accumulate_projection(sh.reward + sh.scale * grid.atom(j), q[j], grid, out);
  return SignedTarget(grid, std::move(out));
}

SignedTarget distributional_retrace_target(const DistTable& q_dists, const SequenceRecord& seq,
                                           const TabularPolicy& pi, const TraceScheme& scheme,
                                           std::size_t t) {
  check_table(q_dists, seq);
  check_sequence(seq, pi);
  if (t >= seq.length()) throw std::invalid_argument("distributional_retrace_target: position outside sequence");
  return distributional_target_checked(q_dists, seq, pi, trace_coefficients(seq, pi, scheme), t);
}

std::vector<SignedTarget> distributional_retrace_targets(const DistTable& q_dists, const SequenceRecord& seq,
                                                         const TabularPolicy& pi, const TraceScheme& scheme) {
  check_table(q_dists, seq);
  check_sequence(seq, pi);
  const std::vector<double> c = trace_coefficients(seq, pi, scheme);
  std::vector<SignedTarget> out;
  out.reserve(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) out.push_back(distributional_target_checked(q_dists, seq, pi, c, t));
  return out;
}

double sequence_priority(PriorityKind /*kind*/, std::span<const double> td_signals) {
  if (td_signals.empty()) throw std::invalid_argument("sequence_priority: empty sequence");
  double total = 0.0;
  for (double v : td_signals) total += std::abs(v);
  return total / static_cast<double>(td_signals.size());
}

}  // namespace reactor
