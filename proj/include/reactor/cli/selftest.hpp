#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reactor/agent.hpp"
#include "reactor/policy_gradient.hpp"
#include "reactor/random.hpp"

namespace reactor::cli {

// Numerical checks shared by the selftest command and the test suites.

/// A random policy-gradient problem: mixed-softmax pi, behavior mu, critic
/// estimates Q and true values Q^pi.
PgContext random_pg_instance(Rng& rng, std::size_t n_actions, double policy_mix = 0.01);

struct BiasMeasurement {
  Eigen::VectorXd empirical;    // sample mean of the estimator minus sum_a Q^pi(a) grad pi(a)
  Eigen::VectorXd std_error;    // per component
  Eigen::VectorXd closed_form;  // bias_beta_loo
  double max_z = 0.0;           // max |empirical - closed_form| / std_error
  double max_zero_z = 0.0;      // max |empirical| / std_error
};

/// Draws a ~ mu and R = Q^pi(a) + U(-noise, noise), `draws` times.
BiasMeasurement measure_beta_loo_bias(const PgContext& ctx, const BetaLooConfig& cfg, std::size_t draws, Rng& rng,
                                      double noise = 0.5);

/// ||g - g_fd|| / max(||g||, ||g_fd||) for the cross-entropy gradient of
/// random logits against a random signed target.
double kl_gradient_rel_error(std::uint64_t seed, std::size_t n_atoms = 11, double step = 1e-5);

/// Same ratio for the full learner surrogate on a 2-state MDP, comparing
/// surrogate_gradient against central differences of surrogate_loss over
/// every parameter.
double surrogate_gradient_rel_error(const TrainerConfig& cfg, std::uint64_t seed, double step = 1e-5);

/// Random insert/erase/set_priority script on a ContextualPriorityTree with a
/// full audit every `audit_every` operations. Throws std::logic_error on the
/// first violation.
void cpt_random_script(std::size_t ops, std::uint64_t seed, std::size_t audit_every = 1);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  /// Flips the sign of the sampled-action correction in the beta-LOO suite.
  bool fault_flip_correction = false;
};

std::vector<SuiteResult> run_selftest_suites(const SelftestOptions& options);

/// Prints one line per suite; exit 0 iff all pass.
int run_selftest(const SelftestOptions& options, std::ostream& out);

}  // namespace reactor::cli
