#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <vector>

#include "reactor/categorical.hpp"
#include "reactor/mdp.hpp"
#include "reactor/policy_gradient.hpp"
#include "reactor/random.hpp"
#include "reactor/replay.hpp"
#include "reactor/retrace.hpp"

namespace reactor {

struct GridConfig {
  double v_min = -1.0;
  double v_max = 1.0;
  std::size_t n_atoms = 51;

  SupportGrid make() const { return SupportGrid(v_min, v_max, n_atoms); }
};

enum class PgEstimator { beta_loo, tislr };
enum class CriticTarget { distributional, expected };
enum class Schedule { strict, free_running };

struct TrainerConfig {
  std::size_t sequence_length = 33;
  std::size_t batch_size = 4;
  std::size_t target_update_period = 1000;
  std::size_t actor_steps_per_learn = 4;
  double learning_rate = 5e-5;
  double policy_mix = 0.01;
  double entropy_coefficient = 0.01;
  PgEstimator pg_estimator = PgEstimator::beta_loo;
  BetaLooConfig beta_loo = BetaLooConfig::constant(1.0);
  double tislr_c = 1.0;
  TraceScheme trace{TraceKind::retrace, 1.0};
  GridConfig grid;
  std::size_t workers = 1;

  // Ablation switches.
  CriticTarget critic_target = CriticTarget::distributional;
  bool prioritized = true;

  // Replay (sequence_length above is authoritative for the buffer too).
  std::size_t replay_capacity = 100000;
  double epsilon_sample = 0.01;
  double priority_exponent = 1.0;
  std::size_t replay_stride = 1;

  // Optimizer: adaptive moments with zero first-moment decay.
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Whether the replay importance weight also scales the policy term.
  bool weight_policy_gradient = true;
  Schedule schedule = Schedule::strict;
  bool deterministic = true;
  std::size_t metrics_interval = 1000;

  void validate() const;
  ReplayConfig replay_config() const;
};

/// Tabular actor and dueling categorical critic parameters.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(std::size_t n_states, std::size_t n_actions, std::size_t n_atoms);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_atoms() const { return n_atoms_; }
  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  std::vector<double>& policy_logits() { return policy_logits_; }
  const std::vector<double>& policy_logits() const { return policy_logits_; }
  std::vector<double>& state_logits() { return state_logits_; }
  const std::vector<double>& state_logits() const { return state_logits_; }
  std::vector<double>& adv_logits() { return adv_logits_; }
  const std::vector<double>& adv_logits() const { return adv_logits_; }

  std::span<const double> policy_row(StateId s) const {
    return {policy_logits_.data() + s * n_actions_, n_actions_};
  }
  std::size_t state_index(StateId s, std::size_t atom) const { return s * n_atoms_ + atom; }
  std::size_t adv_index(StateId s, ActionId a, std::size_t atom) const {
    return (s * n_actions_ + a) * n_atoms_ + atom;
  }

  /// (1 - eps) softmax(theta(s, .)) + eps / |A|.
  std::vector<double> policy_probs(StateId s, double policy_mix) const;
  TabularPolicy policy(double policy_mix) const;

  /// l_i(x) + l_i(x, a) - mean_b l_i(x, b).
  std::vector<double> critic_logits(StateId s, ActionId a) const;
  CategoricalDist critic_dist(StateId s, ActionId a, const SupportGrid& grid) const;
  DistTable critic_table(const SupportGrid& grid) const;

  bool operator==(const ParamStore&) const = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::size_t n_atoms_ = 0;
  std::vector<double> policy_logits_;
  std::vector<double> state_logits_;
  std::vector<double> adv_logits_;
  std::uint64_t version_ = 0;
};

/// Additive update to every ParamStore table (dense, same layout).
struct Delta {
  std::vector<double> policy_logits;
  std::vector<double> state_logits;
  std::vector<double> adv_logits;
  std::uint64_t source_version = 0;

  static Delta zeros_like(const ParamStore& store);
  Delta& operator+=(const Delta& other);
};

/// Elementwise addition and a version bump. Throws std::invalid_argument on shape mismatch.
void apply_delta(ParamStore& store, const Delta& delta);

/// Copies `store` into `target` every target_update_period learner steps.
/// Returns true when a copy happened.
bool maybe_update_target(const ParamStore& store, ParamStore& target, std::size_t step, const TrainerConfig& cfg);

/// Parameter store shared between workers: consistent snapshots, serialized
/// delta application.
class SharedParamStore {
 public:
  explicit SharedParamStore(ParamStore initial) : store_(std::move(initial)) {}

  ParamStore snapshot() const {
    std::lock_guard lock(mutex_);
    return store_;
  }
  void apply(const Delta& delta) {
    std::lock_guard lock(mutex_);
    apply_delta(store_, delta);
  }
  void replace(ParamStore store) {
    std::lock_guard lock(mutex_);
    store_ = std::move(store);
  }
  std::uint64_t version() const {
    std::lock_guard lock(mutex_);
    return store_.version();
  }

 private:
  mutable std::mutex mutex_;
  ParamStore store_;
};

/// Adaptive-moment optimizer with zero first-moment decay. Second moments and
/// bias corrections are tracked per parameter and only advance on entries
/// that receive a nonzero gradient.
class ZeroMomentumAdam {
 public:
  ZeroMomentumAdam(double beta2 = 0.999, double epsilon = 1e-8) : beta2_(beta2), epsilon_(epsilon) {}

  /// Returns the additive update -lr * g / (sqrt(v_hat) + eps).
  Delta step(const Delta& grad, double learning_rate);

 private:
  struct Moments {
    std::vector<double> v;
    std::vector<double> decay;  // beta2^(number of updates so far)
  };
  void step_table(const std::vector<double>& g, Moments& m, std::vector<double>& out, double lr);

  double beta2_;
  double epsilon_;
  Moments policy_, state_, adv_;
};

/// Frozen per-position constants of the learner's surrogate objective.
struct PositionSample {
  StateId state = 0;
  ActionId action = 0;
  double critic_weight = 0.0;  // importance weight / batch size
  double policy_weight = 0.0;
  std::vector<double> target;    // signed target over atoms
  double ret = 0.0;              // R(a): mean of the target
  std::vector<double> q_values;  // current critic means, all actions
  std::vector<double> pi_row;    // policy at sampling time
  std::vector<double> mu_row;    // full behavior distribution (TISLR only)
  double mu_taken = 1.0;
};

struct LearnerBatch {
  std::vector<PositionSample> positions;
  std::vector<SequenceKey> keys;
  std::vector<double> priorities;  // fresh sequence priorities, one per key
};

/// Evaluates Retrace targets with the target parameters and the current
/// policy, and freezes everything the surrogate treats as constant.
LearnerBatch build_learner_batch(const ParamStore& params, const ParamStore& target,
                                 const std::vector<SampleOut>& samples, const TrainerConfig& cfg);

struct SurrogateStats {
  double loss = 0.0;
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double entropy = 0.0;  // mean policy entropy over positions
};

/// Scalar objective whose gradient the learner follows:
///   sum_t w_c CE(q*_t, q(x_t, a_t)) + w_p (policy surrogate_t - c_ent H(pi(x_t))).
/// The beta-LOO surrogate is -(beta (R - Q(a)) pi(a) + sum_b Q(b) pi(b)); the
/// TISLR one replaces pi by log pi with the truncated coefficients.
SurrogateStats surrogate_loss(const ParamStore& params, const LearnerBatch& batch, const TrainerConfig& cfg);

/// Exact gradient of surrogate_loss with respect to every parameter.
Delta surrogate_gradient(const ParamStore& params, const LearnerBatch& batch, const TrainerConfig& cfg,
                         SurrogateStats* stats = nullptr);

struct LearnerStepResult {
  Delta delta;
  SurrogateStats stats;
  std::vector<SequenceKey> keys;
  std::vector<double> priorities;
};

/// Samples a batch, computes the surrogate gradient, writes fresh priorities
/// back to the buffer and returns the learning-rate-scaled update.
LearnerStepResult learner_step(const ParamStore& params, const ParamStore& target, ReplayBuffer& buffer,
                               const TrainerConfig& cfg, ZeroMomentumAdam& optimizer, Rng& rng);

/// Acting context: steps the environment with the latest policy and inserts
/// completed windows into its replay buffer without priority.
///
/// Every episode position starts one window (subject to the stride). Windows
/// that would run past a terminal state are padded with zero-discount
/// self-loops at the terminal state; windows cut by the time limit are
/// stored shorter.
class Actor {
 public:
  Actor(const Environment& env, std::size_t sequence_length, std::size_t stride = 1);

  struct StepInfo {
    bool episode_done = false;
    double episode_return = 0.0;
  };

  StepInfo step(const ParamStore& params, double policy_mix, ReplayBuffer& buffer, Rng& rng);

  StateId state() const { return state_; }
  std::size_t episodes() const { return episodes_; }

 private:
  struct Transition {
    StateId state;
    ActionId action;
    double reward;
    double discount;
    double behavior_prob;
    std::vector<double> behavior_row;
    StateId next_state;
  };

  void emit(std::size_t start, std::size_t length, bool pad, const ParamStore& params, double policy_mix,
            ReplayBuffer& buffer) const;
  void end_episode(bool terminal, const ParamStore& params, double policy_mix, ReplayBuffer& buffer);

  const Environment& env_;
  std::size_t sequence_length_;
  std::size_t stride_;
  StateId state_;
  std::size_t episode_steps_ = 0;
  double episode_return_ = 0.0;
  std::size_t episodes_ = 0;
  std::deque<Transition> history_;  // transitions of the current episode from history_offset_
  std::size_t history_offset_ = 0;
  std::size_t next_start_ = 0;
};

/// Deterministic argmax of the policy logits (lowest index on ties).
TabularPolicy greedy_actor_policy(const ParamStore& params);

}  // namespace reactor
