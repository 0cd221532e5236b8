#include "reactor/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reactor {

void TrainerConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid trainer config: ") + what);
  };
  require(sequence_length > 0, "sequence_length must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(target_update_period > 0, "target_update_period must be positive");
  require(actor_steps_per_learn > 0, "actor_steps_per_learn must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(policy_mix > 0.0 && policy_mix < 1.0, "policy_mix must be in (0, 1)");
  require(entropy_coefficient >= 0.0, "entropy_coefficient must be >= 0");
  require(tislr_c > 0.0, "tislr_c must be positive");
  require(trace.lambda >= 0.0 && trace.lambda <= 1.0, "lambda must be in [0, 1]");
  require(workers > 0, "workers must be positive");
  require(metrics_interval > 0, "metrics_interval must be positive");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_epsilon > 0.0, "adam_epsilon must be positive");
  grid.make();
  replay_config().validate();
}

ReplayConfig TrainerConfig::replay_config() const {
  ReplayConfig rc;
  rc.capacity = replay_capacity;
  rc.sequence_length = sequence_length;
  rc.epsilon_sample = prioritized ? epsilon_sample : 1.0;
  rc.priority_exponent = priority_exponent;
  rc.is_exponent = 1.0;
  rc.stride = replay_stride;
  return rc;
}

ParamStore::ParamStore(std::size_t n_states, std::size_t n_actions, std::size_t n_atoms)
    : n_states_(n_states),
      n_actions_(n_actions),
      n_atoms_(n_atoms),
      policy_logits_(n_states * n_actions, 0.0),
      state_logits_(n_states * n_atoms, 0.0),
      adv_logits_(n_states * n_actions * n_atoms, 0.0) {}

std::vector<double> ParamStore::policy_probs(StateId s, double policy_mix) const {
  std::vector<double> p = softmax(policy_row(s));
  const double floor = policy_mix / static_cast<double>(n_actions_);
  for (double& v : p) v = (1.0 - policy_mix) * v + floor;
  return p;
}

TabularPolicy ParamStore::policy(double policy_mix) const {
  std::vector<double> probs;
  probs.reserve(n_states_ * n_actions_);
  for (StateId s = 0; s < n_states_; ++s) {
    auto row = policy_probs(s, policy_mix);
    // Absorb rounding so rows pass the 1e-12 normalization check.
    double total = 0.0;
    for (double v : row) total += v;
    for (double& v : row) v /= total;
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return TabularPolicy(n_states_, n_actions_, std::move(probs));
}

std::vector<double> ParamStore::critic_logits(StateId s, ActionId a) const {
  std::vector<double> out(n_atoms_);
  const double inv_actions = 1.0 / static_cast<double>(n_actions_);
  for (std::size_t i = 0; i < n_atoms_; ++i) {
    double mean_adv = 0.0;
    for (ActionId b = 0; b < n_actions_; ++b) mean_adv += adv_logits_[adv_index(s, b, i)];
    out[i] = state_logits_[state_index(s, i)] + adv_logits_[adv_index(s, a, i)] - inv_actions * mean_adv;
  }
  return out;
}

CategoricalDist ParamStore::critic_dist(StateId s, ActionId a, const SupportGrid& grid) const {
  if (grid.size() != n_atoms_) throw std::invalid_argument("critic_dist: grid size does not match the store");
  return CategoricalDist(grid, softmax(critic_logits(s, a)));
}

DistTable ParamStore::critic_table(const SupportGrid& grid) const {
  if (grid.size() != n_atoms_) throw std::invalid_argument("critic_table: grid size does not match the store");
  DistTable table(grid, n_states_, n_actions_);
  for (StateId s = 0; s < n_states_; ++s)
    for (ActionId a = 0; a < n_actions_; ++a) table.set(s, a, softmax(critic_logits(s, a)));
  return table;
}

Delta Delta::zeros_like(const ParamStore& store) {
  Delta d;
  d.policy_logits.assign(store.policy_logits().size(), 0.0);
  d.state_logits.assign(store.state_logits().size(), 0.0);
  d.adv_logits.assign(store.adv_logits().size(), 0.0);
  d.source_version = store.version();
  return d;
}

Delta& Delta::operator+=(const Delta& other) {
  if (other.policy_logits.size() != policy_logits.size() || other.state_logits.size() != state_logits.size() ||
      other.adv_logits.size() != adv_logits.size())
    throw std::invalid_argument("Delta: shape mismatch");
  for (std::size_t i = 0; i < policy_logits.size(); ++i) policy_logits[i] += other.policy_logits[i];
  for (std::size_t i = 0; i < state_logits.size(); ++i) state_logits[i] += other.state_logits[i];
  for (std::size_t i = 0; i < adv_logits.size(); ++i) adv_logits[i] += other.adv_logits[i];
  return *this;
}

void apply_delta(ParamStore& store, const Delta& delta) {
  if (delta.policy_logits.size() != store.policy_logits().size() ||
      delta.state_logits.size() != store.state_logits().size() ||
      delta.adv_logits.size() != store.adv_logits().size())
    throw std::invalid_argument("apply_delta: shape mismatch");
  auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  add(store.policy_logits(), delta.policy_logits);
  add(store.state_logits(), delta.state_logits);
  add(store.adv_logits(), delta.adv_logits);
  store.set_version(store.version() + 1);
}

bool maybe_update_target(const ParamStore& store, ParamStore& target, std::size_t step, const TrainerConfig& cfg) {
  if (step == 0 || step % cfg.target_update_period != 0) return false;
  target = store;
  return true;
}

void ZeroMomentumAdam::step_table(const std::vector<double>& g, Moments& m, std::vector<double>& out, double lr) {
  if (m.v.size() != g.size()) {
    m.v.assign(g.size(), 0.0);
    m.decay.assign(g.size(), 1.0);
  }
  out.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0) continue;
    m.v[i] = beta2_ * m.v[i] + (1.0 - beta2_) * g[i] * g[i];
    m.decay[i] *= beta2_;
    const double v_hat = m.v[i] / (1.0 - m.decay[i]);
    out[i] = -lr * g[i] / (std::sqrt(v_hat) + epsilon_);
  }
}

Delta ZeroMomentumAdam::step(const Delta& grad, double learning_rate) {
  Delta out;
  out.source_version = grad.source_version;
  step_table(grad.policy_logits, policy_, out.policy_logits, learning_rate);
  step_table(grad.state_logits, state_, out.state_logits, learning_rate);
  step_table(grad.adv_logits, adv_, out.adv_logits, learning_rate);
  return out;
}

LearnerBatch build_learner_batch(const ParamStore& params, const ParamStore& target,
                                 const std::vector<SampleOut>& samples, const TrainerConfig& cfg) {
  const SupportGrid grid = cfg.grid.make();
  const TabularPolicy pi = params.policy(cfg.policy_mix);
  const DistTable target_table = target.critic_table(grid);
  const DistTable current_table = params.critic_table(grid);
  const std::size_t n_actions = params.n_actions();
  const double inv_batch = 1.0 / static_cast<double>(std::max<std::size_t>(samples.size(), 1));

  QTable target_means;
  if (cfg.critic_target == CriticTarget::expected) {
    target_means = QTable(params.n_states(), n_actions);
    for (StateId s = 0; s < params.n_states(); ++s)
      for (ActionId a = 0; a < n_actions; ++a) target_means(s, a) = target_table.mean(s, a);
  }

  LearnerBatch batch;
  for (const SampleOut& sample : samples) {
    const SequenceRecord& seq = sample.record;
    std::vector<std::vector<double>> targets;
    std::vector<double> signals;
    if (cfg.critic_target == CriticTarget::distributional) {
      for (auto& t : distributional_retrace_targets(target_table, seq, pi, cfg.trace))
        targets.emplace_back(t.weights().begin(), t.weights().end());
    } else {
      for (double g : retrace_target_expected(target_means, seq, pi, cfg.trace)) {
        const auto proj = CategoricalDist::projected(g, grid);
        targets.emplace_back(proj.probs().begin(), proj.probs().end());
      }
    }

    for (std::size_t t = 0; t < seq.length(); ++t) {
      PositionSample p;
      p.state = seq.states[t];
      p.action = seq.actions[t];
      p.critic_weight = sample.weight * inv_batch;
      p.policy_weight = (cfg.weight_policy_gradient ? sample.weight : 1.0) * inv_batch;
      p.target = std::move(targets[t]);
      p.ret = mean(grid, p.target);
      p.q_values.resize(n_actions);
      for (ActionId b = 0; b < n_actions; ++b) p.q_values[b] = current_table.mean(p.state, b);
      const auto row = pi.row(p.state);
      p.pi_row.assign(row.begin(), row.end());
      p.mu_taken = seq.behavior_probs[t];
      if (!seq.behavior_rows.empty())
        p.mu_row.assign(seq.behavior_rows.begin() + static_cast<std::ptrdiff_t>(t * n_actions),
                        seq.behavior_rows.begin() + static_cast<std::ptrdiff_t>((t + 1) * n_actions));

      const auto current = current_table.dist(p.state, p.action);
      if (cfg.critic_target == CriticTarget::distributional)
        signals.push_back(total_variation(grid, p.target, grid, current));
      else
        signals.push_back(p.ret - p.q_values[p.action]);
      batch.positions.push_back(std::move(p));
    }
    batch.keys.push_back(sample.key);
    batch.priorities.push_back(sequence_priority(
        cfg.critic_target == CriticTarget::distributional ? PriorityKind::distributional : PriorityKind::expected,
        signals));
  }
  return batch;
}

namespace {

// Frozen coefficients multiplying pi(b) (beta-LOO) or log pi(b) (TISLR) in the
// policy surrogate, which is -sum_b coef_b f(pi(b)).
std::vector<double> policy_coefficients(const PositionSample& p, const TrainerConfig& cfg) {
  const std::size_t n = p.q_values.size();
  std::vector<double> coef(n, 0.0);
  if (cfg.pg_estimator == PgEstimator::beta_loo) {
    for (std::size_t b = 0; b < n; ++b) coef[b] = p.q_values[b];
    double correction = cfg.beta_loo.beta(p.mu_taken) * (p.ret - p.q_values[p.action]);
    if (cfg.beta_loo.fault_flip_correction) correction = -correction;
    coef[p.action] += correction;
    return coef;
  }
  if (p.mu_row.size() != n) throw std::invalid_argument("TISLR needs the full behavior distribution");
  double v = 0.0;
  for (std::size_t b = 0; b < n; ++b) v += p.pi_row[b] * p.q_values[b];
  coef[p.action] += std::min(cfg.tislr_c, p.pi_row[p.action] / p.mu_taken) * (p.ret - v);
  for (std::size_t b = 0; b < n; ++b) {
    const double excess = std::max(0.0, p.pi_row[b] / p.mu_row[b] - cfg.tislr_c);
    coef[b] += excess * p.mu_row[b] * (p.q_values[b] - v);
  }
  return coef;
}

}  // namespace

SurrogateStats surrogate_loss(const ParamStore& params, const LearnerBatch& batch, const TrainerConfig& cfg) {
  SurrogateStats st;
  for (const PositionSample& p : batch.positions) {
    const auto kl = kl_loss_and_grad(p.target, params.critic_logits(p.state, p.action));
    st.critic_loss += p.critic_weight * kl.loss;

    const MixedSoftmax ms = mixed_softmax(params.policy_row(p.state), cfg.policy_mix);
    const auto coef = policy_coefficients(p, cfg);
    double surrogate = 0.0;
    double entropy = 0.0;
    for (std::size_t b = 0; b < coef.size(); ++b) {
      const double prob = ms.probs(static_cast<Eigen::Index>(b));
      surrogate -= coef[b] * (cfg.pg_estimator == PgEstimator::beta_loo ? prob : std::log(prob));
      entropy -= prob * std::log(prob);
    }
    st.policy_loss += p.policy_weight * (surrogate - cfg.entropy_coefficient * entropy);
    st.entropy += entropy;
  }
  st.loss = st.critic_loss + st.policy_loss;
  if (!batch.positions.empty()) st.entropy /= static_cast<double>(batch.positions.size());
  return st;
}

Delta surrogate_gradient(const ParamStore& params, const LearnerBatch& batch, const TrainerConfig& cfg,
                         SurrogateStats* stats) {
  Delta grad = Delta::zeros_like(params);
  const std::size_t n_actions = params.n_actions();
  const std::size_t n_atoms = params.n_atoms();
  const double inv_actions = 1.0 / static_cast<double>(n_actions);
  SurrogateStats st;

  for (const PositionSample& p : batch.positions) {
    // Critic: d CE / d composed logit, routed through the dueling composition.
    const auto kl = kl_loss_and_grad(p.target, params.critic_logits(p.state, p.action));
    st.critic_loss += p.critic_weight * kl.loss;
    for (std::size_t i = 0; i < n_atoms; ++i) {
      const double g = p.critic_weight * kl.grad[i];
      grad.state_logits[params.state_index(p.state, i)] += g;
      for (ActionId b = 0; b < n_actions; ++b)
        grad.adv_logits[params.adv_index(p.state, b, i)] += g * ((b == p.action ? 1.0 : 0.0) - inv_actions);
    }

    // Actor.
    const MixedSoftmax ms = mixed_softmax(params.policy_row(p.state), cfg.policy_mix);
    const auto coef = policy_coefficients(p, cfg);
    double surrogate = 0.0;
    double entropy = 0.0;
    Eigen::VectorXd row_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_actions));
    for (std::size_t b = 0; b < n_actions; ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      const double prob = ms.probs(bi);
      const double log_prob = std::log(prob);
      const bool linear = cfg.pg_estimator == PgEstimator::beta_loo;
      surrogate -= coef[b] * (linear ? prob : log_prob);
      entropy -= prob * log_prob;
      // d/dpi(b) of [-coef f(pi) + c_ent sum pi log pi]
      const double d_prob = -coef[b] * (linear ? 1.0 : 1.0 / prob) + cfg.entropy_coefficient * (log_prob + 1.0);
      row_grad += d_prob * ms.jacobian.row(bi).transpose();
    }
    st.policy_loss += p.policy_weight * (surrogate - cfg.entropy_coefficient * entropy);
    st.entropy += entropy;
    for (std::size_t k = 0; k < n_actions; ++k)
      grad.policy_logits[p.state * n_actions + k] += p.policy_weight * row_grad(static_cast<Eigen::Index>(k));
  }
  st.loss = st.critic_loss + st.policy_loss;
  if (!batch.positions.empty()) st.entropy /= static_cast<double>(batch.positions.size());
  if (stats) *stats = st;
  return grad;
}

LearnerStepResult learner_step(const ParamStore& params, const ParamStore& target, ReplayBuffer& buffer,
                               const TrainerConfig& cfg, ZeroMomentumAdam& optimizer, Rng& rng) {
  const auto samples = buffer.sample(cfg.batch_size, rng);
  LearnerBatch batch = build_learner_batch(params, target, samples, cfg);
  LearnerStepResult out;
  const Delta grad = surrogate_gradient(params, batch, cfg, &out.stats);
  out.delta = optimizer.step(grad, cfg.learning_rate);
  out.delta.source_version = params.version();
  for (std::size_t i = 0; i < batch.keys.size(); ++i) {
    try {
      buffer.update_priority(batch.keys[i], batch.priorities[i]);
    } catch (const std::out_of_range&) {
      // Evicted by the actor since it was sampled.
    }
  }
  out.keys = std::move(batch.keys);
  out.priorities = std::move(batch.priorities);
  return out;
}

Actor::Actor(const Environment& env, std::size_t sequence_length, std::size_t stride)
    : env_(env), sequence_length_(sequence_length), stride_(stride), state_(env.start) {
  if (sequence_length_ == 0 || stride_ == 0) throw std::invalid_argument("Actor: sequence length and stride must be positive");
}

Actor::StepInfo Actor::step(const ParamStore& params, double policy_mix, ReplayBuffer& buffer, Rng& rng) {
  const Mdp& mdp = env_.mdp;
  const auto probs = params.policy_probs(state_, policy_mix);
  const ActionId action = rng.categorical(probs);
  const StateId next = rng.categorical(mdp.transition_row(state_, action));
  const bool terminal = mdp.is_terminal(next);
  const double reward = mdp.reward(state_, action);
  history_.push_back({state_, action, reward, terminal ? 0.0 : mdp.discount(), probs[action], probs, next});
  ++episode_steps_;
  episode_return_ += reward;

  while (next_start_ + sequence_length_ <= history_offset_ + history_.size()) {
    emit(next_start_, sequence_length_, false, params, policy_mix, buffer);
    next_start_ += stride_;
  }
  while (!history_.empty() && history_offset_ < next_start_) {
    history_.pop_front();
    ++history_offset_;
  }
  state_ = next;

  StepInfo info;
  const bool truncated = env_.max_episode_steps != 0 && episode_steps_ >= env_.max_episode_steps;
  if (terminal || truncated) {
    info.episode_done = true;
    info.episode_return = episode_return_;
    end_episode(terminal, params, policy_mix, buffer);
  }
  return info;
}

void Actor::end_episode(bool terminal, const ParamStore& params, double policy_mix, ReplayBuffer& buffer) {
  const std::size_t end = history_offset_ + history_.size();
  while (next_start_ < end) {
    const std::size_t available = end - next_start_;
    emit(next_start_, terminal ? sequence_length_ : std::min(sequence_length_, available), terminal, params,
         policy_mix, buffer);
    next_start_ += stride_;
  }
  history_.clear();
  history_offset_ = 0;
  next_start_ = 0;
  episode_steps_ = 0;
  episode_return_ = 0.0;
  ++episodes_;
  state_ = env_.start;
}

void Actor::emit(std::size_t start, std::size_t length, bool pad, const ParamStore& params, double policy_mix,
                 ReplayBuffer& buffer) const {
  SequenceRecord rec;
  const std::size_t first = start - history_offset_;
  const std::size_t available = std::min(length, history_.size() - first);
  rec.states.push_back(history_[first].state);
  for (std::size_t i = first; i < first + available; ++i) {
    const Transition& tr = history_[i];
    rec.actions.push_back(tr.action);
    rec.rewards.push_back(tr.reward);
    rec.discounts.push_back(tr.discount);
    rec.behavior_probs.push_back(tr.behavior_prob);
    rec.behavior_rows.insert(rec.behavior_rows.end(), tr.behavior_row.begin(), tr.behavior_row.end());
    rec.states.push_back(tr.next_state);
  }
  if (pad && available < length) {
    const StateId terminal = rec.states.back();
    const auto probs = params.policy_probs(terminal, policy_mix);
    for (std::size_t i = available; i < length; ++i) {
      rec.actions.push_back(0);
      rec.rewards.push_back(0.0);
      rec.discounts.push_back(0.0);
      rec.behavior_probs.push_back(probs[0]);
      rec.behavior_rows.insert(rec.behavior_rows.end(), probs.begin(), probs.end());
      rec.states.push_back(terminal);
    }
  }
  buffer.insert_sequence(std::move(rec));
}

TabularPolicy greedy_actor_policy(const ParamStore& params) {
  std::vector<ActionId> best(params.n_states(), 0);
  for (StateId s = 0; s < params.n_states(); ++s) {
    const auto row = params.policy_row(s);
    for (ActionId a = 1; a < params.n_actions(); ++a)
      if (row[a] > row[best[s]]) best[s] = a;
  }
  return TabularPolicy::deterministic(params.n_actions(), best);
}

}  // namespace reactor
