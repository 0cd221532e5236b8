#include "reactor/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

namespace reactor {

namespace {

constexpr std::size_t kReturnWindow = 100;

double greedy_value(const Environment& env, const ParamStore& params) {
  const QTable q = solve_q_pi(env.mdp, greedy_actor_policy(params));
  return state_value(q, greedy_actor_policy(params), env.start);
}

double optimal_value(const Environment& env) {
  const QTable q = solve_q_star(env.mdp);
  return state_value(q, greedy_policy(q), env.start);
}

// Everything the metrics rows aggregate across workers.
class MetricsSink {
 public:
  MetricsSink(const Environment& env, std::size_t interval) : env_(env), interval_(interval), v_star_(optimal_value(env)) {}

  void episode(double ret) {
    std::lock_guard lock(mutex_);
    ++episodes_;
    returns_.push_back(ret);
    if (returns_.size() > kReturnWindow) returns_.pop_front();
  }

  void learner(const SurrogateStats& stats) {
    std::lock_guard lock(mutex_);
    loss_sum_ += stats.critic_loss;
    entropy_sum_ += stats.entropy;
    ++learner_count_;
  }

  bool due(std::size_t env_steps) const { return env_steps % interval_ == 0; }

  void record(std::size_t env_steps, const ParamStore& params, std::size_t buffer_size) {
    const double fraction = greedy_value(env_, params) / v_star_;
    std::lock_guard lock(mutex_);
    MetricsRow row;
    row.step = env_steps;
    row.episodes = episodes_;
    row.mean_return = returns_.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : std::accumulate(returns_.begin(), returns_.end(), 0.0) /
                                             static_cast<double>(returns_.size());
    const double n = static_cast<double>(learner_count_);
    row.critic_loss = learner_count_ ? loss_sum_ / n : std::numeric_limits<double>::quiet_NaN();
    row.entropy = learner_count_ ? entropy_sum_ / n : std::numeric_limits<double>::quiet_NaN();
    row.buffer_size = buffer_size;
    row.version = params.version();
    row.greedy_fraction = fraction;
    rows_.push_back(row);
    loss_sum_ = entropy_sum_ = 0.0;
    learner_count_ = 0;
  }

  std::vector<MetricsRow> take() {
    std::lock_guard lock(mutex_);
    std::sort(rows_.begin(), rows_.end(), [](const MetricsRow& a, const MetricsRow& b) { return a.step < b.step; });
    return std::move(rows_);
  }

 private:
  const Environment& env_;
  std::size_t interval_;
  double v_star_;
  std::mutex mutex_;
  std::size_t episodes_ = 0;
  std::deque<double> returns_;
  double loss_sum_ = 0.0;
  double entropy_sum_ = 0.0;
  std::size_t learner_count_ = 0;
  std::vector<MetricsRow> rows_;
};

struct Worker {
  Worker(const Environment& env, const TrainerConfig& cfg, std::size_t budget, std::uint64_t seed)
      : actor(env, cfg.sequence_length, cfg.replay_stride),
        buffer(cfg.replay_config()),
        optimizer(cfg.adam_beta2, cfg.adam_epsilon),
        act_rng(seed),
        learn_rng(act_rng.split()),
        budget(budget) {}

  Actor actor;
  ReplayBuffer buffer;
  ZeroMomentumAdam optimizer;
  Rng act_rng;
  Rng learn_rng;
  std::size_t budget;
  std::atomic<std::size_t> actor_steps{0};
};

std::vector<std::unique_ptr<Worker>> make_workers(const Environment& env, const TrainerConfig& cfg,
                                                  std::size_t total_steps, std::uint64_t seed) {
  Rng root(seed);
  std::vector<std::unique_ptr<Worker>> workers;
  for (std::size_t w = 0; w < cfg.workers; ++w) {
    const std::size_t budget = total_steps / cfg.workers + (w < total_steps % cfg.workers ? 1 : 0);
    workers.push_back(std::make_unique<Worker>(env, cfg, budget, root.split()));
  }
  return workers;
}

std::size_t total_buffer_size(const std::vector<std::unique_ptr<Worker>>& workers) {
  std::size_t n = 0;
  for (const auto& w : workers) n += w->buffer.size();
  return n;
}

TrainResult train_deterministic(const Environment& env, const TrainerConfig& cfg, std::size_t total_steps,
                                std::uint64_t seed) {
  const auto& mdp = env.mdp;
  ParamStore store(mdp.n_states(), mdp.n_actions(), cfg.grid.n_atoms);
  ParamStore target = store;
  auto workers = make_workers(env, cfg, total_steps, seed);
  MetricsSink sink(env, cfg.metrics_interval);
  TrainResult result;

  bool active = true;
  while (active) {
    active = false;
    for (auto& wp : workers) {
      Worker& w = *wp;
      if (w.actor_steps == w.budget) continue;
      active = true;
      for (std::size_t i = 0; i < cfg.actor_steps_per_learn && w.actor_steps < w.budget; ++i) {
        const auto info = w.actor.step(store, cfg.policy_mix, w.buffer, w.act_rng);
        ++w.actor_steps;
        ++result.env_steps;
        if (info.episode_done) sink.episode(info.episode_return);
        if (sink.due(result.env_steps)) sink.record(result.env_steps, store, total_buffer_size(workers));
      }
      if (w.actor_steps < cfg.sequence_length || w.buffer.empty()) continue;
      result.max_target_lag = std::max<std::size_t>(result.max_target_lag, store.version() - target.version());
      const auto step = learner_step(store, target, w.buffer, cfg, w.optimizer, w.learn_rng);
      apply_delta(store, step.delta);
      sink.learner(step.stats);
      ++result.learner_steps;
      if (maybe_update_target(store, target, result.learner_steps, cfg)) ++result.target_updates;
    }
  }
  result.metrics = sink.take();
  result.params = std::move(store);
  return result;
}

TrainResult train_threaded(const Environment& env, const TrainerConfig& cfg, std::size_t total_steps,
                           std::uint64_t seed) {
  const auto& mdp = env.mdp;
  SharedParamStore store(ParamStore(mdp.n_states(), mdp.n_actions(), cfg.grid.n_atoms));
  std::mutex target_mutex;
  auto target = std::make_shared<const ParamStore>(store.snapshot());
  auto workers = make_workers(env, cfg, total_steps, seed);
  MetricsSink sink(env, cfg.metrics_interval);
  std::atomic<std::size_t> env_steps{0};
  std::atomic<std::size_t> learner_steps{0};
  std::atomic<std::size_t> target_updates{0};
  std::atomic<std::size_t> max_lag{0};
  const bool strict = cfg.schedule == Schedule::strict;

  struct Gate {
    std::mutex mutex;
    std::condition_variable cv;
    std::size_t owed = 0;
    bool actor_done = false;
  };
  std::vector<Gate> gates(workers.size());

  auto learn_once = [&](Worker& w) {
    const ParamStore params = store.snapshot();
    std::shared_ptr<const ParamStore> tgt;
    {
      std::lock_guard lock(target_mutex);
      tgt = target;
    }
    const std::size_t lag = params.version() - tgt->version();
    std::size_t seen = max_lag.load();
    while (lag > seen && !max_lag.compare_exchange_weak(seen, lag)) {
    }
    const auto step = learner_step(params, *tgt, w.buffer, cfg, w.optimizer, w.learn_rng);
    store.apply(step.delta);
    sink.learner(step.stats);
    const std::size_t n = ++learner_steps;
    if (n % cfg.target_update_period == 0) {
      auto fresh = std::make_shared<ParamStore>();
      maybe_update_target(store.snapshot(), *fresh, n, cfg);
      std::lock_guard lock(target_mutex);
      target = std::move(fresh);
      ++target_updates;
    }
  };

  auto actor_loop = [&](Worker& w, Gate& gate) {
    while (w.actor_steps < w.budget) {
      if (strict) {
        std::unique_lock lock(gate.mutex);
        gate.cv.wait(lock, [&] { return gate.owed == 0; });
      }
      const ParamStore params = store.snapshot();
      for (std::size_t i = 0; i < cfg.actor_steps_per_learn && w.actor_steps < w.budget; ++i) {
        const auto info = w.actor.step(params, cfg.policy_mix, w.buffer, w.act_rng);
        ++w.actor_steps;
        if (info.episode_done) sink.episode(info.episode_return);
        const std::size_t global = ++env_steps;
        if (sink.due(global)) sink.record(global, store.snapshot(), total_buffer_size(workers));
      }
      if (w.actor_steps >= cfg.sequence_length && !w.buffer.empty()) {
        std::lock_guard lock(gate.mutex);
        ++gate.owed;
      }
      gate.cv.notify_all();
    }
    {
      std::lock_guard lock(gate.mutex);
      gate.actor_done = true;
    }
    gate.cv.notify_all();
  };

  auto learner_loop = [&](Worker& w, Gate& gate) {
    for (;;) {
      {
        std::unique_lock lock(gate.mutex);
        gate.cv.wait(lock, [&] { return gate.owed > 0 || gate.actor_done; });
        if (gate.owed == 0 && gate.actor_done) return;
      }
      learn_once(w);
      {
        std::lock_guard lock(gate.mutex);
        // Strict learners pay off one block; free-running ones keep going until the actor stops.
        if (strict)
          --gate.owed;
        else if (gate.actor_done)
          return;
      }
      gate.cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    threads.emplace_back(actor_loop, std::ref(*workers[i]), std::ref(gates[i]));
    threads.emplace_back(learner_loop, std::ref(*workers[i]), std::ref(gates[i]));
  }
  for (auto& t : threads) t.join();

  TrainResult result;
  result.metrics = sink.take();
  result.params = store.snapshot();
  result.env_steps = env_steps;
  result.learner_steps = learner_steps;
  result.target_updates = target_updates;
  result.max_target_lag = max_lag;
  return result;
}

}  // namespace

double greedy_fraction(const Environment& env, const ParamStore& params) {
  return greedy_value(env, params) / optimal_value(env);
}

TrainResult train(const Environment& env, const TrainerConfig& cfg, std::size_t total_steps, std::uint64_t seed) {
  cfg.validate();
  if (cfg.deterministic) return train_deterministic(env, cfg, total_steps, seed);
  return train_threaded(env, cfg, total_steps, seed);
}

}  // namespace reactor
