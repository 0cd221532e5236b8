#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "reactor/agent.hpp"
#include "reactor/mdp.hpp"

namespace reactor {

struct MetricsRow {
  std::size_t step = 0;
  std::size_t episodes = 0;
  double mean_return = 0.0;  // mean of the last 100 completed episodes, nan before the first
  double critic_loss = 0.0;  // mean over learner steps since the previous row
  double entropy = 0.0;
  std::size_t buffer_size = 0;
  std::uint64_t version = 0;
  double greedy_fraction = 0.0;  // V^greedy(start) / V*(start)
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  ParamStore params;
  std::size_t env_steps = 0;
  std::size_t learner_steps = 0;
  std::size_t target_updates = 0;
  std::size_t max_target_lag = 0;  // store version minus target version, sampled before each learner step
};

/// V^greedy(start) / V*(start) for the argmax of the actor logits.
double greedy_fraction(const Environment& env, const ParamStore& params);

/// Runs cfg.workers actor/learner pairs with private buffers and a shared
/// parameter store for total_steps environment steps (split across workers).
///
/// With cfg.deterministic the pairs are interleaved on the calling thread:
/// each worker in turn takes actor_steps_per_learn actor steps, then one
/// learner step once it has collected sequence_length steps. Otherwise each
/// worker runs an actor thread and a learner thread; Schedule::strict keeps
/// them in that same ratio, Schedule::free_running lets both run unthrottled.
TrainResult train(const Environment& env, const TrainerConfig& cfg, std::size_t total_steps, std::uint64_t seed);

}  // namespace reactor
