#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "reactor/agent.hpp"
#include "reactor/mdp.hpp"

namespace reactor::cli {

/// Thrown for any schema violation; the message names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvironmentSpec {
  std::string name = "gridworld";  // gridworld | chain | random_mdp
  std::size_t side = 5;            // gridworld
  std::size_t length = 5;          // chain
  double discount = 0.99;
  std::size_t max_episode_steps = 100;  // gridworld and chain; 0 disables the limit
  RandomMdpParams random;               // random_mdp
};

struct OutputSpec {
  std::string metrics_csv = "metrics.csv";
  std::string summary_json = "summary.json";
};

/// Schema (all keys optional, unknown keys rejected):
///
///   seed, total_steps
///   environment: name, side, length, discount, max_episode_steps,
///                n_states, n_actions, branching, env_seed, reward_min, reward_max
///   trainer: sequence_length, batch_size, target_update_period,
///            actor_steps_per_learn, learning_rate, policy_mix,
///            entropy_coefficient, workers, replay_capacity, epsilon_sample,
///            priority_exponent, replay_stride, adam_beta2, adam_epsilon,
///            weight_policy_gradient, schedule (strict | free_running),
///            deterministic, metrics_interval,
///            pg_estimator: {kind: beta_loo, beta} | {kind: beta_loo, truncation}
///                          | {kind: tislr, c},
///            trace: {kind: retrace | tree_backup | importance_sampling, lambda},
///            grid: {v_min, v_max, n_atoms}
///   ablations: prioritized, critic_target (distributional | expected)
///   output: metrics_csv, summary_json (relative paths resolve against --out)
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t total_steps = 200000;
  EnvironmentSpec environment;
  TrainerConfig trainer;
  OutputSpec output;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig parse_experiment_config_text(const std::string& text);

/// Full resolved configuration, every field present.
nlohmann::json to_json(const ExperimentConfig& cfg);

Environment make_environment(const EnvironmentSpec& spec);

}  // namespace reactor::cli
