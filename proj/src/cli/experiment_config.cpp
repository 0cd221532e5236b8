#include "reactor/cli/experiment_config.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace reactor::cli {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, then rejects whatever was not consumed.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config key '" + display() + "': expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    const auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void read(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number() || !std::isfinite(v->get<double>())) fail(key, "expected a finite number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config key '" + key_path(key) + "': " + what);
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("config key '" + key_path(it.key()) + "': unknown key");
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

void read_environment(ObjectReader& parent, EnvironmentSpec& env) {
  const json* node = parent.find("environment");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("environment"));
  r.read("name", env.name);
  if (env.name != "gridworld" && env.name != "chain" && env.name != "random_mdp")
    r.fail("name", "expected gridworld, chain or random_mdp, got '" + env.name + "'");
  r.read("side", env.side);
  r.read("length", env.length);
  r.read("discount", env.discount);
  r.read("max_episode_steps", env.max_episode_steps);
  r.read("n_states", env.random.n_states);
  r.read("n_actions", env.random.n_actions);
  r.read("branching", env.random.branching);
  std::size_t env_seed = env.random.seed;
  r.read("env_seed", env_seed);
  env.random.seed = env_seed;
  r.read("reward_min", env.random.reward_min);
  r.read("reward_max", env.random.reward_max);
  env.random.discount = env.discount;
  r.finish();
}

void read_estimator(ObjectReader& parent, TrainerConfig& t) {
  const json* node = parent.find("pg_estimator");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("pg_estimator"));
  std::string kind = "beta_loo";
  r.read("kind", kind);
  if (kind == "beta_loo") {
    t.pg_estimator = PgEstimator::beta_loo;
    const bool has_beta = node->contains("beta");
    const bool has_trunc = node->contains("truncation");
    if (has_beta && has_trunc) r.fail("truncation", "give either beta or truncation, not both");
    if (has_trunc) {
      double c = 1.0;
      r.read("truncation", c);
      if (!(c >= 1.0)) r.fail("truncation", "must be >= 1");
      t.beta_loo = BetaLooConfig::truncated(c);
    } else {
      double beta = t.beta_loo.mode == BetaLooConfig::Mode::constant ? t.beta_loo.value : 1.0;
      r.read("beta", beta);
      if (!(beta > 0.0)) r.fail("beta", "must be positive");
      t.beta_loo = BetaLooConfig::constant(beta);
    }
  } else if (kind == "tislr") {
    t.pg_estimator = PgEstimator::tislr;
    r.read("c", t.tislr_c);
  } else {
    r.fail("kind", "expected beta_loo or tislr, got '" + kind + "'");
  }
  r.finish();
}

void read_trace(ObjectReader& parent, TrainerConfig& t) {
  const json* node = parent.find("trace");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("trace"));
  std::string kind = "retrace";
  r.read("kind", kind);
  if (kind == "retrace")
    t.trace.kind = TraceKind::retrace;
  else if (kind == "tree_backup")
    t.trace.kind = TraceKind::tree_backup;
  else if (kind == "importance_sampling")
    t.trace.kind = TraceKind::importance_sampling;
  else
    r.fail("kind", "expected retrace, tree_backup or importance_sampling, got '" + kind + "'");
  r.read("lambda", t.trace.lambda);
  r.finish();
}

void read_grid(ObjectReader& parent, TrainerConfig& t) {
  const json* node = parent.find("grid");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("grid"));
  r.read("v_min", t.grid.v_min);
  r.read("v_max", t.grid.v_max);
  r.read("n_atoms", t.grid.n_atoms);
  r.finish();
}

void read_trainer(ObjectReader& parent, TrainerConfig& t) {
  const json* node = parent.find("trainer");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("trainer"));
  r.read("sequence_length", t.sequence_length);
  r.read("batch_size", t.batch_size);
  r.read("target_update_period", t.target_update_period);
  r.read("actor_steps_per_learn", t.actor_steps_per_learn);
  r.read("learning_rate", t.learning_rate);
  r.read("policy_mix", t.policy_mix);
  r.read("entropy_coefficient", t.entropy_coefficient);
  r.read("workers", t.workers);
  r.read("replay_capacity", t.replay_capacity);
  r.read("epsilon_sample", t.epsilon_sample);
  r.read("priority_exponent", t.priority_exponent);
  r.read("replay_stride", t.replay_stride);
  r.read("adam_beta2", t.adam_beta2);
  r.read("adam_epsilon", t.adam_epsilon);
  r.read("weight_policy_gradient", t.weight_policy_gradient);
  r.read("deterministic", t.deterministic);
  r.read("metrics_interval", t.metrics_interval);
  std::string schedule = t.schedule == Schedule::strict ? "strict" : "free_running";
  r.read("schedule", schedule);
  if (schedule == "strict")
    t.schedule = Schedule::strict;
  else if (schedule == "free_running")
    t.schedule = Schedule::free_running;
  else
    r.fail("schedule", "expected strict or free_running, got '" + schedule + "'");
  read_estimator(r, t);
  read_trace(r, t);
  read_grid(r, t);
  r.finish();
}

void read_ablations(ObjectReader& parent, TrainerConfig& t) {
  const json* node = parent.find("ablations");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("ablations"));
  r.read("prioritized", t.prioritized);
  std::string target = t.critic_target == CriticTarget::distributional ? "distributional" : "expected";
  r.read("critic_target", target);
  if (target == "distributional")
    t.critic_target = CriticTarget::distributional;
  else if (target == "expected")
    t.critic_target = CriticTarget::expected;
  else
    r.fail("critic_target", "expected distributional or expected, got '" + target + "'");
  r.finish();
}

void read_output(ObjectReader& parent, OutputSpec& out) {
  const json* node = parent.find("output");
  if (!node) return;
  ObjectReader r(*node, parent.key_path("output"));
  r.read("metrics_csv", out.metrics_csv);
  r.read("summary_json", out.summary_json);
  r.finish();
}

const char* trace_name(TraceKind k) {
  switch (k) {
    case TraceKind::retrace: return "retrace";
    case TraceKind::tree_backup: return "tree_backup";
    case TraceKind::importance_sampling: return "importance_sampling";
  }
  return "retrace";
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig cfg;
  ObjectReader r(doc, "");
  std::size_t seed = cfg.seed;
  r.read("seed", seed);
  cfg.seed = seed;
  r.read("total_steps", cfg.total_steps);
  read_environment(r, cfg.environment);
  read_trainer(r, cfg.trainer);
  read_ablations(r, cfg.trainer);
  read_output(r, cfg.output);
  r.finish();
  try {
    cfg.trainer.validate();
    make_environment(cfg.environment);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_experiment_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.trainer;
  const auto& e = cfg.environment;
  json estimator;
  if (t.pg_estimator == PgEstimator::tislr) {
    estimator = {{"kind", "tislr"}, {"c", t.tislr_c}};
  } else if (t.beta_loo.mode == BetaLooConfig::Mode::truncated) {
    estimator = {{"kind", "beta_loo"}, {"truncation", t.beta_loo.value}};
  } else {
    estimator = {{"kind", "beta_loo"}, {"beta", t.beta_loo.value}};
  }
  return {
      {"seed", cfg.seed},
      {"total_steps", cfg.total_steps},
      {"environment",
       {{"name", e.name},
        {"side", e.side},
        {"length", e.length},
        {"discount", e.discount},
        {"max_episode_steps", e.max_episode_steps},
        {"n_states", e.random.n_states},
        {"n_actions", e.random.n_actions},
        {"branching", e.random.branching},
        {"env_seed", e.random.seed},
        {"reward_min", e.random.reward_min},
        {"reward_max", e.random.reward_max}}},
      {"trainer",
       {{"sequence_length", t.sequence_length},
        {"batch_size", t.batch_size},
        {"target_update_period", t.target_update_period},
        {"actor_steps_per_learn", t.actor_steps_per_learn},
        {"learning_rate", t.learning_rate},
        {"policy_mix", t.policy_mix},
        {"entropy_coefficient", t.entropy_coefficient},
        {"workers", t.workers},
        {"replay_capacity", t.replay_capacity},
        {"epsilon_sample", t.epsilon_sample},
        {"priority_exponent", t.priority_exponent},
        {"replay_stride", t.replay_stride},
        {"adam_beta2", t.adam_beta2},
        {"adam_epsilon", t.adam_epsilon},
        {"weight_policy_gradient", t.weight_policy_gradient},
        {"schedule", t.schedule == Schedule::strict ? "strict" : "free_running"},
        {"deterministic", t.deterministic},
        {"metrics_interval", t.metrics_interval},
        {"pg_estimator", estimator},
        {"trace", {{"kind", trace_name(t.trace.kind)}, {"lambda", t.trace.lambda}}},
        {"grid", {{"v_min", t.grid.v_min}, {"v_max", t.grid.v_max}, {"n_atoms", t.grid.n_atoms}}}}},
      {"ablations",
       {{"prioritized", t.prioritized},
        {"critic_target", t.critic_target == CriticTarget::distributional ? "distributional" : "expected"}}},
      {"output", {{"metrics_csv", cfg.output.metrics_csv}, {"summary_json", cfg.output.summary_json}}},
  };
}

Environment make_environment(const EnvironmentSpec& spec) {
  if (spec.name == "gridworld") return make_gridworld(spec.side, spec.discount, spec.max_episode_steps);
  if (spec.name == "chain") {
    Environment env = make_chain(spec.length, spec.discount);
    env.max_episode_steps = spec.max_episode_steps;
    return env;
  }
  if (spec.name == "random_mdp") {
    RandomMdpParams p = spec.random;
    p.discount = spec.discount;
    return make_random_mdp(p);
  }
  throw std::invalid_argument("unknown environment '" + spec.name + "'");
}

}  // namespace reactor::cli
