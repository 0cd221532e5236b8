#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "reactor/categorical.hpp"
#include "reactor/random.hpp"

namespace reactor {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Finite MDP with deterministic rewards r(x, a) and a constant discount.
///
/// Terminal states are rewritten at construction into zero-reward self
/// loops, so Q(terminal, .) = 0 under every policy.
class Mdp {
 public:
  /// `transition` is laid out as [state][action][next_state], `reward` as
  /// [state][action]. Throws std::invalid_argument on malformed input.
  Mdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
      std::vector<double> reward, double discount, std::vector<bool> terminal);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  bool is_terminal(StateId s) const { return terminal_[s]; }

  double reward(StateId s, ActionId a) const { return reward_[s * n_actions_ + a]; }
  double transition(StateId s, ActionId a, StateId next) const {
    return transition_[(s * n_actions_ + a) * n_states_ + next];
  }
  std::span<const double> transition_row(StateId s, ActionId a) const {
    return {transition_.data() + (s * n_actions_ + a) * n_states_, n_states_};
  }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<double> reward_;
  double discount_;
  std::vector<bool> terminal_;
};

class TabularPolicy {
 public:
  TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
  /// Puts all mass on `actions[s]` in each state.
  static TabularPolicy deterministic(std::size_t n_actions, std::span<const ActionId> actions);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double prob(StateId s, ActionId a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(StateId s) const { return {probs_.data() + s * n_actions_, n_actions_}; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

struct QTable {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(std::size_t states, std::size_t actions, double fill = 0.0)
      : n_states(states), n_actions(actions), values(states * actions, fill) {}

  double& operator()(StateId s, ActionId a) { return values[s * n_actions + a]; }
  double operator()(StateId s, ActionId a) const { return values[s * n_actions + a]; }
};

/// A stored trajectory slice: n transitions, n + 1 states.
///
/// discounts[s] is 0 when the transition enters a terminal state and the MDP
/// discount otherwise. behavior_rows optionally keeps the full behavior
/// distribution at each step (row-major, n x n_actions); estimators that sum
/// over all actions under mu need it.
struct SequenceRecord {
  std::vector<StateId> states;
  std::vector<ActionId> actions;
  std::vector<double> rewards;
  std::vector<double> discounts;
  std::vector<double> behavior_probs;
  std::vector<double> behavior_rows;

  std::size_t length() const { return actions.size(); }

  /// Throws std::invalid_argument if the record violates its invariants.
  void validate() const;

  bool operator==(const SequenceRecord&) const = default;
};

/// Environment wrapper: an MDP plus an episode start state and time limit.
struct Environment {
  Mdp mdp;
  StateId start = 0;
  std::size_t max_episode_steps = 0;  // 0 means no time limit
};

/// Q^pi as the solution of (I - gamma P_pi) Q = r.
QTable solve_q_pi(const Mdp& mdp, const TabularPolicy& pi);

/// Q* by value iteration until the max elementwise change is <= 1e-12.
QTable solve_q_star(const Mdp& mdp);

/// Greedy policy with respect to q; ties go to the lowest action index.
TabularPolicy greedy_policy(const QTable& q);

/// V^pi(s) = sum_a pi(a|s) Q^pi(s, a).
double state_value(const QTable& q, const TabularPolicy& pi, StateId s);

SequenceRecord sample_trajectory(const Mdp& mdp, const TabularPolicy& mu, StateId start,
                                 std::size_t length, Rng& rng);

/// Test oracle: projects each truncated rollout return onto `grid` and averages.
CategoricalDist monte_carlo_return_dist(const Mdp& mdp, const TabularPolicy& pi, StateId state,
                                        ActionId action, const SupportGrid& grid,
                                        std::size_t n_rollouts, std::size_t horizon, Rng& rng);

// Built-in environments.

/// Deterministic chain of k states: action 0 moves left, action 1 right.
/// Entering the last state pays 1 and terminates.
Environment make_chain(std::size_t k, double discount = 0.99);

/// side x side gridworld, start at the top-left corner, terminal goal at the
/// bottom-right paying 1 on entry. Actions: up, down, left, right; moves into a
/// wall leave the agent in place.
Environment make_gridworld(std::size_t side = 5, double discount = 0.99,
                           std::size_t max_episode_steps = 100);

struct RandomMdpParams {
  std::size_t n_states = 5;
  std::size_t n_actions = 3;
  std::size_t branching = 2;
  std::uint64_t seed = 0;
  double discount = 0.99;
  double reward_min = -1.0;
  double reward_max = 1.0;
};

/// Random MDP: each (s, a) reaches `branching` distinct next states with random
/// weights; rewards uniform in [reward_min, reward_max]. No terminal states.
Environment make_random_mdp(const RandomMdpParams& params);

/// Random policy; each entry is (floor + U[0,1)) renormalized per row, so all
/// entries stay bounded away from zero.
TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng,
                            double floor = 0.05);

}  // namespace reactor
