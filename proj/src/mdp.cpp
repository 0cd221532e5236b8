#include "reactor/mdp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reactor {

namespace {

void check_row(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(what + ": entry outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument(what + ": row does not sum to 1");
}

}  // namespace

Mdp::Mdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
         std::vector<double> reward, double discount, std::vector<bool> terminal)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      discount_(discount),
      terminal_(std::move(terminal)) {
  if (n_states_ == 0 || n_actions_ == 0) throw std::invalid_argument("Mdp: empty state or action set");
  if (transition_.size() != n_states_ * n_actions_ * n_states_)
    throw std::invalid_argument("Mdp: transition table has wrong size");
  if (reward_.size() != n_states_ * n_actions_) throw std::invalid_argument("Mdp: reward table has wrong size");
  if (terminal_.empty()) terminal_.assign(n_states_, false);
  if (terminal_.size() != n_states_) throw std::invalid_argument("Mdp: terminal flags have wrong size");
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw std::invalid_argument("Mdp: discount must be in [0, 1)");

  for (StateId s = 0; s < n_states_; ++s) {
    if (!terminal_[s]) continue;
    for (ActionId a = 0; a < n_actions_; ++a) {
      reward_[s * n_actions_ + a] = 0.0;
      auto* row = transition_.data() + (s * n_actions_ + a) * n_states_;
      std::fill(row, row + n_states_, 0.0);
      row[s] = 1.0;
    }
  }
  for (StateId s = 0; s < n_states_; ++s)
    for (ActionId a = 0; a < n_actions_; ++a) {
      check_row(transition_row(s, a), "Mdp transition (" + std::to_string(s) + "," + std::to_string(a) + ")");
      if (!std::isfinite(reward_[s * n_actions_ + a])) throw std::invalid_argument("Mdp: non-finite reward");
    }
}

TabularPolicy::TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != n_states_ * n_actions_) throw std::invalid_argument("TabularPolicy: wrong size");
  for (StateId s = 0; s < n_states_; ++s) check_row(row(s), "TabularPolicy state " + std::to_string(s));
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  return TabularPolicy(n_states, n_actions,
                       std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
}

TabularPolicy TabularPolicy::deterministic(std::size_t n_actions, std::span<const ActionId> actions) {
  std::vector<double> probs(actions.size() * n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw std::invalid_argument("TabularPolicy::deterministic: bad action");
    probs[s * n_actions + actions[s]] = 1.0;
  }
  return TabularPolicy(actions.size(), n_actions, std::move(probs));
}

void SequenceRecord::validate() const {
  const std::size_t n = actions.size();
  if (states.size() != n + 1 || rewards.size() != n || discounts.size() != n || behavior_probs.size() != n)
    throw std::invalid_argument("SequenceRecord: inconsistent lengths");
  if (n == 0) throw std::invalid_argument("SequenceRecord: empty sequence");
  for (double m : behavior_probs)
    if (!(m > 0.0 && m <= 1.0)) throw std::invalid_argument("SequenceRecord: behavior prob outside (0, 1]");
  for (double d : discounts)
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("SequenceRecord: discount outside [0, 1)");
  if (!behavior_rows.empty() && behavior_rows.size() % n != 0)
    throw std::invalid_argument("SequenceRecord: behavior rows have wrong size");
}

QTable solve_q_pi(const Mdp& mdp, const TabularPolicy& pi) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
    throw std::invalid_argument("solve_q_pi: policy dimensions do not match the MDP");
  const std::size_t na = mdp.n_actions();
  const std::size_t dim = mdp.n_states() * na;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (StateId s = 0; s < mdp.n_states(); ++s)
    for (ActionId a = 0; a < na; ++a) {
      const std::size_t row = s * na + a;
      rhs(row) = mdp.reward(s, a);
      for (StateId next = 0; next < mdp.n_states(); ++next) {
        const double p = mdp.transition(s, a, next);
        if (p == 0.0) continue;
        for (ActionId b = 0; b < na; ++b) system(row, next * na + b) -= mdp.discount() * p * pi.prob(next, b);
      }
    }
  const Eigen::VectorXd solution = system.partialPivLu().solve(rhs);
  QTable q(mdp.n_states(), na);
  for (std::size_t i = 0; i < dim; ++i) q.values[i] = solution(i);
  return q;
}

QTable solve_q_star(const Mdp& mdp) {
  const std::size_t ns = mdp.n_states();
  const std::size_t na = mdp.n_actions();
  QTable q(ns, na);
  std::vector<double> v(ns, 0.0);
  for (;;) {
    double change = 0.0;
    for (StateId s = 0; s < ns; ++s)
      for (ActionId a = 0; a < na; ++a) {
        double backup = mdp.reward(s, a);
        const auto row = mdp.transition_row(s, a);
        for (StateId next = 0; next < ns; ++next) backup += mdp.discount() * row[next] * v[next];
        change = std::max(change, std::abs(backup - q(s, a)));
        q(s, a) = backup;
      }
    for (StateId s = 0; s < ns; ++s) {
      double best = q(s, 0);
      for (ActionId a = 1; a < na; ++a) best = std::max(best, q(s, a));
      v[s] = best;
    }
    if (change <= 1e-12) break;
  }
  return q;
}

TabularPolicy greedy_policy(const QTable& q) {
  std::vector<ActionId> best(q.n_states, 0);
  for (StateId s = 0; s < q.n_states; ++s)
    for (ActionId a = 1; a < q.n_actions; ++a)
      if (q(s, a) > q(s, best[s])) best[s] = a;
  return TabularPolicy::deterministic(q.n_actions, best);
}

double state_value(const QTable& q, const TabularPolicy& pi, StateId s) {
  double v = 0.0;
  for (ActionId a = 0; a < q.n_actions; ++a) v += pi.prob(s, a) * q(s, a);
  return v;
}

SequenceRecord sample_trajectory(const Mdp& mdp, const TabularPolicy& mu, StateId start,
                                 std::size_t length, Rng& rng) {
  if (length == 0) throw std::invalid_argument("sample_trajectory: length must be >= 1");
  if (start >= mdp.n_states()) throw std::invalid_argument("sample_trajectory: invalid start state");
  SequenceRecord rec;
  rec.states.reserve(length + 1);
  rec.states.push_back(start);
  StateId s = start;
  for (std::size_t t = 0; t < length; ++t) {
    const ActionId a = rng.categorical(mu.row(s));
    const StateId next = rng.categorical(mdp.transition_row(s, a));
    rec.actions.push_back(a);
    rec.rewards.push_back(mdp.reward(s, a));
    rec.discounts.push_back(mdp.is_terminal(next) ? 0.0 : mdp.discount());
    rec.behavior_probs.push_back(mu.prob(s, a));
    const auto row = mu.row(s);
    rec.behavior_rows.insert(rec.behavior_rows.end(), row.begin(), row.end());
    rec.states.push_back(next);
    s = next;
  }
  return rec;
}

CategoricalDist monte_carlo_return_dist(const Mdp& mdp, const TabularPolicy& pi, StateId state,
                                        ActionId action, const SupportGrid& grid,
                                        std::size_t n_rollouts, std::size_t horizon, Rng& rng) {
  if (n_rollouts == 0) throw std::invalid_argument("monte_carlo_return_dist: need at least one rollout");
  std::vector<double> probs(grid.size(), 0.0);
  const double mass = 1.0 / static_cast<double>(n_rollouts);
  for (std::size_t k = 0; k < n_rollouts; ++k) {
    StateId s = state;
    ActionId a = action;
    double ret = 0.0;
    double scale = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      ret += scale * mdp.reward(s, a);
      const StateId next = rng.categorical(mdp.transition_row(s, a));
      if (mdp.is_terminal(next)) break;
      scale *= mdp.discount();
      s = next;
      a = rng.categorical(pi.row(s));
    }
    accumulate_projection(ret, mass, grid, probs);
  }
  // Renormalize away accumulated rounding.
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return CategoricalDist(grid, std::move(probs));
}

Environment make_chain(std::size_t k, double discount) {
  if (k < 2) throw std::invalid_argument("make_chain: need at least 2 states");
  const std::size_t na = 2;
  std::vector<double> transition(k * na * k, 0.0);
  std::vector<double> reward(k * na, 0.0);
  std::vector<bool> terminal(k, false);
  terminal[k - 1] = true;
  for (StateId s = 0; s < k; ++s) {
    const StateId left = s == 0 ? 0 : s - 1;
    const StateId right = std::min(s + 1, k - 1);
    transition[(s * na + 0) * k + left] = 1.0;
    transition[(s * na + 1) * k + right] = 1.0;
    if (right == k - 1 && s != k - 1) reward[s * na + 1] = 1.0;
  }
  return Environment{Mdp(k, na, std::move(transition), std::move(reward), discount, std::move(terminal)), 0, 0};
}

Environment make_gridworld(std::size_t side, double discount, std::size_t max_episode_steps) {
  if (side < 2) throw std::invalid_argument("make_gridworld: side must be >= 2");
  const std::size_t ns = side * side;
  const std::size_t na = 4;
  const StateId goal = ns - 1;
  std::vector<double> transition(ns * na * ns, 0.0);
  std::vector<double> reward(ns * na, 0.0);
  std::vector<bool> terminal(ns, false);
  terminal[goal] = true;
  for (StateId s = 0; s < ns; ++s) {
    const std::size_t row = s / side;
    const std::size_t col = s % side;
    const StateId moves[4] = {
        row == 0 ? s : s - side,            // up
        row + 1 == side ? s : s + side,     // down
        col == 0 ? s : s - 1,               // left
        col + 1 == side ? s : s + 1,        // right
    };
    for (ActionId a = 0; a < na; ++a) {
      transition[(s * na + a) * ns + moves[a]] = 1.0;
      if (moves[a] == goal && s != goal) reward[s * na + a] = 1.0;
    }
  }
  return Environment{Mdp(ns, na, std::move(transition), std::move(reward), discount, std::move(terminal)), 0,
                     max_episode_steps};
}

Environment make_random_mdp(const RandomMdpParams& params) {
  const std::size_t ns = params.n_states;
  const std::size_t na = params.n_actions;
  if (ns == 0 || na == 0) throw std::invalid_argument("make_random_mdp: empty state or action set");
  if (params.branching == 0 || params.branching > ns)
    throw std::invalid_argument("make_random_mdp: branching must be in [1, n_states]");
  Rng rng(params.seed);
  std::vector<double> transition(ns * na * ns, 0.0);
  std::vector<double> reward(ns * na, 0.0);
  std::vector<StateId> order(ns);
  for (StateId s = 0; s < ns; ++s)
    for (ActionId a = 0; a < na; ++a) {
      for (StateId i = 0; i < ns; ++i) order[i] = i;
      // Partial Fisher-Yates picks `branching` distinct successors.
      for (std::size_t i = 0; i < params.branching; ++i) std::swap(order[i], order[i + rng.index(ns - i)]);
      std::vector<double> weights(params.branching);
      double total = 0.0;
      for (double& w : weights) {
        w = 0.1 + rng.uniform();
        total += w;
      }
      auto* row = transition.data() + (s * na + a) * ns;
      double assigned = 0.0;
      for (std::size_t i = 0; i + 1 < params.branching; ++i) {
        row[order[i]] = weights[i] / total;
        assigned += row[order[i]];
      }
      row[order[params.branching - 1]] = 1.0 - assigned;
      reward[s * na + a] = params.reward_min + (params.reward_max - params.reward_min) * rng.uniform();
    }
  return Environment{Mdp(ns, na, std::move(transition), std::move(reward), params.discount, {}), 0, 0};
}

TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng, double floor) {
  std::vector<double> probs(n_states * n_actions);
  for (StateId s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (ActionId a = 0; a < n_actions; ++a) {
      probs[s * n_actions + a] = floor + rng.uniform();
      total += probs[s * n_actions + a];
    }
    double assigned = 0.0;
    for (ActionId a = 0; a + 1 < n_actions; ++a) {
      probs[s * n_actions + a] /= total;
      assigned += probs[s * n_actions + a];
    }
    probs[s * n_actions + n_actions - 1] = 1.0 - assigned;
  }
  return TabularPolicy(n_states, n_actions, std::move(probs));
}

}  // namespace reactor
