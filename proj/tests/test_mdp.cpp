#include <gtest/gtest.h>

#include <cmath>

#include "reactor/categorical.hpp"
#include "reactor/mdp.hpp"

using namespace reactor;

namespace {

// Residual of Q = r + gamma P pi Q.
double bellman_residual(const Mdp& mdp, const TabularPolicy& pi, const QTable& q) {
  double worst = 0.0;
  for (StateId s = 0; s < mdp.n_states(); ++s)
    for (ActionId a = 0; a < mdp.n_actions(); ++a) {
      double backup = mdp.reward(s, a);
      for (StateId n = 0; n < mdp.n_states(); ++n)
        backup += mdp.discount() * mdp.transition(s, a, n) * state_value(q, pi, n);
      worst = std::max(worst, std::abs(backup - q(s, a)));
    }
  return worst;
}

}  // namespace

TEST(Mdp, RejectsMalformedInput) {
  EXPECT_THROW(Mdp(1, 1, {0.5}, {0.0}, 0.9, {}), std::invalid_argument);
  EXPECT_THROW(Mdp(1, 1, {1.0}, {0.0}, 1.0, {}), std::invalid_argument);
  EXPECT_THROW(Mdp(1, 1, {1.0, 0.0}, {0.0}, 0.9, {}), std::invalid_argument);
  EXPECT_THROW(Mdp(1, 1, {1.0}, {NAN}, 0.9, {}), std::invalid_argument);
  EXPECT_THROW(Mdp(2, 1, {0.0, 1.0, 1.0, 0.0}, {0.0, 0.0}, 0.9, {true}), std::invalid_argument);
}

TEST(Mdp, TerminalStatesBecomeZeroRewardSelfLoops) {
  const Mdp mdp(2, 1, {0.0, 1.0, 1.0, 0.0}, {1.0, 5.0}, 0.9, {false, true});
  EXPECT_EQ(mdp.transition(1, 0, 1), 1.0);
  EXPECT_EQ(mdp.reward(1, 0), 0.0);
  const QTable q = solve_q_pi(mdp, TabularPolicy::uniform(2, 1));
  EXPECT_NEAR(q(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(q(0, 0), 1.0, 1e-12);
}

TEST(SolveQPi, SingleStateGeometricSeries) {
  const Mdp mdp(1, 1, {1.0}, {2.0}, 0.9, {});
  const QTable q = solve_q_pi(mdp, TabularPolicy::uniform(1, 1));
  EXPECT_NEAR(q(0, 0), 20.0, 1e-10);
}

TEST(SolveQPi, SatisfiesBellmanEquationOnRandomMdps) {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    RandomMdpParams p;
    p.seed = rng.next_u64();
    const Environment env = make_random_mdp(p);
    const TabularPolicy pi = random_policy(p.n_states, p.n_actions, rng);
    EXPECT_LT(bellman_residual(env.mdp, pi, solve_q_pi(env.mdp, pi)), 1e-10);
  }
}

TEST(SolveQStar, ChainOptimalValues) {
  const Environment env = make_chain(5, 0.9);
  const QTable q = solve_q_star(env.mdp);
  // Four right moves from state 0; the reward arrives on the fourth.
  EXPECT_NEAR(q(0, 1), std::pow(0.9, 3), 1e-10);
  EXPECT_NEAR(q(3, 1), 1.0, 1e-10);
  EXPECT_NEAR(q(0, 0), 0.9 * q(0, 1), 1e-10);
}

TEST(SolveQStar, GridworldOptimalValue) {
  const Environment env = make_gridworld(5, 0.99, 100);
  const QTable q = solve_q_star(env.mdp);
  const TabularPolicy greedy = greedy_policy(q);
  EXPECT_NEAR(state_value(q, greedy, env.start), std::pow(0.99, 7), 1e-10);
  // The greedy policy is optimal: its own evaluation matches Q*.
  const QTable q_greedy = solve_q_pi(env.mdp, greedy);
  for (std::size_t i = 0; i < q.values.size(); ++i) EXPECT_NEAR(q_greedy.values[i], q.values[i], 1e-9);
}

TEST(SolveQStar, DominatesRandomPolicies) {
  Rng rng(2);
  RandomMdpParams p;
  p.seed = 99;
  const Environment env = make_random_mdp(p);
  const QTable q_star = solve_q_star(env.mdp);
  for (int i = 0; i < 5; ++i) {
    const QTable q = solve_q_pi(env.mdp, random_policy(p.n_states, p.n_actions, rng));
    for (std::size_t j = 0; j < q.values.size(); ++j) EXPECT_LE(q.values[j], q_star.values[j] + 1e-9);
  }
}

TEST(GreedyPolicy, TiesGoToLowestAction) {
  QTable q(1, 3, 0.0);
  q(0, 1) = 1.0;
  q(0, 2) = 1.0;
  EXPECT_EQ(greedy_policy(q).prob(0, 1), 1.0);
}

TEST(Gridworld, LayoutAndMoves) {
  const Environment env = make_gridworld(3, 0.9, 10);
  EXPECT_EQ(env.mdp.n_states(), 9u);
  EXPECT_EQ(env.mdp.n_actions(), 4u);
  EXPECT_EQ(env.start, 0u);
  EXPECT_EQ(env.max_episode_steps, 10u);
  EXPECT_EQ(env.mdp.transition(0, 0, 0), 1.0);  // wall
  EXPECT_EQ(env.mdp.transition(0, 1, 3), 1.0);  // down
  EXPECT_EQ(env.mdp.transition(0, 3, 1), 1.0);  // right
  EXPECT_EQ(env.mdp.reward(5, 1), 1.0);
  EXPECT_EQ(env.mdp.reward(7, 3), 1.0);
  EXPECT_TRUE(env.mdp.is_terminal(8));
}

TEST(RandomMdp, ReproducibleAndBranching) {
  RandomMdpParams p;
  p.seed = 7;
  p.n_states = 6;
  p.branching = 3;
  const Environment a = make_random_mdp(p);
  const Environment b = make_random_mdp(p);
  for (StateId s = 0; s < 6; ++s)
    for (ActionId u = 0; u < p.n_actions; ++u) {
      int support = 0;
      for (StateId n = 0; n < 6; ++n) {
        EXPECT_EQ(a.mdp.transition(s, u, n), b.mdp.transition(s, u, n));
        support += a.mdp.transition(s, u, n) > 0.0;
      }
      EXPECT_EQ(support, 3);
      EXPECT_GE(a.mdp.reward(s, u), -1.0);
      EXPECT_LE(a.mdp.reward(s, u), 1.0);
    }
  p.branching = 7;
  EXPECT_THROW(make_random_mdp(p), std::invalid_argument);
}

TEST(RandomPolicy, RowsAreDistributionsBoundedAwayFromZero) {
  Rng rng(3);
  const TabularPolicy pi = random_policy(4, 3, rng, 0.05);
  for (StateId s = 0; s < 4; ++s) {
    double total = 0.0;
    for (ActionId a = 0; a < 3; ++a) {
      EXPECT_GT(pi.prob(s, a), 0.05 / 3.15);
      total += pi.prob(s, a);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(TabularPolicy, DeterministicAndValidation) {
  const std::vector<ActionId> actions = {2, 0};
  const TabularPolicy pi = TabularPolicy::deterministic(3, actions);
  EXPECT_EQ(pi.prob(0, 2), 1.0);
  EXPECT_EQ(pi.prob(1, 0), 1.0);
  EXPECT_THROW(TabularPolicy(1, 2, {0.7, 0.7}), std::invalid_argument);
  const std::vector<ActionId> bad = {3};
  EXPECT_THROW(TabularPolicy::deterministic(3, bad), std::invalid_argument);
}

TEST(SampleTrajectory, RecordsBehaviorAndTerminalDiscounts) {
  const Environment env = make_chain(3, 0.9);
  const std::vector<ActionId> right = {1, 1, 1};
  const TabularPolicy mu = TabularPolicy::deterministic(2, right);
  Rng rng(4);
  const SequenceRecord seq = sample_trajectory(env.mdp, mu, 0, 4, rng);
  ASSERT_NO_THROW(seq.validate());
  EXPECT_EQ(seq.states, (std::vector<StateId>{0, 1, 2, 2, 2}));
  EXPECT_EQ(seq.rewards, (std::vector<double>{0.0, 1.0, 0.0, 0.0}));
  EXPECT_EQ(seq.discounts, (std::vector<double>{0.9, 0.0, 0.0, 0.0}));
  EXPECT_EQ(seq.behavior_probs, (std::vector<double>{1.0, 1.0, 1.0, 1.0}));
  EXPECT_EQ(seq.behavior_rows.size(), 8u);
}

TEST(SampleTrajectory, SameSeedSameSequence) {
  RandomMdpParams p;
  p.seed = 5;
  const Environment env = make_random_mdp(p);
  Rng r1(9);
  Rng r2(9);
  const TabularPolicy mu = TabularPolicy::uniform(p.n_states, p.n_actions);
  EXPECT_EQ(sample_trajectory(env.mdp, mu, 0, 20, r1), sample_trajectory(env.mdp, mu, 0, 20, r2));
}

TEST(SequenceRecord, ValidateCatchesInconsistency) {
  SequenceRecord seq;
  seq.states = {0, 1};
  seq.actions = {0};
  seq.rewards = {0.0};
  seq.discounts = {0.9};
  seq.behavior_probs = {0.5};
  EXPECT_NO_THROW(seq.validate());
  seq.behavior_probs = {0.0};
  EXPECT_THROW(seq.validate(), std::invalid_argument);
  seq.behavior_probs = {0.5};
  seq.discounts = {1.0};
  EXPECT_THROW(seq.validate(), std::invalid_argument);
  seq.discounts = {0.9};
  seq.states = {0};
  EXPECT_THROW(seq.validate(), std::invalid_argument);
}

TEST(MonteCarloReturnDist, MeanMatchesQPi) {
  RandomMdpParams p;
  p.seed = 11;
  p.discount = 0.8;
  const Environment env = make_random_mdp(p);
  Rng rng(6);
  const TabularPolicy pi = random_policy(p.n_states, p.n_actions, rng);
  const QTable q = solve_q_pi(env.mdp, pi);
  const SupportGrid grid(-6.0, 6.0, 241);
  const auto dist = monte_carlo_return_dist(env.mdp, pi, 1, 2, grid, 40000, 80, rng);
  // Returns are bounded by 5 in magnitude; truncation at 80 steps costs < 0.8^80 * 5.
  EXPECT_NEAR(mean(dist), q(1, 2), 4.0 * 5.0 / std::sqrt(40000.0));
}
