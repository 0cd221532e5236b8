#include "reactor/cli/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "reactor/categorical.hpp"
#include "reactor/mdp.hpp"
#include "reactor/priority_tree.hpp"
#include "reactor/replay.hpp"
#include "reactor/retrace.hpp"

namespace reactor::cli {

namespace {

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Eigen::VectorXd flatten(const Delta& d) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(d.policy_logits.size() + d.state_logits.size() + d.adv_logits.size()));
  Eigen::Index i = 0;
  for (const auto* table : {&d.policy_logits, &d.state_logits, &d.adv_logits})
    for (double v : *table) out(i++) = v;
  return out;
}

void randomize(std::vector<double>& v, Rng& rng, double scale) {
  for (double& x : v) x = uniform_in(rng, -scale, scale);
}

}  // namespace

PgContext random_pg_instance(Rng& rng, std::size_t n_actions, double policy_mix) {
  std::vector<double> logits(n_actions);
  randomize(logits, rng, 1.5);
  const TabularPolicy mu_table = random_policy(1, n_actions, rng, 0.2);
  Eigen::VectorXd mu(static_cast<Eigen::Index>(n_actions));
  Eigen::VectorXd q_true(mu.size());
  Eigen::VectorXd q_est(mu.size());
  for (std::size_t a = 0; a < n_actions; ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    mu(i) = mu_table.prob(0, a);
    q_true(i) = uniform_in(rng, -1.0, 1.0);
    q_est(i) = q_true(i) + uniform_in(rng, -0.5, 0.5);
  }
  return make_softmax_context(logits, policy_mix, mu, q_est, q_true);
}

BiasMeasurement measure_beta_loo_bias(const PgContext& ctx, const BetaLooConfig& cfg, std::size_t draws, Rng& rng,
                                      double noise) {
  const Eigen::VectorXd truth = g_exact(ctx, QSource::truth);
  const Eigen::Index dim = truth.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(dim);
  const std::vector<double> mu(ctx.mu.data(), ctx.mu.data() + ctx.mu.size());
  for (std::size_t i = 0; i < draws; ++i) {
    const ActionId a = rng.categorical(mu);
    const double ret = ctx.q_true(static_cast<Eigen::Index>(a)) + uniform_in(rng, -noise, noise);
    const Eigen::VectorXd g = estimate_beta_loo(ctx, cfg, a, ret) - truth;
    sum += g;
    sum_sq += g.cwiseProduct(g);
  }
  const double n = static_cast<double>(draws);
  BiasMeasurement m;
  m.empirical = sum / n;
  const Eigen::VectorXd var = (sum_sq / n - m.empirical.cwiseProduct(m.empirical)).cwiseMax(0.0) * (n / (n - 1.0));
  m.std_error = (var / n).cwiseSqrt();
  m.closed_form = bias_beta_loo(ctx, cfg);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const double se = std::max(m.std_error(k), 1e-300);
    m.max_z = std::max(m.max_z, std::abs(m.empirical(k) - m.closed_form(k)) / se);
    m.max_zero_z = std::max(m.max_zero_z, std::abs(m.empirical(k)) / se);
  }
  return m;
}

double kl_gradient_rel_error(std::uint64_t seed, std::size_t n_atoms, double step) {
  Rng rng(seed);
  std::vector<double> logits(n_atoms);
  randomize(logits, rng, 2.0);
  std::vector<double> target(n_atoms);
  randomize(target, rng, 1.0);
  double total = 0.0;
  for (double v : target) total += v;
  // Shift to a signed target summing to one.
  for (double& v : target) v += (1.0 - total) / static_cast<double>(n_atoms);
  const auto analytic = kl_loss_and_grad(target, logits);
  Eigen::VectorXd g(static_cast<Eigen::Index>(n_atoms));
  Eigen::VectorXd fd(g.size());
  for (std::size_t i = 0; i < n_atoms; ++i) {
    g(static_cast<Eigen::Index>(i)) = analytic.grad[i];
    auto plus = logits;
    auto minus = logits;
    plus[i] += step;
    minus[i] -= step;
    fd(static_cast<Eigen::Index>(i)) =
        (kl_loss_and_grad(target, plus).loss - kl_loss_and_grad(target, minus).loss) / (2.0 * step);
  }
  return rel_error(g, fd);
}

double surrogate_gradient_rel_error(const TrainerConfig& base, std::uint64_t seed, double step) {
  Rng rng(seed);
  RandomMdpParams mp;
  mp.n_states = 2;
  mp.n_actions = 2;
  mp.branching = 2;
  mp.seed = rng.next_u64();
  mp.discount = 0.9;
  const Environment env = make_random_mdp(mp);

  TrainerConfig cfg = base;
  cfg.grid = GridConfig{-3.0, 3.0, 11};
  cfg.sequence_length = 5;
  cfg.batch_size = 3;
  if (cfg.entropy_coefficient == 0.0) cfg.entropy_coefficient = 0.05;

  ParamStore params(2, 2, cfg.grid.n_atoms);
  randomize(params.policy_logits(), rng, 1.0);
  randomize(params.state_logits(), rng, 1.0);
  randomize(params.adv_logits(), rng, 1.0);
  ParamStore target(2, 2, cfg.grid.n_atoms);
  randomize(target.policy_logits(), rng, 1.0);
  randomize(target.state_logits(), rng, 1.0);
  randomize(target.adv_logits(), rng, 1.0);

  ReplayBuffer buffer(cfg.replay_config());
  const TabularPolicy mu = random_policy(2, 2, rng, 0.2);
  for (int i = 0; i < 4; ++i) {
    const StateId start = rng.index(2);
    const SequenceKey key = buffer.insert_sequence(sample_trajectory(env.mdp, mu, start, cfg.sequence_length, rng));
    if (i % 2 == 0) buffer.update_priority(key, 0.2 + rng.uniform());
  }
  const auto samples = buffer.sample(cfg.batch_size, rng);
  const LearnerBatch batch = build_learner_batch(params, target, samples, cfg);

  const Eigen::VectorXd g = flatten(surrogate_gradient(params, batch, cfg));
  Eigen::VectorXd fd(g.size());
  Eigen::Index idx = 0;
  for (std::vector<double>* values : {&params.policy_logits(), &params.state_logits(), &params.adv_logits()}) {
    for (double& v : *values) {
      const double saved = v;
      v = saved + step;
      const double up = surrogate_loss(params, batch, cfg).loss;
      v = saved - step;
      const double down = surrogate_loss(params, batch, cfg).loss;
      v = saved;
      fd(idx++) = (up - down) / (2.0 * step);
    }
  }
  return rel_error(g, fd);
}

void cpt_random_script(std::size_t ops, std::uint64_t seed, std::size_t audit_every) {
  Rng rng(seed);
  ContextualPriorityTree tree;
  std::vector<SequenceKey> live;
  SequenceKey next = 0;
  for (std::size_t op = 0; op < ops; ++op) {
    const double u = rng.uniform();
    if (live.empty() || u < 0.45) {
      std::optional<double> p;
      if (rng.uniform() < 0.2) p = rng.uniform() < 0.1 ? 0.0 : uniform_in(rng, 0.0, 2.0);
      tree.insert(next, p);
      live.push_back(next++);
    } else if (u < 0.65) {
      // Mostly FIFO eviction, sometimes an arbitrary key.
      const std::size_t i = rng.uniform() < 0.7 ? 0 : rng.index(live.size());
      tree.erase(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      const SequenceKey key = live[rng.index(live.size())];
      tree.set_priority(key, rng.uniform() < 0.05 ? 0.0 : uniform_in(rng, 0.0, 2.0));
    }
    if ((op + 1) % audit_every != 0) continue;
    tree.audit();
    if (tree.size() != live.size()) throw std::logic_error("cpt script: size mismatch");
    double total = 0.0;
    for (SequenceKey k : live) total += tree.probability(k, 0.01);
    if (!live.empty() && std::abs(total - 1.0) > 1e-9) throw std::logic_error("cpt script: probabilities do not sum to 1");
  }
}

namespace {

SuiteResult timed(const std::string& name, const std::function<std::string(bool&)>& body) {
  SuiteResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    bool ok = true;
    r.detail = body(ok);
    r.passed = ok;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string projection_suite(bool& ok) {
  Rng rng(11);
  const SupportGrid grid(-2.0, 3.0, 26);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const double x = uniform_in(rng, -3.0, 4.0);
    const auto d = CategoricalDist::projected(x, grid);
    worst = std::max(worst, std::abs(mean(d) - std::clamp(x, grid.v_min(), grid.v_max())));
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto d = CategoricalDist::projected(grid.atom(i), grid);
    if (d[i] != 1.0) ok = false;
  }
  ok = ok && worst < 1e-12;
  std::ostringstream os;
  os << "max mean error " << worst;
  return os.str();
}

std::string alpha_suite(bool& ok) {
  Rng rng(12);
  double worst_sum = 0.0;
  double worst_mean = 0.0;
  const SupportGrid grid(-30.0, 30.0, 121);
  for (int inst = 0; inst < 40; ++inst) {
    RandomMdpParams mp;
    mp.seed = rng.next_u64();
    const Environment env = make_random_mdp(mp);
    const TabularPolicy pi = random_policy(mp.n_states, mp.n_actions, rng);
    const TabularPolicy mu = random_policy(mp.n_states, mp.n_actions, rng);
    DistTable q(grid, mp.n_states, mp.n_actions);
    QTable means(mp.n_states, mp.n_actions);
    for (StateId s = 0; s < mp.n_states; ++s)
      for (ActionId a = 0; a < mp.n_actions; ++a) {
        // Mass only on atoms in [-5, 5] so shifted atoms stay interior.
        std::vector<double> p(grid.size(), 0.0);
        double total = 0.0;
        for (std::size_t j = 50; j <= 70; ++j) total += p[j] = rng.uniform();
        for (double& v : p) v /= total;
        q.set(s, a, p);
        means(s, a) = q.mean(s, a);
      }
    const SequenceRecord seq = sample_trajectory(env.mdp, mu, rng.index(mp.n_states), 8, rng);
    const TraceScheme scheme{TraceKind::retrace, 1.0};
    const auto expected = retrace_target_expected(means, seq, pi, scheme);
    const auto dist = distributional_retrace_targets(q, seq, pi, scheme);
    for (std::size_t t = 0; t < seq.length(); ++t) {
      worst_sum = std::max(worst_sum, std::abs(alpha_coefficients(seq, pi, scheme, t).sum() - 1.0));
      worst_mean = std::max(worst_mean, std::abs(mean(dist[t]) - expected[t]));
    }
  }
  ok = worst_sum < 1e-9 && worst_mean < 1e-9;
  std::ostringstream os;
  os << "max |sum alpha - 1| " << worst_sum << ", max mean gap " << worst_mean;
  return os.str();
}

std::string bias_suite(bool& ok, bool fault) {
  Rng rng(13);
  double worst = 0.0;
  for (int inst = 0; inst < 3; ++inst) {
    const PgContext ctx = random_pg_instance(rng, 4);
    BetaLooConfig cfg = inst == 2 ? BetaLooConfig::truncated(3.0) : BetaLooConfig::constant(0.5 + rng.uniform());
    cfg.fault_flip_correction = fault;
    worst = std::max(worst, measure_beta_loo_bias(ctx, cfg, 200000, rng).max_z);
  }
  ok = worst < 4.5;
  std::ostringstream os;
  os << "max z-score vs closed-form bias " << worst;
  return os.str();
}

std::string cpt_suite(bool& ok) {
  cpt_random_script(3000, 14, 1);
  ok = true;
  return "3000 ops, audited after each";
}

std::string gradient_suite(bool& ok) {
  const double kl = kl_gradient_rel_error(15);
  TrainerConfig loo;
  TrainerConfig tislr;
  tislr.pg_estimator = PgEstimator::tislr;
  tislr.critic_target = CriticTarget::expected;
  const double g1 = surrogate_gradient_rel_error(loo, 16);
  const double g2 = surrogate_gradient_rel_error(tislr, 17);
  ok = kl < 1e-6 && g1 < 1e-4 && g2 < 1e-4;
  std::ostringstream os;
  os << "kl " << kl << ", surrogate beta-loo " << g1 << ", surrogate tislr " << g2;
  return os.str();
}

}  // namespace

std::vector<SuiteResult> run_selftest_suites(const SelftestOptions& options) {
  std::vector<SuiteResult> out;
  out.push_back(timed("projection", projection_suite));
  out.push_back(timed("alpha_telescoping", alpha_suite));
  out.push_back(timed("beta_loo_bias", [&](bool& ok) { return bias_suite(ok, options.fault_flip_correction); }));
  out.push_back(timed("cpt_audit", cpt_suite));
  out.push_back(timed("gradient_check", gradient_suite));
  return out;
}

int run_selftest(const SelftestOptions& options, std::ostream& out) {
  bool all = true;
  for (const auto& r : run_selftest_suites(options)) {
    all = all && r.passed;
    out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(18) << r.name << ' ' << std::fixed
        << std::setprecision(2) << r.seconds << "s  " << std::defaultfloat << r.detail << '\n';
  }
  return all ? 0 : 1;
}

}  // namespace reactor::cli
