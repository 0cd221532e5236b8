// One PASS/FAIL line per acceptance criterion; exit status 0 iff all pass.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "reactor/agent.hpp"
#include "reactor/cli/commands.hpp"
#include "reactor/cli/experiment_config.hpp"
#include "reactor/cli/selftest.hpp"
#include "reactor/evalrank.hpp"
#include "reactor/priority_tree.hpp"
#include "reactor/replay.hpp"
#include "reactor/retrace.hpp"
#include "reactor/trainer.hpp"

using namespace reactor;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// 1. Iterated exact Retrace sweeps converge to Q^pi.
Outcome retrace_fixed_point() {
  Rng rng(101);
  double worst = 0.0;
  std::size_t max_sweeps = 0;
  for (int m = 0; m < 20; ++m) {
    RandomMdpParams p;
    p.n_states = 5;
    p.n_actions = 3;
    p.discount = 0.9;
    p.seed = rng.next_u64();
    const Environment env = make_random_mdp(p);
    const TabularPolicy pi = random_policy(5, 3, rng);
    TabularPolicy mu = random_policy(5, 3, rng);
    const QTable q_pi = solve_q_pi(env.mdp, pi);
    QTable q(5, 3, 0.0);
    double err = std::numeric_limits<double>::infinity();
    std::size_t sweeps = 0;
    while (err >= 1e-7 && sweeps < 1000) {
      q = oracle::retrace_operator(env.mdp, q, pi, mu, {TraceKind::retrace, 1.0}, 3);
      err = 0.0;
      for (std::size_t i = 0; i < q.values.size(); ++i) err = std::max(err, std::abs(q.values[i] - q_pi.values[i]));
      ++sweeps;
    }
    worst = std::max(worst, err);
    max_sweeps = std::max(max_sweeps, sweeps);
  }
  return {worst < 1e-6, "max |Q - Q^pi| " + fmt("%.2e", worst) + " after <= " + std::to_string(max_sweeps) +
                            " sweeps of 3-step Retrace"};
}

// 2. Mean of the distributional target equals the scalar target on interior supports.
Outcome expectation_consistency() {
  Rng rng(202);
  const SupportGrid grid(-30.0, 30.0, 121);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t ns = 4, na = 3;
    const TabularPolicy pi = random_policy(ns, na, rng);
    const TabularPolicy mu = random_policy(ns, na, rng);
    const SequenceRecord seq = oracle::random_sequence(rng, ns, na, 1 + rng.index(10), 0.95, 0.1, mu);
    // Mass on atoms 50..70 (values -5..5) keeps every shifted atom inside the grid.
    const DistTable q = oracle::random_dist_table(rng, grid, ns, na, 50, 71);
    QTable means(ns, na);
    for (StateId s = 0; s < ns; ++s)
      for (ActionId a = 0; a < na; ++a) means(s, a) = q.mean(s, a);
    const TraceScheme scheme{TraceKind::retrace, 0.5 + 0.5 * rng.uniform()};
    const auto scalar = retrace_target_expected(means, seq, pi, scheme);
    const auto dist = distributional_retrace_targets(q, seq, pi, scheme);
    for (std::size_t t = 0; t < scalar.size(); ++t) worst = std::max(worst, std::abs(mean(dist[t]) - scalar[t]));
  }
  return {worst < 1e-9, "max |mean - scalar| " + fmt("%.2e", worst) + " over 100 sequences"};
}

// 3. Alpha weights telescope to one; their expectation over behavior actions is nonnegative.
Outcome alpha_telescoping() {
  Rng rng(303);
  double worst_sum = 0.0;
  for (int i = 0; i < 200; ++i) {
    const TabularPolicy pi = random_policy(4, 3, rng);
    const TabularPolicy mu = random_policy(4, 3, rng);
    const SequenceRecord seq = oracle::random_sequence(rng, 4, 3, 1 + rng.index(12), 0.95, 0.1, mu);
    for (std::size_t t = 0; t < seq.length(); ++t)
      worst_sum = std::max(worst_sum, std::abs(alpha_coefficients(seq, pi, {TraceKind::retrace, 1.0}, t).sum() - 1.0));
  }

  double worst_z = std::numeric_limits<double>::infinity();
  const std::size_t draws = 100000;
  for (int inst = 0; inst < 5; ++inst) {
    const TabularPolicy pi = random_policy(4, 3, rng);
    const TabularPolicy mu = random_policy(4, 3, rng);
    SequenceRecord seq = oracle::random_sequence(rng, 4, 3, 6, 0.95, 0.0, mu);
    const std::size_t horizon = seq.length();
    std::vector<double> sum(horizon * 3, 0.0), sum_sq(horizon * 3, 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
      for (std::size_t s = 0; s < seq.length(); ++s) {
        seq.actions[s] = rng.categorical(mu.row(seq.states[s]));
        seq.behavior_probs[s] = mu.prob(seq.states[s], seq.actions[s]);
      }
      const AlphaCoefficients alpha = alpha_coefficients(seq, pi, {TraceKind::retrace, 1.0}, 0);
      for (std::size_t n = 1; n <= horizon; ++n)
        for (ActionId a = 0; a < 3; ++a) {
          const double v = alpha(n, a);
          sum[(n - 1) * 3 + a] += v;
          sum_sq[(n - 1) * 3 + a] += v * v;
        }
    }
    for (std::size_t k = 0; k < sum.size(); ++k) {
      const double m = sum[k] / draws;
      const double var = std::max(sum_sq[k] / draws - m * m, 0.0);
      const double se = std::sqrt(var / draws);
      if (se > 0.0) worst_z = std::min(worst_z, m / se);
      else if (m < -1e-12) worst_z = -std::numeric_limits<double>::infinity();
    }
  }
  const bool ok = worst_sum < 1e-9 && worst_z >= -3.0;
  return {ok, "max |sum alpha - 1| " + fmt("%.2e", worst_sum) + ", min z of E[alpha] " + fmt("%.2f", worst_z)};
}

// 4. beta-LOO bias matches its closed form; vanishes for beta = 1/mu or Q = Q^pi.
Outcome beta_loo_bias() {
  Rng rng(404);
  const std::size_t draws = 10000000;
  double worst = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    const PgContext ctx = cli::random_pg_instance(rng, 2 + rng.index(4));
    const BetaLooConfig cfg =
        inst % 2 ? BetaLooConfig::truncated(1.0 + 3.0 * rng.uniform()) : BetaLooConfig::constant(0.2 + rng.uniform());
    worst = std::max(worst, cli::measure_beta_loo_bias(ctx, cfg, draws, rng).max_z);
  }
  PgContext ctx = cli::random_pg_instance(rng, 4);
  const double z_inverse = cli::measure_beta_loo_bias(ctx, BetaLooConfig::truncated(1e12), draws, rng).max_zero_z;
  ctx.q_est = ctx.q_true;
  const double z_exact = cli::measure_beta_loo_bias(ctx, BetaLooConfig::constant(1.0), draws, rng).max_zero_z;
  const bool ok = worst < 3.0 && z_inverse < 3.0 && z_exact < 3.0;
  return {ok, "max z vs closed form " + fmt("%.2f", worst) + "; zero-bias z: beta=1/mu " + fmt("%.2f", z_inverse) +
                  ", Q=Q^pi " + fmt("%.2f", z_exact)};
}

// 5. Analytic gradients against central differences.
Outcome gradient_checks() {
  double kl = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) kl = std::max(kl, cli::kl_gradient_rel_error(s));
  TrainerConfig base;
  std::vector<TrainerConfig> configs(4, base);
  configs[1].critic_target = CriticTarget::expected;
  configs[2].pg_estimator = PgEstimator::tislr;
  configs[3].beta_loo = BetaLooConfig::truncated(2.0);
  configs[3].weight_policy_gradient = false;
  double surrogate = 0.0;
  for (std::size_t i = 0; i < configs.size(); ++i)
    surrogate = std::max(surrogate, cli::surrogate_gradient_rel_error(configs[i], 500 + i));
  return {kl < 1e-6 && surrogate < 1e-4,
          "KL rel err " + fmt("%.2e", kl) + ", learner surrogate rel err " + fmt("%.2e", surrogate)};
}

// 6. Contextual priority tree.
Outcome cpt_correctness() {
  std::vector<std::string> fails;
  // (a)
  try {
    cli::cpt_random_script(10000, 606, 1);
  } catch (const std::exception& e) {
    fails.push_back(std::string("(a) ") + e.what());
  }
  // (b)
  {
    Rng rng(607);
    ContextualPriorityTree tree;
    std::vector<double> p(500);
    double total = 0.0;
    for (SequenceKey k = 0; k < p.size(); ++k) {
      p[k] = rng.uniform() + 1e-3;
      total += p[k];
      tree.insert(k, p[k]);
    }
    double worst = 0.0;
    for (SequenceKey k = 0; k < p.size(); ++k) worst = std::max(worst, std::abs(tree.probability(k, 0.0) - p[k] / total));
    if (worst > 1e-12) fails.push_back("(b) deviation " + fmt("%.2e", worst));
  }
  // (c)
  {
    Rng rng(608);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      ContextualPriorityTree tree;
      std::vector<std::optional<double>> flat;
      const std::size_t n = 1 + rng.index(300);
      for (SequenceKey k = 0; k < n; ++k) {
        const auto pr = rng.uniform() < 0.25 ? std::optional<double>(rng.uniform() * 2.0) : std::nullopt;
        tree.insert(k, pr);
        flat.push_back(pr);
      }
      const auto want = oracle::midpoint_estimates(flat);
      if (want.empty()) continue;
      double total = 0.0;
      for (double v : want) total += v;
      for (SequenceKey k = 0; k < n; ++k) {
        worst = std::max(worst, std::abs(*tree.estimated_priority(k) - want[k]));
        if (total > 0.0)
          worst = std::max(worst, std::abs(tree.probability(k, 0.01) - (0.01 / n + 0.99 * want[k] / total)));
      }
    }
    if (worst > 1e-12) fails.push_back("(c) deviation " + fmt("%.2e", worst));
  }
  // (d)
  {
    Rng rng(609);
    ContextualPriorityTree tree;
    for (SequenceKey k = 0; k < 40; ++k)
      tree.insert(k, k % 3 == 0 ? std::optional<double>(0.1 + rng.uniform()) : std::nullopt);
    const std::size_t draws = 1000000;
    std::map<SequenceKey, std::size_t> counts;
    for (std::size_t i = 0; i < draws; ++i) {
      const double mix_u = rng.uniform();
      ++counts[tree.sample(mix_u, rng.uniform(), 0.01)];
    }
    double worst = 0.0;
    for (SequenceKey k : tree.keys()) {
      const double pk = tree.probability(k, 0.01);
      const double sd = std::sqrt(draws * pk * (1.0 - pk));
      worst = std::max(worst, std::abs(counts[k] - draws * pk) / sd);
    }
    if (worst > 4.0) fails.push_back("(d) max frequency z " + fmt("%.2f", worst));
  }
  // (e)
  {
    Rng rng(610);
    ReplayConfig rc;
    rc.capacity = 300;
    rc.sequence_length = 1;
    ReplayBuffer buf(rc);
    SequenceRecord rec;
    rec.states = {0, 0};
    rec.actions = {0};
    rec.rewards = {0.0};
    rec.discounts = {0.9};
    rec.behavior_probs = {1.0};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const SequenceKey k = buf.insert_sequence(rec);
      if (i % 4 == 0) buf.update_priority(k, rng.uniform());
      for (const auto& s : buf.sample(4, rng))
        worst = std::max(worst, std::abs(s.weight * s.probability * static_cast<double>(buf.size()) - 1.0));
    }
    if (worst > 1e-12) fails.push_back("(e) max |wPN - 1| " + fmt("%.2e", worst));
  }
  std::string detail = "(a) 10^4-op audited script, (b) proportional, (c) midpoint oracle, (d) 10^6 draws, (e) wPN = 1";
  for (const auto& f : fails) detail += "; FAILED " + f;
  return {fails.empty(), detail};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TrainingRuns {
  std::vector<double> prioritized_fraction;
  std::vector<double> prioritized_steps;  // steps to 95% of optimal, inf when never reached
  std::vector<double> uniform_steps;
  double seconds_prioritized = 0.0;
};

double steps_to_95(const TrainResult& r) {
  const auto s = cli::steps_to_threshold(r.metrics, 0.95);
  return s ? static_cast<double>(*s) : std::numeric_limits<double>::infinity();
}

TrainingRuns run_training() {
  cli::ExperimentConfig cfg =
      cli::parse_experiment_config_text(read_file(std::string(REACTOR_CONFIG_DIR) + "/gridworld.json"));
  cfg.trainer.metrics_interval = 250;
  const Environment env = cli::make_environment(cfg.environment);
  TrainingRuns runs;
  const auto start = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainResult r = train(env, cfg.trainer, cfg.total_steps, seed);
    runs.prioritized_fraction.push_back(greedy_fraction(env, r.params));
    runs.prioritized_steps.push_back(steps_to_95(r));
  }
  runs.seconds_prioritized = seconds_since(start);
  TrainerConfig uniform = cfg.trainer;
  uniform.prioritized = false;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    runs.uniform_steps.push_back(steps_to_95(train(env, uniform, cfg.total_steps, seed)));
  return runs;
}

std::string join(const std::vector<double>& v, const char* format) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt(format, x);
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 7.
Outcome end_to_end(const TrainingRuns& runs) {
  const auto good = std::count_if(runs.prioritized_fraction.begin(), runs.prioritized_fraction.end(),
                                  [](double f) { return f >= 0.95; });
  const bool ok = good >= 4 && runs.seconds_prioritized < 300.0;
  return {ok, std::to_string(good) + "/5 seeds >= 95% of optimal (fractions " +
                  join(runs.prioritized_fraction, "%.3f") + "), " + fmt("%.0f", runs.seconds_prioritized) + " s"};
}

// 8.
Outcome ablation_direction(const TrainingRuns& runs) {
  const double p = median(runs.prioritized_steps);
  const double u = median(runs.uniform_steps);
  return {p <= u, "median steps to 95%: prioritized " + fmt("%.0f", p) + " [" + join(runs.prioritized_steps, "%.0f") +
                      "], uniform " + fmt("%.0f", u) + " [" + join(runs.uniform_steps, "%.0f") + "]"};
}

// 9.
Outcome table_reproduction() {
  const cli::TablesReport report = cli::compute_tables(REACTOR_FIXTURE_DIR);
  std::ostringstream os;
  bool ok = report.missing_fixtures.empty() && report.errors.empty() && report.all_checked_pass();
  for (const auto& c : report.cells) {
    if (!c.checked) continue;
    os << c.fixture << ' ' << (c.metric == "elo_order" ? "elo order" : c.algorithm + " " + c.metric) << ' ';
    if (c.metric == "elo_order")
      os << static_cast<int>(c.actual) << " inversions" << (c.note.empty() ? "" : " (" + c.note + ")");
    else
      os << fmt("%.3f", c.actual) << " vs " << fmt("%.3f", c.expected);
    os << (c.passed ? " ok" : " MISMATCH") << "; ";
  }
  for (const auto& m : report.missing_fixtures) os << "missing " << m << "; ";
  for (const auto& e : report.errors) os << "error " << e << "; ";
  std::string detail = os.str();
  if (detail.size() >= 2) detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 10.
Outcome elo_calibration() {
  const double direct = std::abs(elo_win_probability(400.0) - 10.0 / 11.0);
  Eigen::MatrixXd w(2, 2);
  w << 0.0, 10.0, 1.0, 0.0;
  const EloResult fit = elo_from_wins(w, {"a", "b"}, "b");
  const double fitted = std::abs(elo_win_probability(fit.rating("a") - fit.rating("b")) - 10.0 / 11.0);
  Eigen::MatrixXd even(2, 2);
  even << 0.0, 0.5, 0.5, 0.0;
  const EloResult sym = elo_from_wins(even, {"a", "b"}, "a");
  const bool ok = direct < 1e-9 && fitted < 1e-9 && std::abs(sym.rating("b")) < 1e-9;
  return {ok, "|P(400) - 10/11| " + fmt("%.1e", direct) + ", 10:1 fit gives " + fmt("%.6f", fit.rating("a")) +
                  " points, |P(fit) - 10/11| " + fmt("%.1e", fitted)};
}

// 11.
Outcome concurrency() {
  const std::size_t workers = 4, per_worker = 100;
  const ParamStore initial(6, 3, 11);
  std::vector<std::vector<Delta>> deltas(workers);
  Rng rng(1101);
  for (auto& list : deltas)
    for (std::size_t i = 0; i < per_worker; ++i) {
      Delta d = Delta::zeros_like(initial);
      for (auto* v : {&d.policy_logits, &d.state_logits, &d.adv_logits})
        for (double& x : *v) x = rng.uniform() - 0.5;
      list.push_back(std::move(d));
    }
  SharedParamStore shared(initial);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      for (const Delta& d : deltas[w]) {
        const ParamStore snapshot = shared.snapshot();  // interleave reads with writes
        (void)snapshot;
        shared.apply(d);
      }
    });
  for (auto& t : threads) t.join();
  ParamStore serial = initial;
  for (const auto& list : deltas)
    for (const Delta& d : list) apply_delta(serial, d);
  const ParamStore result = shared.snapshot();
  double worst = 0.0;
  auto compare = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  compare(result.policy_logits(), serial.policy_logits());
  compare(result.state_logits(), serial.state_logits());
  compare(result.adv_logits(), serial.adv_logits());
  const bool store_ok = worst < 1e-9 && result.version() == workers * per_worker;

  // One writer inserting, one updater sampling and writing priorities, audits throughout.
  ReplayConfig rc;
  rc.capacity = 500;
  rc.sequence_length = 1;
  ReplayBuffer buf(rc);
  SequenceRecord rec;
  rec.states = {0, 0};
  rec.actions = {0};
  rec.rewards = {0.0};
  rec.discounts = {0.9};
  rec.behavior_probs = {1.0};
  std::atomic<bool> writer_done{false};
  std::atomic<std::size_t> audits{0};
  std::atomic<bool> audit_failed{false};
  std::string audit_error;
  std::thread writer([&] {
    for (int i = 0; i < 20000; ++i) buf.insert_sequence(rec);
    writer_done = true;
  });
  std::thread updater([&] {
    Rng local(1102);
    std::size_t round = 0;
    while (!writer_done) {
      if (buf.empty()) continue;
      for (const auto& s : buf.sample(4, local)) {
        try {
          buf.update_priority(s.key, local.uniform());
        } catch (const std::out_of_range&) {
        }
      }
      if (++round % 50 == 0) {
        try {
          buf.audit();
          ++audits;
        } catch (const std::exception& e) {
          audit_failed = true;
          audit_error = e.what();
        }
      }
    }
  });
  writer.join();
  updater.join();
  try {
    buf.audit();
    ++audits;
  } catch (const std::exception& e) {
    audit_failed = true;
    audit_error = e.what();
  }
  const bool replay_ok = !audit_failed && buf.size() == rc.capacity;
  std::string detail = "4 x 100 concurrent deltas, max deviation from serial " + fmt("%.1e", worst) +
                       "; replay stress " + std::to_string(audits.load()) + " audits passed";
  if (audit_failed) detail += ", audit failure: " + audit_error;
  return {store_ok && replay_ok, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0: no time bound
    std::function<Outcome()> run;
  };
  TrainingRuns runs;
  bool runs_ready = false;
  auto training = [&]() -> const TrainingRuns& {
    if (!runs_ready) {
      runs = run_training();
      runs_ready = true;
    }
    return runs;
  };

  const std::vector<Criterion> criteria = {
      {1, "Retrace fixed point", 10.0, retrace_fixed_point},
      {2, "expectation consistency", 5.0, expectation_consistency},
      {3, "alpha telescoping and sign", 30.0, alpha_telescoping},
      {4, "beta-LOO bias (Proposition 1)", 60.0, beta_loo_bias},
      {5, "gradient checks", 30.0, gradient_checks},
      {6, "CPT correctness", 120.0, cpt_correctness},
      {7, "end-to-end gridworld training", 0.0, [&] { return end_to_end(training()); }},
      {8, "ablation direction (prioritized vs uniform)", 0.0, [&] { return ablation_direction(training()); }},
      {9, "table reproduction from fixtures", 10.0, table_reproduction},
      {10, "Elo calibration", 0.0, elo_calibration},
      {11, "concurrency", 60.0, concurrency},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(start);
    if (c.budget_seconds > 0.0 && elapsed > c.budget_seconds) {
      out.passed = false;
      out.detail += "; over time budget of " + fmt("%.0f", c.budget_seconds) + " s";
    }
    if (!out.passed) ++failures;
    std::printf("%s  criterion %2d  %s: %s (%.1f s)\n", out.passed ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), elapsed);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
