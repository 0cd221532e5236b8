#include "reactor/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "reactor/evalrank.hpp"

namespace reactor::cli {

using nlohmann::json;
namespace fs = std::filesystem;

void apply_overrides(ExperimentConfig& cfg, const TrainOverrides& overrides) {
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.workers) cfg.trainer.workers = *overrides.workers;
  if (overrides.deterministic) cfg.trainer.deterministic = *overrides.deterministic;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "step,episodes,mean_return,critic_loss,entropy,buffer_size,version\n";
  for (const auto& r : rows)
    out << r.step << ',' << r.episodes << ',' << format_double(r.mean_return) << ',' << format_double(r.critic_loss)
        << ',' << format_double(r.entropy) << ',' << r.buffer_size << ',' << r.version << '\n';
}

std::optional<std::size_t> steps_to_threshold(const std::vector<MetricsRow>& rows, double threshold) {
  for (const auto& r : rows)
    if (r.greedy_fraction >= threshold) return r.step;
  return std::nullopt;
}

json make_summary(const ExperimentConfig& cfg, const TrainResult& result, const Environment& env) {
  const QTable q_star = solve_q_star(env.mdp);
  const double optimal = state_value(q_star, greedy_policy(q_star), env.start);
  const TabularPolicy greedy = greedy_actor_policy(result.params);
  const double achieved = state_value(solve_q_pi(env.mdp, greedy), greedy, env.start);
  const auto reached = steps_to_threshold(result.metrics, 0.95);
  return {
      {"config", to_json(cfg)},
      {"final_mean_return", number_or_null(result.metrics.empty() ? NAN : result.metrics.back().mean_return)},
      {"fraction_of_optimal", number_or_null(achieved / optimal)},
      {"greedy_value", achieved},
      {"optimal_value", optimal},
      {"env_steps", result.env_steps},
      {"learner_steps", result.learner_steps},
      {"target_updates", result.target_updates},
      {"steps_to_95_percent_optimal", reached ? json(*reached) : json(nullptr)},
  };
}

int run_train(const std::string& config_path, const TrainOverrides& overrides, std::ostream& out, std::ostream& err) {
  const auto text = read_file(config_path);
  if (!text) {
    err << "error: cannot read config file " << config_path << '\n';
    return kUsage;
  }
  ExperimentConfig cfg;
  std::optional<Environment> env;
  try {
    cfg = parse_experiment_config_text(*text);
    apply_overrides(cfg, overrides);
    cfg.trainer.validate();
    env.emplace(make_environment(cfg.environment));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  const fs::path base = overrides.out_dir ? fs::path(*overrides.out_dir) : fs::path(".");
  const fs::path metrics_path = base / cfg.output.metrics_csv;
  const fs::path summary_path = base / cfg.output.summary_json;
  std::error_code ec;
  for (const auto& p : {metrics_path, summary_path})
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);

  const TrainResult result = train(*env, cfg.trainer, cfg.total_steps, cfg.seed);

  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) {
    err << "error: cannot write " << metrics_path.string() << '\n';
    return kUsage;
  }
  write_metrics_csv(metrics, result.metrics);
  const json summary = make_summary(cfg, result, *env);
  std::ofstream summary_out(summary_path, std::ios::binary);
  if (!summary_out) {
    err << "error: cannot write " << summary_path.string() << '\n';
    return kUsage;
  }
  summary_out << summary.dump(2) << '\n';

  out << "env_steps " << result.env_steps << ", learner_steps " << result.learner_steps << ", fraction_of_optimal "
      << format_double(summary["fraction_of_optimal"].is_null() ? NAN : summary["fraction_of_optimal"].get<double>())
      << '\n'
      << "wrote " << metrics_path.string() << " and " << summary_path.string() << '\n';
  return kSuccess;
}

namespace {

struct PaperRow {
  const char* algorithm;
  double normalized;
  double mean_rank;
  double elo;
};

struct PaperTable {
  const char* fixture;
  const char* file;
  std::vector<PaperRow> rows;
};

// Rows whose algorithm has no fixture column (A3C, ACER) are left out.
const std::vector<PaperTable>& paper_tables() {
  static const std::vector<PaperTable> tables = {
      {"human_starts",
       "scores_human_starts.csv",
       {{"Random", 0.00, 11.65, -563},
        {"Human", 1.00, 6.82, 0},
        {"DQN", 0.69, 9.05, -172},
        {"DDQN", 1.11, 7.63, -58},
        {"Duel", 1.17, 6.35, 32},
        {"Prior", 1.13, 6.63, 13},
        {"Prior. Duel.", 1.15, 6.25, 40},
        {"Rainbow", 1.53, 4.18, 186},
        {"Reactor ND", 1.51, 4.98, 126},
        {"Reactor", 1.65, 4.58, 156},
        {"Reactor 500m", 1.82, 3.65, 227}}},
      {"noop_starts",
       "scores_noop_starts.csv",
       {{"Random", 0.00, 10.93, -673},
        {"Human", 1.00, 6.89, 0},
        {"DQN", 0.79, 8.65, -167},
        {"DDQN", 1.18, 7.28, -27},
        {"Duel", 1.51, 5.19, 143},
        {"Prior", 1.24, 6.11, 70},
        {"Prior. Duel.", 1.72, 5.44, 126},
        {"Rainbow", 2.31, 3.63, 270},
        {"Reactor ND", 1.80, 4.53, 195},
        {"Reactor", 1.87, 4.46, 196},
        {"Reactor 500m", 2.30, 3.47, 280}}},
  };
  return tables;
}

constexpr double kNormalizedTol = 0.02;
constexpr double kRankTol = 0.05;
constexpr double kEloTol = 30.0;

}  // namespace

bool TablesReport::all_checked_pass() const {
  return std::all_of(cells.begin(), cells.end(), [](const TableCell& c) { return !c.checked || c.passed; });
}

TablesReport compute_tables(const fs::path& fixtures_dir) {
  TablesReport report;
  for (const auto& paper : paper_tables()) {
    const fs::path path = fixtures_dir / paper.file;
    const auto text = read_file(path);
    if (!text) {
      report.missing_fixtures.push_back(path.string());
      continue;
    }
    try {
      std::vector<std::string> names;
      for (const auto& row : paper.rows) names.push_back(row.algorithm);
      const ScoreTable table = ScoreTable::parse_csv(*text);
      table.require_algorithms(names);
      const ScoreTable ranked = table.select(names);
      const auto medians = median_normalized(ranked);
      const auto ranks = mean_rank(ranked);
      const EloResult ratings = elo(ranked, "Human");

      for (const auto& row : paper.rows) {
        const bool checked = std::string(row.algorithm) == "Reactor";
        auto add = [&](const char* metric, double expected, double actual, double tol) {
          TableCell c;
          c.fixture = paper.fixture;
          c.algorithm = row.algorithm;
          c.metric = metric;
          c.expected = expected;
          c.actual = actual;
          c.tolerance = tol;
          c.checked = checked;
          c.passed = std::abs(actual - expected) <= tol;
          report.cells.push_back(c);
        };
        add("normalized", row.normalized, medians.at(row.algorithm), kNormalizedTol);
        add("mean_rank", row.mean_rank, ranks.at(row.algorithm), kRankTol);
        add("elo", row.elo, ratings.rating(row.algorithm), kEloTol);
      }

      // Pairs the fit orders differently from the paper.
      std::vector<PaperRow> by_paper(paper.rows.begin(), paper.rows.end());
      std::sort(by_paper.begin(), by_paper.end(), [](const PaperRow& a, const PaperRow& b) { return a.elo < b.elo; });
      TableCell order;
      order.fixture = paper.fixture;
      order.algorithm = "*";
      order.metric = "elo_order";
      order.checked = true;
      std::size_t inversions = 0;
      for (std::size_t i = 0; i < by_paper.size(); ++i)
        for (std::size_t j = i + 1; j < by_paper.size(); ++j)
          if (ratings.rating(by_paper[i].algorithm) >= ratings.rating(by_paper[j].algorithm)) {
            ++inversions;
            if (!order.note.empty()) order.note += "; ";
            order.note += std::string(by_paper[j].algorithm) + " <= " + by_paper[i].algorithm;
          }
      order.actual = static_cast<double>(inversions);
      order.passed = inversions == 0;
      report.cells.push_back(order);
    } catch (const std::exception& e) {
      report.errors.push_back(path.string() + ": " + e.what());
    }
  }
  return report;
}

int run_tables(const fs::path& fixtures_dir, std::ostream& out, std::ostream& err) {
  const TablesReport report = compute_tables(fixtures_dir);
  out << std::fixed;
  std::string fixture;
  for (const auto& c : report.cells) {
    if (c.fixture != fixture) {
      fixture = c.fixture;
      out << "== " << fixture << '\n';
    }
    const char* verdict = !c.checked ? "info" : c.passed ? "PASS" : "FAIL";
    if (c.metric == "elo_order") {
      out << "  " << std::left << std::setw(5) << verdict << " elo order: " << static_cast<int>(c.actual)
          << " inverted pair(s)" << (c.note.empty() ? "" : " (" + c.note + ")") << '\n';
      continue;
    }
    out << "  " << std::left << std::setw(5) << verdict << ' ' << std::setw(13) << c.algorithm << ' ' << std::setw(10)
        << c.metric << " actual " << std::setprecision(c.metric == "elo" ? 1 : 3) << std::right << std::setw(8)
        << c.actual << "  paper " << std::setw(8) << c.expected << '\n';
  }
  for (const auto& m : report.missing_fixtures) err << "error: missing fixture " << m << '\n';
  for (const auto& e : report.errors) err << "error: " << e << '\n';
  if (!report.missing_fixtures.empty() || !report.errors.empty()) return kUsage;
  return report.all_checked_pass() ? kSuccess : kFailure;
}

}  // namespace reactor::cli
