#include "reactor/evalrank.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace reactor {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

constexpr double kEloClamp = 1000.0;

}  // namespace

ScoreTable ScoreTable::parse_csv(std::string_view text) {
  ScoreTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument("score table line " + std::to_string(line_no) + ": " + what);
    };
    if (!header) {
      if (fields != std::vector<std::string>{"game", "algorithm", "score"})
        fail("expected header game,algorithm,score");
      header = true;
      continue;
    }
    if (fields.size() != 3) fail("expected 3 fields");
    if (fields[0].empty() || fields[1].empty()) fail("empty game or algorithm");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[2], &used);
      if (used != fields[2].size()) fail("bad score '" + fields[2] + "'");
    } catch (const std::logic_error&) {
      fail("bad score '" + fields[2] + "'");
    }
    if (!std::isfinite(value)) fail("non-finite score");
    if (table.score(fields[0], fields[1])) fail("duplicate entry " + fields[0] + "/" + fields[1]);
    table.set(fields[0], fields[1], value);
  }
  if (!header) throw std::invalid_argument("score table: missing header");
  return table;
}

void ScoreTable::set(const std::string& game, const std::string& algorithm, double score) {
  if (!std::isfinite(score)) throw std::invalid_argument("ScoreTable: non-finite score");
  if (std::find(games_.begin(), games_.end(), game) == games_.end()) games_.push_back(game);
  if (!has_algorithm(algorithm)) algorithms_.push_back(algorithm);
  scores_[{game, algorithm}] = score;
}

std::optional<double> ScoreTable::score(const std::string& game, const std::string& algorithm) const {
  const auto it = scores_.find({game, algorithm});
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

bool ScoreTable::has_algorithm(const std::string& name) const {
  return std::find(algorithms_.begin(), algorithms_.end(), name) != algorithms_.end();
}

void ScoreTable::require_algorithms(const std::vector<std::string>& names) const {
  for (const auto& n : names)
    if (!has_algorithm(n)) throw std::invalid_argument("score table: missing algorithm column '" + n + "'");
}

ScoreTable ScoreTable::select(const std::vector<std::string>& names) const {
  require_algorithms(names);
  ScoreTable out;
  out.games_ = games_;
  out.algorithms_ = names;
  for (const auto& [key, value] : scores_)
    if (std::find(names.begin(), names.end(), key.second) != names.end()) out.scores_[key] = value;
  return out;
}

double human_normalized(double score, double random, double human) {
  if (human == random) throw std::invalid_argument("human_normalized: human score equals random score");
  return (score - random) / (human - random);
}

std::map<std::string, double> median_normalized(const ScoreTable& table, const std::string& random,
                                                const std::string& human) {
  table.require_algorithms({random, human});
  std::map<std::string, double> out;
  for (const auto& alg : table.algorithms()) {
    std::vector<double> values;
    for (const auto& game : table.games()) {
      const auto r = table.score(game, random);
      const auto h = table.score(game, human);
      const auto s = table.score(game, alg);
      if (!r || !h || !s) continue;
      values.push_back(human_normalized(*s, *r, *h));
    }
    if (values.empty()) continue;
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    out[alg] = m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
  }
  return out;
}

std::map<std::string, double> mean_rank(const ScoreTable& table) {
  const auto& algs = table.algorithms();
  std::vector<double> total(algs.size(), 0.0);
  for (const auto& game : table.games()) {
    std::vector<double> scores(algs.size());
    for (std::size_t i = 0; i < algs.size(); ++i) {
      const auto s = table.score(game, algs[i]);
      if (!s) throw std::invalid_argument("mean_rank: missing score for " + algs[i] + " on " + game);
      scores[i] = *s;
    }
    for (std::size_t i = 0; i < algs.size(); ++i) {
      std::size_t higher = 0;
      std::size_t equal = 0;
      for (std::size_t j = 0; j < algs.size(); ++j) {
        if (scores[j] > scores[i]) ++higher;
        if (scores[j] == scores[i]) ++equal;
      }
      total[i] += static_cast<double>(higher) + 0.5 * static_cast<double>(equal + 1);
    }
  }
  std::map<std::string, double> out;
  const double n_games = static_cast<double>(table.games().size());
  for (std::size_t i = 0; i < algs.size(); ++i) out[algs[i]] = n_games > 0 ? total[i] / n_games : 0.0;
  return out;
}

Eigen::MatrixXd win_matrix(const ScoreTable& table) {
  const auto& algs = table.algorithms();
  const auto n = static_cast<Eigen::Index>(algs.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& game : table.games())
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = table.score(game, algs[static_cast<std::size_t>(i)]);
      if (!si) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto sj = table.score(game, algs[static_cast<std::size_t>(j)]);
        if (!sj) continue;
        if (*si > *sj)
          w(i, j) += 1.0;
        else if (*si == *sj)
          w(i, j) += 0.5;
      }
    }
  return w;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  // Polish with Newton steps on the CDF.
  for (int i = 0; i < 3; ++i) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (pdf <= 0.0) break;
    x -= (normal_cdf(x) - p) / pdf;
  }
  return x;
}

double elo_scale() {
  static const double s = 400.0 / normal_quantile(10.0 / 11.0);
  return s;
}

double elo_win_probability(double diff) { return normal_cdf(diff / elo_scale()); }

double EloResult::rating(const std::string& name) const {
  for (std::size_t i = 0; i < algorithms.size(); ++i)
    if (algorithms[i] == name) return ratings[i];
  throw std::out_of_range("EloResult: unknown algorithm " + name);
}

EloResult elo_from_wins(const Eigen::MatrixXd& wins, const std::vector<std::string>& names, const std::string& anchor) {
  const auto n = static_cast<Eigen::Index>(names.size());
  if (n < 2) throw std::invalid_argument("elo: need at least two algorithms");
  if (wins.rows() != n || wins.cols() != n) throw std::invalid_argument("elo: win matrix shape mismatch");
  const auto anchor_it = std::find(names.begin(), names.end(), anchor);
  if (anchor_it == names.end()) throw std::invalid_argument("elo: unknown anchor " + anchor);
  const auto k = static_cast<Eigen::Index>(anchor_it - names.begin());
  const double s = elo_scale();

  auto nll = [&](const Eigen::VectorXd& r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && wins(i, j) > 0.0) total -= wins(i, j) * std::log(normal_cdf((r(i) - r(j)) / s));
    return total;
  };

  EloResult result;
  result.algorithms = names;
  result.anchor = anchor;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  double current = nll(r);
  for (std::size_t iter = 0; iter < 500; ++iter) {
    result.iterations = iter + 1;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j || wins(i, j) <= 0.0) continue;
        const double d = (r(i) - r(j)) / s;
        const double pdf = std::exp(-0.5 * d * d) / std::sqrt(2.0 * std::numbers::pi);
        const double mills = pdf / normal_cdf(d);
        // d/dd of -log Phi(d) is -mills; second derivative mills (d + mills).
        const double g = -wins(i, j) * mills / s;
        const double h = wins(i, j) * mills * (d + mills) / (s * s);
        grad(i) += g;
        grad(j) -= g;
        hess(i, i) += h;
        hess(j, j) += h;
        hess(i, j) -= h;
        hess(j, i) -= h;
      }
    // Pin the anchor by solving over the remaining coordinates only.
    hess.row(k).setZero();
    hess.col(k).setZero();
    hess(k, k) = 1.0;
    grad(k) = 0.0;
    hess.diagonal().array() += 1e-12;
    Eigen::VectorXd step = -hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next;
    double value = current;
    for (int ls = 0; ls < 60; ++ls) {
      next = (r + t * step).cwiseMax(-kEloClamp).cwiseMin(kEloClamp);
      value = nll(next);
      if (value <= current + 1e-12) break;
      t *= 0.5;
    }
    const double change = (next - r).cwiseAbs().maxCoeff();
    r = next;
    current = value;
    if (change < 1e-6) break;
  }
  r.array() -= r(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(r(i)) >= kEloClamp - 1e-9) result.degenerate = true;
    r(i) = std::clamp(r(i), -kEloClamp, kEloClamp);
  }
  result.ratings.assign(r.data(), r.data() + n);
  return result;
}

EloResult elo(const ScoreTable& table, const std::string& anchor) {
  return elo_from_wins(win_matrix(table), table.algorithms(), anchor);
}

}  // namespace reactor
