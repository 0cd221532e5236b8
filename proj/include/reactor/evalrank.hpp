#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace reactor {

/// Per-game scores of several algorithms; entries may be missing.
class ScoreTable {
 public:
  /// Parses CSV text with header `game,algorithm,score`. Games and algorithms
  /// keep their order of first appearance. Throws std::invalid_argument with
  /// the offending line on malformed input, duplicates or non-finite scores.
  static ScoreTable parse_csv(std::string_view text);

  void set(const std::string& game, const std::string& algorithm, double score);
  std::optional<double> score(const std::string& game, const std::string& algorithm) const;

  const std::vector<std::string>& games() const { return games_; }
  const std::vector<std::string>& algorithms() const { return algorithms_; }
  bool has_algorithm(const std::string& name) const;

  /// Throws std::invalid_argument naming the first absent algorithm.
  void require_algorithms(const std::vector<std::string>& names) const;

  /// Copy restricted to the given algorithms, in that order.
  ScoreTable select(const std::vector<std::string>& names) const;

 private:
  std::vector<std::string> games_;
  std::vector<std::string> algorithms_;
  std::map<std::pair<std::string, std::string>, double> scores_;
};

/// (score - random) / (human - random). Throws std::invalid_argument when human == random.
double human_normalized(double score, double random, double human);

/// Median over games of each algorithm's human-normalized score. Games with a
/// missing entry for an algorithm are skipped for that algorithm.
std::map<std::string, double> median_normalized(const ScoreTable& table, const std::string& random = "Random",
                                                const std::string& human = "Human");

/// Mean over games of per-game ranks (1 = highest score, ties share the
/// average rank). Throws std::invalid_argument on a missing entry.
std::map<std::string, double> mean_rank(const ScoreTable& table);

/// W(i, j) = games where algorithm i beats j, plus half the ties, over games
/// where both have scores. Rows follow table.algorithms().
Eigen::MatrixXd win_matrix(const ScoreTable& table);

double normal_cdf(double x);
/// Inverse of normal_cdf for p in (0, 1).
double normal_quantile(double p);

/// Probit scale s with normal_cdf(400 / s) = 10 / 11.
double elo_scale();
/// Model probability that a player rated `diff` points higher wins.
double elo_win_probability(double diff);

struct EloResult {
  std::vector<std::string> algorithms;
  std::vector<double> ratings;
  std::string anchor;
  std::size_t iterations = 0;
  /// Set when some rating is unbounded under maximum likelihood and was clamped to +-1000.
  bool degenerate = false;

  double rating(const std::string& name) const;
};

/// Maximum-likelihood probit ratings for a win matrix, shifted so `anchor`
/// is 0. Iterates damped Newton steps until the largest change is < 1e-6.
EloResult elo_from_wins(const Eigen::MatrixXd& wins, const std::vector<std::string>& names, const std::string& anchor);

EloResult elo(const ScoreTable& table, const std::string& anchor);

}  // namespace reactor
