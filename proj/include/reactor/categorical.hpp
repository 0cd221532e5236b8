#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace reactor {

/// Uniform grid of atoms z_i = v_min + i * (v_max - v_min) / (n_atoms - 1).
class SupportGrid {
 public:
  /// Throws std::invalid_argument when v_min >= v_max or n_atoms < 2.
  SupportGrid(double v_min, double v_max, std::size_t n_atoms);

  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  std::size_t size() const { return n_atoms_; }
  double spacing() const { return spacing_; }

  double atom(std::size_t i) const {
    return i + 1 == n_atoms_ ? v_max_ : v_min_ + static_cast<double>(i) * spacing_;
  }
  std::vector<double> atoms() const;

  bool operator==(const SupportGrid&) const = default;

 private:
  double v_min_;
  double v_max_;
  std::size_t n_atoms_;
  double spacing_;
};

inline SupportGrid make_grid(double v_min, double v_max, std::size_t n_atoms) {
  return SupportGrid(v_min, v_max, n_atoms);
}

/// Result of the interpolation kernel h: weight on (at most) two adjacent atoms.
/// When x lands on an atom or is clamped, upper == lower and upper_weight == 0.
struct Projection {
  std::size_t lower = 0;
  std::size_t upper = 0;
  double lower_weight = 1.0;
  double upper_weight = 0.0;
};

inline Projection project(double x, const SupportGrid& grid) {
  Projection p;
  const std::size_t last = grid.size() - 1;
  if (x <= grid.v_min()) {
    p.lower = p.upper = 0;
    return p;
  }
  if (x >= grid.v_max()) {
    p.lower = p.upper = last;
    return p;
  }
  const double pos = (x - grid.v_min()) / grid.spacing();
  auto lower = static_cast<std::size_t>(std::floor(pos));
  if (lower >= last) lower = last - 1;
  // Interpolate against the actual atom positions so on-atom inputs give an
  // exact unit weight.
  const double z_lo = grid.atom(lower);
  const double z_hi = grid.atom(lower + 1);
  const double frac = (x - z_lo) / (z_hi - z_lo);
  if (frac <= 0.0) {
    p.lower = p.upper = lower;
    return p;
  }
  if (frac >= 1.0) {
    p.lower = p.upper = lower + 1;
    return p;
  }
  p.lower = lower;
  p.upper = lower + 1;
  p.lower_weight = 1.0 - frac;
  p.upper_weight = frac;
  return p;
}

/// Adds `mass * h_{z_i}(x)` into `out` for every atom.
inline void accumulate_projection(double x, double mass, const SupportGrid& grid, std::span<double> out) {
  const Projection p = project(x, grid);
  out[p.lower] += mass * p.lower_weight;
  if (p.upper_weight != 0.0) out[p.upper] += mass * p.upper_weight;
}

/// Probabilities over a grid; nonnegative and summing to one.
class CategoricalDist {
 public:
  /// Throws std::invalid_argument on size mismatch, negative entries or a
  /// sum off by more than 1e-9.
  CategoricalDist(SupportGrid grid, std::vector<double> probs);

  /// Point mass projected onto the grid.
  static CategoricalDist projected(double x, const SupportGrid& grid);

  const SupportGrid& grid() const { return grid_; }
  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  SupportGrid grid_;
  std::vector<double> probs_;
};

/// Per-atom weights summing to one; individual entries may be negative.
class SignedTarget {
 public:
  SignedTarget(SupportGrid grid, std::vector<double> weights);

  const SupportGrid& grid() const { return grid_; }
  std::span<const double> weights() const { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

 private:
  SupportGrid grid_;
  std::vector<double> weights_;
};

struct Logits {
  std::vector<double> values;
};

/// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits);
CategoricalDist softmax_dist(const SupportGrid& grid, const Logits& logits);

double mean(const SupportGrid& grid, std::span<const double> weights);
inline double mean(const CategoricalDist& d) { return mean(d.grid(), d.probs()); }
inline double mean(const SignedTarget& t) { return mean(t.grid(), t.weights()); }

struct KlLossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Cross-entropy -sum_i q*_i log softmax(logits)_i and its gradient
/// softmax(logits) - q* with respect to the logits. The constant target
/// entropy is omitted, which keeps the loss defined for signed targets.
KlLossAndGrad kl_loss_and_grad(const SignedTarget& target, const Logits& logits);
KlLossAndGrad kl_loss_and_grad(std::span<const double> target, std::span<const double> logits);

/// Sum of absolute per-atom differences. Throws on grid mismatch.
double total_variation(const SupportGrid& grid_a, std::span<const double> a,
                       const SupportGrid& grid_b, std::span<const double> b);

template <typename A, typename B>
double total_variation(const A& a, const B& b) {
  if constexpr (requires { a.probs(); }) {
    if constexpr (requires { b.probs(); })
      return total_variation(a.grid(), a.probs(), b.grid(), b.probs());
    else
      return total_variation(a.grid(), a.probs(), b.grid(), b.weights());
  } else {
    if constexpr (requires { b.probs(); })
      return total_variation(a.grid(), a.weights(), b.grid(), b.probs());
    else
      return total_variation(a.grid(), a.weights(), b.grid(), b.weights());
  }
}

/// Table of categorical distributions indexed by (state, action).
class DistTable {
 public:
  DistTable(SupportGrid grid, std::size_t n_states, std::size_t n_actions);

  const SupportGrid& grid() const { return grid_; }
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  std::span<const double> dist(std::size_t s, std::size_t a) const {
    return {probs_.data() + (s * n_actions_ + a) * grid_.size(), grid_.size()};
  }
  std::span<double> dist(std::size_t s, std::size_t a) {
    return {probs_.data() + (s * n_actions_ + a) * grid_.size(), grid_.size()};
  }
  void set(std::size_t s, std::size_t a, std::span<const double> probs);
  double mean(std::size_t s, std::size_t a) const { return reactor::mean(grid_, dist(s, a)); }

 private:
  SupportGrid grid_;
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

}  // namespace reactor
