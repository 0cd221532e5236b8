#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace reactor {

using SequenceKey = std::uint64_t;

/// Summary statistics of a temporally ordered run of keys.
///
/// Unassigned keys take the priority of the cell they fall in. Cells are
/// delimited by the rank midpoints between consecutive assigned keys; a gap of
/// g unassigned keys gives ceil(g/2) keys to the earlier assigned key and the
/// rest to the later one. Leading and trailing unassigned keys are left open
/// here and resolved once the neighbouring context is known.
struct PrioritySummary {
  std::size_t count = 0;
  std::size_t known_count = 0;
  double known_mass = 0.0;

  // Meaningful only when known_count > 0.
  std::size_t lead = 0;     // unassigned keys before the first assigned key
  std::size_t trail = 0;    // unassigned keys after the last assigned key
  double first = 0.0;       // priority of the first assigned key
  double last = 0.0;        // priority of the last assigned key
  double inner_mass = 0.0;  // estimated mass from first to last assigned key, inclusive

  static PrioritySummary of_key(std::optional<double> priority);
};

/// Concatenation of two adjacent runs. Associative.
PrioritySummary combine(const PrioritySummary& left, const PrioritySummary& right);

/// Nearest assigned key outside a run, `gap` unassigned keys away from its edge.
struct PriorityNeighbor {
  bool present = false;
  double priority = 0.0;
  std::size_t gap = 0;
};

/// Estimated priority mass of a run given its outside neighbors.
double context_mass(const PrioritySummary& run, const PriorityNeighbor& left, const PriorityNeighbor& right);

/// AVL tree over sequence keys in temporal order with lazily estimated
/// priorities (the Contextual Priority Tree).
///
/// Sampling, insertion, deletion and density queries are O(log n). Once
/// every key has an assigned priority it reduces to plain proportional
/// sampling. With no assigned priority anywhere (or zero total mass) the
/// tree is in uniform mode.
class ContextualPriorityTree {
 public:
  ContextualPriorityTree();
  ~ContextualPriorityTree();
  ContextualPriorityTree(ContextualPriorityTree&&) noexcept;
  ContextualPriorityTree& operator=(ContextualPriorityTree&&) noexcept;

  /// Throws std::invalid_argument on a duplicate key or invalid priority.
  void insert(SequenceKey key, std::optional<double> priority = std::nullopt);
  /// Throws std::out_of_range for an unknown key.
  void erase(SequenceKey key);
  /// Removes the key and places it back as a fresh leaf carrying `priority`.
  void set_priority(SequenceKey key, double priority);

  bool contains(SequenceKey key) const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::size_t height() const;
  std::size_t known_count() const;
  bool uniform_mode() const;

  std::optional<double> assigned_priority(SequenceKey key) const;
  /// Stored priority for assigned keys, the cell estimate otherwise;
  /// nullopt in uniform mode. Throws std::out_of_range for an unknown key.
  std::optional<double> estimated_priority(SequenceKey key) const;
  /// Sum of estimated priorities over all keys.
  double total_mass() const;

  /// epsilon / N + (1 - epsilon) p_hat(key) / total_mass, or 1 / N in uniform mode.
  double probability(SequenceKey key, double epsilon) const;

  /// One draw: `mix_u` < epsilon (or uniform mode) selects uniformly by rank
  /// using `pos_u`, otherwise `pos_u` walks the tree proportionally to mass.
  /// Both variates in [0, 1). Throws std::out_of_range on an empty tree.
  SequenceKey sample(double mix_u, double pos_u, double epsilon) const;

  SequenceKey min_key() const;
  std::vector<SequenceKey> keys() const;
  std::size_t depth_of(SequenceKey key) const;
  double mean_depth() const;

  /// Full audit: AVL balance, heights, key order and every node summary
  /// against a from-scratch fold of its subtree. Throws std::logic_error.
  void audit() const;

 private:
  friend struct TreeOps;
  struct Node;
  std::unique_ptr<Node> root_;
};

}  // namespace reactor
