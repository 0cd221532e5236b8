#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "reactor/mdp.hpp"
#include "reactor/priority_tree.hpp"
#include "reactor/random.hpp"

namespace reactor {

struct ReplayConfig {
  std::size_t capacity = 100000;
  std::size_t sequence_length = 33;
  double epsilon_sample = 0.01;     // probability of a uniform draw
  double priority_exponent = 1.0;   // alpha, applied when a priority is written
  double is_exponent = 1.0;         // beta of the importance weights
  std::size_t stride = 1;           // start-position spacing of stored windows

  void validate() const;
};

struct SampleOut {
  SequenceKey key = 0;
  double probability = 0.0;
  double weight = 0.0;
  SequenceRecord record;
};

/// Prioritized sequence replay with lazy priority initialization.
///
/// Sequences enter with no priority and receive one after their first pass
/// through the learner. Operations are linearizable: each takes the buffer
/// lock for its own duration only, so one acting thread and one learning
/// thread may share a buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig config);

  const ReplayConfig& config() const { return config_; }

  /// Appends a sequence with no priority, evicting the oldest key at capacity.
  SequenceKey insert_sequence(SequenceRecord record);

  /// Stores priority^alpha after removing and re-inserting the key as a leaf.
  /// Throws std::out_of_range for unknown keys.
  void update_priority(SequenceKey key, double priority);

  /// Stored priority for assigned keys, the lazy estimate otherwise; nullopt
  /// while no key has a priority (uniform mode).
  std::optional<double> estimated_priority(SequenceKey key) const;
  bool has_assigned_priority(SequenceKey key) const;

  /// Draws `batch` sequences with replacement. Throws std::out_of_range when empty.
  std::vector<SampleOut> sample(std::size_t batch, Rng& rng) const;

  double probability_of(SequenceKey key) const;
  void delete_key(SequenceKey key);

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::vector<SequenceKey> keys() const;
  std::size_t tree_height() const;
  double mean_depth() const;

  /// Throws std::logic_error if the tree or its agreement with storage is broken.
  void audit() const;

  /// One line per key: key<TAB>assigned|estimated<TAB>priority<TAB>probability.
  std::string dump() const;

 private:
  ReplayConfig config_;
  mutable std::mutex mutex_;
  SequenceKey next_key_ = 0;
  ContextualPriorityTree tree_;
  std::map<SequenceKey, SequenceRecord> storage_;
};

}  // namespace reactor
