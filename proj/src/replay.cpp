#include "reactor/replay.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace reactor {

void ReplayConfig::validate() const {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (sequence_length == 0) throw std::invalid_argument("replay sequence_length must be positive");
  if (!(epsilon_sample >= 0.0 && epsilon_sample <= 1.0))
    throw std::invalid_argument("replay epsilon_sample must be in [0, 1]");
  if (!(priority_exponent >= 0.0)) throw std::invalid_argument("replay priority_exponent must be >= 0");
  if (stride == 0) throw std::invalid_argument("replay stride must be positive");
}

ReplayBuffer::ReplayBuffer(ReplayConfig config) : config_(config) { config_.validate(); }

SequenceKey ReplayBuffer::insert_sequence(SequenceRecord record) {
  record.validate();
  std::lock_guard lock(mutex_);
  // Evict from the tree before dropping storage so the two never disagree.
  while (storage_.size() >= config_.capacity) {
    const SequenceKey oldest = storage_.begin()->first;
    tree_.erase(oldest);
    storage_.erase(storage_.begin());
  }
  const SequenceKey key = next_key_++;
  tree_.insert(key);
  storage_.emplace(key, std::move(record));
  return key;
}

void ReplayBuffer::update_priority(SequenceKey key, double priority) {
  if (!(priority >= 0.0) || !std::isfinite(priority))
    throw std::invalid_argument("update_priority: priority must be finite and >= 0");
  std::lock_guard lock(mutex_);
  tree_.set_priority(key, std::pow(priority, config_.priority_exponent));
}

std::optional<double> ReplayBuffer::estimated_priority(SequenceKey key) const {
  std::lock_guard lock(mutex_);
  return tree_.estimated_priority(key);
}

bool ReplayBuffer::has_assigned_priority(SequenceKey key) const {
  std::lock_guard lock(mutex_);
  return tree_.assigned_priority(key).has_value();
}

std::vector<SampleOut> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (tree_.empty()) throw std::out_of_range("ReplayBuffer::sample: empty buffer");
  const double n = static_cast<double>(tree_.size());
  std::vector<SampleOut> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const double mix_u = rng.uniform();
    const double pos_u = rng.uniform();
    SampleOut s;
    s.key = tree_.sample(mix_u, pos_u, config_.epsilon_sample);
    s.probability = tree_.probability(s.key, config_.epsilon_sample);
    s.weight = std::pow(1.0 / (n * s.probability), config_.is_exponent);
    s.record = storage_.at(s.key);
    out.push_back(std::move(s));
  }
  return out;
}

double ReplayBuffer::probability_of(SequenceKey key) const {
  std::lock_guard lock(mutex_);
  return tree_.probability(key, config_.epsilon_sample);
}

void ReplayBuffer::delete_key(SequenceKey key) {
  std::lock_guard lock(mutex_);
  tree_.erase(key);
  storage_.erase(key);
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return tree_.size();
}

std::vector<SequenceKey> ReplayBuffer::keys() const {
  std::lock_guard lock(mutex_);
  return tree_.keys();
}

std::size_t ReplayBuffer::tree_height() const {
  std::lock_guard lock(mutex_);
  return tree_.height();
}

double ReplayBuffer::mean_depth() const {
  std::lock_guard lock(mutex_);
  return tree_.mean_depth();
}

void ReplayBuffer::audit() const {
  std::lock_guard lock(mutex_);
  tree_.audit();
  if (tree_.size() != storage_.size()) throw std::logic_error("replay audit: tree and storage sizes differ");
  auto it = storage_.begin();
  for (SequenceKey key : tree_.keys()) {
    if (it == storage_.end() || it->first != key) throw std::logic_error("replay audit: tree and storage keys differ");
    ++it;
  }
}

std::string ReplayBuffer::dump() const {
  std::lock_guard lock(mutex_);
  std::ostringstream os;
  os << std::setprecision(17);
  for (SequenceKey key : tree_.keys()) {
    const auto assigned = tree_.assigned_priority(key);
    const auto estimate = tree_.estimated_priority(key);
    os << key << '\t' << (assigned ? "assigned" : "estimated") << '\t';
    if (estimate)
      os << *estimate;
    else
      os << "nan";
    os << '\t' << tree_.probability(key, config_.epsilon_sample) << '\n';
  }
  return os.str();
}

}  // namespace reactor
