#include "reactor/priority_tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace reactor {

PrioritySummary PrioritySummary::of_key(std::optional<double> priority) {
  PrioritySummary s;
  s.count = 1;
  if (priority) {
    s.known_count = 1;
    s.known_mass = *priority;
    s.first = s.last = *priority;
    s.inner_mass = *priority;
  }
  return s;
}

namespace {

std::size_t ceil_half(std::size_t g) { return (g + 1) / 2; }

// How many of the k keys sitting at gap positions offset+1 .. offset+k fall in
// the left cell of a gap of size g.
std::size_t left_share(std::size_t g, std::size_t offset, std::size_t k) {
  const std::size_t cells = ceil_half(g);
  if (cells <= offset) return 0;
  return std::min(k, cells - offset);
}

PriorityNeighbor after(const PriorityNeighbor& left, const PrioritySummary& run) {
  if (run.known_count > 0) return {true, run.last, run.trail};
  if (left.present) return {true, left.priority, left.gap + run.count};
  return {};
}

PriorityNeighbor before(const PrioritySummary& run, const PriorityNeighbor& right) {
  if (run.known_count > 0) return {true, run.first, run.lead};
  if (right.present) return {true, right.priority, right.gap + run.count};
  return {};
}

}  // namespace

PrioritySummary combine(const PrioritySummary& a, const PrioritySummary& b) {
  PrioritySummary out;
  out.count = a.count + b.count;
  out.known_count = a.known_count + b.known_count;
  out.known_mass = a.known_mass + b.known_mass;
  if (a.known_count == 0 && b.known_count == 0) return out;
  if (a.known_count == 0) {
    out.lead = a.count + b.lead;
    out.trail = b.trail;
    out.first = b.first;
    out.last = b.last;
    out.inner_mass = b.inner_mass;
    return out;
  }
  if (b.known_count == 0) {
    out.lead = a.lead;
    out.trail = a.trail + b.count;
    out.first = a.first;
    out.last = a.last;
    out.inner_mass = a.inner_mass;
    return out;
  }
  const std::size_t gap = a.trail + b.lead;
  const std::size_t to_left = ceil_half(gap);
  out.lead = a.lead;
  out.trail = b.trail;
  out.first = a.first;
  out.last = b.last;
  out.inner_mass = a.inner_mass + static_cast<double>(to_left) * a.last +
                   static_cast<double>(gap - to_left) * b.first + b.inner_mass;
  return out;
}

double context_mass(const PrioritySummary& run, const PriorityNeighbor& left, const PriorityNeighbor& right) {
  if (run.count == 0) return 0.0;
  if (run.known_count > 0) {
    double m = run.inner_mass;
    if (left.present) {
      const std::size_t take = left_share(left.gap + run.lead, left.gap, run.lead);
      m += static_cast<double>(take) * left.priority + static_cast<double>(run.lead - take) * run.first;
    } else {
      m += static_cast<double>(run.lead) * run.first;
    }
    if (right.present) {
      const std::size_t keep = std::min(run.trail, ceil_half(run.trail + right.gap));
      m += static_cast<double>(keep) * run.last + static_cast<double>(run.trail - keep) * right.priority;
    } else {
      m += static_cast<double>(run.trail) * run.last;
    }
    return m;
  }
  const auto n = run.count;
  if (left.present && right.present) {
    const std::size_t take = left_share(left.gap + n + right.gap, left.gap, n);
    return static_cast<double>(take) * left.priority + static_cast<double>(n - take) * right.priority;
  }
  if (left.present) return static_cast<double>(n) * left.priority;
  if (right.present) return static_cast<double>(n) * right.priority;
  return 0.0;
}

struct ContextualPriorityTree::Node {
  SequenceKey key;
  std::optional<double> priority;
  int height = 1;
  PrioritySummary summary;
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;

  Node(SequenceKey k, std::optional<double> p) : key(k), priority(p), summary(PrioritySummary::of_key(p)) {}
};

struct TreeOps {
  using Node = ContextualPriorityTree::Node;
  using Ptr = std::unique_ptr<Node>;

  static int height(const Ptr& n) { return n ? n->height : 0; }
  static const PrioritySummary& summary(const Ptr& n) {
    static const PrioritySummary empty{};
    return n ? n->summary : empty;
  }

  static void update(Node& n) {
    n.height = 1 + std::max(height(n.left), height(n.right));
    n.summary = combine(combine(summary(n.left), PrioritySummary::of_key(n.priority)), summary(n.right));
  }

  static void rotate_right(Ptr& n) {
    Ptr pivot = std::move(n->left);
    n->left = std::move(pivot->right);
    update(*n);
    pivot->right = std::move(n);
    update(*pivot);
    n = std::move(pivot);
  }

  static void rotate_left(Ptr& n) {
    Ptr pivot = std::move(n->right);
    n->right = std::move(pivot->left);
    update(*n);
    pivot->left = std::move(n);
    update(*pivot);
    n = std::move(pivot);
  }

  static void rebalance(Ptr& n) {
    update(*n);
    const int balance = height(n->left) - height(n->right);
    if (balance > 1) {
      if (height(n->left->left) < height(n->left->right)) rotate_left(n->left);
      rotate_right(n);
    } else if (balance < -1) {
      if (height(n->right->right) < height(n->right->left)) rotate_right(n->right);
      rotate_left(n);
    }
  }

  static void insert(Ptr& n, SequenceKey key, std::optional<double> priority) {
    if (!n) {
      n = std::make_unique<Node>(key, priority);
      return;
    }
    if (key == n->key) throw std::invalid_argument("priority tree: duplicate key " + std::to_string(key));
    insert(key < n->key ? n->left : n->right, key, priority);
    rebalance(n);
  }

  static Ptr extract_min(Ptr& n) {
    if (!n->left) {
      Ptr out = std::move(n);
      n = std::move(out->right);
      return out;
    }
    Ptr out = extract_min(n->left);
    rebalance(n);
    return out;
  }

  static void erase(Ptr& n, SequenceKey key) {
    if (!n) throw std::out_of_range("priority tree: unknown key " + std::to_string(key));
    if (key < n->key) {
      erase(n->left, key);
    } else if (key > n->key) {
      erase(n->right, key);
    } else if (!n->left || !n->right) {
      n = std::move(n->left ? n->left : n->right);
      if (!n) return;
    } else {
      Ptr successor = extract_min(n->right);
      successor->left = std::move(n->left);
      successor->right = std::move(n->right);
      n = std::move(successor);
    }
    rebalance(n);
  }

  static const Node* find(const Ptr& root, SequenceKey key) {
    const Node* n = root.get();
    while (n && n->key != key) n = key < n->key ? n->left.get() : n->right.get();
    return n;
  }

  // Context for the three parts of a node, given the node's own context.
  struct Split {
    PriorityNeighbor left_of_left, right_of_left;
    PriorityNeighbor left_of_key, right_of_key;
    PriorityNeighbor left_of_right, right_of_right;
  };

  static Split split(const Node& n, const PriorityNeighbor& left, const PriorityNeighbor& right) {
    const PrioritySummary key = PrioritySummary::of_key(n.priority);
    Split s;
    s.left_of_left = left;
    s.right_of_key = before(summary(n.right), right);
    s.right_of_left = before(key, s.right_of_key);
    s.left_of_key = after(left, summary(n.left));
    s.left_of_right = after(s.left_of_key, key);
    s.right_of_right = right;
    return s;
  }

  // Walks to `key`, returning the node and its context.
  struct Located {
    const Node* node = nullptr;
    PriorityNeighbor left, right;
    std::size_t depth = 0;
  };

  static Located locate(const Ptr& root, SequenceKey key) {
    Located loc;
    const Node* n = root.get();
    PriorityNeighbor left, right;
    while (n) {
      const Split s = split(*n, left, right);
      if (key == n->key) {
        loc.node = n;
        loc.left = s.left_of_key;
        loc.right = s.right_of_key;
        return loc;
      }
      if (key < n->key) {
        right = s.right_of_left;
        n = n->left.get();
      } else {
        left = s.left_of_right;
        n = n->right.get();
      }
      ++loc.depth;
    }
    throw std::out_of_range("priority tree: unknown key " + std::to_string(key));
  }

  static void collect(const Ptr& n, std::vector<const Node*>& out) {
    if (!n) return;
    collect(n->left, out);
    out.push_back(n.get());
    collect(n->right, out);
  }

  static std::size_t depth_sum(const Ptr& n, std::size_t depth) {
    if (!n) return 0;
    return depth + depth_sum(n->left, depth + 1) + depth_sum(n->right, depth + 1);
  }

  static bool same(const PrioritySummary& a, const PrioritySummary& b) {
    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x) + std::abs(y)); };
    if (a.count != b.count || a.known_count != b.known_count || !close(a.known_mass, b.known_mass)) return false;
    if (a.known_count == 0) return true;
    return a.lead == b.lead && a.trail == b.trail && a.first == b.first && a.last == b.last &&
           close(a.inner_mass, b.inner_mass);
  }

  // Returns the subtree height; throws on any violation.
  static int audit(const Ptr& n) {
    if (!n) return 0;
    const int hl = audit(n->left);
    const int hr = audit(n->right);
    if (n->height != 1 + std::max(hl, hr)) throw std::logic_error("priority tree audit: stale height");
    if (std::abs(hl - hr) > 1) throw std::logic_error("priority tree audit: AVL balance violated");
    std::vector<const Node*> nodes;
    collect(n, nodes);
    PrioritySummary fold;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i > 0 && !(nodes[i - 1]->key < nodes[i]->key)) throw std::logic_error("priority tree audit: key order");
      fold = combine(fold, PrioritySummary::of_key(nodes[i]->priority));
    }
    if (!same(fold, n->summary)) throw std::logic_error("priority tree audit: summary mismatch");
    return n->height;
  }
};

ContextualPriorityTree::ContextualPriorityTree() = default;
ContextualPriorityTree::~ContextualPriorityTree() = default;
ContextualPriorityTree::ContextualPriorityTree(ContextualPriorityTree&&) noexcept = default;
ContextualPriorityTree& ContextualPriorityTree::operator=(ContextualPriorityTree&&) noexcept = default;

namespace {

void check_priority(double p) {
  if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("priority must be finite and >= 0");
}

}  // namespace

void ContextualPriorityTree::insert(SequenceKey key, std::optional<double> priority) {
  if (priority) check_priority(*priority);
  TreeOps::insert(root_, key, priority);
}

void ContextualPriorityTree::erase(SequenceKey key) { TreeOps::erase(root_, key); }

void ContextualPriorityTree::set_priority(SequenceKey key, double priority) {
  check_priority(priority);
  TreeOps::erase(root_, key);
  TreeOps::insert(root_, key, priority);
}

bool ContextualPriorityTree::contains(SequenceKey key) const { return TreeOps::find(root_, key) != nullptr; }

std::size_t ContextualPriorityTree::size() const { return TreeOps::summary(root_).count; }

std::size_t ContextualPriorityTree::height() const { return static_cast<std::size_t>(TreeOps::height(root_)); }

std::size_t ContextualPriorityTree::known_count() const { return TreeOps::summary(root_).known_count; }

double ContextualPriorityTree::total_mass() const { return context_mass(TreeOps::summary(root_), {}, {}); }

bool ContextualPriorityTree::uniform_mode() const { return known_count() == 0 || !(total_mass() > 0.0); }

std::optional<double> ContextualPriorityTree::assigned_priority(SequenceKey key) const {
  const Node* n = TreeOps::find(root_, key);
  if (!n) throw std::out_of_range("priority tree: unknown key " + std::to_string(key));
  return n->priority;
}

std::optional<double> ContextualPriorityTree::estimated_priority(SequenceKey key) const {
  const auto loc = TreeOps::locate(root_, key);
  if (loc.node->priority) return loc.node->priority;
  if (known_count() == 0) return std::nullopt;
  return context_mass(PrioritySummary::of_key(std::nullopt), loc.left, loc.right);
}

double ContextualPriorityTree::probability(SequenceKey key, double epsilon) const {
  const auto loc = TreeOps::locate(root_, key);
  const double n = static_cast<double>(size());
  if (uniform_mode()) return 1.0 / n;
  const double mass = context_mass(PrioritySummary::of_key(loc.node->priority), loc.left, loc.right);
  return epsilon / n + (1.0 - epsilon) * mass / total_mass();
}

SequenceKey ContextualPriorityTree::sample(double mix_u, double pos_u, double epsilon) const {
  if (!root_) throw std::out_of_range("priority tree: sampling from an empty tree");
  const Node* n = root_.get();
  if (mix_u < epsilon || uniform_mode()) {
    auto rank = static_cast<std::size_t>(pos_u * static_cast<double>(size()));
    rank = std::min(rank, size() - 1);
    for (;;) {
      const std::size_t left = TreeOps::summary(n->left).count;
      if (rank < left) {
        n = n->left.get();
      } else if (rank == left) {
        return n->key;
      } else {
        rank -= left + 1;
        n = n->right.get();
      }
    }
  }

  double target = pos_u * total_mass();
  PriorityNeighbor left, right;
  for (;;) {
    const auto s = TreeOps::split(*n, left, right);
    const double m_left = context_mass(TreeOps::summary(n->left), s.left_of_left, s.right_of_left);
    const double m_key = context_mass(PrioritySummary::of_key(n->priority), s.left_of_key, s.right_of_key);
    const double m_right = context_mass(TreeOps::summary(n->right), s.left_of_right, s.right_of_right);
    if (target < m_left) {
      right = s.right_of_left;
      n = n->left.get();
      continue;
    }
    target -= m_left;
    if (target < m_key || !(m_right > 0.0)) {
      if (m_key > 0.0 || !(m_left > 0.0)) return n->key;
      // Rounding carried the variate past a zero-mass key; settle on the left.
      target = std::nextafter(m_left, 0.0);
      right = s.right_of_left;
      n = n->left.get();
      continue;
    }
    target -= m_key;
    left = s.left_of_right;
    n = n->right.get();
  }
}

SequenceKey ContextualPriorityTree::min_key() const {
  if (!root_) throw std::out_of_range("priority tree: empty");
  const Node* n = root_.get();
  while (n->left) n = n->left.get();
  return n->key;
}

std::vector<SequenceKey> ContextualPriorityTree::keys() const {
  std::vector<const Node*> nodes;
  TreeOps::collect(root_, nodes);
  std::vector<SequenceKey> out;
  out.reserve(nodes.size());
  for (const Node* n : nodes) out.push_back(n->key);
  return out;
}

std::size_t ContextualPriorityTree::depth_of(SequenceKey key) const { return TreeOps::locate(root_, key).depth; }

double ContextualPriorityTree::mean_depth() const {
  if (!root_) return 0.0;
  return static_cast<double>(TreeOps::depth_sum(root_, 0)) / static_cast<double>(size());
}

void ContextualPriorityTree::audit() const { TreeOps::audit(root_); }

}  // namespace reactor
