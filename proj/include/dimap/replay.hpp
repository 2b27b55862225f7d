#pragma once

#include <cstdint>
#include <vector>

#include "dimap/deictic.hpp"
#include "dimap/env.hpp"
#include "dimap/rng.hpp"

namespace dimap {

/// One stored step, in underlying (not abstract) form: the abstract views
/// are recomputed at training time from these raw images and actions.
struct Transition {
  std::vector<HistoryEntry> history;  // up to k-1 (image, action) pairs at time t
  Image image;                        // I_t
  int theta = 0;                      // effector bit at t
  Action action;
  double reward = 0.0;
  std::vector<HistoryEntry> next_history;
  Image next_image;
  int next_theta = 0;
  bool done = false;  // goal termination; horizon timeouts keep bootstrapping
};

enum class ReplayMode { uniform, prioritized };

struct ReplayConfig {
  size_t capacity = 10000;
  ReplayMode mode = ReplayMode::uniform;
  double alpha = 0.6;    // priority exponent
  double beta = 0.4;     // importance-weight exponent
  double epsilon = 1e-6; // keeps priorities strictly positive
};

struct ReplaySample {
  std::vector<size_t> indices;
  std::vector<double> weights;  // importance weights, 1.0 in uniform mode
};

/// Ring buffer over transitions with either uniform or proportional
/// prioritized sampling (sum-tree over priority^alpha). New transitions
/// enter at the running maximum priority so they are seen at least once.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(const ReplayConfig& config);

  void push(Transition transition);
  size_t size() const { return size_; }
  size_t capacity() const { return config_.capacity; }
  const Transition& at(size_t index) const { return storage_[index]; }

  ReplaySample sample(size_t count, Rng& rng) const;

  /// Prioritized mode: set priority of `index` to |td_error| + epsilon.
  void update_priority(size_t index, double td_error);
  double priority(size_t index) const { return priorities_[index]; }

  /// Exact per-index sampling probabilities implied by the tree; uniform
  /// mode returns 1/size everywhere. Exposed for the proportionality check.
  std::vector<double> sampling_distribution() const;

  void clear();

 private:
  void tree_set(size_t index, double value);
  size_t tree_sample(double mass) const;

  ReplayConfig config_;
  std::vector<Transition> storage_;
  std::vector<double> priorities_;  // raw |td|+eps
  std::vector<double> tree_;        // sum tree over priority^alpha
  size_t tree_leaves_ = 0;
  size_t head_ = 0;
  size_t size_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace dimap
