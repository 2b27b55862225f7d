#include "dimap/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dimap {

ReplayBuffer::ReplayBuffer(const ReplayConfig& config) : config_(config) {
  if (config_.capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  tree_leaves_ = 1;
  while (tree_leaves_ < config_.capacity) tree_leaves_ *= 2;
  tree_.assign(2 * tree_leaves_, 0.0);
  storage_.reserve(config_.capacity);
  priorities_.reserve(config_.capacity);
}

void ReplayBuffer::tree_set(size_t index, double value) {
  size_t node = tree_leaves_ + index;
  tree_[node] = value;
  for (node /= 2; node >= 1; node /= 2) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
}

size_t ReplayBuffer::tree_sample(double mass) const {
  size_t node = 1;
  while (node < tree_leaves_) {
    const double left = tree_[2 * node];
    if (mass < left) {
      node = 2 * node;
    } else {
      mass -= left;
      node = 2 * node + 1;
    }
  }
  return std::min(node - tree_leaves_, size_ - 1);
}

void ReplayBuffer::push(Transition transition) {
  const double p = max_priority_;
  if (size_ < config_.capacity) {
    storage_.push_back(std::move(transition));
    priorities_.push_back(p);
    size_ += 1;
  } else {
    storage_[head_] = std::move(transition);
    priorities_[head_] = p;
  }
  tree_set(head_, std::pow(p, config_.alpha));
  head_ = (head_ + 1) % config_.capacity;
}

void ReplayBuffer::update_priority(size_t index, double td_error) {
  if (config_.mode != ReplayMode::prioritized) return;
  const double p = std::abs(td_error) + config_.epsilon;
  priorities_[index] = p;
  max_priority_ = std::max(max_priority_, p);
  tree_set(index, std::pow(p, config_.alpha));
}

ReplaySample ReplayBuffer::sample(size_t count, Rng& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  ReplaySample out;
  out.indices.reserve(count);
  out.weights.assign(count, 1.0);
  if (config_.mode == ReplayMode::uniform) {
    for (size_t i = 0; i < count; ++i) out.indices.push_back(rng.uniform_index(size_));
    return out;
  }
  const double total = tree_[1];
  for (size_t i = 0; i < count; ++i) out.indices.push_back(tree_sample(rng.uniform() * total));
  // Importance weights (N * P(i))^-beta, normalized by the batch maximum.
  double wmax = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double prob = tree_[tree_leaves_ + out.indices[i]] / total;
    out.weights[i] = std::pow(static_cast<double>(size_) * prob, -config_.beta);
    wmax = std::max(wmax, out.weights[i]);
  }
  if (wmax > 0.0)
    for (double& w : out.weights) w /= wmax;
  return out;
}

std::vector<double> ReplayBuffer::sampling_distribution() const {
  std::vector<double> probs(size_, 0.0);
  if (size_ == 0) return probs;
  if (config_.mode == ReplayMode::uniform) {
    std::fill(probs.begin(), probs.end(), 1.0 / static_cast<double>(size_));
    return probs;
  }
  const double total = tree_[1];
  for (size_t i = 0; i < size_; ++i) probs[i] = tree_[tree_leaves_ + i] / total;
  return probs;
}

void ReplayBuffer::clear() {
  storage_.clear();
  priorities_.clear();
  std::fill(tree_.begin(), tree_.end(), 0.0);
  head_ = 0;
  size_ = 0;
  max_priority_ = 1.0;
}

}  // namespace dimap
