#pragma once

#include <stdexcept>
#include <vector>

namespace dimap {

/// Explicit finite MDP. Transition rows are stored sparsely; every row must
/// sum to 1 within 1e-12. Terminal situations are modeled as an absorbing
/// zero-reward state so rows stay stochastic.
struct TabularMDP {
  struct Outcome {
    int next = 0;
    double prob = 0.0;
  };

  std::vector<std::vector<std::vector<Outcome>>> transitions;  // [state][action] -> distribution
  std::vector<std::vector<double>> rewards;                    // [state][action]
  double gamma = 0.9;

  int num_states() const { return static_cast<int>(transitions.size()); }
  int num_actions(int state) const { return static_cast<int>(transitions[state].size()); }

  /// Throws std::invalid_argument on non-stochastic rows, non-finite
  /// rewards, or gamma outside (0, 1).
  void validate() const;
};

struct ValueIterationResult {
  std::vector<std::vector<double>> q;  // [state][action]
  int iterations = 0;
  double residual = 0.0;

  double state_value(int s) const;
};

/// Standard Bellman backup to a sup-norm residual of at most `tol`. Throws
/// std::runtime_error if the iteration cap is hit first.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol,
                                     int max_iterations = 1000000);

}  // namespace dimap
