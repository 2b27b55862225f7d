#include "dimap/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dimap {

void TabularMDP::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
  if (transitions.size() != rewards.size())
    throw std::invalid_argument("transition/reward tables disagree on state count");
  for (size_t s = 0; s < transitions.size(); ++s) {
    if (transitions[s].size() != rewards[s].size())
      throw std::invalid_argument("transition/reward tables disagree on action count");
    for (size_t a = 0; a < transitions[s].size(); ++a) {
      double sum = 0.0;
      for (const Outcome& o : transitions[s][a]) {
        if (o.next < 0 || o.next >= num_states())
          throw std::invalid_argument("transition target out of range");
        if (o.prob < 0.0) throw std::invalid_argument("negative transition probability");
        sum += o.prob;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("transition row (" + std::to_string(s) + "," +
                                    std::to_string(a) + ") sums to " + std::to_string(sum));
      if (!std::isfinite(rewards[s][a])) throw std::invalid_argument("non-finite reward");
    }
  }
}

double ValueIterationResult::state_value(int s) const {
  double best = 0.0;
  bool first = true;
  for (double v : q[s]) {
    if (first || v > best) best = v;
    first = false;
  }
  return best;
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol, int max_iterations) {
  mdp.validate();
  const int n = mdp.num_states();
  ValueIterationResult res;
  res.q.resize(n);
  for (int s = 0; s < n; ++s) res.q[s].assign(mdp.num_actions(s), 0.0);
  std::vector<double> value(n, 0.0);

  for (res.iterations = 1; res.iterations <= max_iterations; ++res.iterations) {
    double residual = 0.0;
    for (int s = 0; s < n; ++s) {
      for (int a = 0; a < mdp.num_actions(s); ++a) {
        double backed = mdp.rewards[s][a];
        for (const TabularMDP::Outcome& o : mdp.transitions[s][a])
          backed += mdp.gamma * o.prob * value[o.next];
        residual = std::max(residual, std::abs(backed - res.q[s][a]));
        res.q[s][a] = backed;
      }
    }
    for (int s = 0; s < n; ++s)
      value[s] = mdp.num_actions(s) ? *std::max_element(res.q[s].begin(), res.q[s].end()) : 0.0;
    res.residual = residual;
    if (residual <= tol) return res;
  }
  throw std::runtime_error("value iteration did not reach tolerance within the iteration cap");
}

}  // namespace dimap
