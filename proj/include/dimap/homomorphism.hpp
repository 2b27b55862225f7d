#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dimap/deictic.hpp"
#include "dimap/env.hpp"
#include "dimap/tabular.hpp"

namespace dimap {

/// One enumerated ground state: the latent simulator state plus the history
/// suffix that the state definition carries (the last k-1 image/action
/// pairs). Current image and effector bit are cached.
struct GroundNode {
  EnvState latent;
  std::vector<HistoryEntry> history;
  Image image;
  int theta = 0;
};

/// Exact tabular model of a move-effect MDP over history-k states. Goal
/// transitions are rerouted to a single absorbing zero-reward state (the
/// last state index); the episode horizon is an experiment protocol, not
/// part of the dynamics, so it does not appear here.
struct GroundModel {
  TabularMDP mdp;
  std::vector<GroundNode> nodes;  // indexed like mdp states, absorbing excluded
  int absorbing_state = -1;
  std::vector<Action> actions;  // shared action list of every non-absorbing state
  std::vector<std::vector<int>> theta_next;  // [s][a] effector bit right after the transition

  GridSpec grid;
  CurriculumStage stage;
  GoalConfig goal;
  int k = 1;

  int num_ground_states() const { return static_cast<int>(nodes.size()); }
};

GroundModel enumerate_ground(const GridSpec& grid, const CurriculumStage& stage,
                             const GoalConfig& goal, int k, size_t bound = 1000000);

/// State and action mappings as exact byte keys. Keys never collide across
/// genuinely different abstract elements because patch values in these
/// domains are exact small rationals.
using StateKeyFn = std::function<std::string(const GroundModel&, int state)>;
using ActionKeyFn = std::function<std::string(const GroundModel&, int state, int action)>;

/// The deictic image mapping as key functions over a ground model.
StateKeyFn deictic_state_key(const DeicticConfig& cfg);
ActionKeyFn deictic_action_key(const DeicticConfig& cfg);

/// Identity abstraction (every class a singleton); useful as a control.
StateKeyFn identity_state_key();
ActionKeyFn identity_action_key();

struct InducedAbstraction {
  TabularMDP mdp;  // the induced abstract MDP (block aggregation of representatives)
  bool well_defined = false;
  double max_transition_discrepancy = 0.0;
  double max_reward_discrepancy = 0.0;
  int num_abstract_states = 0;
  int num_abstract_actions = 0;  // distinct (abstract state, abstract action) classes

  // Ground (s, a) -> abstract indices, for value comparisons.
  std::vector<int> abstract_state_of;               // [state]
  std::vector<std::vector<int>> abstract_action_of; // [state][action]
};

/// Induce the abstract MDP under (f, g): abstract states are the image of
/// f, abstract actions the image of g, transition and reward tables come
/// from one representative per class. well_defined is true iff every member
/// of every class agrees exactly with its representative on the aggregated
/// next-abstract-state distribution and on the reward; the sup-norm of the
/// disagreements is reported either way.
InducedAbstraction induce_abstract(const GroundModel& ground, const StateKeyFn& f,
                                   const ActionKeyFn& g);

/// True iff the effector bit after a transition is conditionally independent
/// of the ground state/action given the abstract pair (f(s), g_s(a)): within
/// every class, all members induce the same distribution over theta'.
bool check_theta_independence(const GroundModel& ground, const StateKeyFn& f,
                              const ActionKeyFn& g);

/// Max over ground (s, a) of |Q*(s,a) - Q'*(f(s), g_s(a))|.
double check_theorem1(const ValueIterationResult& ground_q,
                      const ValueIterationResult& abstract_q,
                      const InducedAbstraction& abstraction);

struct AbstractionReport {
  bool well_defined = false;
  double max_transition_discrepancy = 0.0;
  double max_reward_discrepancy = 0.0;
  bool theta_independence_holds = false;
  double value_equivalence_gap = 0.0;

  int ground_states = 0;
  int abstract_states = 0;
  long ground_pairs = 0;
  int abstract_classes = 0;
  int ground_vi_iterations = 0;
  int abstract_vi_iterations = 0;
  double gamma = 0.9;
  double tol = 1e-9;
  double gap_bound() const { return 2.0 * tol / (1.0 - gamma); }

  std::string to_json() const;
};

struct HomcheckParams {
  GridSpec grid;
  CurriculumStage stage;
  GoalConfig goal;
  DeicticConfig deictic;
  double gamma = 0.9;
  double tol = 1e-9;
  size_t state_bound = 1000000;
};

/// Full verification pipeline: enumerate, induce, check both homomorphism
/// conditions and the theta hypothesis, then compare optimal values by value
/// iteration on both sides.
AbstractionReport run_homcheck(const HomcheckParams& params);

}  // namespace dimap
