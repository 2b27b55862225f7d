#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dimap/deictic.hpp"
#include "dimap/env.hpp"
#include "dimap/network.hpp"
#include "dimap/replay.hpp"
#include "dimap/rng.hpp"

namespace dimap {

/// Linear decay from start to end over decay_episodes, clamped afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.1;
  long decay_episodes = 1;

  double at(long episode) const {
    if (decay_episodes <= 0) return end;
    const double t = std::min(1.0, static_cast<double>(episode) / decay_episodes);
    return start + (end - start) * t;
  }
};

/// Graduated action search: a position-only network scores fixed-orientation
/// poses; the top eta fraction of positions is expanded over all
/// orientations for the fine network.
struct HierarchyConfig {
  bool enabled = false;
  double eta = 0.2;  // in (0, 1]
};

struct NetworkArch {
  std::vector<ConvLayerSpec> conv;
  std::vector<int> fc;
};

struct TrainConfig {
  double gamma = 0.9;
  int batch_size = 10;
  int target_sync_period = 100;
  bool use_value_estimate = true;  // train V' from selection maxima, use it in targets
  bool use_pruning = true;
  HierarchyConfig hierarchy;
  ReplayConfig replay;
  EpsilonSchedule epsilon;
  int episode_horizon = 10;
  double solve_threshold = 0.8;
  int solve_window = 100;
  bool abort_on_unsolved_stage = false;  // stop the curriculum when a stage budget runs out
  AdamConfig optimizer;
  NetworkArch arch;
  DeicticConfig deictic;
  uint64_t seed = 1;
};

struct EpisodeRecord {
  int stage = 0;
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  double epsilon = 0.0;
  double mean_loss = 0.0;
};
using LearningCurve = std::vector<EpisodeRecord>;

void write_curve_csv(std::ostream& os, const LearningCurve& curve);
void write_curve_csv(const std::string& path, const LearningCurve& curve);

/// First episode count at which the rolling mean reward over a full window
/// reaches `threshold`; -1 if it never does.
int episodes_to_threshold(const LearningCurve& curve, double threshold, int window);

/// Environment steps consumed up to and including the episode found by
/// episodes_to_threshold; -1 if the threshold is never reached.
long steps_to_threshold(const LearningCurve& curve, double threshold, int window);

/// Batched evaluator of abstract state-action values: one call scores many
/// candidate abstract actions against a single abstract state.
using BatchEvaluator =
    std::function<std::vector<double>(const AbstractState&, const std::vector<AbstractAction>&)>;
using StateEvaluator = std::function<double(const AbstractState&)>;

// --- network input encodings -------------------------------------------------

/// Q-network sample: channels [action patch, history patches oldest first],
/// aux [theta, action tag one-hot(3), history tag one-hots oldest first].
NetworkSpec make_q_spec(const NetworkArch& arch, const DeicticConfig& cfg);
/// V-network sample: the abstract state alone (history channels + aux
/// without the action patch and tag).
NetworkSpec make_v_spec(const NetworkArch& arch, const DeicticConfig& cfg);
/// Baseline DQN: the raw image plus theta, one output per action.
NetworkSpec make_baseline_spec(const NetworkArch& arch, const GridSpec& grid, int num_actions);

Batch make_q_batch(const AbstractState& state, const std::vector<AbstractAction>& actions,
                   const DeicticConfig& cfg);
Batch make_q_pair_batch(const std::vector<const AbstractState*>& states,
                        const std::vector<AbstractAction>& actions, const DeicticConfig& cfg);
Batch make_v_batch(const std::vector<const AbstractState*>& states, const DeicticConfig& cfg);
Batch make_baseline_batch(const std::vector<const Image*>& images,
                          const std::vector<int>& thetas);

/// Score every candidate action by Q'(f(s), g_s(a)). Candidates with
/// bitwise-identical abstract encodings are evaluated once and share their
/// value. Optionally returns the per-candidate encodings.
std::vector<double> evaluate_candidates(const AbstractState& state, const Image& image,
                                        const std::vector<Action>& candidates,
                                        const CropSpec& crop, int num_orientations,
                                        const BatchEvaluator& q,
                                        std::vector<AbstractAction>* encodings = nullptr);

struct SelectionResult {
  Action action;
  double value = 0.0;  // greedy value of the chosen action (greedy steps only)
  bool greedy = false;
};

/// Epsilon-greedy action selection over the candidate set. Greedy choice is
/// the argmax of Q' over the candidates (ties broken uniformly at random);
/// with the hierarchy enabled the argmax is computed by hierarchical_argmax.
SelectionResult select_action(const AbstractState& state, const Image& image,
                              const std::vector<Action>& candidates, double epsilon,
                              const BatchEvaluator& q, Rng& rng, const CropSpec& crop,
                              int num_orientations, const HierarchyConfig& hierarchy = {},
                              const BatchEvaluator* q1 = nullptr);

/// Graduated argmax: score distinct candidate positions with q1 at fixed
/// orientation, keep the top ceil(eta * positions), expand the survivors
/// over all their candidate orientations and effector tags, and return the
/// q2 argmax of the expansion. Exact for eta = 1; otherwise a lower bound on
/// the exhaustive maximum.
std::pair<Action, double> hierarchical_argmax(const AbstractState& state, const Image& image,
                                              const std::vector<Action>& candidates, double eta,
                                              const BatchEvaluator& q1, const BatchEvaluator& q2,
                                              const CropSpec& crop_spec, int num_orientations,
                                              Rng& rng);

struct StageContext {
  const std::vector<Action>* actions = nullptr;  // full action space of the stage
  int num_orientations = 1;
};

/// TD targets for a minibatch: r for goal-terminal transitions, otherwise
/// r + gamma * V'(f(s')) when the value estimate is in use, otherwise
/// r + gamma * max over candidate actions of the target network's Q'.
std::vector<double> compute_targets(const std::vector<const Transition*>& batch,
                                    const TrainConfig& cfg, const StageContext& stage,
                                    const BatchEvaluator& q_target, const StateEvaluator& v);

struct TrainStats {
  double mean_loss = 0.0;
  std::vector<double> targets;
  bool q1_stepped = false;  // hierarchy: Q1' received the same targets this step
};

/// DQN over the abstract space: Q' (plus optional Q1' and V') with Adam,
/// a target network, and replay. Parameters persist across stages; the
/// network input shape depends only on the crop window and k, never on the
/// stage discretization, which is what makes curriculum transfer work.
class DeicticAgent {
 public:
  explicit DeicticAgent(const TrainConfig& cfg);

  SelectionResult act(const AbstractState& state, const Image& image,
                      const std::vector<Action>& candidates, double epsilon,
                      int num_orientations, Rng& rng);

  /// One regression step of V'(f(s)) toward a just-evaluated greedy max.
  double update_value_estimate(const AbstractState& state, double greedy_value);

  TrainStats train_step(ReplayBuffer& buffer, Rng& rng, const StageContext& stage);

  BatchEvaluator q_evaluator(bool use_target) const;
  BatchEvaluator q1_evaluator() const;
  StateEvaluator v_evaluator() const;

  void sync_target();
  long train_steps() const { return train_steps_; }

  const TrainConfig& config() const { return cfg_; }
  const NetworkSpec& q_spec() const { return q_net_.spec(); }
  const NetworkSpec& v_spec() const { return v_net_.spec(); }
  const Parameters& q_params() const { return q_params_; }
  Parameters& q_params() { return q_params_; }
  const Parameters& q1_params() const { return q1_params_; }
  Parameters& q1_params() { return q1_params_; }
  const Parameters& v_params() const { return v_params_; }
  Parameters& v_params() { return v_params_; }

  void save(const std::string& dir) const;
  void load(const std::string& dir);

 private:
  TrainConfig cfg_;
  Network q_net_;   // Q' (acts as Q2' when the hierarchy is on)
  Network v_net_;
  Parameters q_params_, q_target_, v_params_;
  Parameters q1_params_;  // same spec as Q'
  AdamState q_opt_, v_opt_, q1_opt_;
  long train_steps_ = 0;
};

struct StageResult {
  LearningCurve curve;
  long env_steps = 0;
  bool solved = false;
  int episodes_run = 0;
};

struct RunResult {
  LearningCurve curve;
  std::vector<StageResult> stages;
  long total_env_steps = 0;
};

/// Sequential trainer that carries the agent across curriculum stages. The
/// replay buffer is cleared and the epsilon schedule restarts at each stage
/// switch; network parameters transfer unchanged.
class DeicticTrainer {
 public:
  DeicticTrainer(GridSpec grid, GoalConfig goal, TrainConfig cfg);

  /// Train on one stage until solved (full-window rolling mean reward >=
  /// solve_threshold) or the budget runs out. A non-negative max_env_steps
  /// additionally caps the total environment steps.
  StageResult run_stage(const CurriculumStage& stage, int stage_index, int episode_budget,
                        long max_env_steps = -1);

  RunResult run_curriculum(const std::vector<CurriculumStage>& stages);

  DeicticAgent& agent() { return agent_; }
  const GridSpec& grid() const { return grid_; }
  const GoalConfig& goal() const { return goal_; }

 private:
  GridSpec grid_;
  GoalConfig goal_;
  TrainConfig cfg_;
  DeicticAgent agent_;
  Rng rng_;
};

/// Greedy evaluation (epsilon = 0, no learning): success rate over episodes.
struct EvalResult {
  double success_rate = 0.0;
  double mean_steps = 0.0;
  int episodes = 0;
};
EvalResult evaluate_policy(DeicticAgent& agent, GridSpec grid, GoalConfig goal,
                           const CurriculumStage& stage, int episodes, uint64_t seed);

/// Flat epsilon-greedy DQN baseline: raw image input, one output per
/// action, dueling head, uniform replay. Same protocol otherwise.
class BaselineAgent {
 public:
  BaselineAgent(const TrainConfig& cfg, const GridSpec& grid, int num_actions);

  int act(const Image& image, int theta, double epsilon, Rng& rng);  // action index
  double train_step(ReplayBuffer& buffer, Rng& rng, const std::vector<Action>& actions);
  void sync_target();

  const NetworkSpec& spec() const { return net_.spec(); }
  const Parameters& params() const { return params_; }
  void save(const std::string& dir) const;
  void load(const std::string& dir);

 private:
  TrainConfig cfg_;
  Network net_;
  Parameters params_, target_;
  AdamState opt_;
  long train_steps_ = 0;
};

RunResult run_baseline(GridSpec grid, GoalConfig goal, const CurriculumStage& stage,
                       const TrainConfig& cfg, int episode_budget,
                       BaselineAgent* agent_out = nullptr);

EvalResult evaluate_baseline(BaselineAgent& agent, GridSpec grid, GoalConfig goal,
                             const CurriculumStage& stage, int episodes, uint64_t seed);

}  // namespace dimap
