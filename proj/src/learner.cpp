#include "dimap/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace dimap {

// ---------------------------------------------------------------------------
// Learning curves

void write_curve_csv(std::ostream& os, const LearningCurve& curve) {
  os << "stage,episode,steps,reward,epsilon,mean_loss\n";
  char line[160];
  for (const EpisodeRecord& r : curve) {
    std::snprintf(line, sizeof(line), "%d,%d,%d,%.9g,%.9g,%.9g\n", r.stage, r.episode, r.steps,
                  r.reward, r.epsilon, r.mean_loss);
    os << line;
  }
}

void write_curve_csv(const std::string& path, const LearningCurve& curve) {
  std::ofstream os(path, std::ios::binary);  // binary: no platform newline surprises
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_curve_csv(os, curve);
}

int episodes_to_threshold(const LearningCurve& curve, double threshold, int window) {
  double sum = 0.0;
  for (size_t i = 0; i < curve.size(); ++i) {
    sum += curve[i].reward;
    if (i >= static_cast<size_t>(window)) sum -= curve[i - window].reward;
    if (i + 1 >= static_cast<size_t>(window) && sum / window >= threshold)
      return static_cast<int>(i + 1);
  }
  return -1;
}

long steps_to_threshold(const LearningCurve& curve, double threshold, int window) {
  const int episode = episodes_to_threshold(curve, threshold, window);
  if (episode < 0) return -1;
  long steps = 0;
  for (int i = 0; i < episode; ++i) steps += curve[i].steps;
  return steps;
}

// ---------------------------------------------------------------------------
// Network input encodings

namespace {

constexpr int kTagOneHot = 3;  // pick, place, none

void append_tag(std::vector<double>& aux, AbstractTag tag) {
  for (int t = 0; t < kTagOneHot; ++t) aux.push_back(t == static_cast<int>(tag) ? 1.0 : 0.0);
}

void append_patch(std::vector<double>& grid, const Patch& patch) {
  grid.insert(grid.end(), patch.values.begin(), patch.values.end());
}

}  // namespace

NetworkSpec make_q_spec(const NetworkArch& arch, const DeicticConfig& cfg) {
  NetworkSpec spec;
  spec.input_height = spec.input_width = cfg.crop.window;
  spec.input_channels = cfg.k;  // action patch + k-1 history patches
  spec.aux_width = 1 + kTagOneHot + kTagOneHot * (cfg.k - 1);
  spec.conv = arch.conv;
  spec.fc = arch.fc;
  spec.output_width = 1;
  spec.dueling = false;
  return spec;
}

NetworkSpec make_v_spec(const NetworkArch& arch, const DeicticConfig& cfg) {
  NetworkSpec spec;
  spec.input_channels = cfg.k - 1;
  spec.input_height = spec.input_width = cfg.k > 1 ? cfg.crop.window : 0;
  spec.aux_width = 1 + kTagOneHot * (cfg.k - 1);
  if (cfg.k > 1) spec.conv = arch.conv;  // no grid input at all when k == 1
  spec.fc = arch.fc;
  spec.output_width = 1;
  spec.dueling = false;
  return spec;
}

NetworkSpec make_baseline_spec(const NetworkArch& arch, const GridSpec& grid, int num_actions) {
  NetworkSpec spec;
  spec.input_height = grid.height;
  spec.input_width = grid.width;
  spec.input_channels = 1;
  spec.aux_width = 1;  // theta
  spec.conv = arch.conv;
  spec.fc = arch.fc;
  spec.output_width = num_actions;
  spec.dueling = true;
  return spec;
}

Batch make_q_batch(const AbstractState& state, const std::vector<AbstractAction>& actions,
                   const DeicticConfig& cfg) {
  std::vector<const AbstractState*> states(actions.size(), &state);
  return make_q_pair_batch(states, actions, cfg);
}

Batch make_q_pair_batch(const std::vector<const AbstractState*>& states,
                        const std::vector<AbstractAction>& actions, const DeicticConfig& cfg) {
  if (states.size() != actions.size())
    throw std::invalid_argument("make_q_pair_batch: size mismatch");
  const int w2 = cfg.crop.window * cfg.crop.window;
  Batch b;
  b.count = static_cast<int>(actions.size());
  b.grid_size = cfg.k * w2;
  b.aux_size = 1 + kTagOneHot + kTagOneHot * (cfg.k - 1);
  b.reserve_samples(b.count);
  for (size_t i = 0; i < actions.size(); ++i) {
    const AbstractState& s = *states[i];
    if (static_cast<int>(s.history.size()) != cfg.k - 1)
      throw std::invalid_argument("abstract state history length does not match k");
    append_patch(b.grid, actions[i].patch);
    for (const AbstractAction& h : s.history) append_patch(b.grid, h.patch);
    b.aux.push_back(static_cast<double>(s.theta));
    append_tag(b.aux, actions[i].tag);
    for (const AbstractAction& h : s.history) append_tag(b.aux, h.tag);
  }
  return b;
}

Batch make_v_batch(const std::vector<const AbstractState*>& states, const DeicticConfig& cfg) {
  const int w2 = cfg.crop.window * cfg.crop.window;
  Batch b;
  b.count = static_cast<int>(states.size());
  b.grid_size = (cfg.k - 1) * w2;
  b.aux_size = 1 + kTagOneHot * (cfg.k - 1);
  b.reserve_samples(b.count);
  for (const AbstractState* sp : states) {
    const AbstractState& s = *sp;
    if (static_cast<int>(s.history.size()) != cfg.k - 1)
      throw std::invalid_argument("abstract state history length does not match k");
    for (const AbstractAction& h : s.history) append_patch(b.grid, h.patch);
    b.aux.push_back(static_cast<double>(s.theta));
    for (const AbstractAction& h : s.history) append_tag(b.aux, h.tag);
  }
  return b;
}

Batch make_baseline_batch(const std::vector<const Image*>& images,
                          const std::vector<int>& thetas) {
  if (images.empty() || images.size() != thetas.size())
    throw std::invalid_argument("make_baseline_batch: size mismatch");
  Batch b;
  b.count = static_cast<int>(images.size());
  b.grid_size = images[0]->width() * images[0]->height();
  b.aux_size = 1;
  b.reserve_samples(b.count);
  for (size_t i = 0; i < images.size(); ++i) {
    b.grid.insert(b.grid.end(), images[i]->values().begin(), images[i]->values().end());
    b.aux.push_back(static_cast<double>(thetas[i]));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Action selection

std::vector<double> evaluate_candidates(const AbstractState& state, const Image& image,
                                        const std::vector<Action>& candidates,
                                        const CropSpec& crop, int num_orientations,
                                        const BatchEvaluator& q,
                                        std::vector<AbstractAction>* encodings) {
  std::vector<AbstractAction> encoded;
  encoded.reserve(candidates.size());
  for (const Action& a : candidates)
    encoded.push_back(action_map(image, a, crop, num_orientations));

  // Identical abstract actions share one evaluation.
  std::unordered_map<std::string, size_t> unique_index;
  std::vector<AbstractAction> unique;
  std::vector<size_t> slot(candidates.size());
  for (size_t i = 0; i < encoded.size(); ++i) {
    const std::string key = serialize(encoded[i]);
    auto [it, inserted] = unique_index.emplace(key, unique.size());
    if (inserted) unique.push_back(encoded[i]);
    slot[i] = it->second;
  }
  const std::vector<double> unique_values = q(state, unique);
  std::vector<double> values(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) values[i] = unique_values[slot[i]];
  if (encodings) *encodings = std::move(encoded);
  return values;
}

namespace {

size_t argmax_with_ties(const std::vector<double>& values, Rng& rng, double* max_out) {
  double best = values[0];
  for (double v : values) best = std::max(best, v);
  std::vector<size_t> ties;
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] == best) ties.push_back(i);
  if (max_out) *max_out = best;
  return ties[rng.uniform_index(ties.size())];
}

}  // namespace

std::pair<Action, double> hierarchical_argmax(const AbstractState& state, const Image& image,
                                              const std::vector<Action>& candidates, double eta,
                                              const BatchEvaluator& q1, const BatchEvaluator& q2,
                                              const CropSpec& crop_spec, int num_orientations,
                                              Rng& rng) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must be in (0, 1]");
  if (candidates.empty()) throw std::invalid_argument("empty candidate set");

  // Distinct candidate positions, in candidate order, with the effector tags
  // present at each.
  std::vector<Vec2i> positions;
  std::map<std::pair<int, int>, size_t> position_index;
  std::vector<std::pair<bool, bool>> tags_at;  // (pick, place)
  for (const Action& a : candidates) {
    const std::pair<int, int> key{a.motion.x, a.motion.y};
    auto it = position_index.find(key);
    if (it == position_index.end()) {
      it = position_index.emplace(key, positions.size()).first;
      positions.push_back(a.motion.position());
      tags_at.push_back({false, false});
    }
    (a.effector == EffectorAction::pick ? tags_at[it->second].first
                                        : tags_at[it->second].second) = true;
  }

  // Score positions with Q1' at the fix-projected pose (orientation 0).
  std::vector<AbstractAction> coarse;
  std::vector<size_t> owner;
  for (size_t p = 0; p < positions.size(); ++p) {
    const Pose fixed = fix(Pose{positions[p].x, positions[p].y, 0});
    const Patch patch = canonical_patch(crop(image, fixed, crop_spec, num_orientations));
    if (tags_at[p].first) {
      coarse.push_back({patch, AbstractTag::pick});
      owner.push_back(p);
    }
    if (tags_at[p].second) {
      coarse.push_back({patch, AbstractTag::place});
      owner.push_back(p);
    }
  }
  const std::vector<double> coarse_values = q1(state, coarse);
  std::vector<double> score(positions.size(), -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < coarse.size(); ++i)
    score[owner[i]] = std::max(score[owner[i]], coarse_values[i]);

  const size_t keep =
      std::min(positions.size(),
               static_cast<size_t>(std::ceil(eta * static_cast<double>(positions.size()))));
  std::vector<size_t> order(positions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return score[a] > score[b]; });
  std::vector<bool> kept(positions.size(), false);
  for (size_t i = 0; i < keep; ++i) kept[order[i]] = true;

  // Expand the surviving positions over all their orientations and tags
  // (the fix-inverse of each position, intersected with the candidate set).
  std::vector<Action> expanded;
  for (const Action& a : candidates)
    if (kept[position_index.at({a.motion.x, a.motion.y})]) expanded.push_back(a);

  const std::vector<double> values =
      evaluate_candidates(state, image, expanded, crop_spec, num_orientations, q2);
  double best = 0.0;
  const size_t pick = argmax_with_ties(values, rng, &best);
  return {expanded[pick], best};
}

SelectionResult select_action(const AbstractState& state, const Image& image,
                              const std::vector<Action>& candidates, double epsilon,
                              const BatchEvaluator& q, Rng& rng, const CropSpec& crop,
                              int num_orientations, const HierarchyConfig& hierarchy,
                              const BatchEvaluator* q1) {
  if (candidates.empty()) throw std::invalid_argument("empty candidate set");
  if (rng.uniform() < epsilon)
    return {candidates[rng.uniform_index(candidates.size())], 0.0, false};
  if (hierarchy.enabled) {
    if (!q1) throw std::invalid_argument("hierarchy enabled but no Q1 evaluator");
    auto [action, value] = hierarchical_argmax(state, image, candidates, hierarchy.eta, *q1, q,
                                               crop, num_orientations, rng);
    return {action, value, true};
  }
  const std::vector<double> values =
      evaluate_candidates(state, image, candidates, crop, num_orientations, q);
  double best = 0.0;
  const size_t pick = argmax_with_ties(values, rng, &best);
  return {candidates[pick], best, true};
}

// ---------------------------------------------------------------------------
// Targets

std::vector<double> compute_targets(const std::vector<const Transition*>& batch,
                                    const TrainConfig& cfg, const StageContext& stage,
                                    const BatchEvaluator& q_target, const StateEvaluator& v) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const Transition* tr : batch) {
    if (tr->done) {
      targets.push_back(tr->reward);
      continue;
    }
    const AbstractState next =
        state_map(tr->next_history, tr->next_theta, cfg.deictic, stage.num_orientations);
    if (cfg.use_value_estimate) {
      targets.push_back(tr->reward + cfg.gamma * v(next));
      continue;
    }
    std::vector<Action> candidates =
        cfg.use_pruning
            ? prune(*stage.actions, tr->next_image, cfg.deictic.crop, stage.num_orientations)
            : *stage.actions;
    if (candidates.empty()) candidates = *stage.actions;
    const std::vector<double> values = evaluate_candidates(
        next, tr->next_image, candidates, cfg.deictic.crop, stage.num_orientations, q_target);
    targets.push_back(tr->reward + cfg.gamma * *std::max_element(values.begin(), values.end()));
  }
  return targets;
}

// ---------------------------------------------------------------------------
// Deictic agent

DeicticAgent::DeicticAgent(const TrainConfig& cfg)
    : cfg_(cfg),
      q_net_(make_q_spec(cfg.arch, cfg.deictic)),
      v_net_(make_v_spec(cfg.arch, cfg.deictic)) {
  Rng init(cfg_.seed);  // parameter draws come from cfg.seed in a fixed order: Q, Q1, V
  q_params_ = q_net_.init_params(init.derive());
  q1_params_ = q_net_.init_params(init.derive());
  v_params_ = v_net_.init_params(init.derive());
  q_target_ = q_params_;
  q_opt_ = make_adam_state(q_params_, cfg_.optimizer);
  q1_opt_ = make_adam_state(q1_params_, cfg_.optimizer);
  v_opt_ = make_adam_state(v_params_, cfg_.optimizer);
}

BatchEvaluator DeicticAgent::q_evaluator(bool use_target) const {
  const Parameters* params = use_target ? &q_target_ : &q_params_;
  return [this, params](const AbstractState& s, const std::vector<AbstractAction>& actions) {
    if (actions.empty()) return std::vector<double>{};
    return q_net_.forward(*params, make_q_batch(s, actions, cfg_.deictic));
  };
}

BatchEvaluator DeicticAgent::q1_evaluator() const {
  return [this](const AbstractState& s, const std::vector<AbstractAction>& actions) {
    if (actions.empty()) return std::vector<double>{};
    return q_net_.forward(q1_params_, make_q_batch(s, actions, cfg_.deictic));
  };
}

StateEvaluator DeicticAgent::v_evaluator() const {
  return [this](const AbstractState& s) {
    return v_net_.forward(v_params_, make_v_batch({&s}, cfg_.deictic))[0];
  };
}

SelectionResult DeicticAgent::act(const AbstractState& state, const Image& image,
                                  const std::vector<Action>& candidates, double epsilon,
                                  int num_orientations, Rng& rng) {
  const BatchEvaluator q = q_evaluator(false);
  const BatchEvaluator q1 = q1_evaluator();
  return select_action(state, image, candidates, epsilon, q, rng, cfg_.deictic.crop,
                       num_orientations, cfg_.hierarchy, &q1);
}

double DeicticAgent::update_value_estimate(const AbstractState& state, double greedy_value) {
  const Batch b = make_v_batch({&state}, cfg_.deictic);
  ForwardCache cache;
  const std::vector<double> out = v_net_.forward(v_params_, b, cache);
  const double delta = out[0] - greedy_value;
  Parameters grads = v_net_.zero_params();
  v_net_.backward(v_params_, b, cache, {2.0 * delta}, grads);
  adam_step(v_params_, grads, v_opt_);
  return delta * delta;
}

TrainStats DeicticAgent::train_step(ReplayBuffer& buffer, Rng& rng, const StageContext& stage) {
  const int n = cfg_.batch_size;
  const ReplaySample sample = buffer.sample(n, rng);
  std::vector<const Transition*> batch;
  batch.reserve(n);
  for (size_t idx : sample.indices) batch.push_back(&buffer.at(idx));

  TrainStats stats;
  stats.targets = compute_targets(batch, cfg_, stage, q_evaluator(true), v_evaluator());

  // One gradient step on Q' at the taken actions.
  std::vector<AbstractState> states;
  states.reserve(n);
  for (const Transition* tr : batch)
    states.push_back(state_map(tr->history, tr->theta, cfg_.deictic, stage.num_orientations));
  std::vector<const AbstractState*> state_ptrs;
  for (const AbstractState& s : states) state_ptrs.push_back(&s);

  std::vector<AbstractAction> taken;
  taken.reserve(n);
  for (const Transition* tr : batch)
    taken.push_back(action_map(tr->image, tr->action, cfg_.deictic.crop, stage.num_orientations));

  const Batch qb = make_q_pair_batch(state_ptrs, taken, cfg_.deictic);
  ForwardCache cache;
  const std::vector<double> pred = q_net_.forward(q_params_, qb, cache);
  std::vector<double> out_grads(pred.size());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double delta = pred[i] - stats.targets[i];
    const double w = sample.weights[i];
    out_grads[i] = 2.0 * w * delta / n;
    loss += w * delta * delta / n;
    buffer.update_priority(sample.indices[i], delta);  // no-op in uniform mode
  }
  stats.mean_loss = loss;
  Parameters grads = q_net_.zero_params();
  q_net_.backward(q_params_, qb, cache, out_grads, grads);
  adam_step(q_params_, grads, q_opt_);

  // The coarse network trains on the fix-projected actions with the same
  // target vector.
  if (cfg_.hierarchy.enabled) {
    std::vector<AbstractAction> fixed;
    fixed.reserve(n);
    for (const Transition* tr : batch) {
      const Action projected{fix(tr->action.motion), tr->action.effector};
      fixed.push_back(
          action_map(tr->image, projected, cfg_.deictic.crop, stage.num_orientations));
    }
    const Batch q1b = make_q_pair_batch(state_ptrs, fixed, cfg_.deictic);
    ForwardCache cache1;
    const std::vector<double> pred1 = q_net_.forward(q1_params_, q1b, cache1);
    std::vector<double> out_grads1(pred1.size());
    for (int i = 0; i < n; ++i)
      out_grads1[i] = 2.0 * sample.weights[i] * (pred1[i] - stats.targets[i]) / n;
    Parameters grads1 = q_net_.zero_params();
    q_net_.backward(q1_params_, q1b, cache1, out_grads1, grads1);
    adam_step(q1_params_, grads1, q1_opt_);
    stats.q1_stepped = true;
  }

  train_steps_ += 1;
  if (cfg_.target_sync_period > 0 && train_steps_ % cfg_.target_sync_period == 0) sync_target();
  return stats;
}

void DeicticAgent::sync_target() { q_target_ = q_params_; }

void DeicticAgent::save(const std::string& dir) const {
  save_parameters(dir + "/qnet.params", q_net_.spec(), q_params_);
  save_parameters(dir + "/q1net.params", q_net_.spec(), q1_params_);
  save_parameters(dir + "/vnet.params", v_net_.spec(), v_params_);
}

void DeicticAgent::load(const std::string& dir) {
  q_params_ = load_parameters(dir + "/qnet.params", q_net_.spec());
  q1_params_ = load_parameters(dir + "/q1net.params", q_net_.spec());
  v_params_ = load_parameters(dir + "/vnet.params", v_net_.spec());
  q_target_ = q_params_;
}

// ---------------------------------------------------------------------------
// Training loops
//
// Every random draw of a run comes from one stream in this order: per
// episode, the reset seed; then per step, the epsilon draw, the exploration
// index or greedy tie-break, and the replay draws of the train step.

DeicticTrainer::DeicticTrainer(GridSpec grid, GoalConfig goal, TrainConfig cfg)
    : grid_(grid), goal_(goal), cfg_(cfg), agent_(cfg),
      rng_(cfg.seed ^ 0xda3e39cb94b95bdbull) {}  // distinct from the init stream

StageResult DeicticTrainer::run_stage(const CurriculumStage& stage, int stage_index,
                                      int episode_budget, long max_env_steps) {
  MoveEffectEnv env(grid_, stage, goal_, cfg_.episode_horizon);
  ReplayBuffer buffer(cfg_.replay);
  const StageContext sctx{&env.action_space(), stage.num_orientations};

  StageResult res;
  double rolling_sum = 0.0;
  for (int episode = 0; episode < episode_budget; ++episode) {
    if (max_env_steps >= 0 && res.env_steps >= max_env_steps) break;
    const double eps = cfg_.epsilon.at(episode);
    Observation obs = env.reset(rng_.derive());
    std::vector<HistoryEntry> history;
    double episode_reward = 0.0;
    double loss_sum = 0.0;
    int loss_count = 0;
    int steps = 0;

    for (int t = 0; t < cfg_.episode_horizon; ++t) {
      const AbstractState fs =
          state_map(history, obs.theta, cfg_.deictic, stage.num_orientations);
      std::vector<Action> candidates =
          cfg_.use_pruning
              ? prune(env.action_space(), obs.image, cfg_.deictic.crop, stage.num_orientations)
              : env.action_space();
      if (candidates.empty()) candidates = env.action_space();

      const SelectionResult sel =
          agent_.act(fs, obs.image, candidates, eps, stage.num_orientations, rng_);
      if (sel.greedy && cfg_.use_value_estimate) agent_.update_value_estimate(fs, sel.value);

      const StepResult sr = env.step(sel.action);

      std::vector<HistoryEntry> next_history = history;
      next_history.push_back({obs.image, sel.action});
      if (static_cast<int>(next_history.size()) > cfg_.deictic.k - 1)
        next_history.erase(next_history.begin(),
                           next_history.end() - (cfg_.deictic.k - 1));

      buffer.push(Transition{history, obs.image, obs.theta, sel.action, sr.reward, next_history,
                             sr.observation.image, sr.observation.theta, sr.reward > 0.0});
      history = std::move(next_history);
      obs = sr.observation;
      episode_reward += sr.reward;
      steps += 1;
      res.env_steps += 1;

      if (buffer.size() >= static_cast<size_t>(cfg_.batch_size)) {
        const TrainStats ts = agent_.train_step(buffer, rng_, sctx);
        loss_sum += ts.mean_loss;
        loss_count += 1;
      }
      if (sr.done) break;
    }

    res.curve.push_back({stage_index, episode, steps, episode_reward, eps,
                         loss_count ? loss_sum / loss_count : 0.0});
    res.episodes_run += 1;

    rolling_sum += episode_reward;
    if (res.episodes_run > cfg_.solve_window)
      rolling_sum -= res.curve[res.episodes_run - cfg_.solve_window - 1].reward;
    if (res.episodes_run >= cfg_.solve_window &&
        rolling_sum / cfg_.solve_window >= cfg_.solve_threshold) {
      res.solved = true;
      break;
    }
  }
  return res;
}

RunResult DeicticTrainer::run_curriculum(const std::vector<CurriculumStage>& stages) {
  RunResult run;
  for (size_t i = 0; i < stages.size(); ++i) {
    const int budget = stages[i].episode_budget > 0 ? stages[i].episode_budget : 1000;
    StageResult res = run_stage(stages[i], static_cast<int>(i), budget);
    run.total_env_steps += res.env_steps;
    run.curve.insert(run.curve.end(), res.curve.begin(), res.curve.end());
    const bool solved = res.solved;
    run.stages.push_back(std::move(res));
    if (!solved && cfg_.abort_on_unsolved_stage) break;
  }
  return run;
}

EvalResult evaluate_policy(DeicticAgent& agent, GridSpec grid, GoalConfig goal,
                           const CurriculumStage& stage, int episodes, uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("episode count must be positive");
  const TrainConfig& cfg = agent.config();
  MoveEffectEnv env(grid, stage, goal, cfg.episode_horizon);
  Rng rng(seed);
  EvalResult res;
  res.episodes = episodes;
  long steps_total = 0;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = env.reset(rng.derive());
    std::vector<HistoryEntry> history;
    for (int t = 0; t < cfg.episode_horizon; ++t) {
      const AbstractState fs = state_map(history, obs.theta, cfg.deictic, stage.num_orientations);
      std::vector<Action> candidates =
          cfg.use_pruning
              ? prune(env.action_space(), obs.image, cfg.deictic.crop, stage.num_orientations)
              : env.action_space();
      if (candidates.empty()) candidates = env.action_space();
      const SelectionResult sel =
          agent.act(fs, obs.image, candidates, 0.0, stage.num_orientations, rng);
      const StepResult sr = env.step(sel.action);
      history.push_back({obs.image, sel.action});
      if (static_cast<int>(history.size()) > cfg.deictic.k - 1)
        history.erase(history.begin(), history.end() - (cfg.deictic.k - 1));
      obs = sr.observation;
      steps_total += 1;
      if (sr.reward > 0.0) {
        successes += 1;
        break;
      }
      if (sr.done) break;
    }
  }
  res.success_rate = static_cast<double>(successes) / episodes;
  res.mean_steps = static_cast<double>(steps_total) / episodes;
  return res;
}

// ---------------------------------------------------------------------------
// Baseline DQN

BaselineAgent::BaselineAgent(const TrainConfig& cfg, const GridSpec& grid, int num_actions)
    : cfg_(cfg), net_(make_baseline_spec(cfg.arch, grid, num_actions)) {
  Rng init(cfg_.seed);
  params_ = net_.init_params(init.derive());
  target_ = params_;
  opt_ = make_adam_state(params_, cfg_.optimizer);
}

int BaselineAgent::act(const Image& image, int theta, double epsilon, Rng& rng) {
  const int num_actions = net_.spec().output_width;
  if (rng.uniform() < epsilon) return static_cast<int>(rng.uniform_index(num_actions));
  const std::vector<double> q = net_.forward(params_, make_baseline_batch({&image}, {theta}));
  return static_cast<int>(argmax_with_ties(q, rng, nullptr));
}

double BaselineAgent::train_step(ReplayBuffer& buffer, Rng& rng,
                                 const std::vector<Action>& actions) {
  const int n = cfg_.batch_size;
  const ReplaySample sample = buffer.sample(n, rng);
  const int num_actions = net_.spec().output_width;

  std::vector<const Image*> next_images;
  std::vector<int> next_thetas;
  std::vector<const Image*> images;
  std::vector<int> thetas;
  for (size_t idx : sample.indices) {
    const Transition& tr = buffer.at(idx);
    images.push_back(&tr.image);
    thetas.push_back(tr.theta);
    next_images.push_back(&tr.next_image);
    next_thetas.push_back(tr.next_theta);
  }
  const std::vector<double> next_q =
      net_.forward(target_, make_baseline_batch(next_images, next_thetas));

  std::vector<double> targets(n);
  for (int i = 0; i < n; ++i) {
    const Transition& tr = buffer.at(sample.indices[i]);
    if (tr.done) {
      targets[i] = tr.reward;
    } else {
      double best = next_q[static_cast<size_t>(i) * num_actions];
      for (int a = 1; a < num_actions; ++a)
        best = std::max(best, next_q[static_cast<size_t>(i) * num_actions + a]);
      targets[i] = tr.reward + cfg_.gamma * best;
    }
  }

  const Batch b = make_baseline_batch(images, thetas);
  ForwardCache cache;
  const std::vector<double> pred = net_.forward(params_, b, cache);
  std::vector<double> out_grads(pred.size(), 0.0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Transition& tr = buffer.at(sample.indices[i]);
    // The taken action's index in the stage's action list.
    const size_t a_idx =
        std::find(actions.begin(), actions.end(), tr.action) - actions.begin();
    const double delta = pred[static_cast<size_t>(i) * num_actions + a_idx] - targets[i];
    const double w = sample.weights[i];
    out_grads[static_cast<size_t>(i) * num_actions + a_idx] = 2.0 * w * delta / n;
    loss += w * delta * delta / n;
    buffer.update_priority(sample.indices[i], delta);
  }
  Parameters grads = net_.zero_params();
  net_.backward(params_, b, cache, out_grads, grads);
  adam_step(params_, grads, opt_);

  train_steps_ += 1;
  if (cfg_.target_sync_period > 0 && train_steps_ % cfg_.target_sync_period == 0) sync_target();
  return loss;
}

void BaselineAgent::sync_target() { target_ = params_; }

void BaselineAgent::save(const std::string& dir) const {
  save_parameters(dir + "/qnet.params", net_.spec(), params_);
}

void BaselineAgent::load(const std::string& dir) {
  params_ = load_parameters(dir + "/qnet.params", net_.spec());
  target_ = params_;
}

RunResult run_baseline(GridSpec grid, GoalConfig goal, const CurriculumStage& stage,
                       const TrainConfig& cfg, int episode_budget, BaselineAgent* agent_out) {
  MoveEffectEnv env(grid, stage, goal, cfg.episode_horizon);
  BaselineAgent agent(cfg, env.grid(), static_cast<int>(env.action_space().size()));
  ReplayBuffer buffer(cfg.replay);
  Rng rng(cfg.seed ^ 0xda3e39cb94b95bdbull);

  RunResult run;
  StageResult res;
  double rolling_sum = 0.0;
  for (int episode = 0; episode < episode_budget; ++episode) {
    const double eps = cfg.epsilon.at(episode);
    Observation obs = env.reset(rng.derive());
    double episode_reward = 0.0;
    double loss_sum = 0.0;
    int loss_count = 0;
    int steps = 0;
    for (int t = 0; t < cfg.episode_horizon; ++t) {
      const int a_idx = agent.act(obs.image, obs.theta, eps, rng);
      const Action action = env.action_space()[a_idx];
      const StepResult sr = env.step(action);
      buffer.push(Transition{{}, obs.image, obs.theta, action, sr.reward, {},
                             sr.observation.image, sr.observation.theta, sr.reward > 0.0});
      obs = sr.observation;
      episode_reward += sr.reward;
      steps += 1;
      res.env_steps += 1;
      if (buffer.size() >= static_cast<size_t>(cfg.batch_size)) {
        loss_sum += agent.train_step(buffer, rng, env.action_space());
        loss_count += 1;
      }
      if (sr.done) break;
    }
    res.curve.push_back(
        {0, episode, steps, episode_reward, eps, loss_count ? loss_sum / loss_count : 0.0});
    res.episodes_run += 1;
    rolling_sum += episode_reward;
    if (res.episodes_run > cfg.solve_window)
      rolling_sum -= res.curve[res.episodes_run - cfg.solve_window - 1].reward;
    if (res.episodes_run >= cfg.solve_window &&
        rolling_sum / cfg.solve_window >= cfg.solve_threshold) {
      res.solved = true;
      break;
    }
  }
  if (agent_out) *agent_out = agent;
  run.total_env_steps = res.env_steps;
  run.curve = res.curve;
  run.stages.push_back(std::move(res));
  return run;
}

EvalResult evaluate_baseline(BaselineAgent& agent, GridSpec grid, GoalConfig goal,
                             const CurriculumStage& stage, int episodes, uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("episode count must be positive");
  MoveEffectEnv env(grid, stage, goal);
  Rng rng(seed);
  EvalResult res;
  res.episodes = episodes;
  long steps_total = 0;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = env.reset(rng.derive());
    for (int t = 0; t < env.horizon(); ++t) {
      const int a_idx = agent.act(obs.image, obs.theta, 0.0, rng);
      const StepResult sr = env.step(env.action_space()[a_idx]);
      obs = sr.observation;
      steps_total += 1;
      if (sr.reward > 0.0) {
        successes += 1;
        break;
      }
      if (sr.done) break;
    }
  }
  res.success_rate = static_cast<double>(successes) / episodes;
  res.mean_steps = static_cast<double>(steps_total) / episodes;
  return res;
}

}  // namespace dimap
