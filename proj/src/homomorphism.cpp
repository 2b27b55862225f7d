#include "dimap/homomorphism.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace dimap {

namespace {

std::string image_bytes(const Image& img) {
  std::string s;
  s.reserve(img.values().size());
  for (double v : img.values()) s.push_back(v > 0.0 ? '1' : '0');
  return s;
}

std::string history_bytes(const std::vector<HistoryEntry>& history) {
  std::ostringstream os;
  for (const HistoryEntry& e : history) {
    os << image_bytes(e.image) << '/' << e.action.motion.x << ',' << e.action.motion.y << ','
       << e.action.motion.orientation << ',' << static_cast<int>(e.action.effector) << ';';
  }
  return os.str();
}

constexpr const char* kAbsorbingStateKey = "\x01__absorbing_state";
constexpr const char* kAbsorbingActionKey = "\x01__absorbing_action";

}  // namespace

GroundModel enumerate_ground(const GridSpec& grid, const CurriculumStage& stage,
                             const GoalConfig& goal, int k, size_t bound) {
  if (k < 1) throw std::invalid_argument("history length k must be >= 1");
  MoveEffectEnv env(grid, stage, goal);

  GroundModel model;
  model.grid = env.grid();
  model.stage = stage;
  model.goal = goal;
  model.k = k;
  model.actions = env.action_space();

  std::unordered_map<std::string, int> index_of;
  std::deque<int> frontier;

  auto node_key = [&](const GroundNode& n) {
    return env_state_key(n.latent) + '#' + history_bytes(n.history);
  };
  auto intern = [&](GroundNode&& n) {
    std::string key = node_key(n);
    auto it = index_of.find(key);
    if (it != index_of.end()) return it->second;
    if (model.nodes.size() >= bound)
      throw StateBoundExceededError("enumerate_ground: more than " + std::to_string(bound) +
                                    " ground states");
    const int idx = static_cast<int>(model.nodes.size());
    index_of.emplace(std::move(key), idx);
    model.nodes.push_back(std::move(n));
    frontier.push_back(idx);
    return idx;
  };

  // Seed with every feasible initial placement and an empty history.
  for (const EnvState& s : enumerate_states(grid, stage, goal, bound)) {
    if (s.effector.status != GripperStatus::open_empty) continue;
    // Only genuine reset states seed the walk; states reachable mid-episode
    // get their history attached as the walk discovers them.
    bool all_on_table = true;
    for (const WorldObject& o : s.objects) all_on_table = all_on_table && o.on_table;
    if (!all_on_table) continue;
    GroundNode n;
    n.latent = s;
    n.image = env.render_image(s);
    n.theta = 0;
    intern(std::move(n));
  }

  const int num_actions = static_cast<int>(model.actions.size());
  std::vector<std::vector<int>> successor;  // [state][action], -1 = goal/absorbing
  std::vector<std::vector<double>> reward;

  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    if (static_cast<size_t>(s) >= successor.size()) {
      successor.resize(model.nodes.size());
      reward.resize(model.nodes.size());
      model.theta_next.resize(model.nodes.size());
    }
    successor[s].assign(num_actions, -1);
    reward[s].assign(num_actions, 0.0);
    model.theta_next[s].assign(num_actions, 0);
    const GroundNode node = model.nodes[s];  // copy: intern may reallocate nodes
    for (int a = 0; a < num_actions; ++a) {
      TransitionResult t = env.simulate(node.latent, model.actions[a]);
      reward[s][a] = t.reward;
      model.theta_next[s][a] = t.next.effector.status == GripperStatus::holding ? 1 : 0;
      if (t.goal) continue;  // absorbing
      GroundNode next;
      next.latent = t.next;
      next.history = node.history;
      next.history.push_back({node.image, model.actions[a]});
      const int keep = k - 1;
      if (static_cast<int>(next.history.size()) > keep)
        next.history.erase(next.history.begin(),
                           next.history.end() - keep);
      next.image = env.render_image(t.next);
      next.theta = t.next.effector.status == GripperStatus::holding ? 1 : 0;
      successor[s][a] = intern(std::move(next));
    }
  }

  // Assemble the tabular model; the absorbing state goes last.
  const int n = static_cast<int>(model.nodes.size());
  model.absorbing_state = n;
  model.mdp.gamma = 0.9;
  model.mdp.transitions.resize(n + 1);
  model.mdp.rewards.resize(n + 1);
  for (int s = 0; s < n; ++s) {
    model.mdp.transitions[s].resize(num_actions);
    model.mdp.rewards[s].assign(num_actions, 0.0);
    for (int a = 0; a < num_actions; ++a) {
      const int nxt = successor[s][a] < 0 ? model.absorbing_state : successor[s][a];
      model.mdp.transitions[s][a] = {{nxt, 1.0}};
      model.mdp.rewards[s][a] = reward[s][a];
    }
  }
  model.mdp.transitions[n] = {{{n, 1.0}}};  // absorbing self-loop, single no-op action
  model.mdp.rewards[n] = {0.0};
  return model;
}

StateKeyFn deictic_state_key(const DeicticConfig& cfg) {
  return [cfg](const GroundModel& m, int s) {
    if (s == m.absorbing_state) return std::string(kAbsorbingStateKey);
    const GroundNode& n = m.nodes[s];
    return serialize(state_map(n.history, n.theta, cfg, m.stage.num_orientations));
  };
}

ActionKeyFn deictic_action_key(const DeicticConfig& cfg) {
  return [cfg](const GroundModel& m, int s, int a) {
    if (s == m.absorbing_state) return std::string(kAbsorbingActionKey);
    const GroundNode& n = m.nodes[s];
    return serialize(action_map(n.image, m.actions[a], cfg.crop, m.stage.num_orientations));
  };
}

StateKeyFn identity_state_key() {
  return [](const GroundModel&, int s) { return std::to_string(s); };
}

ActionKeyFn identity_action_key() {
  return [](const GroundModel&, int s, int a) {
    return std::to_string(s) + ":" + std::to_string(a);
  };
}

namespace {

int num_actions_of(const GroundModel& m, int s) {
  return s == m.absorbing_state ? 1 : static_cast<int>(m.actions.size());
}

}  // namespace

InducedAbstraction induce_abstract(const GroundModel& ground, const StateKeyFn& f,
                                   const ActionKeyFn& g) {
  const int n = ground.mdp.num_states();
  InducedAbstraction out;
  out.abstract_state_of.resize(n);
  out.abstract_action_of.resize(n);

  std::unordered_map<std::string, int> state_index;
  std::vector<std::string> state_keys;
  for (int s = 0; s < n; ++s) {
    std::string key = f(ground, s);
    auto it = state_index.find(key);
    if (it == state_index.end()) {
      it = state_index.emplace(key, static_cast<int>(state_keys.size())).first;
      state_keys.push_back(key);
    }
    out.abstract_state_of[s] = it->second;
  }
  out.num_abstract_states = static_cast<int>(state_keys.size());

  // Aggregated next-abstract-state distribution of one ground pair.
  auto aggregate = [&](int s, int a) {
    std::map<int, double> dist;
    for (const TabularMDP::Outcome& o : ground.mdp.transitions[s][a])
      dist[out.abstract_state_of[o.next]] += o.prob;
    return dist;
  };

  struct ClassInfo {
    int abstract_action = 0;
    std::map<int, double> dist;  // representative's aggregated distribution
    double reward = 0.0;
  };
  // Class key: abstract state index + action bytes.
  std::map<std::pair<int, std::string>, ClassInfo> classes;
  std::vector<int> actions_per_abstract(out.num_abstract_states, 0);

  out.max_transition_discrepancy = 0.0;
  out.max_reward_discrepancy = 0.0;

  for (int s = 0; s < n; ++s) {
    const int as = out.abstract_state_of[s];
    out.abstract_action_of[s].resize(num_actions_of(ground, s));
    for (int a = 0; a < num_actions_of(ground, s); ++a) {
      const std::pair<int, std::string> key{as, g(ground, s, a)};
      auto dist = aggregate(s, a);
      auto it = classes.find(key);
      if (it == classes.end()) {
        ClassInfo info;
        info.abstract_action = actions_per_abstract[as]++;
        info.dist = std::move(dist);
        info.reward = ground.mdp.rewards[s][a];
        out.abstract_action_of[s][a] = info.abstract_action;
        classes.emplace(key, std::move(info));
      } else {
        const ClassInfo& rep = it->second;
        out.abstract_action_of[s][a] = rep.abstract_action;
        // Sup-norm over the union of outcomes.
        double d = 0.0;
        for (const auto& [as2, p] : dist) {
          auto jt = rep.dist.find(as2);
          d = std::max(d, std::abs(p - (jt == rep.dist.end() ? 0.0 : jt->second)));
        }
        for (const auto& [as2, p] : rep.dist)
          if (!dist.count(as2)) d = std::max(d, p);
        out.max_transition_discrepancy = std::max(out.max_transition_discrepancy, d);
        out.max_reward_discrepancy = std::max(
            out.max_reward_discrepancy, std::abs(ground.mdp.rewards[s][a] - rep.reward));
      }
    }
  }

  out.well_defined =
      out.max_transition_discrepancy == 0.0 && out.max_reward_discrepancy == 0.0;
  out.num_abstract_actions = static_cast<int>(classes.size());

  // Assemble the abstract MDP from the representatives.
  out.mdp.gamma = ground.mdp.gamma;
  out.mdp.transitions.resize(out.num_abstract_states);
  out.mdp.rewards.resize(out.num_abstract_states);
  for (int as = 0; as < out.num_abstract_states; ++as) {
    out.mdp.transitions[as].resize(actions_per_abstract[as]);
    out.mdp.rewards[as].assign(actions_per_abstract[as], 0.0);
  }
  for (const auto& [key, info] : classes) {
    auto& row = out.mdp.transitions[key.first][info.abstract_action];
    for (const auto& [as2, p] : info.dist) row.push_back({as2, p});
    out.mdp.rewards[key.first][info.abstract_action] = info.reward;
  }
  return out;
}

bool check_theta_independence(const GroundModel& ground, const StateKeyFn& f,
                              const ActionKeyFn& g) {
  std::map<std::pair<std::string, std::string>, int> rep_theta;
  for (int s = 0; s < ground.num_ground_states(); ++s) {
    const std::string fs = f(ground, s);
    for (int a = 0; a < static_cast<int>(ground.actions.size()); ++a) {
      const std::pair<std::string, std::string> key{fs, g(ground, s, a)};
      const int theta = ground.theta_next[s][a];
      auto [it, inserted] = rep_theta.emplace(key, theta);
      if (!inserted && it->second != theta) return false;
    }
  }
  return true;
}

double check_theorem1(const ValueIterationResult& ground_q,
                      const ValueIterationResult& abstract_q,
                      const InducedAbstraction& abstraction) {
  double gap = 0.0;
  for (size_t s = 0; s < ground_q.q.size(); ++s) {
    const int as = abstraction.abstract_state_of[s];
    for (size_t a = 0; a < ground_q.q[s].size(); ++a) {
      const int aa = abstraction.abstract_action_of[s][a];
      gap = std::max(gap, std::abs(ground_q.q[s][a] - abstract_q.q[as][aa]));
    }
  }
  return gap;
}

std::string AbstractionReport::to_json() const {
  nlohmann::json j;
  j["well_defined"] = well_defined;
  j["max_transition_discrepancy"] = max_transition_discrepancy;
  j["max_reward_discrepancy"] = max_reward_discrepancy;
  j["theta_independence_holds"] = theta_independence_holds;
  j["value_equivalence_gap"] = value_equivalence_gap;
  j["value_gap_bound"] = gap_bound();
  j["ground_states"] = ground_states;
  j["abstract_states"] = abstract_states;
  j["ground_pairs"] = ground_pairs;
  j["abstract_classes"] = abstract_classes;
  j["ground_vi_iterations"] = ground_vi_iterations;
  j["abstract_vi_iterations"] = abstract_vi_iterations;
  j["gamma"] = gamma;
  j["tol"] = tol;
  return j.dump(2);
}

AbstractionReport run_homcheck(const HomcheckParams& params) {
  GroundModel ground =
      enumerate_ground(params.grid, params.stage, params.goal, params.deictic.k,
                       params.state_bound);
  ground.mdp.gamma = params.gamma;

  const StateKeyFn f = deictic_state_key(params.deictic);
  const ActionKeyFn g = deictic_action_key(params.deictic);

  InducedAbstraction induced = induce_abstract(ground, f, g);

  AbstractionReport report;
  report.gamma = params.gamma;
  report.tol = params.tol;
  report.well_defined = induced.well_defined;
  report.max_transition_discrepancy = induced.max_transition_discrepancy;
  report.max_reward_discrepancy = induced.max_reward_discrepancy;
  report.theta_independence_holds = check_theta_independence(ground, f, g);
  report.ground_states = ground.num_ground_states();
  report.abstract_states = induced.num_abstract_states;
  report.ground_pairs =
      static_cast<long>(ground.num_ground_states()) * static_cast<long>(ground.actions.size());
  report.abstract_classes = induced.num_abstract_actions;

  ValueIterationResult qg = value_iteration(ground.mdp, params.tol);
  ValueIterationResult qa = value_iteration(induced.mdp, params.tol);
  report.ground_vi_iterations = qg.iterations;
  report.abstract_vi_iterations = qa.iterations;
  report.value_equivalence_gap = check_theorem1(qg, qa, induced);
  return report;
}

}  // namespace dimap
