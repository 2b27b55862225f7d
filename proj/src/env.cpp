#include "dimap/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dimap/rng.hpp"

namespace dimap {

std::vector<Vec2i> shape_offsets(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::disk:
      return {{0, 0}};
    case ObjectKind::block:
      return {{-1, 0}, {0, 0}, {1, 0}};
  }
  return {};
}

std::vector<Vec2i> footprint(ObjectKind kind, Vec2i position, int orientation,
                             const GridSpec& grid) {
  const double angle = grid.orientation_angle(orientation);
  std::vector<Vec2i> cells;
  for (Vec2i off : shape_offsets(kind)) {
    Vec2i cell = position + rotate_offset(off, angle);
    if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
  }
  return cells;
}

namespace {

bool cells_in_grid(const std::vector<Vec2i>& cells, const GridSpec& grid) {
  return std::all_of(cells.begin(), cells.end(),
                     [&](Vec2i c) { return c.x >= 0 && c.x < grid.width && c.y >= 0 && c.y < grid.height; });
}

bool cells_overlap(const std::vector<Vec2i>& a, const std::vector<Vec2i>& b) {
  for (Vec2i c : a)
    if (std::find(b.begin(), b.end(), c) != b.end()) return true;
  return false;
}

}  // namespace

MoveEffectEnv::MoveEffectEnv(GridSpec grid, CurriculumStage stage, GoalConfig goal, int horizon)
    : grid_(grid), stage_(stage), goal_(goal), horizon_(horizon) {
  if (horizon_ < 1) throw std::invalid_argument("episode horizon must be >= 1");
  grid_.num_orientations = stage.num_orientations;
  if (!grid_.valid()) throw std::invalid_argument("invalid grid spec");
  if (stage_.position_stride < 1) throw std::invalid_argument("position_stride must be >= 1");
  for (int y = 0; y < grid_.height; y += stage_.position_stride)
    for (int x = 0; x < grid_.width; x += stage_.position_stride) positions_.push_back({x, y});
  // Fixed action order: positions row-major, then orientation, then effector.
  for (Vec2i p : positions_)
    for (int o = 0; o < stage_.num_orientations; ++o)
      for (EffectorAction e : {EffectorAction::pick, EffectorAction::place})
        actions_.push_back({Pose{p.x, p.y, o}, e});
}

Observation MoveEffectEnv::reset(uint64_t seed) {
  Rng rng(seed);
  EnvState s;
  constexpr int kMaxTries = 1000;
  for (int i = 0; i < stage_.num_objects; ++i) {
    WorldObject obj;
    obj.id = i;
    obj.kind = stage_.object;
    obj.on_table = true;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Vec2i pos = positions_[rng.uniform_index(positions_.size())];
      int orient = static_cast<int>(rng.uniform_index(stage_.num_orientations));
      auto cells = footprint(obj.kind, pos, orient, grid_);
      if (!cells_in_grid(cells, grid_)) continue;
      bool clash = false;
      for (const WorldObject& other : s.objects)
        if (cells_overlap(cells, footprint(other.kind, other.position, other.orientation, grid_)))
          clash = true;
      if (clash) continue;
      obj.position = pos;
      obj.orientation = orient;
      placed = true;
    }
    if (!placed)
      throw PlacementInfeasibleError("could not place object " + std::to_string(i) +
                                     ": stage discretization leaves no room");
    s.objects.push_back(obj);
  }
  s.effector = EffectorState{};
  s.step_count = 0;
  state_ = s;
  return observe();
}

Image MoveEffectEnv::render_image(const EnvState& state) const {
  Image img(grid_.width, grid_.height, 0.0);
  for (const WorldObject& obj : state.objects) {
    if (!obj.on_table) continue;
    for (Vec2i c : footprint(obj.kind, obj.position, obj.orientation, grid_))
      if (img.in_bounds(c.x, c.y)) img.at(c.x, c.y) = 1.0;
  }
  return img;
}

Observation MoveEffectEnv::observe(const EnvState& state) const {
  return {render_image(state), state.effector.status == GripperStatus::holding ? 1 : 0};
}

bool MoveEffectEnv::action_in_discretization(const Action& a) const {
  const Pose& p = a.motion;
  if (p.orientation < 0 || p.orientation >= stage_.num_orientations) return false;
  if (p.x < 0 || p.x >= grid_.width || p.y < 0 || p.y >= grid_.height) return false;
  return p.x % stage_.position_stride == 0 && p.y % stage_.position_stride == 0;
}

bool MoveEffectEnv::pick_matches(const WorldObject& obj, const Pose& pose) const {
  if (!obj.on_table) return false;
  auto cells = footprint(obj.kind, obj.position, obj.orientation, grid_);
  if (std::find(cells.begin(), cells.end(), pose.position()) == cells.end()) return false;
  if (obj.kind == ObjectKind::disk) return true;  // symmetric: any approach angle grasps
  return orientation_distance(pose.orientation, obj.orientation, stage_.num_orientations) <= 1;
}

bool MoveEffectEnv::goal_satisfied(const EnvState& state) const {
  const auto& objs = state.objects;
  for (size_t i = 0; i < objs.size(); ++i) {
    if (!objs[i].on_table) continue;
    for (size_t j = i + 1; j < objs.size(); ++j) {
      if (!objs[j].on_table) continue;
      const Vec2i d = objs[i].position - objs[j].position;
      if (objs[i].kind == ObjectKind::disk && objs[j].kind == ObjectKind::disk) {
        const bool horizontal = d.y == 0 && std::abs(d.x) == 1;
        const bool vertical = d.x == 0 && std::abs(d.y) == 1;
        if (goal_.horizontal_only ? horizontal : (horizontal || vertical)) return true;
      } else if (objs[i].kind == ObjectKind::block && objs[j].kind == ObjectKind::block) {
        const int odist = orientation_distance(objs[i].orientation, objs[j].orientation,
                                               stage_.num_orientations);
        const double dist = std::hypot(static_cast<double>(d.x), static_cast<double>(d.y));
        if (odist <= goal_.align_orientation_tol && dist <= goal_.align_distance) return true;
      }
    }
  }
  return false;
}

TransitionResult MoveEffectEnv::simulate(const EnvState& state, const Action& action) const {
  if (!action_in_discretization(action))
    throw std::invalid_argument("action outside the stage discretization");
  TransitionResult out{state, 0.0, false};
  EnvState& next = out.next;

  if (action.effector == EffectorAction::pick) {
    if (next.effector.status == GripperStatus::open_empty) {
      for (WorldObject& obj : next.objects) {
        if (!pick_matches(obj, action.motion)) continue;
        obj.on_table = false;
        next.effector.status = GripperStatus::holding;
        next.effector.held = HeldObject{obj.kind, {0, 0}, 0};
        next.effector.held_id = obj.id;
        break;
      }
    }
  } else {  // place
    if (next.effector.status == GripperStatus::holding) {
      const ObjectKind kind = next.effector.held->kind;
      auto cells = footprint(kind, action.motion.position(), action.motion.orientation, grid_);
      bool free = cells_in_grid(cells, grid_);
      for (const WorldObject& other : next.objects) {
        if (!free) break;
        if (!other.on_table) continue;
        if (cells_overlap(cells, footprint(other.kind, other.position, other.orientation, grid_)))
          free = false;
      }
      if (free) {
        for (WorldObject& obj : next.objects) {
          if (obj.id != next.effector.held_id) continue;
          obj.position = action.motion.position();
          obj.orientation = action.motion.orientation;
          obj.on_table = true;
          break;
        }
        next.effector = EffectorState{};
        if (goal_satisfied(next)) {
          out.reward = 1.0;
          out.goal = true;
        }
      }
    }
  }
  return out;
}

StepResult MoveEffectEnv::step(const Action& action) {
  if (state_.step_count >= horizon_)
    throw std::logic_error("step called past the episode horizon");
  TransitionResult t = simulate(state_, action);
  state_ = t.next;
  state_.step_count += 1;  // failed actions still consume the step
  const bool done = t.goal || state_.step_count >= horizon_;
  return {observe(), t.reward, done};
}

std::string env_state_key(const EnvState& state) {
  std::ostringstream os;
  for (const WorldObject& obj : state.objects) {
    if (!obj.on_table) continue;
    os << static_cast<int>(obj.kind) << ',' << obj.position.x << ',' << obj.position.y << ','
       << obj.orientation << ';';
  }
  os << '|' << (state.effector.status == GripperStatus::holding ? 'H' : 'O');
  if (state.effector.held) {
    const HeldObject& h = *state.effector.held;
    os << static_cast<int>(h.kind) << ',' << h.offset.x << ',' << h.offset.y << ','
       << h.orientation_offset;
  }
  return os.str();
}

std::vector<EnvState> enumerate_states(const GridSpec& grid, const CurriculumStage& stage,
                                       const GoalConfig& goal, size_t bound) {
  MoveEffectEnv env(grid, stage, goal);
  std::vector<EnvState> states;
  std::unordered_set<std::string> seen;
  std::deque<size_t> frontier;

  auto add = [&](const EnvState& s) {
    if (!seen.insert(env_state_key(s)).second) return;
    if (states.size() >= bound)
      throw StateBoundExceededError("enumerate_states: more than " + std::to_string(bound) +
                                    " reachable states");
    states.push_back(s);
    frontier.push_back(states.size() - 1);
  };

  // All ordered feasible initial placements, not just sampled ones.
  std::vector<EnvState> partial{EnvState{}};
  for (int i = 0; i < stage.num_objects; ++i) {
    std::vector<EnvState> grown;
    for (const EnvState& base : partial) {
      for (Vec2i pos : env.lattice_positions()) {
        for (int o = 0; o < stage.num_orientations; ++o) {
          auto cells = footprint(stage.object, pos, o, env.grid());
          if (!cells_in_grid(cells, env.grid())) continue;
          bool clash = false;
          for (const WorldObject& other : base.objects)
            if (cells_overlap(cells,
                              footprint(other.kind, other.position, other.orientation, env.grid())))
              clash = true;
          if (clash) continue;
          EnvState s = base;
          s.objects.push_back(WorldObject{i, stage.object, pos, o, true});
          grown.push_back(std::move(s));
        }
      }
    }
    partial = std::move(grown);
  }
  for (const EnvState& s : partial) add(s);

  while (!frontier.empty()) {
    const EnvState current = states[frontier.front()];
    frontier.pop_front();
    for (const Action& a : env.action_space()) {
      TransitionResult t = env.simulate(current, a);
      add(t.next);
    }
  }
  return states;
}

std::string render_ascii(const MoveEffectEnv& env, const EnvState& state) {
  const Image img = env.render_image(state);
  std::ostringstream os;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) os << (img.at(x, y) > 0.0 ? '#' : '.');
    os << '\n';
  }
  os << "effector: " << (state.effector.status == GripperStatus::holding ? "holding" : "open")
     << '\n';
  return os.str();
}

}  // namespace dimap
