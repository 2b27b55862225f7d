#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dimap/geometry.hpp"

namespace dimap {

enum class ObjectKind { disk, block };

enum class EffectorAction { pick, place };

/// One agent action: a base motion to a pose followed by an effector action.
struct Action {
  Pose motion;
  EffectorAction effector = EffectorAction::pick;
  auto operator<=>(const Action&) const = default;
};

struct WorldObject {
  int id = 0;
  ObjectKind kind = ObjectKind::disk;
  Vec2i position;       // center cell
  int orientation = 0;  // orientation index, meaningful only while on the table
  bool on_table = true;
};

enum class GripperStatus { open_empty, holding };

/// Pose of the held object relative to the gripper. A successful pick snaps
/// the object into the canonical grasp (parallel jaws square the object up),
/// so in this simulator both offsets are always zero.
struct HeldObject {
  ObjectKind kind = ObjectKind::disk;
  Vec2i offset;
  int orientation_offset = 0;
  auto operator<=>(const HeldObject&) const = default;
};

struct EffectorState {
  GripperStatus status = GripperStatus::open_empty;
  std::optional<HeldObject> held;  // present iff status == holding
  int held_id = -1;                // simulator-internal; not part of state identity
};

struct EnvState {
  std::vector<WorldObject> objects;
  EffectorState effector;
  int step_count = 0;
};

struct Observation {
  Image image;
  int theta = 0;  // agent-visible effector bit: 0 open, 1 holding
  bool operator==(const Observation&) const = default;
};

/// One task in a curriculum: which objects are on the table and how finely
/// the motion space is discretized. Motion targets live on the cell lattice
/// thinned by `position_stride`; the image grid keeps full resolution, so
/// image patches stay comparable across stages.
struct CurriculumStage {
  ObjectKind object = ObjectKind::disk;
  int position_stride = 1;
  int num_orientations = 1;
  int num_objects = 2;
  int episode_budget = 0;  // used by the training loop; 0 = caller default
};

/// Goal predicates, evaluated after every successful place.
struct GoalConfig {
  // grid-disk: adjacency neighbourhood (4-neighbourhood unless horizontal_only)
  bool horizontal_only = false;
  // block alignment: equal orientation within tol and centers within distance
  double align_distance = 4.0;
  int align_orientation_tol = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

/// Outcome of the pure transition function (no horizon bookkeeping).
struct TransitionResult {
  EnvState next;
  double reward = 0.0;
  bool goal = false;
};

struct PlacementInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateBoundExceededError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<Vec2i> shape_offsets(ObjectKind kind);

/// Cells covered by an object of `kind` at a pose (deduplicated, may stick
/// out of the grid; callers reject those placements).
std::vector<Vec2i> footprint(ObjectKind kind, Vec2i position, int orientation,
                             const GridSpec& grid);

/// Deterministic simulator of a move-effect system on a 2-D grid. A pick
/// succeeds on an empty hand when the gripper pose is within the grasp
/// tolerance of an object (disks: the object's cell, any orientation;
/// blocks: any footprint cell, within one orientation step of the block
/// axis). A place succeeds while holding when the deposited footprint is
/// fully on the grid and does not overlap anything. Failed actions leave the
/// world unchanged but still consume the time step.
class MoveEffectEnv {
 public:
  static constexpr int kDefaultHorizon = 10;

  MoveEffectEnv(GridSpec grid, CurriculumStage stage, GoalConfig goal = {},
                int horizon = kDefaultHorizon);

  /// Place `num_objects` at uniformly random non-overlapping lattice poses.
  Observation reset(uint64_t seed);

  /// Advance one step. Throws std::invalid_argument for actions outside the
  /// stage discretization and std::logic_error past the horizon.
  StepResult step(const Action& action);

  /// Pure transition function used by the enumeration tools; ignores the
  /// step counter and episode horizon.
  TransitionResult simulate(const EnvState& state, const Action& action) const;

  bool goal_satisfied(const EnvState& state) const;

  const std::vector<Action>& action_space() const { return actions_; }
  const std::vector<Vec2i>& lattice_positions() const { return positions_; }

  const GridSpec& grid() const { return grid_; }
  const CurriculumStage& stage() const { return stage_; }
  const GoalConfig& goal() const { return goal_; }
  int horizon() const { return horizon_; }

  const EnvState& state() const { return state_; }
  void set_state(const EnvState& s) { state_ = s; }
  Observation observe() const { return observe(state_); }
  Observation observe(const EnvState& state) const;
  Image render_image(const EnvState& state) const;

  bool action_in_discretization(const Action& a) const;

 private:
  bool pick_matches(const WorldObject& obj, const Pose& pose) const;

  GridSpec grid_;
  CurriculumStage stage_;
  GoalConfig goal_;
  int horizon_ = kDefaultHorizon;
  std::vector<Vec2i> positions_;
  std::vector<Action> actions_;
  EnvState state_;
};

/// Canonical identity of a simulator state: on-table object poses in id
/// order plus the effector status and held shape. The id of the held object
/// is deliberately not part of the key; identical shapes in the hand are
/// indistinguishable in every future observation and transition.
std::string env_state_key(const EnvState& state);

/// Exhaustive, duplicate-free list of EnvStates reachable from any initial
/// placement. Throws StateBoundExceededError if more than `bound` states are
/// found.
std::vector<EnvState> enumerate_states(const GridSpec& grid, const CurriculumStage& stage,
                                       const GoalConfig& goal, size_t bound = 1000000);

/// Debug rendering: one character per cell in row-major order ('.' empty,
/// '#' occupied), one row per line, plus a trailing effector line.
std::string render_ascii(const MoveEffectEnv& env, const EnvState& state);

}  // namespace dimap
