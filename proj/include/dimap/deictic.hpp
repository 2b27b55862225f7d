#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dimap/env.hpp"
#include "dimap/geometry.hpp"

namespace dimap {

enum class RotationSampling { nearest, bilinear };

/// Extent of the cropped window around a motion target. The window is a
/// square of `window` cells per side (odd so it has a center cell); cells
/// that fall outside the source image read as `padding_value`.
struct CropSpec {
  int window = 3;
  double padding_value = 0.0;
  RotationSampling sampling = RotationSampling::nearest;

  bool valid() const { return window >= 1 && window % 2 == 1; }
  int half() const { return window / 2; }
};

/// Square window of image values, axis-aligned with the pose it was cropped
/// around. Values are snapshots, never views of the live image.
struct Patch {
  int window = 0;
  std::vector<double> values;  // row-major, window x window

  double at(int u, int v) const {  // u,v in [-half, half]
    const int h = window / 2;
    return values[static_cast<size_t>(v + h) * window + (u + h)];
  }
  bool operator==(const Patch&) const = default;
};

/// Effector tags as they appear in abstract actions. `none` marks the blank
/// history entries that pad the start of an episode.
enum class AbstractTag : uint8_t { pick = 0, place = 1, none = 2 };

/// The deictic encoding of an action: what the world looks like around the
/// motion target, plus the effector action taken there.
struct AbstractAction {
  Patch patch;
  AbstractTag tag = AbstractTag::none;
  bool operator==(const AbstractAction&) const = default;
};

/// Abstract state: the k-1 most recently executed abstract actions (oldest
/// first, padded with blanks at episode start) and the current effector bit.
struct AbstractState {
  std::vector<AbstractAction> history;
  int theta = 0;
  bool operator==(const AbstractState&) const = default;
};

struct DeicticConfig {
  int k = 1;  // history length of the ground state definition; k-1 abstract actions are kept
  CropSpec crop;
  bool valid() const { return k >= 1 && crop.valid(); }
};

/// One past step as the state mapping consumes it.
struct HistoryEntry {
  Image image;
  Action action;
};

/// Cropped window of `image` centered on the pose's position and aligned
/// with its orientation. Orientation index i means an angle of i * 180deg /
/// num_orientations. With nearest sampling, patch cell (u, v) reads the
/// image at position + round(R(angle) * (u, v)); bilinear interpolates the
/// four surrounding cells instead. Out-of-grid samples read padding_value.
Patch crop(const Image& image, const Pose& pose, const CropSpec& spec, int num_orientations);

/// Image cells a nearest-sampled crop would read, in patch row-major order.
/// Out-of-grid samples are omitted. Used by locality checks and the pruning
/// oracle in the tests.
std::vector<Vec2i> crop_source_cells(const Image& image, const Pose& pose, const CropSpec& spec,
                                     int num_orientations);

/// The gripper is symmetric under a half turn, so a motion at angle t and at
/// t + 180deg is physically the same action and must encode identically.
/// Abstract encodings therefore use whichever of the patch and its point
/// reflection has the lexicographically smaller value array.
Patch canonical_patch(Patch patch);

AbstractAction action_map(const Image& state_image, const Action& action, const CropSpec& spec,
                          int num_orientations);

AbstractAction blank_abstract_action(const CropSpec& spec);

/// The state mapping: crops each of the k-1 most recent (image, action)
/// pairs around that step's motion target and pairs them with the current
/// effector bit. Histories shorter than k-1 are padded with blanks (oldest
/// side).
AbstractState state_map(const std::vector<HistoryEntry>& history, int theta,
                        const DeicticConfig& cfg, int num_orientations);

/// Same position, orientation index forced to zero.
Pose fix(const Pose& pose);

/// All poses that fix() maps to `pose`. Throws std::invalid_argument if the
/// input orientation is not zero.
std::vector<Pose> fix_inverse(const Pose& pose, int num_orientations);

/// Keep exactly the actions whose crop window contains at least one strictly
/// positive cell; order is preserved. Motions over bare table are never
/// worth considering in these domains.
std::vector<Action> prune(const std::vector<Action>& actions, const Image& image,
                          const CropSpec& spec, int num_orientations);

/// Byte serializations used as exact class keys and for replay persistence.
/// Patches serialize as flat row-major arrays of their scalar values.
std::string serialize(const Patch& patch);
std::string serialize(const AbstractAction& action);
std::string serialize(const AbstractState& state);

}  // namespace dimap
