#include "dimap/deictic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dimap {

namespace {

double pose_angle(const Pose& pose, int num_orientations) {
  return pose.orientation * M_PI / num_orientations;
}

double sample_bilinear(const Image& image, double x, double y, double pad) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const double v00 = image.at_or(x0, y0, pad);
  const double v10 = image.at_or(x0 + 1, y0, pad);
  const double v01 = image.at_or(x0, y0 + 1, pad);
  const double v11 = image.at_or(x0 + 1, y0 + 1, pad);
  return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy + v11 * fx * fy;
}

}  // namespace

Patch crop(const Image& image, const Pose& pose, const CropSpec& spec, int num_orientations) {
  if (!spec.valid()) throw std::invalid_argument("crop window must be odd and >= 1");
  if (num_orientations < 1) throw std::invalid_argument("num_orientations must be >= 1");
  Patch patch;
  patch.window = spec.window;
  patch.values.resize(static_cast<size_t>(spec.window) * spec.window);
  const int h = spec.half();
  const double angle = pose_angle(pose, num_orientations);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  size_t idx = 0;
  for (int v = -h; v <= h; ++v) {
    for (int u = -h; u <= h; ++u, ++idx) {
      if (spec.sampling == RotationSampling::nearest) {
        const Vec2i src = pose.position() + rotate_offset({u, v}, angle);
        patch.values[idx] = image.at_or(src.x, src.y, spec.padding_value);
      } else {
        const double x = pose.x + c * u - s * v;
        const double y = pose.y + s * u + c * v;
        patch.values[idx] = sample_bilinear(image, x, y, spec.padding_value);
      }
    }
  }
  return patch;
}

std::vector<Vec2i> crop_source_cells(const Image& image, const Pose& pose, const CropSpec& spec,
                                     int num_orientations) {
  const int h = spec.half();
  const double angle = pose_angle(pose, num_orientations);
  std::vector<Vec2i> cells;
  for (int v = -h; v <= h; ++v) {
    for (int u = -h; u <= h; ++u) {
      const Vec2i src = pose.position() + rotate_offset({u, v}, angle);
      if (image.in_bounds(src.x, src.y)) cells.push_back(src);
    }
  }
  return cells;
}

Patch canonical_patch(Patch patch) {
  // Point reflection of a square window is the reversed flat array.
  std::vector<double> reflected(patch.values.rbegin(), patch.values.rend());
  if (std::lexicographical_compare(reflected.begin(), reflected.end(), patch.values.begin(),
                                   patch.values.end()))
    patch.values = std::move(reflected);
  return patch;
}

AbstractAction action_map(const Image& state_image, const Action& action, const CropSpec& spec,
                          int num_orientations) {
  return {canonical_patch(crop(state_image, action.motion, spec, num_orientations)),
          action.effector == EffectorAction::pick ? AbstractTag::pick : AbstractTag::place};
}

AbstractAction blank_abstract_action(const CropSpec& spec) {
  Patch patch;
  patch.window = spec.window;
  patch.values.assign(static_cast<size_t>(spec.window) * spec.window, 0.0);
  return {patch, AbstractTag::none};
}

AbstractState state_map(const std::vector<HistoryEntry>& history, int theta,
                        const DeicticConfig& cfg, int num_orientations) {
  if (!cfg.valid()) throw std::invalid_argument("invalid deictic config");
  AbstractState out;
  out.theta = theta;
  const int slots = cfg.k - 1;
  out.history.reserve(slots);
  const int have = static_cast<int>(history.size());
  for (int i = slots; i >= 1; --i) {  // i steps back from the most recent entry
    if (have - i >= 0) {
      const HistoryEntry& e = history[have - i];
      out.history.push_back(action_map(e.image, e.action, cfg.crop, num_orientations));
    } else {
      out.history.push_back(blank_abstract_action(cfg.crop));
    }
  }
  return out;
}

Pose fix(const Pose& pose) { return {pose.x, pose.y, 0}; }

std::vector<Pose> fix_inverse(const Pose& pose, int num_orientations) {
  if (pose.orientation != 0)
    throw std::invalid_argument("fix_inverse expects a fixed-orientation pose");
  std::vector<Pose> poses;
  poses.reserve(num_orientations);
  for (int o = 0; o < num_orientations; ++o) poses.push_back({pose.x, pose.y, o});
  return poses;
}

std::vector<Action> prune(const std::vector<Action>& actions, const Image& image,
                          const CropSpec& spec, int num_orientations) {
  std::vector<Action> kept;
  for (const Action& a : actions) {
    const Patch p = crop(image, a.motion, spec, num_orientations);
    bool positive = false;
    for (double v : p.values)
      if (v > 0.0) positive = true;
    if (positive) kept.push_back(a);
  }
  return kept;
}

std::string serialize(const Patch& patch) {
  std::string bytes;
  bytes.reserve(1 + patch.values.size() * sizeof(double));
  bytes.push_back(static_cast<char>(patch.window));
  const size_t n = patch.values.size() * sizeof(double);
  const size_t start = bytes.size();
  bytes.resize(start + n);
  std::memcpy(bytes.data() + start, patch.values.data(), n);
  return bytes;
}

std::string serialize(const AbstractAction& action) {
  std::string bytes;
  bytes.push_back(static_cast<char>(action.tag));
  bytes += serialize(action.patch);
  return bytes;
}

std::string serialize(const AbstractState& state) {
  std::string bytes;
  bytes.push_back(static_cast<char>(state.theta));
  bytes.push_back(static_cast<char>(state.history.size()));
  for (const AbstractAction& a : state.history) bytes += serialize(a);
  return bytes;
}

}  // namespace dimap
