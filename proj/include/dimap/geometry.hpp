#pragma once

#include <cassert>
#include <cmath>
#include <compare>
#include <cstdint>
#include <vector>

namespace dimap {

/// Discretization of the workspace: a width x height cell grid plus a set of
/// gripper orientations spanning 180 degrees (the gripper is symmetric under
/// a half turn, so orientation o and o + 180 deg are the same grasp).
struct GridSpec {
  int width = 1;
  int height = 1;
  int num_orientations = 1;
  double cell_size = 1.0;

  bool valid() const { return width >= 1 && height >= 1 && num_orientations >= 1; }
  int cell_count() const { return width * height; }
  double orientation_step() const { return M_PI / num_orientations; }
  double orientation_angle(int index) const { return index * orientation_step(); }
};

struct Vec2i {
  int x = 0;
  int y = 0;
  auto operator<=>(const Vec2i&) const = default;
};

inline Vec2i operator+(Vec2i a, Vec2i b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2i operator-(Vec2i a, Vec2i b) { return {a.x - b.x, a.y - b.y}; }

/// Discretized SE(2) element: cell coordinates plus an orientation index in
/// [0, num_orientations).
struct Pose {
  int x = 0;
  int y = 0;
  int orientation = 0;
  auto operator<=>(const Pose&) const = default;
  Vec2i position() const { return {x, y}; }
};

/// Rotate an integer cell offset by `angle` radians and snap back to the
/// cell lattice. Halfway cases round away from zero, which makes the snap
/// commute with grid symmetries (negation, axis swap).
inline Vec2i rotate_offset(Vec2i off, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double rx = c * off.x - s * off.y;
  const double ry = s * off.x + c * off.y;
  return {static_cast<int>(std::lround(rx)), static_cast<int>(std::lround(ry))};
}

/// Row-major scalar grid observed at the start of every step. 0 means empty
/// table; a positive value is the height of whatever occupies the cell.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height), values_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  double at(int x, int y) const {
    assert(in_bounds(x, y));
    return values_[static_cast<size_t>(y) * width_ + x];
  }
  double& at(int x, int y) {
    assert(in_bounds(x, y));
    return values_[static_cast<size_t>(y) * width_ + x];
  }
  /// Value with zero padding outside the grid.
  double at_or(int x, int y, double pad) const { return in_bounds(x, y) ? at(x, y) : pad; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool operator==(const Image& o) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Circular distance between orientation indices (orientations wrap at 180
/// degrees because of the gripper/object symmetry).
inline int orientation_distance(int a, int b, int num_orientations) {
  int d = std::abs(a - b) % num_orientations;
  return std::min(d, num_orientations - d);
}

}  // namespace dimap
