#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "fsnav/extraction.hpp"
#include "fsnav/imaging.hpp"
#include "fsnav/projection.hpp"

namespace fsnav {

/// Axis-aligned ground rectangle in the robot base frame, meters.
struct GroundRect {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool contains(const GroundRect& o) const {
    return o.x_min >= x_min && o.x_max <= x_max && o.y_min >= y_min && o.y_max <= y_max;
  }
};

using Rgb = std::array<std::uint8_t, 3>;

/// Flat floor with infinitely tall walls and drop-off holes.
struct SceneSpec {
  std::optional<GroundRect> extent;  // unbounded floor when empty
  std::vector<GroundRect> walls;
  std::vector<GroundRect> holes;
  Rgb floor_color{180, 180, 180};
  Rgb obstacle_color{40, 40, 40};
  CameraModel camera;

  /// Throws SceneError.
  void validate() const;
};

SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& scene);
SceneSpec load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SceneSpec& scene);

/// Analytic distance from the robot base along a ground bearing (radians,
/// 0 = forward, positive = left) to the first wall, hole or extent edge.
std::optional<double> truth_range(const SceneSpec& scene, double bearing);

struct TruthRay {
  int column = 0;        // image column the bearing was taken from
  double bearing = 0.0;  // radians
  double range = 0.0;    // meters
};

struct RenderedScene {
  ImageBuffer rgb;
  FreespaceMap truth;
  std::vector<TruthRay> borders;
};

/// True iff the (distorted) source pixel sees drivable floor.
bool pixel_is_free(const SceneSpec& scene, const Eigen::Vector2d& pixel);

/// Renders at the camera resolution. Throws SceneError when no pixel sees
/// the ground.
RenderedScene render_scene(const SceneSpec& scene);

/// Ground truth sampled at each freespace-map pixel of a cropped frame.
FreespaceMap render_truth_map(const SceneSpec& scene, const CropMetadata& crop);

/// A random scene of walls and drop-offs in front of `camera`. Floor and
/// obstacle colours differ in luma by at least 40.
SceneSpec random_scene(std::uint64_t seed, const CameraModel& camera);

struct MetricReport {
  double miou = 0.0;
  double iou_free = 0.0;
  double iou_obstacle = 0.0;
  int frame_count = 0;
};

/// Per-class IoU over {free, obstacle}; a class absent from both masks
/// scores 1.
MetricReport miou(const FreespaceMap& pred, const FreespaceMap& truth);

/// Mean of per-frame reports.
MetricReport average_reports(std::span<const MetricReport> reports);

std::string to_json(const MetricReport& report);

/// 0.0006 * ((1000 - epoch) / 1000)^0.9 for epoch in [0, 1000].
double poly_lr(double epoch);

/// ReLU(x) - ReLU(x - 6).
template <typename Scalar>
  requires std::is_arithmetic_v<Scalar>
Scalar relu6_rewrite(Scalar x) {
  const auto relu = [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); };
  return relu(x) - relu(x - Scalar(6));
}

template <typename Derived>
auto relu6_rewrite(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.max(Scalar(0)) - (x - Scalar(6)).max(Scalar(0));
}

}  // namespace fsnav
