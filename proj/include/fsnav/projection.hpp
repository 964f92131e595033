#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fsnav/extraction.hpp"
#include "fsnav/imaging.hpp"

namespace fsnav {

/// Pinhole camera over a flat ground plane.
///
/// Frames:
///   camera  X right, Y down, Z forward (optical axis).
///   world   the camera frame levelled: same axes, origin at the camera,
///           Y along gravity, so the ground is the plane Y = camera_height.
///           `rotation` maps world vectors into the camera frame.
///   base    robot frame under the camera: x forward, y left, z up, ground z = 0.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double camera_height = 0.0;  // meters
  double k1 = 0.0;
  double k2 = 0.0;

  /// Throws ConfigError when intrinsics or extrinsics are unusable.
  void validate() const;

  Eigen::Matrix3d intrinsics() const;
};

/// Rotation for a camera pitched down by `radians` about its X axis.
Eigen::Matrix3d pitch_rotation(double radians);

CameraModel camera_from_json(const std::string& text);
std::string camera_to_json(const CameraModel& cam);
CameraModel load_camera(const std::filesystem::path& path);
void save_camera(const std::filesystem::path& path, const CameraModel& cam);

struct Point3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // base frame, meters
  double intensity = 0.0;
};

struct PointCloud3D {
  std::vector<Point3D> points;
  std::string frame_id = "base_link";
  BlurFactor beta;
};

/// Freespace-map pixel -> source-image pixel through the crop/resize.
Eigen::Vector2d map_to_image_coords(const BorderPoint& p, const CropMetadata& crop);

/// Radial model x_d = x (1 + k1 r^2 + k2 r^4) in normalized coordinates.
Eigen::Vector2d distort_point(const CameraModel& cam, const Eigen::Vector2d& pixel);
/// Five fixed-point iterations of the inverse radial model.
Eigen::Vector2d undistort_point(const CameraModel& cam, const Eigen::Vector2d& pixel);

/// Unit viewing direction of an (undistorted) pixel, world frame.
Eigen::Vector3d pixel_ray(const CameraModel& cam, const Eigen::Vector2d& pixel);

/// Ground intersection in the base frame, or nothing when the pixel looks at
/// or above the horizon.
std::optional<Eigen::Vector3d> intersect_ground(const CameraModel& cam, const Eigen::Vector2d& pixel);
/// As intersect_ground, but throws AboveHorizon.
Eigen::Vector3d backproject_ground(const CameraModel& cam, const Eigen::Vector2d& pixel);

/// Pinhole projection s [u v 1]^T = K R P of a base-frame point (no distortion).
std::optional<Eigen::Vector2d> project_to_image(const CameraModel& cam, const Eigen::Vector3d& base_point);

Eigen::Vector3d base_to_world(const CameraModel& cam, const Eigen::Vector3d& base_point);
Eigen::Vector3d world_to_base(const CameraModel& cam, const Eigen::Vector3d& world_point);

struct CloudConfig {
  double beta0 = 1.0;      // blur factor that maps to intensity 0.5
  double max_range = 10.0;  // meters; farther ground points are dropped
};

/// beta / (beta + beta0).
double blur_weight(double beta, double beta0);

PointCloud3D build_pointcloud(const BorderPointSet& points, const CameraModel& cam,
                              const CropMetadata& crop, const BlurFactor& beta,
                              const CloudConfig& config);

/// ASCII PLY, one vertex element with float x, y, z, intensity.
void write_ply(std::ostream& out, const PointCloud3D& cloud);
void write_ply(const std::filesystem::path& path, const PointCloud3D& cloud);
PointCloud3D read_ply(std::istream& in);
PointCloud3D read_ply(const std::filesystem::path& path);

}  // namespace fsnav
