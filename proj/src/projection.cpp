#include "fsnav/projection.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"

namespace fsnav {

void CameraModel::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigError, "camera: " + what); };
  if (!(fx > 0.0) || !(fy > 0.0)) fail("focal lengths must be positive");
  if (width <= 0 || height <= 0) fail("image size must be positive");
  if (!(camera_height > 0.0)) fail("camera_height_m must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(k1) || !std::isfinite(k2)) {
    fail("non-finite intrinsics");
  }
  if (!((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-6)) {
    fail("rotation is not orthonormal");
  }
  if (!(std::abs(rotation.determinant() - 1.0) <= 1e-6)) fail("rotation determinant is not 1");
}

Eigen::Matrix3d CameraModel::intrinsics() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx,
       0, fy, cy,
       0, 0, 1;
  return k;
}

Eigen::Matrix3d pitch_rotation(double radians) {
  // Rows are the camera axes in world coordinates; the optical axis tips
  // toward +Y (down).
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return r;
}

CameraModel camera_from_json(const std::string& text) {
  CameraModel cam;
  try {
    const auto j = nlohmann::json::parse(text);
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw Error(ErrorKind::ConfigError, "camera: rotation needs 9 numbers");
    for (int i = 0; i < 9; ++i) cam.rotation(i / 3, i % 3) = rot[i];
    cam.camera_height = j.at("camera_height_m").get<double>();
    cam.k1 = j.value("k1", 0.0);
    cam.k2 = j.value("k2", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("camera: ") + e.what());
  }
  cam.validate();
  return cam;
}

std::string camera_to_json(const CameraModel& cam) {
  std::vector<double> rot(9);
  for (int i = 0; i < 9; ++i) rot[i] = cam.rotation(i / 3, i % 3);
  nlohmann::json j = {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
                      {"width", cam.width}, {"height", cam.height}, {"rotation", rot},
                      {"camera_height_m", cam.camera_height}, {"k1", cam.k1}, {"k2", cam.k2}};
  return j.dump(2);
}

CameraModel load_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open camera file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return camera_from_json(buf.str());
}

void save_camera(const std::filesystem::path& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << camera_to_json(cam) << '\n';
}

Eigen::Vector2d map_to_image_coords(const BorderPoint& p, const CropMetadata& crop) {
  if (!crop.valid()) throw Error(ErrorKind::ConfigError, "missing crop metadata");
  if (p.u < 0 || p.v < 0 || p.u >= crop.target_width || p.v >= crop.target_height) {
    throw Error(ErrorKind::IndexError, "border point outside the freespace map");
  }
  return {p.u * crop.scale_x, crop.offset_y + p.v * crop.scale_y};
}

Eigen::Vector2d distort_point(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector2d n((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy);
  const double r2 = n.squaredNorm();
  const Eigen::Vector2d d = n * (1.0 + cam.k1 * r2 + cam.k2 * r2 * r2);
  return {cam.fx * d.x() + cam.cx, cam.fy * d.y() + cam.cy};
}

Eigen::Vector2d undistort_point(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector2d distorted((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy);
  Eigen::Vector2d n = distorted;
  for (int iter = 0; iter < 5; ++iter) {
    const double r2 = n.squaredNorm();
    n = distorted / (1.0 + cam.k1 * r2 + cam.k2 * r2 * r2);
  }
  if (!n.allFinite() || (n - distorted).cwiseAbs().maxCoeff() > 1.0) {
    throw Error(ErrorKind::DistortionError, "undistortion diverged");
  }
  return {cam.fx * n.x() + cam.cx, cam.fy * n.y() + cam.cy};
}

namespace {

// Unnormalized world-frame direction; keeps ground intersections exact for
// the axis-aligned cases.
Eigen::Vector3d world_direction(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d d_cam((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
  return cam.rotation.transpose() * d_cam;
}

}  // namespace

Eigen::Vector3d pixel_ray(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  return world_direction(cam, pixel).normalized();
}

Eigen::Vector3d world_to_base(const CameraModel& cam, const Eigen::Vector3d& w) {
  return {w.z(), -w.x(), cam.camera_height - w.y()};
}

Eigen::Vector3d base_to_world(const CameraModel& cam, const Eigen::Vector3d& b) {
  return {-b.y(), cam.camera_height - b.z(), b.x()};
}

std::optional<Eigen::Vector3d> intersect_ground(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d d = world_direction(cam, pixel);
  // Horizon test on the unit ray so the tolerance does not depend on scale.
  if (d.y() / d.norm() <= 1e-6) return std::nullopt;
  const double t = cam.camera_height / d.y();
  Eigen::Vector3d base = world_to_base(cam, t * d);
  base.z() = 0.0;
  return base;
}

Eigen::Vector3d backproject_ground(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  if (auto p = intersect_ground(cam, pixel)) return *p;
  throw Error(ErrorKind::AboveHorizon, "pixel ray does not meet the ground");
}

std::optional<Eigen::Vector2d> project_to_image(const CameraModel& cam, const Eigen::Vector3d& base_point) {
  const Eigen::Vector3d s = cam.intrinsics() * (cam.rotation * base_to_world(cam, base_point));
  if (!(s.z() > 0.0)) return std::nullopt;
  return Eigen::Vector2d(s.x() / s.z(), s.y() / s.z());
}

double blur_weight(double beta, double beta0) {
  if (!(beta0 > 0.0)) throw Error(ErrorKind::ConfigError, "beta0 must be positive");
  if (!(beta > 0.0)) return 0.0;
  return beta / (beta + beta0);
}

PointCloud3D build_pointcloud(const BorderPointSet& points, const CameraModel& cam,
                              const CropMetadata& crop, const BlurFactor& beta,
                              const CloudConfig& config) {
  PointCloud3D cloud;
  cloud.beta = beta;
  const double intensity = blur_weight(beta.beta, config.beta0);
  if (!crop.valid()) throw Error(ErrorKind::ConfigError, "missing crop metadata");
  cloud.points.reserve(points.size());
  for (const auto& p : points) {
    Eigen::Vector2d pixel = map_to_image_coords(p, crop);
    try {
      pixel = undistort_point(cam, pixel);
    } catch (const Error&) {
      continue;
    }
    const auto ground = intersect_ground(cam, pixel);
    if (!ground || !ground->allFinite()) continue;
    if (ground->head<2>().norm() > config.max_range) continue;
    cloud.points.push_back({*ground, intensity});
  }
  return cloud;
}

void write_ply(std::ostream& out, const PointCloud3D& cloud) {
  out << "ply\nformat ascii 1.0\n"
      << "comment frame_id " << cloud.frame_id << '\n'
      << "comment beta " << std::setprecision(17) << cloud.beta.beta << '\n'
      << "element vertex " << cloud.points.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
      << "end_header\n";
  out << std::setprecision(9);
  for (const auto& p : cloud.points) {
    out << static_cast<float>(p.position.x()) << ' ' << static_cast<float>(p.position.y()) << ' '
        << static_cast<float>(p.position.z()) << ' ' << static_cast<float>(p.intensity) << '\n';
  }
}

void write_ply(const std::filesystem::path& path, const PointCloud3D& cloud) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  write_ply(out, cloud);
}

PointCloud3D read_ply(std::istream& in) {
  PointCloud3D cloud;
  std::string line;
  std::size_t count = 0;
  bool ascii = false;
  if (!std::getline(in, line) || line != "ply") throw Error(ErrorKind::ParseError, "not a PLY file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "format") {
      std::string fmt;
      fields >> fmt;
      ascii = fmt == "ascii";
    } else if (key == "element") {
      std::string name;
      fields >> name >> count;
    } else if (key == "comment") {
      std::string tag;
      fields >> tag;
      if (tag == "frame_id") fields >> cloud.frame_id;
      if (tag == "beta") fields >> cloud.beta.beta;
    }
  }
  if (!ascii) throw Error(ErrorKind::ParseError, "only ASCII PLY is supported");
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    if (!(in >> p.position.x() >> p.position.y() >> p.position.z() >> p.intensity)) {
      throw Error(ErrorKind::ParseError, "truncated PLY vertex list");
    }
  }
  return cloud;
}

PointCloud3D read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_ply(in);
}

}  // namespace fsnav
