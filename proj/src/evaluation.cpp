#include "fsnav/evaluation.hpp"

#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

namespace fsnav {
namespace {

using nlohmann::json;

json rect_to_json(const GroundRect& r) {
  return {{"x_range", {r.x_min, r.x_max}}, {"y_range", {r.y_min, r.y_max}}};
}

GroundRect rect_from_json(const json& j) {
  const auto xr = j.at("x_range").get<std::array<double, 2>>();
  const auto yr = j.at("y_range").get<std::array<double, 2>>();
  return {xr[0], xr[1], yr[0], yr[1]};
}

int luma(const Rgb& c) { return static_cast<int>(std::lround(0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])); }

// Entry parameter of the ray origin + t * dir (t >= 0) into a closed
// rectangle, or nothing when it misses.
std::optional<double> ray_enters(const GroundRect& r, const Eigen::Vector2d& dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  const double lo[2] = {r.x_min, r.y_min};
  const double hi[2] = {r.x_max, r.y_max};
  for (int a = 0; a < 2; ++a) {
    if (dir[a] == 0.0) {
      if (0.0 < lo[a] || 0.0 > hi[a]) return std::nullopt;
      continue;
    }
    double ta = lo[a] / dir[a];
    double tb = hi[a] / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

// Does the closed segment origin -> p touch the closed rectangle?
bool segment_hits(const GroundRect& r, const Eigen::Vector2d& p) {
  const auto t = ray_enters(r, p);
  return t && *t <= 1.0;
}

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::SceneError, "scene: " + what); };
  try {
    camera.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (floor_color == obstacle_color) fail("floor and obstacle colours must differ");
  auto check = [&](const GroundRect& r) {
    if (!(r.x_min <= r.x_max && r.y_min <= r.y_max)) fail("rectangle with inverted bounds");
    if (extent && !extent->contains(r)) fail("rectangle outside the ground extent");
  };
  if (extent && !(extent->x_min < extent->x_max && extent->y_min < extent->y_max)) {
    fail("empty ground extent");
  }
  for (const auto& w : walls) check(w);
  for (const auto& h : holes) check(h);
}

SceneSpec scene_from_json(const std::string& text) {
  SceneSpec s;
  try {
    const json j = json::parse(text);
    if (j.contains("extent") && !j.at("extent").is_null()) s.extent = rect_from_json(j.at("extent"));
    for (const auto& w : j.value("walls", json::array())) s.walls.push_back(rect_from_json(w));
    for (const auto& h : j.value("holes", json::array())) s.holes.push_back(rect_from_json(h));
    if (j.contains("floor_color")) s.floor_color = j.at("floor_color").get<Rgb>();
    if (j.contains("obstacle_color")) s.obstacle_color = j.at("obstacle_color").get<Rgb>();
    s.camera = camera_from_json(j.at("camera").dump());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SceneError, std::string("scene: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::SceneError, e.what());
  }
  s.validate();
  return s;
}

std::string scene_to_json(const SceneSpec& s) {
  json j;
  j["extent"] = s.extent ? rect_to_json(*s.extent) : json(nullptr);
  j["walls"] = json::array();
  for (const auto& w : s.walls) j["walls"].push_back(rect_to_json(w));
  j["holes"] = json::array();
  for (const auto& h : s.holes) j["holes"].push_back(rect_to_json(h));
  j["floor_color"] = s.floor_color;
  j["obstacle_color"] = s.obstacle_color;
  j["camera"] = json::parse(camera_to_json(s.camera));
  return j.dump(2);
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open scene " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str());
}

void save_scene(const std::filesystem::path& path, const SceneSpec& scene) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << scene_to_json(scene) << '\n';
}

std::optional<double> truth_range(const SceneSpec& scene, double bearing) {
  const Eigen::Vector2d dir(std::cos(bearing), std::sin(bearing));
  std::optional<double> best;
  auto consider = [&](double t) {
    if (!best || t < *best) best = t;
  };
  for (const auto& w : scene.walls) {
    if (auto t = ray_enters(w, dir)) consider(*t);
  }
  for (const auto& h : scene.holes) {
    if (auto t = ray_enters(h, dir)) consider(*t);
  }
  if (scene.extent) {
    const GroundRect& e = *scene.extent;
    if (!e.contains(0.0, 0.0)) {
      consider(0.0);
    } else {
      // Exit distance from the extent.
      double t_exit = std::numeric_limits<double>::infinity();
      if (dir.x() > 0) t_exit = std::min(t_exit, e.x_max / dir.x());
      if (dir.x() < 0) t_exit = std::min(t_exit, e.x_min / dir.x());
      if (dir.y() > 0) t_exit = std::min(t_exit, e.y_max / dir.y());
      if (dir.y() < 0) t_exit = std::min(t_exit, e.y_min / dir.y());
      consider(t_exit);
    }
  }
  return best;
}

bool pixel_is_free(const SceneSpec& scene, const Eigen::Vector2d& pixel) {
  Eigen::Vector2d ideal = pixel;
  if (scene.camera.k1 != 0.0 || scene.camera.k2 != 0.0) {
    try {
      ideal = undistort_point(scene.camera, pixel);
    } catch (const Error&) {
      return false;
    }
  }
  const auto ground = intersect_ground(scene.camera, ideal);
  if (!ground) return false;
  const Eigen::Vector2d g = ground->head<2>();
  if (scene.extent && !scene.extent->contains(g.x(), g.y())) return false;
  for (const auto& h : scene.holes) {
    if (h.contains(g.x(), g.y())) return false;
  }
  for (const auto& w : scene.walls) {
    if (segment_hits(w, g)) return false;
  }
  return true;
}

RenderedScene render_scene(const SceneSpec& scene) {
  scene.validate();
  const CameraModel& cam = scene.camera;
  RenderedScene out;
  out.rgb = ImageBuffer(cam.width, cam.height, 3);
  out.truth = FreespaceMap(cam.width, cam.height, false);
  bool sees_ground = false;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector2d px(u, v);
      const bool free = pixel_is_free(scene, px);
      out.truth.set(u, v, free);
      const Rgb& c = free ? scene.floor_color : scene.obstacle_color;
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(u, v, ch) = c[ch];
      if (!sees_ground && intersect_ground(cam, px)) sees_ground = true;
    }
  }
  if (!sees_ground) throw Error(ErrorKind::SceneError, "camera does not see the ground");

  for (int u = 0; u < cam.width; ++u) {
    const auto ground = intersect_ground(cam, Eigen::Vector2d(u, cam.height - 1));
    if (!ground) continue;
    const double bearing = std::atan2(ground->y(), ground->x());
    if (auto range = truth_range(scene, bearing)) out.borders.push_back({u, bearing, *range});
  }
  return out;
}

FreespaceMap render_truth_map(const SceneSpec& scene, const CropMetadata& crop) {
  if (!crop.valid()) throw Error(ErrorKind::ConfigError, "missing crop metadata");
  FreespaceMap map(crop.target_width, crop.target_height, false);
  for (int v = 0; v < crop.target_height; ++v) {
    for (int u = 0; u < crop.target_width; ++u) {
      BorderPoint p;
      p.u = u;
      p.v = v;
      map.set(u, v, pixel_is_free(scene, map_to_image_coords(p, crop)));
    }
  }
  return map;
}

SceneSpec random_scene(std::uint64_t seed, const CameraModel& camera) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  SceneSpec s;
  s.camera = camera;
  const double far = uniform(5.0, 9.0);
  const double half_width = uniform(2.5, 5.0);
  s.extent = GroundRect{-1.0, far, -half_width, half_width};

  auto random_color = [&] {
    return Rgb{static_cast<std::uint8_t>(pick(0, 255)), static_cast<std::uint8_t>(pick(0, 255)),
               static_cast<std::uint8_t>(pick(0, 255))};
  };
  do {
    s.floor_color = random_color();
    s.obstacle_color = random_color();
  } while (std::abs(luma(s.floor_color) - luma(s.obstacle_color)) < 40);

  // Obstacles stay beyond 1.6 m so the robot's own footprint is floor.
  const int wall_count = pick(0, 3);
  for (int i = 0; i < wall_count; ++i) {
    const double x0 = uniform(1.6, far - 1.0);
    const double depth = uniform(0.1, 0.6);
    const double yc = uniform(-1.5, 1.5);
    const double half = uniform(0.15, 0.8);
    s.walls.push_back({x0, std::min(x0 + depth, far),
                       std::max(yc - half, -half_width), std::min(yc + half, half_width)});
  }
  // Drop-offs run to the far edge so no floor is visible beyond them.
  const int hole_count = pick(0, 2);
  for (int i = 0; i < hole_count; ++i) {
    const double x0 = uniform(1.6, far - 0.5);
    if (pick(0, 1) == 0) {
      s.holes.push_back({x0, far, -half_width, half_width});
    } else {
      const double yc = uniform(-2.0, 2.0);
      const double half = uniform(0.3, 1.5);
      s.holes.push_back({x0, far, std::max(yc - half, -half_width), std::min(yc + half, half_width)});
    }
  }
  s.validate();
  return s;
}

MetricReport miou(const FreespaceMap& pred, const FreespaceMap& truth) {
  if (pred.width() != truth.width() || pred.height() != truth.height()) {
    throw Error(ErrorKind::ShapeError, "mIoU needs masks of equal size");
  }
  const auto p = pred.cells() != 0;
  const auto t = truth.cells() != 0;
  auto iou = [](Eigen::Index inter, Eigen::Index uni) {
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  };
  MetricReport r;
  r.iou_free = iou((p && t).count(), (p || t).count());
  r.iou_obstacle = iou((!p && !t).count(), (!p || !t).count());
  r.miou = (r.iou_free + r.iou_obstacle) / 2.0;
  r.frame_count = 1;
  return r;
}

MetricReport average_reports(std::span<const MetricReport> reports) {
  MetricReport out;
  for (const auto& r : reports) {
    out.iou_free += r.iou_free;
    out.iou_obstacle += r.iou_obstacle;
    out.miou += r.miou;
  }
  out.frame_count = static_cast<int>(reports.size());
  if (!reports.empty()) {
    const double n = static_cast<double>(reports.size());
    out.iou_free /= n;
    out.iou_obstacle /= n;
    out.miou /= n;
  }
  return out;
}

std::string to_json(const MetricReport& report) {
  const json j = {{"miou", report.miou},
                  {"per_class_iou", {{"free", report.iou_free}, {"obstacle", report.iou_obstacle}}},
                  {"frame_count", report.frame_count}};
  return j.dump(2);
}

double poly_lr(double epoch) {
  if (!(epoch >= 0.0 && epoch <= 1000.0)) {
    throw Error(ErrorKind::DomainError, "poly_lr epoch must lie in [0, 1000]");
  }
  return 0.0006 * std::pow((1000.0 - epoch) / 1000.0, 0.9);
}

}  // namespace fsnav
