#include "fsnav/costmap.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "fsnav/netpbm.hpp"

namespace fsnav {

Cell GridGeometry::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor((x - origin_x) / resolution)),
          static_cast<int>(std::floor((y - origin_y) / resolution))};
}

Eigen::Vector2d RobotPose::to_world(const Eigen::Vector3d& p) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
}

Costmap::Costmap(double resolution, int width, int height, double origin_x, double origin_y)
    : geometry_{resolution, origin_x, origin_y} {
  if (!(resolution > 0.0) || width <= 0 || height <= 0) {
    throw Error(ErrorKind::ConfigError, "costmap needs positive resolution and size");
  }
  cells_ = GrayImage::Zero(height, width);
}

Costmap Costmap::centered(double resolution, double size_m) {
  if (!(resolution > 0.0) || !(size_m > 0.0)) {
    throw Error(ErrorKind::ConfigError, "costmap needs positive resolution and size");
  }
  const int cells = static_cast<int>(std::ceil(size_m / resolution));
  const double half = cells * resolution / 2.0;
  return Costmap(resolution, cells, cells, -half, -half);
}

std::optional<Cell> Costmap::world_to_cell(double x, double y) const {
  const double fx = std::floor((x - geometry_.origin_x) / geometry_.resolution);
  const double fy = std::floor((y - geometry_.origin_y) / geometry_.resolution);
  if (!(fx >= 0.0 && fy >= 0.0 && fx < width() && fy < height())) return std::nullopt;
  return Cell{static_cast<int>(fx), static_cast<int>(fy)};
}

Eigen::Vector2d Costmap::cell_center(Cell c) const {
  return {geometry_.origin_x + (c.col + 0.5) * geometry_.resolution,
          geometry_.origin_y + (c.row + 0.5) * geometry_.resolution};
}

std::vector<Cell> supercover_cells(const GridGeometry& grid, const Eigen::Vector2d& a,
                                   const Eigen::Vector2d& b) {
  // Grid units: cell (i, j) spans [i, i+1) x [j, j+1).
  const double gx0 = (a.x() - grid.origin_x) / grid.resolution;
  const double gy0 = (a.y() - grid.origin_y) / grid.resolution;
  const double gx1 = (b.x() - grid.origin_x) / grid.resolution;
  const double gy1 = (b.y() - grid.origin_y) / grid.resolution;
  Cell cur{static_cast<int>(std::floor(gx0)), static_cast<int>(std::floor(gy0))};
  const Cell end{static_cast<int>(std::floor(gx1)), static_cast<int>(std::floor(gy1))};

  const double dx = gx1 - gx0;
  const double dy = gy1 - gy0;
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Parameter t in [0, 1] at which the segment crosses the next grid line.
  double t_max_x = step_x > 0 ? (cur.col + 1 - gx0) / dx : step_x < 0 ? (cur.col - gx0) / dx : kInf;
  double t_max_y = step_y > 0 ? (cur.row + 1 - gy0) / dy : step_y < 0 ? (cur.row - gy0) / dy : kInf;
  const double t_delta_x = step_x != 0 ? 1.0 / std::abs(dx) : kInf;
  const double t_delta_y = step_y != 0 ? 1.0 / std::abs(dy) : kInf;

  std::vector<Cell> cells{cur};
  cells.reserve(static_cast<std::size_t>(std::abs(end.col - cur.col) + std::abs(end.row - cur.row)) + 1);
  while (cur != end) {
    const bool x_done = cur.col == end.col;
    const bool y_done = cur.row == end.row;
    if (!x_done && !y_done && t_max_x == t_max_y) {
      // Exact corner crossing: the segment touches both side cells.
      cells.push_back({cur.col + step_x, cur.row});
      cells.push_back({cur.col, cur.row + step_y});
      cur.col += step_x;
      cur.row += step_y;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    } else if (y_done || (!x_done && t_max_x < t_max_y)) {
      cur.col += step_x;
      t_max_x += t_delta_x;
    } else {
      cur.row += step_y;
      t_max_y += t_delta_y;
    }
    cells.push_back(cur);
  }
  return cells;
}

void integrate_pointcloud(Costmap& map, const PointCloud3D& cloud, const RobotPose& pose,
                          const IntegrationParams& params) {
  struct Hit {
    Cell cell;
    Eigen::Vector2d world;
    int mark;
    int clear;
  };
  std::vector<Hit> hits;
  hits.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    const int mark = static_cast<int>(std::lround(p.intensity * params.mark_step));
    const int clear = static_cast<int>(std::lround(p.intensity * params.clear_step));
    if (mark == 0 && clear == 0) continue;
    const Eigen::Vector2d w = pose.to_world(p.position);
    if (auto cell = map.world_to_cell(w.x(), w.y())) hits.push_back({*cell, w, mark, clear});
  }

  const Eigen::Vector2d robot(pose.x, pose.y);
  for (const auto& hit : hits) {
    if (hit.clear == 0) continue;
    const auto ray = supercover_cells(map.geometry(), robot, hit.world);
    for (std::size_t i = 1; i + 1 < ray.size(); ++i) {
      if (!map.contains(ray[i])) continue;
      map.set_cost(ray[i], static_cast<std::uint8_t>(std::max(0, map.cost(ray[i]) - hit.clear)));
    }
  }
  for (const auto& hit : hits) {
    map.set_cost(hit.cell, static_cast<std::uint8_t>(std::min(255, map.cost(hit.cell) + hit.mark)));
  }
}

bool is_traversable(const Costmap& map, double x, double y, double robot_radius, int lethal_threshold) {
  if (!(robot_radius >= 0.0)) throw Error(ErrorKind::ConfigError, "robot radius must be >= 0");
  const double x_max = map.origin_x() + map.width() * map.resolution();
  const double y_max = map.origin_y() + map.height() * map.resolution();
  if (x - robot_radius < map.origin_x() || y - robot_radius < map.origin_y() ||
      x + robot_radius >= x_max || y + robot_radius >= y_max) {
    return false;
  }
  const Cell lo = map.geometry().cell_of(x - robot_radius, y - robot_radius);
  const Cell hi = map.geometry().cell_of(x + robot_radius, y + robot_radius);
  const double r2 = robot_radius * robot_radius;
  for (int row = lo.row; row <= hi.row; ++row) {
    for (int col = lo.col; col <= hi.col; ++col) {
      const Cell c{col, row};
      if (!map.contains(c)) return false;
      // Closest point of the cell square to the query point.
      const double cx0 = map.origin_x() + col * map.resolution();
      const double cy0 = map.origin_y() + row * map.resolution();
      const double nx = std::clamp(x, cx0, cx0 + map.resolution());
      const double ny = std::clamp(y, cy0, cy0 + map.resolution());
      if ((nx - x) * (nx - x) + (ny - y) * (ny - y) > r2) continue;
      if (map.cost(c) >= lethal_threshold) return false;
    }
  }
  return true;
}

void write_costmap(const Costmap& map, const std::filesystem::path& prefix) {
  write_pnm(prefix.string() + ".pgm", to_buffer(map.costs()));
  const nlohmann::json meta = {{"resolution", map.resolution()}, {"origin_x", map.origin_x()},
                               {"origin_y", map.origin_y()},     {"width", map.width()},
                               {"height", map.height()}};
  std::ofstream out(prefix.string() + ".json");
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + prefix.string() + ".json");
  out << meta.dump(2) << '\n';
}

Costmap read_costmap(const std::filesystem::path& prefix) {
  std::ifstream in(prefix.string() + ".json");
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + prefix.string() + ".json");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  Costmap map(meta.at("resolution").get<double>(), meta.at("width").get<int>(),
              meta.at("height").get<int>(), meta.at("origin_x").get<double>(),
              meta.at("origin_y").get<double>());
  const GrayImage costs = as_gray_plane(read_pnm(prefix.string() + ".pgm"));
  if (costs.rows() != map.height() || costs.cols() != map.width()) {
    throw Error(ErrorKind::ShapeError, "costmap raster does not match its sidecar");
  }
  map.costs() = costs;
  return map;
}

}  // namespace fsnav
