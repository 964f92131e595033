#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fsnav/image.hpp"
#include "fsnav/projection.hpp"

namespace fsnav {

struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Placement of an unbounded square grid in the world.
struct GridGeometry {
  double resolution = 0.05;  // meters per cell
  double origin_x = 0.0;     // world position of the (0, 0) cell's lower corner
  double origin_y = 0.0;

  /// Cell containing a world point, without bounds.
  Cell cell_of(double x, double y) const;
};

struct RobotPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, (-pi, pi]

  Eigen::Vector2d to_world(const Eigen::Vector3d& base_point) const;
};

/// 2D occupancy grid; cost 0 is free, 255 lethal.
class Costmap {
 public:
  static constexpr std::uint8_t kLethal = 255;

  Costmap(double resolution, int width, int height, double origin_x, double origin_y);

  /// Square map of `size_m` meters centered on the world origin.
  static Costmap centered(double resolution, double size_m);

  const GridGeometry& geometry() const { return geometry_; }
  double resolution() const { return geometry_.resolution; }
  double origin_x() const { return geometry_.origin_x; }
  double origin_y() const { return geometry_.origin_y; }
  int width() const { return static_cast<int>(cells_.cols()); }
  int height() const { return static_cast<int>(cells_.rows()); }

  bool contains(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width() && c.row < height(); }
  std::optional<Cell> world_to_cell(double x, double y) const;
  Eigen::Vector2d cell_center(Cell c) const;

  std::uint8_t cost(Cell c) const { return cells_(c.row, c.col); }
  void set_cost(Cell c, std::uint8_t value) { cells_(c.row, c.col) = value; }
  const GrayImage& costs() const { return cells_; }
  GrayImage& costs() { return cells_; }

 private:
  GridGeometry geometry_;
  GrayImage cells_;
};

/// Every cell the closed segment a-b touches, in order from a's cell to b's.
/// Where the segment passes exactly through a grid corner both side cells are
/// included.
std::vector<Cell> supercover_cells(const GridGeometry& grid, const Eigen::Vector2d& a,
                                   const Eigen::Vector2d& b);

struct IntegrationParams {
  int mark_step = 128;
  int clear_step = 32;
};

/// Clears along every robot-to-point ray, then marks every endpoint; each
/// step is scaled by the point's intensity. Points off the grid are skipped.
void integrate_pointcloud(Costmap& map, const PointCloud3D& cloud, const RobotPose& pose,
                          const IntegrationParams& params = {});

/// True iff every cell the disk of `robot_radius` around (x, y) overlaps has
/// cost < lethal_threshold. A disk reaching off the grid is not traversable.
bool is_traversable(const Costmap& map, double x, double y, double robot_radius,
                    int lethal_threshold = 128);

/// `<prefix>.pgm` (row r = grid row r) and `<prefix>.json` with the geometry.
void write_costmap(const Costmap& map, const std::filesystem::path& prefix);
Costmap read_costmap(const std::filesystem::path& prefix);

}  // namespace fsnav
