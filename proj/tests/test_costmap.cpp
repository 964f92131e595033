#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "fsnav/costmap.hpp"

using namespace fsnav;

namespace {

PointCloud3D cloud_of(std::initializer_list<std::pair<Eigen::Vector2d, double>> pts) {
  PointCloud3D cloud;
  for (const auto& [xy, intensity] : pts) cloud.points.push_back({Eigen::Vector3d(xy.x(), xy.y(), 0.0), intensity});
  return cloud;
}

// Cells whose open interior the segment passes through (slab test).
std::set<Cell> slab_oracle(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  std::set<Cell> out;
  const int c0 = static_cast<int>(std::floor(std::min(a.x(), b.x()))) - 1;
  const int c1 = static_cast<int>(std::floor(std::max(a.x(), b.x()))) + 1;
  const int r0 = static_cast<int>(std::floor(std::min(a.y(), b.y()))) - 1;
  const int r1 = static_cast<int>(std::floor(std::max(a.y(), b.y()))) + 1;
  const Eigen::Vector2d d = b - a;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      double lo = 0.0;
      double hi = 1.0;
      bool hit = true;
      for (int axis = 0; axis < 2 && hit; ++axis) {
        const double min_edge = axis == 0 ? c : r;
        if (d[axis] == 0.0) {
          hit = a[axis] > min_edge && a[axis] < min_edge + 1;
          continue;
        }
        double t0 = (min_edge - a[axis]) / d[axis];
        double t1 = (min_edge + 1 - a[axis]) / d[axis];
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
      }
      if (hit && lo < hi) out.insert({c, r});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("world_to_cell") {
  const Costmap map(0.05, 40, 40, 0.0, 0.0);
  CHECK(map.world_to_cell(0.0, 0.0) == Cell{0, 0});
  CHECK(map.world_to_cell(0.26, 0.0) == Cell{5, 0});
  CHECK_FALSE(map.world_to_cell(-0.01, 0.0).has_value());
  CHECK_FALSE(map.world_to_cell(0.0, 2.0).has_value());
  CHECK(map.world_to_cell(1.99, 1.99) == Cell{39, 39});

  const Costmap centered = Costmap::centered(0.05, 20.0);
  CHECK(centered.width() == 400);
  CHECK(centered.origin_x() == -10.0);
  CHECK(centered.world_to_cell(0.0, 0.0) == Cell{200, 200});
  CHECK(centered.cell_center({200, 200}).isApprox(Eigen::Vector2d(0.025, 0.025)));

  CHECK_THROWS_AS(Costmap(0.0, 10, 10, 0, 0), Error);
  CHECK_THROWS_AS(Costmap(0.1, 0, 10, 0, 0), Error);
}

TEST_CASE("supercover_cells") {
  const GridGeometry unit{1.0, 0.0, 0.0};
  SUBCASE("single cell") {
    const auto cells = supercover_cells(unit, {0.2, 0.3}, {0.7, 0.9});
    CHECK(cells == std::vector<Cell>{{0, 0}});
  }
  SUBCASE("exact diagonal touches both side cells at each corner") {
    const auto cells = supercover_cells(unit, {0.5, 0.5}, {2.5, 2.5});
    const std::set<Cell> got(cells.begin(), cells.end());
    CHECK(got == std::set<Cell>{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 1}, {1, 2}, {2, 2}});
  }
  SUBCASE("ordered from start to end and 4-connected") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> coord(-20.0, 20.0);
    for (int trial = 0; trial < 500; ++trial) {
      const Eigen::Vector2d a(coord(rng), coord(rng));
      const Eigen::Vector2d b(coord(rng), coord(rng));
      const auto cells = supercover_cells(unit, a, b);
      CHECK(cells.front() == unit.cell_of(a.x(), a.y()));
      CHECK(cells.back() == unit.cell_of(b.x(), b.y()));
      for (std::size_t i = 1; i < cells.size(); ++i) {
        CHECK(std::abs(cells[i].col - cells[i - 1].col) + std::abs(cells[i].row - cells[i - 1].row) == 1);
      }
    }
  }
  SUBCASE("matches the slab test and dense sampling") {
    const GridGeometry grid{0.05, -10.0, -10.0};
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> coord(-3.0, 3.0);
    for (int trial = 0; trial < 300; ++trial) {
      const Eigen::Vector2d a(coord(rng), coord(rng));
      const Eigen::Vector2d b(coord(rng), coord(rng));
      const auto cells = supercover_cells(grid, a, b);
      const std::set<Cell> got(cells.begin(), cells.end());
      CHECK(got.size() == cells.size());

      auto to_grid = [&](const Eigen::Vector2d& p) {
        return Eigen::Vector2d((p.x() - grid.origin_x) / grid.resolution, (p.y() - grid.origin_y) / grid.resolution);
      };
      CHECK(got == slab_oracle(to_grid(a), to_grid(b)));

      const double len = (b - a).norm();
      const int steps = static_cast<int>(std::ceil(len / (0.1 * grid.resolution)));
      for (int s = 0; s <= steps; ++s) {
        const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(s) / steps);
        CHECK(got.count(grid.cell_of(p.x(), p.y())) == 1);
      }
    }
  }
}

TEST_CASE("integrate_pointcloud") {
  SUBCASE("empty cloud") {
    Costmap map = Costmap::centered(0.05, 20.0);
    map.set_cost({5, 5}, 77);
    const GrayImage before = map.costs();
    integrate_pointcloud(map, PointCloud3D{}, RobotPose{});
    CHECK((map.costs() == before).all());
  }
  SUBCASE("one point one meter ahead") {
    Costmap map = Costmap::centered(0.05, 20.0);
    const auto cloud = cloud_of({{{1.0, 0.0}, 1.0}});
    integrate_pointcloud(map, cloud, RobotPose{});
    CHECK(map.cost({220, 200}) == 128);
    CHECK(map.costs().sum() == 128);
    integrate_pointcloud(map, cloud, RobotPose{});
    CHECK(map.cost({220, 200}) == 255);
  }
  SUBCASE("clearing lowers cells strictly between robot and hit") {
    Costmap map = Costmap::centered(0.05, 20.0);
    map.costs().setConstant(100);
    integrate_pointcloud(map, cloud_of({{{1.0, 0.0}, 1.0}}), RobotPose{});
    CHECK(map.cost({200, 200}) == 100);  // robot cell untouched
    for (int col = 201; col < 220; ++col) CHECK(map.cost({col, 200}) == 68);
    CHECK(map.cost({220, 200}) == 228);
    CHECK(map.cost({221, 200}) == 100);
    CHECK(map.cost({210, 201}) == 100);
  }
  SUBCASE("pose rotates and translates the cloud") {
    Costmap map = Costmap::centered(0.05, 20.0);
    RobotPose pose;
    pose.x = 1.0;
    pose.heading = std::numbers::pi / 2;
    integrate_pointcloud(map, cloud_of({{{2.0, 0.0}, 1.0}}), pose);
    CHECK(map.cost(*map.world_to_cell(1.0 + 0.01, 2.0 + 0.01)) == 128);
  }
  SUBCASE("zero intensity is a no-op and off-grid points are skipped") {
    Costmap map = Costmap::centered(0.05, 4.0);
    map.costs().setConstant(50);
    integrate_pointcloud(map, cloud_of({{{1.0, 0.5}, 0.0}, {{30.0, 0.0}, 1.0}}), RobotPose{});
    CHECK((map.costs() == 50).all());
  }
  SUBCASE("costs stay in range under heavy random integration") {
    Costmap map = Costmap::centered(0.1, 6.0);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> coord(-4.0, 4.0);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    for (int round = 0; round < 50; ++round) {
      PointCloud3D cloud;
      for (int i = 0; i < 40; ++i) cloud.points.push_back({Eigen::Vector3d(coord(rng), coord(rng), 0.0), weight(rng)});
      integrate_pointcloud(map, cloud, RobotPose{});
    }
    CHECK(map.costs().maxCoeff() <= 255);
    CHECK(map.costs().maxCoeff() == 255);  // saturation reached without wrapping
  }
  SUBCASE("two halves equal the whole on non-saturating input") {
    PointCloud3D cloud;
    for (int i = 0; i < 36; ++i) {
      const double bearing = i * std::numbers::pi / 18;
      const double range = i % 2 ? 2.0 : 3.0;
      cloud.points.push_back({Eigen::Vector3d(range * std::cos(bearing), range * std::sin(bearing), 0.0), 0.5});
    }
    PointCloud3D first;
    PointCloud3D second;
    first.points.assign(cloud.points.begin(), cloud.points.begin() + 18);
    second.points.assign(cloud.points.begin() + 18, cloud.points.end());

    Costmap whole = Costmap::centered(0.05, 10.0);
    whole.costs().setConstant(40);
    Costmap halves = whole;
    integrate_pointcloud(whole, cloud, RobotPose{});
    integrate_pointcloud(halves, first, RobotPose{});
    integrate_pointcloud(halves, second, RobotPose{});
    CHECK((whole.costs() == halves.costs()).all());
    CHECK(whole.costs().maxCoeff() == 104);
  }
}

TEST_CASE("is_traversable") {
  Costmap map(0.1, 50, 50, 0.0, 0.0);
  CHECK(is_traversable(map, 2.5, 2.5, 0.3));
  map.set_cost({25, 25}, 255);
  CHECK_FALSE(is_traversable(map, 2.5, 2.5, 0.3));
  CHECK_FALSE(is_traversable(map, 2.5, 2.5, 0.0));
  CHECK(is_traversable(map, 3.5, 2.55, 0.3));
  map.set_cost({25, 25}, 128);
  CHECK_FALSE(is_traversable(map, 2.55, 2.55, 0.0));
  map.set_cost({25, 25}, 127);
  CHECK(is_traversable(map, 2.55, 2.55, 0.0));
  CHECK(is_traversable(map, 2.55, 2.55, 0.0, 127) == false);

  // Disk touching a cell only through its corner region.
  map.set_cost({25, 25}, 255);
  CHECK(is_traversable(map, 2.38, 2.38, 0.15));   // nearest corner 0.17 away
  CHECK_FALSE(is_traversable(map, 2.42, 2.42, 0.15));  // nearest corner 0.113 away

  CHECK_FALSE(is_traversable(map, 0.05, 2.5, 0.3));  // disk leaves the grid
  CHECK_FALSE(is_traversable(map, -1.0, 2.5, 0.1));
  CHECK_THROWS_AS(is_traversable(map, 1.0, 1.0, -0.1), Error);
}

TEST_CASE("costmap file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "fsnav_costmap_test";
  std::filesystem::create_directories(dir);
  Costmap map(0.1, 7, 5, -0.35, -0.25);
  map.set_cost({6, 0}, 200);
  map.set_cost({0, 4}, 9);
  write_costmap(map, dir / "map");
  const Costmap back = read_costmap(dir / "map");
  CHECK(back.width() == 7);
  CHECK(back.height() == 5);
  CHECK(back.origin_x() == -0.35);
  CHECK(back.resolution() == 0.1);
  CHECK((back.costs() == map.costs()).all());
  CHECK_THROWS_AS(read_costmap(dir / "missing"), Error);
  std::filesystem::remove_all(dir);
}
