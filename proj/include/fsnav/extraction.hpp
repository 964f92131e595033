#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fsnav/image.hpp"

namespace fsnav {

/// Binary per-pixel classification: 1 = free space, 0 = obstacle/background.
class FreespaceMap {
 public:
  FreespaceMap() = default;
  FreespaceMap(int width, int height, bool free = false);
  /// Takes ownership of a plane whose cells must all be 0 or 1.
  explicit FreespaceMap(GrayImage cells);

  int width() const { return static_cast<int>(cells_.cols()); }
  int height() const { return static_cast<int>(cells_.rows()); }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width() && v < height(); }
  bool is_free(int u, int v) const { return cells_(v, u) != 0; }
  void set(int u, int v, bool free) { cells_(v, u) = free ? 1 : 0; }

  const GrayImage& cells() const { return cells_; }
  std::size_t free_count() const;

  friend bool operator==(const FreespaceMap& a, const FreespaceMap& b) {
    return a.cells_.rows() == b.cells_.rows() && a.cells_.cols() == b.cells_.cols() &&
           (a.cells_ == b.cells_).all();
  }

 private:
  GrayImage cells_;
};

/// Mask PGM: any value >= 128 reads as free; free writes as 255.
FreespaceMap mask_from_gray(const GrayImage& gray);
FreespaceMap read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const FreespaceMap& map);

enum class ExtractionMethod { Vertical, Polar, Contour };

std::string_view to_string(ExtractionMethod method);
ExtractionMethod parse_method(std::string_view text);

enum class PointKind {
  Border,        // last free pixel before an obstacle
  MinimalRange,  // line starts on an obstacle: reported at the robot's feet
  MaxRange,      // line never meets an obstacle (only with max-range markers on)
};

struct BorderPoint {
  int u = 0;
  int v = 0;
  ExtractionMethod method = ExtractionMethod::Vertical;
  std::optional<int> ray_index;
  PointKind kind = PointKind::Border;
};

using BorderPointSet = std::vector<BorderPoint>;

struct ExtractionConfig {
  ExtractionMethod method = ExtractionMethod::Polar;
  int count = 64;
  int contour_stride = 1;
  bool max_range_markers = false;
};

/// True iff (u, v) is free and one of its in-image 4-neighbours is an obstacle.
bool border_predicate(const FreespaceMap& map, int u, int v);

/// k columns at floor((i + 0.5) w / k), each scanned upward from the bottom row.
BorderPointSet vertical_projection(const FreespaceMap& map, int k,
                                   bool max_range_markers = false);

/// 4-connected pixel path of a ray leaving the bottom-centre pixel at angle
/// theta (0 points right, pi/2 straight up), clipped to the image.
std::vector<Eigen::Vector2i> polar_ray_pixels(int width, int height, double theta);

/// k rays at angles pi (j + 0.5) / k from the bottom-centre pixel.
BorderPointSet polar_projection(const FreespaceMap& map, int k, bool max_range_markers = false);

struct Contour {
  std::vector<Eigen::Vector2i> points;  // (u, v), closed loop, 8-adjacent
  bool is_hole = false;
  int parent = -1;  // index into the returned list, -1 at top level
};

/// Border following over free pixels (8-connected) against a 4-connected
/// background. Returns outer and hole borders in raster discovery order.
std::vector<Contour> extract_contours(const FreespaceMap& map);

/// Every stride-th contour pixel, minus those on the image frame.
BorderPointSet contour_border_points(const FreespaceMap& map, int stride);

BorderPointSet extract_border_points(const FreespaceMap& map, const ExtractionConfig& config);

/// CSV with header `u,v,method,ray_index`; an absent ray index is an empty field.
void write_border_csv(std::ostream& out, const BorderPointSet& points);
BorderPointSet read_border_csv(std::istream& in);

}  // namespace fsnav
