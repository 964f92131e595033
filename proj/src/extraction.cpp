#include "fsnav/extraction.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "fsnav/netpbm.hpp"

namespace fsnav {

FreespaceMap::FreespaceMap(int width, int height, bool free)
    : cells_(GrayImage::Constant(height, width, free ? 1 : 0)) {}

FreespaceMap::FreespaceMap(GrayImage cells) : cells_(std::move(cells)) {
  if ((cells_ > 1).any()) throw Error(ErrorKind::ConfigError, "freespace map must be binary");
}

std::size_t FreespaceMap::free_count() const {
  return static_cast<std::size_t>((cells_ != 0).count());
}

FreespaceMap mask_from_gray(const GrayImage& gray) {
  return FreespaceMap((gray >= 128).cast<std::uint8_t>());
}

FreespaceMap read_mask(const std::filesystem::path& path) {
  return mask_from_gray(as_gray_plane(read_pnm(path)));
}

void write_mask(const std::filesystem::path& path, const FreespaceMap& map) {
  write_pnm(path, to_buffer((map.cells() * 255).eval()));
}

std::string_view to_string(ExtractionMethod method) {
  switch (method) {
    case ExtractionMethod::Vertical: return "vertical";
    case ExtractionMethod::Polar: return "polar";
    case ExtractionMethod::Contour: return "contour";
  }
  return "?";
}

ExtractionMethod parse_method(std::string_view text) {
  if (text == "vertical") return ExtractionMethod::Vertical;
  if (text == "polar") return ExtractionMethod::Polar;
  if (text == "contour") return ExtractionMethod::Contour;
  throw Error(ErrorKind::ConfigError, "unknown extraction method '" + std::string(text) + "'");
}

bool border_predicate(const FreespaceMap& map, int u, int v) {
  if (!map.contains(u, v)) throw Error(ErrorKind::IndexError, "border_predicate: pixel out of bounds");
  if (!map.is_free(u, v)) return false;
  constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (const auto& [du, dv] : kNeighbours) {
    if (map.contains(u + du, v + dv) && !map.is_free(u + du, v + dv)) return true;
  }
  return false;
}

namespace {

// Walks a pixel path starting at the robot's feet and reports where free
// space first ends. Shared by the vertical and polar methods.
template <typename Path>
std::optional<BorderPoint> first_transition(const FreespaceMap& map, const Path& path,
                                             ExtractionMethod method, int index,
                                             bool max_range_markers) {
  if (path.empty()) return std::nullopt;
  BorderPoint p;
  p.method = method;
  p.ray_index = index;
  if (!map.is_free(path.front().x(), path.front().y())) {
    p.u = path.front().x();
    p.v = path.front().y();
    p.kind = PointKind::MinimalRange;
    return p;
  }
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!map.is_free(path[i].x(), path[i].y())) {
      p.u = path[i - 1].x();
      p.v = path[i - 1].y();
      return p;
    }
  }
  if (!max_range_markers) return std::nullopt;
  p.u = path.back().x();
  p.v = path.back().y();
  p.kind = PointKind::MaxRange;
  return p;
}

}  // namespace

BorderPointSet vertical_projection(const FreespaceMap& map, int k, bool max_range_markers) {
  const int w = map.width();
  const int h = map.height();
  if (k < 1 || k > w) throw Error(ErrorKind::ConfigError, "vertical projection needs 1 <= k <= width");
  BorderPointSet out;
  std::vector<Eigen::Vector2i> column(h);
  for (int i = 0; i < k; ++i) {
    // floor((i + 0.5) * w / k) without rounding error
    const int c = static_cast<int>((2LL * i + 1) * w / (2LL * k));
    for (int t = 0; t < h; ++t) column[t] = {c, h - 1 - t};
    if (auto p = first_transition(map, column, ExtractionMethod::Vertical, i, max_range_markers)) {
      out.push_back(*p);
    }
  }
  return out;
}

std::vector<Eigen::Vector2i> polar_ray_pixels(int width, int height, double theta) {
  std::vector<Eigen::Vector2i> path;
  if (width < 1 || height < 1) return path;
  const double half = width / 2.0;
  // cos(pi/2) is 6e-17, not 0, which would push a vertical ray one column left.
  auto snap = [](double x) { return std::abs(x) < 1e-12 ? 0.0 : x; };
  const double cos_t = snap(std::cos(theta));
  const double sin_t = snap(std::sin(theta));
  auto inside = [&](int x, int y) { return x >= 0 && x < width && y >= 0 && y < height; };

  // (x, y) with y counted upward from the bottom row.
  int x0 = static_cast<int>(std::floor(half));
  int y0 = 0;
  path.emplace_back(x0, height - 1);
  for (int step = 1;; ++step) {
    const double t = 0.5 * step;
    const int x1 = static_cast<int>(std::floor(half - t * cos_t));
    const int y1 = static_cast<int>(std::floor(t * sin_t));
    if (x1 == x0 && y1 == y0) continue;
    if (x1 != x0 && y1 != y0) {
      // Diagonal move: insert the corner pixel the ray crosses first so the
      // path stays 4-connected.
      const double t_x = (half - (x1 > x0 ? x1 : x0)) / cos_t;
      const double t_y = (y1 > y0 ? y1 : y0) / sin_t;
      const int cx = t_x < t_y ? x1 : x0;
      const int cy = t_x < t_y ? y0 : y1;
      if (!inside(cx, cy)) break;
      path.emplace_back(cx, height - 1 - cy);
    }
    if (!inside(x1, y1)) break;
    path.emplace_back(x1, height - 1 - y1);
    x0 = x1;
    y0 = y1;
  }
  return path;
}

BorderPointSet polar_projection(const FreespaceMap& map, int k, bool max_range_markers) {
  if (k < 1) throw Error(ErrorKind::ConfigError, "polar projection needs k >= 1");
  BorderPointSet out;
  for (int j = 0; j < k; ++j) {
    const double theta = std::numbers::pi * (j + 0.5) / k;
    const auto path = polar_ray_pixels(map.width(), map.height(), theta);
    if (auto p = first_transition(map, path, ExtractionMethod::Polar, j, max_range_markers)) {
      out.push_back(*p);
    }
  }
  return out;
}

namespace {

// Neighbour offsets (drow, dcol), counter-clockwise on screen starting east.
constexpr std::array<std::array<int, 2>, 8> kDirs{
    {{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}}};

int direction_to(int r, int c, int nr, int nc) {
  for (int d = 0; d < 8; ++d) {
    if (kDirs[d][0] == nr - r && kDirs[d][1] == nc - c) return d;
  }
  return -1;
}

}  // namespace

std::vector<Contour> extract_contours(const FreespaceMap& map) {
  const int h = map.height();
  const int w = map.width();
  // Label image with a one-pixel background frame. Labels follow the
  // border-following convention: 1 = unvisited foreground, +/-n = border n.
  Plane<int> f = Plane<int>::Zero(h + 2, w + 2);
  f.block(1, 1, h, w) = map.cells().cast<int>();

  std::vector<Contour> contours;
  // Indexed by border number; border 1 is the frame, which acts as a hole.
  std::vector<bool> border_is_hole{false, true};
  std::vector<int> border_parent{0, 0};

  for (int i = 1; i <= h; ++i) {
    int lnbd = 1;
    for (int j = 1; j <= w; ++j) {
      const int fij = f(i, j);
      bool outer = false;
      int i2 = 0;
      int j2 = 0;
      if (fij == 1 && f(i, j - 1) == 0) {
        outer = true;
        i2 = i;
        j2 = j - 1;
      } else if (fij >= 1 && f(i, j + 1) == 0) {
        if (fij > 1) lnbd = fij;
        i2 = i;
        j2 = j + 1;
      } else {
        if (fij != 1 && fij != 0) lnbd = std::abs(fij);
        continue;
      }

      const int nbd = static_cast<int>(border_is_hole.size());
      const bool parent_is_hole = border_is_hole[lnbd];
      const int parent = (outer != parent_is_hole) ? border_parent[lnbd] : lnbd;
      border_is_hole.push_back(!outer);
      border_parent.push_back(parent);

      Contour contour;
      contour.is_hole = !outer;
      contour.parent = parent >= 2 ? parent - 2 : -1;

      // Clockwise search around (i, j) from (i2, j2) for any foreground pixel.
      const int start_dir = direction_to(i, j, i2, j2);
      int i1 = -1;
      int j1 = -1;
      for (int k = 0; k < 8; ++k) {
        const int d = (start_dir - k + 8) % 8;
        if (f(i + kDirs[d][0], j + kDirs[d][1]) != 0) {
          i1 = i + kDirs[d][0];
          j1 = j + kDirs[d][1];
          break;
        }
      }
      if (i1 < 0) {
        f(i, j) = -nbd;
        contour.points.emplace_back(j - 1, i - 1);
      } else {
        i2 = i1;
        j2 = j1;
        int i3 = i;
        int j3 = j;
        while (true) {
          // Counter-clockwise search around (i3, j3), starting just past (i2, j2).
          const int from = direction_to(i3, j3, i2, j2);
          bool east_examined_zero = false;
          int i4 = i3;
          int j4 = j3;
          for (int k = 1; k <= 8; ++k) {
            const int d = (from + k) % 8;
            const int ni = i3 + kDirs[d][0];
            const int nj = j3 + kDirs[d][1];
            if (f(ni, nj) != 0) {
              i4 = ni;
              j4 = nj;
              break;
            }
            if (d == 0) east_examined_zero = true;
          }
          if (east_examined_zero) {
            f(i3, j3) = -nbd;
          } else if (f(i3, j3) == 1) {
            f(i3, j3) = nbd;
          }
          contour.points.emplace_back(j3 - 1, i3 - 1);
          if (i4 == i && j4 == j && i3 == i1 && j3 == j1) break;
          i2 = i3;
          j2 = j3;
          i3 = i4;
          j3 = j4;
        }
      }
      contours.push_back(std::move(contour));
      if (f(i, j) != 1) lnbd = std::abs(f(i, j));
    }
  }
  return contours;
}

BorderPointSet contour_border_points(const FreespaceMap& map, int stride) {
  if (stride < 1) throw Error(ErrorKind::ConfigError, "contour stride must be >= 1");
  const int w = map.width();
  const int h = map.height();
  Plane<bool> seen = Plane<bool>::Constant(h, w, false);
  BorderPointSet out;
  const auto contours = extract_contours(map);
  for (std::size_t ci = 0; ci < contours.size(); ++ci) {
    const auto& pts = contours[ci].points;
    for (std::size_t k = 0; k < pts.size(); k += static_cast<std::size_t>(stride)) {
      const int u = pts[k].x();
      const int v = pts[k].y();
      // The image frame is the edge of the field of view, not an obstacle.
      if (u == 0 || v == 0 || u == w - 1 || v == h - 1) continue;
      if (seen(v, u)) continue;
      seen(v, u) = true;
      out.push_back({u, v, ExtractionMethod::Contour, std::nullopt, PointKind::Border});
    }
  }
  return out;
}

BorderPointSet extract_border_points(const FreespaceMap& map, const ExtractionConfig& config) {
  switch (config.method) {
    case ExtractionMethod::Vertical:
      return vertical_projection(map, config.count, config.max_range_markers);
    case ExtractionMethod::Polar:
      return polar_projection(map, config.count, config.max_range_markers);
    case ExtractionMethod::Contour:
      return contour_border_points(map, config.contour_stride);
  }
  return {};
}

void write_border_csv(std::ostream& out, const BorderPointSet& points) {
  out << "u,v,method,ray_index\n";
  for (const auto& p : points) {
    out << p.u << ',' << p.v << ',' << to_string(p.method) << ',';
    if (p.ray_index) out << *p.ray_index;
    out << '\n';
  }
}

BorderPointSet read_border_csv(std::istream& in) {
  BorderPointSet points;
  std::string line;
  if (!std::getline(in, line) || line.rfind("u,v,method,ray_index", 0) != 0) {
    throw Error(ErrorKind::ParseError, "border CSV must start with 'u,v,method,ray_index'");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    std::istringstream row(line);
    std::size_t n = 0;
    while (n < fields.size() && std::getline(row, fields[n], ',')) ++n;
    try {
      if (n < 3) throw std::invalid_argument("too few fields");
      BorderPoint p;
      p.u = std::stoi(fields[0]);
      p.v = std::stoi(fields[1]);
      p.method = parse_method(fields[2]);
      if (n == 4 && !fields[3].empty()) p.ray_index = std::stoi(fields[3]);
      points.push_back(p);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad border CSV line " + std::to_string(line_no));
    }
  }
  return points;
}

}  // namespace fsnav
