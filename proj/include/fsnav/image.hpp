#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fsnav/error.hpp"

namespace fsnav {

/// Single-channel raster. Rows index v (top to bottom), columns index u.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Plane<std::uint8_t>;
using PlaneF = Plane<float>;

/// 8-bit raster with interleaved channels (1 = gray, 3 = RGB), row-major,
/// origin top-left.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int u, int v, int c = 0) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  std::uint8_t at(int u, int v, int c = 0) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }

  bool valid() const {
    return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
           data.size() == static_cast<std::size_t>(width) * height * channels;
  }
};

/// Copies a single-channel buffer into a plane.
inline GrayImage as_gray_plane(const ImageBuffer& img) {
  if (img.channels != 1) {
    throw Error(ErrorKind::InvalidChannels, "expected a single-channel image");
  }
  GrayImage out(img.height, img.width);
  std::copy(img.data.begin(), img.data.end(), out.data());
  return out;
}

inline ImageBuffer to_buffer(const GrayImage& plane) {
  ImageBuffer out(static_cast<int>(plane.cols()), static_cast<int>(plane.rows()), 1);
  std::copy(plane.data(), plane.data() + plane.size(), out.data.begin());
  return out;
}

}  // namespace fsnav
