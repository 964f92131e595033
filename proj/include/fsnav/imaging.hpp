#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "fsnav/image.hpp"

namespace fsnav {

template <typename Scalar>
using Kernel3 = Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>;

namespace kernels {

template <typename Scalar>
Kernel3<Scalar> sobel_x() {
  Kernel3<Scalar> k;
  k << -1, 0, 1,
       -2, 0, 2,
       -1, 0, 1;
  return k;
}

template <typename Scalar>
Kernel3<Scalar> sobel_y() {
  return sobel_x<Scalar>().transpose();
}

template <typename Scalar>
Kernel3<Scalar> laplacian() {
  Kernel3<Scalar> k;
  k << 0, -1, 0,
      -1, 4, -1,
       0, -1, 0;
  return k;
}

template <typename Scalar>
Kernel3<Scalar> identity() {
  Kernel3<Scalar> k = Kernel3<Scalar>::Zero();
  k(1, 1) = 1;
  return k;
}

}  // namespace kernels

/// 3x3 filter with replicate padding; output has the input's size.
///
/// The kernel is applied as written (no flip), so kernel(0, 0) weights the
/// up-left neighbour. For the symmetric Laplacian this is the same as a true
/// convolution; for Sobel it fixes the sign so that intensity increasing to
/// the right gives a positive sobel_x response.
template <typename Scalar>
Plane<Scalar> convolve3x3(const Plane<Scalar>& img, const Kernel3<Scalar>& kernel) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  if (rows < 3 || cols < 3) {
    throw Error(ErrorKind::ImageTooSmall, "3x3 filtering needs at least a 3x3 image");
  }
  Plane<Scalar> out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar* above = img.row(std::max<Eigen::Index>(r - 1, 0)).data();
    const Scalar* here = img.row(r).data();
    const Scalar* below = img.row(std::min(r + 1, rows - 1)).data();
    Scalar* dst = out.row(r).data();

    auto tap = [&](Eigen::Index c0, Eigen::Index c1, Eigen::Index c2) {
      return kernel(0, 0) * above[c0] + kernel(0, 1) * above[c1] + kernel(0, 2) * above[c2] +
             kernel(1, 0) * here[c0] + kernel(1, 1) * here[c1] + kernel(1, 2) * here[c2] +
             kernel(2, 0) * below[c0] + kernel(2, 1) * below[c1] + kernel(2, 2) * below[c2];
    };
    dst[0] = tap(0, 0, 1);
    for (Eigen::Index c = 1; c + 1 < cols; ++c) dst[c] = tap(c - 1, c, c + 1);
    dst[cols - 1] = tap(cols - 2, cols - 1, cols - 1);
  }
  return out;
}

/// Mean of each 2x2 block. An odd trailing row or column is dropped.
template <typename Scalar>
Plane<Scalar> downsample2x(const Plane<Scalar>& img) {
  const Eigen::Index rows = img.rows() / 2;
  const Eigen::Index cols = img.cols() / 2;
  Plane<Scalar> out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = (img(2 * r, 2 * c) + img(2 * r, 2 * c + 1) + img(2 * r + 1, 2 * c) +
                   img(2 * r + 1, 2 * c + 1)) / Scalar(4);
    }
  }
  return out;
}

/// BT.601 luma, rounded to nearest.
GrayImage to_grayscale(const ImageBuffer& rgb);

struct GradientStack {
  PlaneF sobel_x;
  PlaneF sobel_y;
  PlaneF laplacian;
};

/// Sobel X, Sobel Y and Laplacian of a gray image, each reduced to half size.
GradientStack gradient_stack(const GrayImage& gray);

enum class BlurNormalization {
  Sum,       // sum of squared deviations, as the blur-factor equation is printed
  Variance,  // the same sum divided by the pixel count
};

struct BlurFactor {
  double beta = 0.0;
  double beta_mean_abs = 0.0;  // mean |Laplacian|
};

/// Dispersion of |Laplacian| over the image. Sharper frames score higher.
BlurFactor blur_factor(const GrayImage& gray,
                       BlurNormalization normalization = BlurNormalization::Sum);

/// Describes how a network-sized frame maps back onto the source image.
struct CropMetadata {
  int src_width = 0;
  int src_height = 0;
  int offset_y = 0;     // first source row kept
  int crop_height = 0;  // rows kept
  int target_width = 0;
  int target_height = 0;
  double scale_x = 0.0;  // source pixels per target pixel
  double scale_y = 0.0;

  bool valid() const {
    return src_width > 0 && src_height > 0 && crop_height > 0 && target_width > 0 &&
           target_height > 0 && scale_x > 0.0 && scale_y > 0.0;
  }
};

/// Crop metadata for a source frame without touching any pixels.
CropMetadata crop_for_source(int src_width, int src_height, int target = 224);

struct PreprocessedFrame {
  ImageBuffer rgb;                  // target x target, 8-bit, what a segmenter sees
  std::array<PlaneF, 3> normalized;  // per channel, 2v/255 - 1
  CropMetadata crop;
};

/// Drops the top third of the frame, resizes the rest bilinearly to
/// target x target and rescales to [-1, 1].
PreprocessedFrame preprocess_frame(const ImageBuffer& rgb, int target = 224);

/// Element-wise [0, 255] -> [-1, 1].
template <typename Derived>
auto normalize_unit(const Eigen::ArrayBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  return values * Scalar(2) / Scalar(255) - Scalar(1);
}

/// Writes each plane as a 16-bit PGM after mapping [-m, m] onto [0, 65535],
/// m = max |value|, plus `<prefix>.json` recording m per plane.
void write_gradient_planes(const GradientStack& stack, const std::filesystem::path& prefix);

/// Inverse of the 16-bit encoding, given the recorded m.
PlaneF decode_gradient_plane(const Plane<std::uint16_t>& encoded, double max_abs);
Plane<std::uint16_t> encode_gradient_plane(const PlaneF& plane, double max_abs);

}  // namespace fsnav
