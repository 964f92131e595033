#include "fsnav/imaging.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "fsnav/netpbm.hpp"

namespace fsnav {

GrayImage to_grayscale(const ImageBuffer& rgb) {
  if (rgb.channels != 3) {
    throw Error(ErrorKind::InvalidChannels, "grayscale conversion needs an RGB image");
  }
  GrayImage gray(rgb.height, rgb.width);
  const std::uint8_t* src = rgb.data.data();
  for (Eigen::Index i = 0; i < gray.size(); ++i, src += 3) {
    const double y = 0.299 * src[0] + 0.587 * src[1] + 0.114 * src[2];
    gray.data()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
  }
  return gray;
}

GradientStack gradient_stack(const GrayImage& gray) {
  const PlaneF src = gray.cast<float>();
  return {
      downsample2x(convolve3x3(src, kernels::sobel_x<float>())),
      downsample2x(convolve3x3(src, kernels::sobel_y<float>())),
      downsample2x(convolve3x3(src, kernels::laplacian<float>())),
  };
}

BlurFactor blur_factor(const GrayImage& gray, BlurNormalization normalization) {
  // Laplacian responses of 8-bit input are small integers, exact in f32.
  const PlaneF lap = convolve3x3<float>(gray.cast<float>(), kernels::laplacian<float>());
  const auto n = static_cast<double>(lap.size());

  double sum_abs = 0.0;
  for (Eigen::Index i = 0; i < lap.size(); ++i) sum_abs += std::abs(double(lap.data()[i]));
  const double mean_abs = sum_abs / n;

  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < lap.size(); ++i) {
    const double d = std::abs(double(lap.data()[i])) - mean_abs;
    sum_sq += d * d;
  }
  BlurFactor out;
  out.beta_mean_abs = mean_abs;
  out.beta = normalization == BlurNormalization::Variance ? sum_sq / n : sum_sq;
  return out;
}

CropMetadata crop_for_source(int src_width, int src_height, int target) {
  if (src_width < 1 || src_height < 3 || target < 1) {
    throw Error(ErrorKind::ImageTooSmall, "frame too small to crop");
  }
  CropMetadata crop;
  crop.src_width = src_width;
  crop.src_height = src_height;
  crop.offset_y = src_height / 3;
  crop.crop_height = src_height - crop.offset_y;
  crop.target_width = target;
  crop.target_height = target;
  crop.scale_x = static_cast<double>(src_width) / target;
  crop.scale_y = static_cast<double>(crop.crop_height) / target;
  return crop;
}

PreprocessedFrame preprocess_frame(const ImageBuffer& rgb, int target) {
  if (rgb.channels != 3) {
    throw Error(ErrorKind::InvalidChannels, "preprocessing needs an RGB frame");
  }
  PreprocessedFrame out;
  out.crop = crop_for_source(rgb.width, rgb.height, target);
  const CropMetadata& crop = out.crop;

  // Target pixel (j, i) samples source (j * scale_x, offset_y + i * scale_y),
  // the same mapping map_to_image_coords inverts.
  struct Tap {
    int lo, hi;
    float frac;
  };
  auto make_tap = [](double pos, int limit) {
    pos = std::clamp(pos, 0.0, static_cast<double>(limit - 1));
    const int lo = static_cast<int>(std::floor(pos));
    return Tap{lo, std::min(lo + 1, limit - 1), static_cast<float>(pos - lo)};
  };
  std::vector<Tap> col_taps(target), row_taps(target);
  for (int j = 0; j < target; ++j) col_taps[j] = make_tap(j * crop.scale_x, rgb.width);
  for (int i = 0; i < target; ++i) {
    row_taps[i] = make_tap(crop.offset_y + i * crop.scale_y, rgb.height);
  }

  out.rgb = ImageBuffer(target, target, 3);
  for (int i = 0; i < target; ++i) {
    const Tap& ry = row_taps[i];
    for (int j = 0; j < target; ++j) {
      const Tap& rx = col_taps[j];
      for (int c = 0; c < 3; ++c) {
        const float top = rgb.at(rx.lo, ry.lo, c) * (1.0f - rx.frac) + rgb.at(rx.hi, ry.lo, c) * rx.frac;
        const float bot = rgb.at(rx.lo, ry.hi, c) * (1.0f - rx.frac) + rgb.at(rx.hi, ry.hi, c) * rx.frac;
        const float v = top * (1.0f - ry.frac) + bot * ry.frac;
        out.rgb.at(j, i, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }

  for (int c = 0; c < 3; ++c) {
    PlaneF channel(target, target);
    for (Eigen::Index k = 0; k < channel.size(); ++k) channel.data()[k] = out.rgb.data[3 * k + c];
    out.normalized[c] = normalize_unit(channel);
  }
  return out;
}

Plane<std::uint16_t> encode_gradient_plane(const PlaneF& plane, double max_abs) {
  Plane<std::uint16_t> out(plane.rows(), plane.cols());
  for (Eigen::Index i = 0; i < plane.size(); ++i) {
    const double unit = max_abs > 0.0 ? (plane.data()[i] + max_abs) / (2.0 * max_abs) : 0.5;
    out.data()[i] = static_cast<std::uint16_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 65535.0));
  }
  return out;
}

PlaneF decode_gradient_plane(const Plane<std::uint16_t>& encoded, double max_abs) {
  return (encoded.cast<double>() / 65535.0 * (2.0 * max_abs) - max_abs).cast<float>();
}

void write_gradient_planes(const GradientStack& stack, const std::filesystem::path& prefix) {
  nlohmann::json sidecar;
  sidecar["width"] = stack.sobel_x.cols();
  sidecar["height"] = stack.sobel_x.rows();
  const std::pair<const char*, const PlaneF*> planes[] = {
      {"sobel_x", &stack.sobel_x}, {"sobel_y", &stack.sobel_y}, {"laplacian", &stack.laplacian}};
  for (const auto& [name, plane] : planes) {
    const double m = plane->size() ? static_cast<double>(plane->abs().maxCoeff()) : 0.0;
    const std::filesystem::path file = prefix.string() + "_" + name + ".pgm";
    write_pgm16(file, encode_gradient_plane(*plane, m));
    sidecar["planes"][name] = {{"file", file.filename().string()}, {"max_abs", m}};
  }
  std::ofstream out(prefix.string() + ".json");
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + prefix.string() + ".json");
  out << sidecar.dump(2) << '\n';
}

}  // namespace fsnav
