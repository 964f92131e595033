#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "fsnav/image.hpp"

namespace fsnav {

/// Reads binary PGM (P5) or PPM (P6) with maxval <= 255.
ImageBuffer read_pnm(std::istream& in);
ImageBuffer read_pnm(const std::filesystem::path& path);

/// Writes P5 for one channel and P6 for three.
void write_pnm(std::ostream& out, const ImageBuffer& img);
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);

/// 16-bit P5, big-endian samples, maxval 65535.
void write_pgm16(const std::filesystem::path& path, const Plane<std::uint16_t>& plane);
Plane<std::uint16_t> read_pgm16(const std::filesystem::path& path);

}  // namespace fsnav
