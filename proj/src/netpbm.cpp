#include "fsnav/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace fsnav {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  if (token.empty()) throw Error(ErrorKind::ParseError, "truncated netpbm header");
  return token;
}

int next_int(std::istream& in) {
  const std::string token = next_token(in);
  try {
    std::size_t used = 0;
    const int value = std::stoi(token, &used);
    if (used != token.size() || value < 0) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "bad netpbm header field '" + token + "'");
  }
}

struct Header {
  std::string magic;
  int width;
  int height;
  int maxval;
};

// Consumes the header including the single whitespace byte before the raster.
Header read_header(std::istream& in) {
  Header h;
  h.magic = next_token(in);
  h.width = next_int(in);
  h.height = next_int(in);
  h.maxval = next_int(in);
  if (h.width <= 0 || h.height <= 0) {
    throw Error(ErrorKind::ParseError, "netpbm image has zero size");
  }
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace

ImageBuffer read_pnm(std::istream& in) {
  const Header h = read_header(in);
  int channels = 0;
  if (h.magic == "P5") {
    channels = 1;
  } else if (h.magic == "P6") {
    channels = 3;
  } else {
    throw Error(ErrorKind::ParseError, "unsupported netpbm magic '" + h.magic + "'");
  }
  if (h.maxval < 1 || h.maxval > 255) {
    throw Error(ErrorKind::ParseError, "only 8-bit netpbm rasters are supported");
  }
  ImageBuffer img(h.width, h.height, channels);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw Error(ErrorKind::ParseError, "truncated netpbm raster");
  }
  if (h.maxval != 255) {
    for (auto& px : img.data) {
      px = static_cast<std::uint8_t>((static_cast<int>(px) * 255 + h.maxval / 2) / h.maxval);
    }
  }
  return img;
}

ImageBuffer read_pnm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_pnm(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const ImageBuffer& img) {
  if (!img.valid()) throw Error(ErrorKind::InvalidChannels, "cannot write malformed image");
  out << (img.channels == 1 ? "P5" : "P6") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  auto out = open_out(path);
  write_pnm(out, img);
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

void write_pgm16(const std::filesystem::path& path, const Plane<std::uint16_t>& plane) {
  auto out = open_out(path);
  out << "P5\n" << plane.cols() << ' ' << plane.rows() << "\n65535\n";
  std::vector<char> raster(static_cast<std::size_t>(plane.size()) * 2);
  for (Eigen::Index i = 0; i < plane.size(); ++i) {
    const std::uint16_t value = plane.data()[i];
    raster[2 * i] = static_cast<char>(value >> 8);
    raster[2 * i + 1] = static_cast<char>(value & 0xFF);
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

Plane<std::uint16_t> read_pgm16(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in);
  if (h.magic != "P5" || h.maxval != 65535) {
    throw Error(ErrorKind::ParseError, path.string() + ": not a 16-bit PGM");
  }
  Plane<std::uint16_t> plane(h.height, h.width);
  std::vector<unsigned char> raster(static_cast<std::size_t>(plane.size()) * 2);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) {
    throw Error(ErrorKind::ParseError, path.string() + ": truncated raster");
  }
  for (Eigen::Index i = 0; i < plane.size(); ++i) {
    plane.data()[i] = static_cast<std::uint16_t>((raster[2 * i] << 8) | raster[2 * i + 1]);
  }
  return plane;
}

}  // namespace fsnav
