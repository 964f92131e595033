#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "fsnav/extraction.hpp"
#include "fsnav/image.hpp"

namespace fsnav {

/// Produces a binary freespace map for one preprocessed RGB frame.
class SegmenterBackend {
 public:
  static constexpr int kInputSize = 224;

  virtual ~SegmenterBackend() = default;

  virtual std::string name() const = 0;
  /// Whether segment() may be called from several threads at once.
  virtual bool reentrant() const { return true; }
  virtual FreespaceMap segment(const ImageBuffer& rgb, std::uint32_t frame_index) = 0;
};

/// Reads `<dir>/<frame_index>.pgm`.
class FileBackend : public SegmenterBackend {
 public:
  explicit FileBackend(std::filesystem::path dir, int expected_size = kInputSize);

  std::string name() const override { return "file:" + dir_.string(); }
  FreespaceMap segment(const ImageBuffer& rgb, std::uint32_t frame_index) override;

 private:
  std::filesystem::path dir_;
  int expected_size_;
};

/// Sobel-magnitude flood fill from the bottom-centre pixel.
class FloodBackend : public SegmenterBackend {
 public:
  static constexpr double kDefaultThreshold = 30.0;

  explicit FloodBackend(double gradient_threshold = kDefaultThreshold);

  std::string name() const override;
  FreespaceMap segment(const ImageBuffer& rgb, std::uint32_t frame_index) override;

 private:
  double threshold_;
};

/// 4-connected flood over pixels with value < threshold, from `seed` (u, v).
FreespaceMap flood_fill_below(const PlaneF& values, int seed_u, int seed_v, double threshold);

/// Per-pixel Sobel gradient magnitude of a gray image.
PlaneF sobel_magnitude(const GrayImage& gray);

namespace wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{'F', 'S', 'E', 'G'};
inline constexpr std::size_t kHeaderSize = 13;

enum class FrameKind : std::uint8_t { Request = 0, Response = 1 };

struct FrameHeader {
  FrameKind kind = FrameKind::Request;
  std::uint32_t payload_len = 0;
  std::uint32_t frame_index = 0;
  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

/// magic(4) kind(1) payload_len(u32 LE) frame_index(u32 LE)
std::array<std::uint8_t, kHeaderSize> encode_header(const FrameHeader& header);
/// Throws ProtocolError on bad magic or unknown kind.
FrameHeader decode_header(std::span<const std::uint8_t, kHeaderSize> bytes);

}  // namespace wire

/// Talks FSEG to a long-lived child process over its stdin/stdout.
class ExecBackend : public SegmenterBackend {
 public:
  explicit ExecBackend(std::string command,
                       std::chrono::milliseconds timeout = std::chrono::milliseconds(1000),
                       int frame_size = kInputSize);
  ~ExecBackend() override;

  ExecBackend(const ExecBackend&) = delete;
  ExecBackend& operator=(const ExecBackend&) = delete;

  std::string name() const override { return "exec:" + command_; }
  bool reentrant() const override { return false; }
  FreespaceMap segment(const ImageBuffer& rgb, std::uint32_t frame_index) override;

  int child_pid() const { return pid_; }

 private:
  void spawn();
  void shutdown();
  void write_all(const std::uint8_t* data, std::size_t len,
                 std::chrono::steady_clock::time_point deadline);
  /// Returns bytes read before EOF; throws on timeout.
  std::size_t read_some(std::uint8_t* data, std::size_t len,
                        std::chrono::steady_clock::time_point deadline);

  std::string command_;
  std::chrono::milliseconds timeout_;
  int frame_size_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  bool broken_ = false;
};

/// `file:<dir>`, `flood`, `flood:<threshold>` or `exec:<command>`.
std::unique_ptr<SegmenterBackend> make_segmenter(std::string_view spec);

}  // namespace fsnav
