#include "fsnav/segmenter.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sstream>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "fsnav/imaging.hpp"

extern char** environ;

namespace fsnav {

FileBackend::FileBackend(std::filesystem::path dir, int expected_size)
    : dir_(std::move(dir)), expected_size_(expected_size) {
  if (!std::filesystem::is_directory(dir_)) {
    throw Error(ErrorKind::BackendError, "mask directory not found: " + dir_.string());
  }
}

FreespaceMap FileBackend::segment(const ImageBuffer&, std::uint32_t frame_index) {
  const auto path = dir_ / (std::to_string(frame_index) + ".pgm");
  FreespaceMap map;
  try {
    map = read_mask(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::BackendError, e.what());
  }
  if (map.width() != expected_size_ || map.height() != expected_size_) {
    throw Error(ErrorKind::BackendError, path.string() + ": mask has the wrong size");
  }
  return map;
}

FloodBackend::FloodBackend(double gradient_threshold) : threshold_(gradient_threshold) {
  if (!(gradient_threshold >= 0.0)) {
    throw Error(ErrorKind::ConfigError, "flood threshold must be non-negative");
  }
}

std::string FloodBackend::name() const {
  std::ostringstream out;
  out << "flood:" << threshold_;
  return out.str();
}

PlaneF sobel_magnitude(const GrayImage& gray) {
  const PlaneF src = gray.cast<float>();
  const PlaneF gx = convolve3x3(src, kernels::sobel_x<float>());
  const PlaneF gy = convolve3x3(src, kernels::sobel_y<float>());
  return (gx.square() + gy.square()).sqrt();
}

FreespaceMap flood_fill_below(const PlaneF& values, int seed_u, int seed_v, double threshold) {
  const int w = static_cast<int>(values.cols());
  const int h = static_cast<int>(values.rows());
  FreespaceMap map(w, h, false);
  if (seed_u < 0 || seed_v < 0 || seed_u >= w || seed_v >= h) return map;
  if (!(values(seed_v, seed_u) < threshold)) return map;
  std::vector<Eigen::Vector2i> stack{{seed_u, seed_v}};
  map.set(seed_u, seed_v, true);
  while (!stack.empty()) {
    const Eigen::Vector2i p = stack.back();
    stack.pop_back();
    const Eigen::Vector2i next[] = {{p.x() + 1, p.y()}, {p.x() - 1, p.y()},
                                    {p.x(), p.y() + 1}, {p.x(), p.y() - 1}};
    for (const auto& q : next) {
      if (!map.contains(q.x(), q.y()) || map.is_free(q.x(), q.y())) continue;
      if (!(values(q.y(), q.x()) < threshold)) continue;
      map.set(q.x(), q.y(), true);
      stack.push_back(q);
    }
  }
  return map;
}

FreespaceMap FloodBackend::segment(const ImageBuffer& rgb, std::uint32_t) {
  const PlaneF magnitude = sobel_magnitude(to_grayscale(rgb));
  return flood_fill_below(magnitude, rgb.width / 2, rgb.height - 1, threshold_);
}

namespace wire {

std::array<std::uint8_t, kHeaderSize> encode_header(const FrameHeader& header) {
  std::array<std::uint8_t, kHeaderSize> out{};
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  out[4] = static_cast<std::uint8_t>(header.kind);
  for (int i = 0; i < 4; ++i) {
    out[5 + i] = static_cast<std::uint8_t>(header.payload_len >> (8 * i));
    out[9 + i] = static_cast<std::uint8_t>(header.frame_index >> (8 * i));
  }
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t, kHeaderSize> bytes) {
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorKind::ProtocolError, "bad FSEG magic");
  }
  if (bytes[4] > 1) throw Error(ErrorKind::ProtocolError, "unknown FSEG frame kind");
  FrameHeader h;
  h.kind = static_cast<FrameKind>(bytes[4]);
  for (int i = 0; i < 4; ++i) {
    h.payload_len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
    h.frame_index |= static_cast<std::uint32_t>(bytes[9 + i]) << (8 * i);
  }
  return h;
}

}  // namespace wire

ExecBackend::ExecBackend(std::string command, std::chrono::milliseconds timeout, int frame_size)
    : command_(std::move(command)), timeout_(timeout), frame_size_(frame_size) {
  // A dead child must surface as EPIPE, not kill the process.
  std::signal(SIGPIPE, SIG_IGN);
  spawn();
}

ExecBackend::~ExecBackend() { shutdown(); }

void ExecBackend::spawn() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorKind::BackendError, "pipe failed");
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error(ErrorKind::BackendError, "pipe failed");
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  // Own process group, so shutdown reaches whatever the shell started.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::string sh = "/bin/sh";
  std::string dash_c = "-c";
  char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, &attr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  close(in_pipe[0]);
  close(out_pipe[1]);
  if (rc != 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    throw Error(ErrorKind::BackendError, "cannot start '" + command_ + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFL, fcntl(to_child_, F_GETFL) | O_NONBLOCK);
  fcntl(from_child_, F_SETFL, fcntl(from_child_, F_GETFL) | O_NONBLOCK);
}

void ExecBackend::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks a well-behaved child to exit; give it a moment.
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        kill(-pid_, SIGKILL);  // stragglers the shell left behind
        pid_ = -1;
        return;
      }
      usleep(2000);
    }
    kill(-pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

namespace {

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return static_cast<int>(std::max<long long>(0, left.count()));
}

}  // namespace

void ExecBackend::write_all(const std::uint8_t* data, std::size_t len,
                            std::chrono::steady_clock::time_point deadline) {
  while (len > 0) {
    const ssize_t n = write(to_child_, data, len);
    if (n > 0) {
      data += n;
      len -= static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && errno == EAGAIN) {
      pollfd pfd{to_child_, POLLOUT, 0};
      const int ready = poll(&pfd, 1, remaining_ms(deadline));
      if (ready == 0) throw Error(ErrorKind::BackendTimeout, "segmenter did not accept input in time");
      if (ready < 0 && errno != EINTR) throw Error(ErrorKind::BackendError, "poll failed");
      continue;
    }
    throw Error(ErrorKind::BackendError, "segmenter process closed its input");
  }
}

std::size_t ExecBackend::read_some(std::uint8_t* data, std::size_t len,
                                   std::chrono::steady_clock::time_point deadline) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = read(from_child_, data + got, len - got);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
      continue;
    }
    if (n == 0) return got;  // EOF
    if (errno == EINTR) continue;
    if (errno != EAGAIN) throw Error(ErrorKind::BackendError, "read from segmenter failed");
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, remaining_ms(deadline));
    if (ready == 0) throw Error(ErrorKind::BackendTimeout, "segmenter response timed out");
    if (ready < 0 && errno != EINTR) throw Error(ErrorKind::BackendError, "poll failed");
  }
  return got;
}

FreespaceMap ExecBackend::segment(const ImageBuffer& rgb, std::uint32_t frame_index) {
  if (broken_) throw Error(ErrorKind::BackendError, "segmenter process is no longer usable");
  if (rgb.channels != 3 || rgb.width != frame_size_ || rgb.height != frame_size_) {
    throw Error(ErrorKind::ConfigError, "exec segmenter expects a square RGB frame of the input size");
  }
  const std::size_t mask_len = static_cast<std::size_t>(frame_size_) * frame_size_;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  try {
    const auto header = wire::encode_header(
        {wire::FrameKind::Request, static_cast<std::uint32_t>(rgb.data.size()), frame_index});
    write_all(header.data(), header.size(), deadline);
    write_all(rgb.data.data(), rgb.data.size(), deadline);

    std::array<std::uint8_t, wire::kHeaderSize> reply{};
    const std::size_t got = read_some(reply.data(), reply.size(), deadline);
    if (got == 0) throw Error(ErrorKind::BackendError, "segmenter process exited");
    if (got < reply.size()) throw Error(ErrorKind::ProtocolError, "truncated FSEG header");
    const wire::FrameHeader h = wire::decode_header(reply);
    if (h.kind != wire::FrameKind::Response) {
      throw Error(ErrorKind::ProtocolError, "expected an FSEG response frame");
    }
    if (h.payload_len != mask_len) throw Error(ErrorKind::ProtocolError, "FSEG mask length mismatch");
    if (h.frame_index != frame_index) throw Error(ErrorKind::ProtocolError, "FSEG frame index mismatch");

    GrayImage cells(frame_size_, frame_size_);
    if (read_some(cells.data(), mask_len, deadline) != mask_len) {
      throw Error(ErrorKind::ProtocolError, "truncated FSEG mask payload");
    }
    if ((cells > 1).any()) throw Error(ErrorKind::ProtocolError, "FSEG mask bytes must be 0 or 1");
    return FreespaceMap(std::move(cells));
  } catch (const Error&) {
    // The stream position is unknown after any failure.
    broken_ = true;
    shutdown();
    throw;
  }
}

std::unique_ptr<SegmenterBackend> make_segmenter(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string arg = colon == std::string_view::npos ? "" : std::string(spec.substr(colon + 1));
  if (kind == "file") {
    if (arg.empty()) throw Error(ErrorKind::ConfigError, "file segmenter needs a directory");
    return std::make_unique<FileBackend>(arg);
  }
  if (kind == "flood") {
    if (arg.empty()) return std::make_unique<FloodBackend>();
    try {
      std::size_t used = 0;
      const double t = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return std::make_unique<FloodBackend>(t);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::ConfigError, "bad flood threshold '" + arg + "'");
    }
  }
  if (kind == "exec") {
    if (arg.empty()) throw Error(ErrorKind::ConfigError, "exec segmenter needs a command");
    return std::make_unique<ExecBackend>(arg);
  }
  throw Error(ErrorKind::ConfigError, "unknown segmenter '" + std::string(spec) + "'");
}

}  // namespace fsnav
