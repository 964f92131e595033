#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <queue>
#include <random>

#include "fsnav/segmenter.hpp"

using namespace fsnav;

namespace {

const std::string kEcho = FSEG_ECHO_PATH;

ImageBuffer solid(int size, std::uint8_t value) {
  ImageBuffer img(size, size, 3);
  std::fill(img.data.begin(), img.data.end(), value);
  return img;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::IoError;
}

std::size_t open_descriptors() {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator("/proc/self/fd")) ++n;
  return n;
}

// Plain BFS, 4-connected.
FreespaceMap bfs_oracle(const PlaneF& values, int su, int sv, double threshold) {
  const int h = static_cast<int>(values.rows());
  const int w = static_cast<int>(values.cols());
  FreespaceMap out(w, h, false);
  if (!(values(sv, su) < threshold)) return out;
  std::queue<std::pair<int, int>> q;
  q.emplace(su, sv);
  out.set(su, sv, true);
  while (!q.empty()) {
    const auto [u, v] = q.front();
    q.pop();
    const int du[] = {1, -1, 0, 0};
    const int dv[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nu = u + du[k];
      const int nv = v + dv[k];
      if (nu < 0 || nv < 0 || nu >= w || nv >= h || out.is_free(nu, nv)) continue;
      if (values(nv, nu) < threshold) {
        out.set(nu, nv, true);
        q.emplace(nu, nv);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("wire header") {
  const wire::FrameHeader h{wire::FrameKind::Response, 50176, 0x01020304};
  const auto bytes = wire::encode_header(h);
  CHECK(bytes.size() == 13);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[3] == 'G');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0x00);  // 50176 = 0xC400, little-endian
  CHECK(bytes[6] == 0xC4);
  CHECK(bytes[9] == 0x04);
  CHECK(bytes[12] == 0x01);
  CHECK(wire::decode_header(bytes) == h);

  std::mt19937 rng(1);
  for (int i = 0; i < 100; ++i) {
    const wire::FrameHeader r{i % 2 ? wire::FrameKind::Request : wire::FrameKind::Response,
                              static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng())};
    CHECK(wire::decode_header(wire::encode_header(r)) == r);
  }

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(kind_of([&] { wire::decode_header(bad); }) == ErrorKind::ProtocolError);
  bad = bytes;
  bad[4] = 7;
  CHECK(kind_of([&] { wire::decode_header(bad); }) == ErrorKind::ProtocolError);
}

TEST_CASE("file backend") {
  const auto dir = std::filesystem::temp_directory_path() / "fsnav_file_backend";
  std::filesystem::create_directories(dir);
  write_mask(dir / "0.pgm", FreespaceMap(224, 224, true));
  write_mask(dir / "1.pgm", FreespaceMap(224, 224, false));
  std::mt19937 rng(6);
  FreespaceMap mixed(224, 224, false);
  for (int v = 0; v < 224; ++v)
    for (int u = 0; u < 224; ++u) mixed.set(u, v, rng() & 1);
  write_mask(dir / "2.pgm", mixed);
  write_mask(dir / "3.pgm", FreespaceMap(100, 100, true));
  {
    std::ofstream junk(dir / "4.pgm");
    junk << "garbage";
  }

  FileBackend backend(dir);
  const ImageBuffer frame = solid(224, 0);
  CHECK(backend.segment(frame, 0).free_count() == 224u * 224u);
  CHECK(backend.segment(frame, 1).free_count() == 0u);
  CHECK(backend.segment(frame, 2) == mixed);
  CHECK(kind_of([&] { backend.segment(frame, 3); }) == ErrorKind::BackendError);
  CHECK(kind_of([&] { backend.segment(frame, 4); }) == ErrorKind::BackendError);
  CHECK(kind_of([&] { backend.segment(frame, 9); }) == ErrorKind::BackendError);
  CHECK(kind_of([&] { FileBackend(dir / "nope"); }) == ErrorKind::BackendError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("flood backend") {
  FloodBackend flood;
  SUBCASE("uniform image is all free") {
    CHECK(flood.segment(solid(224, 90), 0).free_count() == 224u * 224u);
  }
  SUBCASE("stops at a high-contrast stripe") {
    ImageBuffer img = solid(224, 180);
    for (int v = 100; v < 104; ++v)
      for (int u = 0; u < 224; ++u)
        for (int c = 0; c < 3; ++c) img.at(u, v, c) = 20;
    const FreespaceMap map = flood.segment(img, 0);
    for (int u = 0; u < 224; u += 11) {
      CHECK(map.is_free(u, 223));
      CHECK(map.is_free(u, 106));
      CHECK_FALSE(map.is_free(u, 102));
      CHECK_FALSE(map.is_free(u, 50));
    }
  }
  SUBCASE("threshold 0 frees nothing") {
    std::mt19937 rng(3);
    ImageBuffer img(224, 224, 3);
    for (auto& p : img.data) p = static_cast<std::uint8_t>(rng() & 0xFF);
    CHECK(FloodBackend(0.0).segment(img, 0).free_count() == 0u);
  }
  SUBCASE("matches a BFS oracle and stays connected around the seed") {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      GrayImage gray = GrayImage::Constant(224, 224, 120);
      for (int b = 0; b < 12; ++b) {
        const int u0 = rng() % 224;
        const int v0 = rng() % 224;
        const auto value = static_cast<std::uint8_t>(rng() & 0xFF);
        gray.block(v0, u0, std::min(224 - v0, 1 + static_cast<int>(rng() % 60)),
                   std::min(224 - u0, 1 + static_cast<int>(rng() % 60)))
            .setConstant(value);
      }
      const PlaneF mag = sobel_magnitude(gray);
      const FreespaceMap got = flood_fill_below(mag, 112, 223, 30.0);
      CHECK(got == bfs_oracle(mag, 112, 223, 30.0));
      if (got.free_count() > 0) CHECK(got.is_free(112, 223));
    }
  }
  SUBCASE("sobel magnitude of a step") {
    GrayImage gray = GrayImage::Zero(5, 5);
    gray.rightCols(2).setConstant(10);
    const PlaneF mag = sobel_magnitude(gray);
    CHECK(mag(2, 0) == 0.0f);
    CHECK(mag(2, 2) == 40.0f);
    CHECK(mag(2, 3) == 40.0f);
  }
}

TEST_CASE("make_segmenter") {
  CHECK(make_segmenter("flood")->name() == "flood:30");
  CHECK(make_segmenter("flood:12.5")->name() == "flood:12.5");
  CHECK(kind_of([] { make_segmenter("flood:abc"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([] { make_segmenter("magic"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([] { make_segmenter("exec:"); }) == ErrorKind::ConfigError);
  CHECK(make_segmenter("exec:" + kEcho)->name() == "exec:" + kEcho);
}

TEST_CASE("exec backend") {
  const ImageBuffer frame = solid(224, 200);
  SUBCASE("echo child") {
    ExecBackend backend(kEcho);
    CHECK_FALSE(backend.reentrant());
    CHECK(backend.segment(frame, 0).free_count() == 224u * 224u);
    CHECK(backend.segment(frame, 1).free_count() == 224u * 224u);
  }
  SUBCASE("mask content comes back intact") {
    ExecBackend backend(kEcho + " red");
    ImageBuffer img = solid(224, 0);
    for (int v = 0; v < 224; ++v)
      for (int u = 0; u < 100; ++u) img.at(u, v, 0) = 255;
    const FreespaceMap map = backend.segment(img, 5);
    CHECK(map.free_count() == 100u * 224u);
    CHECK(map.is_free(99, 10));
    CHECK_FALSE(map.is_free(100, 10));
  }
  SUBCASE("protocol violations") {
    for (const char* mode : {"bad-magic", "wrong-index", "truncate"}) {
      ExecBackend backend(kEcho + " " + mode);
      CHECK(kind_of([&] { backend.segment(frame, 3); }) == ErrorKind::ProtocolError);
      // The stream is out of sync after a failure; the backend refuses further use.
      CHECK(kind_of([&] { backend.segment(frame, 4); }) == ErrorKind::BackendError);
    }
  }
  SUBCASE("child exit") {
    ExecBackend backend(kEcho + " exit");
    CHECK(kind_of([&] { backend.segment(frame, 0); }) == ErrorKind::BackendError);
  }
  SUBCASE("missing command") {
    ExecBackend backend("/nonexistent/segmenter");
    CHECK(kind_of([&] { backend.segment(frame, 0); }) == ErrorKind::BackendError);
  }
  SUBCASE("timeout") {
    ExecBackend backend(kEcho + " sleep", std::chrono::milliseconds(200));
    CHECK(kind_of([&] { backend.segment(frame, 0); }) == ErrorKind::BackendTimeout);
  }
  SUBCASE("wrong frame size") {
    ExecBackend backend(kEcho);
    CHECK(kind_of([&] { backend.segment(solid(100, 0), 0); }) == ErrorKind::ConfigError);
  }
  SUBCASE("descriptors are released with the backend") {
    const std::size_t before = open_descriptors();
    for (int i = 0; i < 5; ++i) {
      ExecBackend backend(kEcho);
      backend.segment(frame, 0);
    }
    CHECK(open_descriptors() == before);
  }
}

TEST_CASE("exec backend soak") {
  ExecBackend backend(kEcho);
  const ImageBuffer frame = solid(224, 10);
  backend.segment(frame, 0);
  const int pid = backend.child_pid();
  const std::size_t fds = open_descriptors();
  int errors = 0;
  for (std::uint32_t i = 1; i <= 1000; ++i) {
    try {
      if (backend.segment(frame, i).free_count() != 224u * 224u) ++errors;
    } catch (const Error&) {
      ++errors;
    }
  }
  CHECK(errors == 0);
  CHECK(backend.child_pid() == pid);
  CHECK(open_descriptors() == fds);
}
