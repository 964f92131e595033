#include "fsnav/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "fsnav/netpbm.hpp"

namespace fsnav {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs `fn` and appends its wall time to `timings` under `stage`.
template <typename Fn>
auto timed(FrameTimings& timings, const char* stage, Fn&& fn) {
  const auto start = Clock::now();
  if constexpr (std::is_void_v<decltype(fn())>) {
    fn();
    timings.stages.emplace_back(stage, ms_since(start));
  } else {
    auto result = fn();
    timings.stages.emplace_back(stage, ms_since(start));
    return result;
  }
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double resolve_beta0(const PipelineConfig& config, const std::vector<double>& betas) {
  if (config.beta0) {
    if (!(*config.beta0 > 0.0)) throw Error(ErrorKind::ConfigError, "beta0 must be positive");
    return *config.beta0;
  }
  const double median = median_of(betas);
  return median > 0.0 ? median : 1.0;
}

class TimingCollector {
 public:
  void add(const FrameTimings& frame) {
    for (const auto& [stage, ms] : frame.stages) {
      if (!samples_.count(stage)) order_.push_back(stage);
      samples_[stage].push_back(ms);
    }
    totals_.push_back(frame.total_ms);
  }

  TimingReport report() const {
    TimingReport r;
    r.stage_order = order_;
    for (const auto& [stage, values] : samples_) r.stages[stage] = summarize(values);
    r.total = summarize(totals_);
    r.fps = r.total.median_ms > 0.0 ? 1000.0 / r.total.median_ms : 0.0;
    r.frames = static_cast<int>(totals_.size());
    return r;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::vector<double>> samples_;
  std::vector<double> totals_;
};

}  // namespace

int default_thread_count() {
  int threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FSNAV_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) threads = std::min(threads, cap);
  }
  return threads;
}

StageStats summarize(std::vector<double> samples) {
  StageStats s;
  s.samples = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.median_ms = median_of(samples);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * samples.size()));
  s.p95_ms = samples[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::string TimingReport::to_json() const {
  auto stats = [](const StageStats& s) {
    return nlohmann::json{{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"samples", s.samples}};
  };
  nlohmann::json j;
  j["frames"] = frames;
  j["skipped"] = skipped;
  j["stages"] = nlohmann::json::object();
  for (const auto& name : stage_order) j["stages"][name] = stats(stages.at(name));
  j["stage_order"] = stage_order;
  j["total"] = stats(total);
  j["fps"] = fps;
  j["warnings"] = warnings;
  return j.dump(2);
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::ConfigError, "frames directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return frames;
}

FrontEndResult run_front_end(const ImageBuffer& rgb, std::uint32_t frame_index,
                             SegmenterBackend& segmenter, const PipelineConfig& config,
                             FrameTimings& timings) {
  FrontEndResult r;
  r.frame = timed(timings, "preprocess", [&] { return preprocess_frame(rgb); });
  r.map = timed(timings, "segment", [&] { return segmenter.segment(r.frame.rgb, frame_index); });
  GrayImage gray;
  timed(timings, "gradients", [&] {
    gray = to_grayscale(r.frame.rgb);
    return gradient_stack(gray);
  });
  r.beta = timed(timings, "blur", [&] { return blur_factor(gray, config.normalization); });
  r.borders = timed(timings, "extract", [&] { return extract_border_points(r.map, config.extraction); });
  return r;
}

PipelineResult run_pipeline(const std::filesystem::path& frames_dir, const PipelineConfig& config,
                            SegmenterBackend& segmenter) {
  config.camera.validate();
  const auto paths = list_frames(frames_dir);
  const std::size_t n = paths.size();

  struct Slot {
    std::optional<FrontEndResult> front;
    FrameTimings timings;
    std::string warning;
    std::optional<Error> error;
  };
  std::vector<Slot> slots(n);
  std::atomic<std::size_t> next{0};
  std::mutex segment_mutex;

  // Locks around segment() for backends that serialize requests.
  class Guarded : public SegmenterBackend {
   public:
    Guarded(SegmenterBackend& inner, std::mutex& m) : inner_(inner), m_(m) {}
    std::string name() const override { return inner_.name(); }
    FreespaceMap segment(const ImageBuffer& rgb, std::uint32_t index) override {
      if (inner_.reentrant()) return inner_.segment(rgb, index);
      std::lock_guard lock(m_);
      return inner_.segment(rgb, index);
    }

   private:
    SegmenterBackend& inner_;
    std::mutex& m_;
  };

  auto worker = [&] {
    Guarded guarded(segmenter, segment_mutex);
    for (std::size_t i = next++; i < n; i = next++) {
      Slot& slot = slots[i];
      ImageBuffer rgb;
      try {
        rgb = timed(slot.timings, "load", [&] { return read_pnm(paths[i]); });
        if (rgb.channels != 3) throw Error(ErrorKind::InvalidChannels, "frame is not RGB");
        if (rgb.height < 3) throw Error(ErrorKind::ImageTooSmall, "frame too small");
      } catch (const Error& e) {
        slot.warning = paths[i].filename().string() + ": skipped: " + e.what();
        continue;
      }
      try {
        slot.front = run_front_end(rgb, static_cast<std::uint32_t>(i), guarded, config, slot.timings);
      } catch (const Error& e) {
        slot.error = Error(e.kind(), "frame " + std::to_string(i) + " (" +
                                         paths[i].filename().string() + "): " + e.what());
      }
    }
  };
  const int threads = std::clamp(config.threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& slot : slots) {
    if (slot.error) throw *slot.error;
  }

  std::vector<double> betas;
  for (const auto& slot : slots) {
    if (slot.front) betas.push_back(slot.front->beta.beta);
  }
  CloudConfig cloud_config;
  cloud_config.beta0 = resolve_beta0(config, betas);
  cloud_config.max_range = config.max_range;

  PipelineResult result{Costmap::centered(config.resolution, config.map_size), {}, {}, {}};
  if (config.out_dir) std::filesystem::create_directories(*config.out_dir / "clouds");

  TimingCollector collector;
  int skipped = 0;
  std::vector<std::string> warnings;
  // Integration is the serialization point and runs in frame order.
  for (std::size_t i = 0; i < n; ++i) {
    Slot& slot = slots[i];
    if (!slot.front) {
      ++skipped;
      warnings.push_back(slot.warning);
      std::cerr << "warning: " << slot.warning << '\n';
      continue;
    }
    const FrontEndResult& front = *slot.front;
    PointCloud3D cloud = timed(slot.timings, "project", [&] {
      return build_pointcloud(front.borders, config.camera, front.frame.crop, front.beta, cloud_config);
    });
    cloud.frame_id = paths[i].stem().string();
    timed(slot.timings, "integrate",
          [&] { integrate_pointcloud(result.costmap, cloud, config.pose, config.integration); });
    slot.timings.total_ms = 0.0;
    for (const auto& [stage, ms] : slot.timings.stages) slot.timings.total_ms += ms;
    collector.add(slot.timings);

    if (config.out_dir) write_ply(*config.out_dir / "clouds" / (paths[i].stem().string() + ".ply"), cloud);
    result.clouds.push_back(std::move(cloud));
    result.frames.push_back(paths[i]);
  }

  result.timing = collector.report();
  result.timing.skipped = skipped;
  result.timing.warnings = std::move(warnings);
  if (config.out_dir) {
    write_costmap(result.costmap, *config.out_dir / "costmap");
    std::ofstream out(*config.out_dir / "timing.json");
    out << result.timing.to_json() << '\n';
  }
  return result;
}

TimingReport bench(const std::vector<ImageBuffer>& frames, int iterations,
                   const PipelineConfig& config, SegmenterBackend& segmenter) {
  constexpr int kWarmup = 10;
  if (iterations < 1) throw Error(ErrorKind::ConfigError, "bench needs at least one iteration");
  config.camera.validate();
  TimingReport empty;
  if (frames.empty()) return empty;

  std::vector<double> betas;
  for (const auto& f : frames) betas.push_back(blur_factor(to_grayscale(preprocess_frame(f).rgb)).beta);
  CloudConfig cloud_config;
  cloud_config.beta0 = resolve_beta0(config, betas);
  cloud_config.max_range = config.max_range;

  Costmap costmap = Costmap::centered(config.resolution, config.map_size);
  TimingCollector collector;
  for (int it = 0; it < kWarmup + iterations; ++it) {
    const std::size_t k = static_cast<std::size_t>(it) % frames.size();
    FrameTimings timings;
    const auto start = Clock::now();
    const FrontEndResult front =
        run_front_end(frames[k], static_cast<std::uint32_t>(k), segmenter, config, timings);
    const PointCloud3D cloud = timed(timings, "project", [&] {
      return build_pointcloud(front.borders, config.camera, front.frame.crop, front.beta, cloud_config);
    });
    timed(timings, "integrate", [&] { integrate_pointcloud(costmap, cloud, config.pose, config.integration); });
    timings.total_ms = ms_since(start);
    if (it >= kWarmup) collector.add(timings);
  }
  return collector.report();
}

TimingReport bench(const std::filesystem::path& frames_dir, int iterations,
                   const PipelineConfig& config, SegmenterBackend& segmenter) {
  std::vector<ImageBuffer> frames;
  for (const auto& path : list_frames(frames_dir)) frames.push_back(read_pnm(path));
  return bench(frames, iterations, config, segmenter);
}

}  // namespace fsnav
