#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsnav/costmap.hpp"
#include "fsnav/extraction.hpp"
#include "fsnav/imaging.hpp"
#include "fsnav/projection.hpp"
#include "fsnav/segmenter.hpp"

namespace fsnav {

struct PipelineConfig {
  ExtractionConfig extraction;
  CameraModel camera;
  std::optional<double> beta0;  // median blur factor of the run when empty
  BlurNormalization normalization = BlurNormalization::Sum;
  double max_range = 10.0;
  double resolution = 0.05;
  double map_size = 20.0;  // meters per side, centered on the robot
  IntegrationParams integration;
  RobotPose pose;
  std::optional<std::filesystem::path> out_dir;
  int threads = 1;
};

/// Threads allowed by FSNAV_THREADS, else the hardware concurrency.
int default_thread_count();

struct StageStats {
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
};

StageStats summarize(std::vector<double> samples_ms);

struct TimingReport {
  std::vector<std::string> stage_order;
  std::map<std::string, StageStats> stages;
  StageStats total;
  double fps = 0.0;  // 1000 / median total
  int frames = 0;
  int skipped = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

/// Per-frame stage timings in milliseconds, in execution order.
struct FrameTimings {
  std::vector<std::pair<std::string, double>> stages;
  double total_ms = 0.0;
};

struct FrameResult {
  BorderPointSet borders;
  PointCloud3D cloud;
  BlurFactor beta;
  CropMetadata crop;
};

struct PipelineResult {
  Costmap costmap;
  std::vector<PointCloud3D> clouds;
  std::vector<std::filesystem::path> frames;  // one per cloud
  TimingReport timing;
};

/// `.ppm` files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// preprocess -> segment -> gradients -> blur -> extract for one frame.
/// Projection and costmap integration happen once beta0 is known.
struct FrontEndResult {
  PreprocessedFrame frame;
  FreespaceMap map;
  BorderPointSet borders;
  BlurFactor beta;
};
FrontEndResult run_front_end(const ImageBuffer& rgb, std::uint32_t frame_index,
                             SegmenterBackend& segmenter, const PipelineConfig& config,
                             FrameTimings& timings);

/// Full run over a directory of frames. Writes clouds/, costmap.{pgm,json}
/// and timing.json under config.out_dir when set.
PipelineResult run_pipeline(const std::filesystem::path& frames_dir, const PipelineConfig& config,
                            SegmenterBackend& segmenter);

/// Times `iterations` passes through the per-frame pipeline, cycling over the
/// frames, after 10 untimed warm-up passes.
TimingReport bench(const std::filesystem::path& frames_dir, int iterations,
                   const PipelineConfig& config, SegmenterBackend& segmenter);
TimingReport bench(const std::vector<ImageBuffer>& frames, int iterations,
                   const PipelineConfig& config, SegmenterBackend& segmenter);

}  // namespace fsnav
