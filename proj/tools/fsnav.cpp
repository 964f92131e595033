// fsnav: freespace-map to costmap tooling.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fsnav/costmap.hpp"
#include "fsnav/evaluation.hpp"
#include "fsnav/extraction.hpp"
#include "fsnav/imaging.hpp"
#include "fsnav/netpbm.hpp"
#include "fsnav/pipeline.hpp"
#include "fsnav/projection.hpp"
#include "fsnav/segmenter.hpp"

namespace fs = std::filesystem;
using namespace fsnav;

namespace {

struct Options {
  std::string input;
  std::vector<std::string> inputs;
  std::string out;
  std::string camera;
  std::string segmenter = "flood";
  std::string method = "polar";
  int count = 64;
  int stride = 1;
  double beta = 1.0;
  double beta0 = 0.0;  // 0 = use the run's median
  double resolution = 0.05;
  double map_size = 20.0;
  double max_range = 10.0;
  bool normalized = false;
  bool raw = false;
  bool max_range_markers = false;
  int iterations = 100;
  int synth_count = 10;
  std::uint64_t seed = 1;
  std::string scene;
};

CameraModel default_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 300.0;
  cam.cx = cam.cy = 112.0;
  cam.width = cam.height = 224;
  cam.camera_height = 0.5;
  return cam;
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig cfg;
  if (o.camera.empty()) throw Error(ErrorKind::ConfigError, "--camera is required");
  cfg.camera = load_camera(o.camera);
  cfg.extraction.method = parse_method(o.method);
  cfg.extraction.count = o.count;
  cfg.extraction.contour_stride = o.stride;
  cfg.extraction.max_range_markers = o.max_range_markers;
  if (o.beta0 > 0.0) cfg.beta0 = o.beta0;
  cfg.normalization = o.normalized ? BlurNormalization::Variance : BlurNormalization::Sum;
  cfg.resolution = o.resolution;
  cfg.map_size = o.map_size;
  cfg.max_range = o.max_range;
  cfg.threads = default_thread_count();
  return cfg;
}

GrayImage load_gray(const std::string& path, bool raw) {
  const ImageBuffer img = read_pnm(fs::path(path));
  if (!raw) return to_grayscale(preprocess_frame(img).rgb);
  return img.channels == 1 ? as_gray_plane(img) : to_grayscale(img);
}

int cmd_gradients(const Options& o) {
  const GradientStack stack = gradient_stack(load_gray(o.input, o.raw));
  write_gradient_planes(stack, o.out);
  std::cout << "{\"width\": " << stack.sobel_x.cols() << ", \"height\": " << stack.sobel_x.rows() << "}\n";
  return 0;
}

int cmd_blur(const Options& o) {
  const auto norm = o.normalized ? BlurNormalization::Variance : BlurNormalization::Sum;
  const BlurFactor b = blur_factor(load_gray(o.input, o.raw), norm);
  const nlohmann::json j = {{"beta", b.beta}, {"mean_abs_laplacian", b.beta_mean_abs}, {"normalized", o.normalized}};
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_extract(const Options& o) {
  ExtractionConfig cfg;
  cfg.method = parse_method(o.method);
  cfg.count = o.count;
  cfg.contour_stride = o.stride;
  cfg.max_range_markers = o.max_range_markers;
  const BorderPointSet points = extract_border_points(read_mask(o.input), cfg);
  if (o.out.empty()) {
    write_border_csv(std::cout, points);
  } else {
    std::ofstream out(o.out);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + o.out);
    write_border_csv(out, points);
  }
  return 0;
}

int cmd_project(const Options& o) {
  if (o.camera.empty()) throw Error(ErrorKind::ConfigError, "--camera is required");
  const CameraModel cam = load_camera(o.camera);
  std::ifstream in(o.input);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + o.input);
  const BorderPointSet points = read_border_csv(in);
  CloudConfig cfg;
  cfg.beta0 = o.beta0 > 0.0 ? o.beta0 : 1.0;
  cfg.max_range = o.max_range;
  BlurFactor beta;
  beta.beta = o.beta;
  const PointCloud3D cloud =
      build_pointcloud(points, cam, crop_for_source(cam.width, cam.height), beta, cfg);
  if (o.out.empty()) {
    write_ply(std::cout, cloud);
  } else {
    write_ply(fs::path(o.out), cloud);
  }
  return 0;
}

int cmd_pipeline(const Options& o) {
  PipelineConfig cfg = pipeline_config(o);
  if (o.out.empty()) throw Error(ErrorKind::ConfigError, "--out is required");
  cfg.out_dir = fs::path(o.out);
  auto segmenter = make_segmenter(o.segmenter);
  const PipelineResult result = run_pipeline(o.input, cfg, *segmenter);
  std::cout << result.timing.to_json() << '\n';
  return 0;
}

std::vector<fs::path> scene_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".json") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  return files;
}

int cmd_eval(const Options& o) {
  auto segmenter = make_segmenter(o.segmenter);
  std::vector<MetricReport> reports;
  std::uint32_t index = 0;
  for (const auto& file : scene_files(o.inputs)) {
    const RenderedScene scene = render_scene(load_scene(file));
    reports.push_back(miou(segmenter->segment(scene.rgb, index++), scene.truth));
  }
  std::cout << to_json(average_reports(reports)) << '\n';
  return 0;
}

int cmd_bench(const Options& o) {
  const PipelineConfig cfg = pipeline_config(o);
  auto segmenter = make_segmenter(o.segmenter);
  const TimingReport report = bench(fs::path(o.input), o.iterations, cfg, *segmenter);
  const std::string text = report.to_json();
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    out << text << '\n';
  }
  std::cout << text << '\n';
  return 0;
}

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw Error(ErrorKind::ConfigError, "--out is required");
  const fs::path root(o.out);
  for (const char* sub : {"frames", "masks", "scenes"}) fs::create_directories(root / sub);
  const CameraModel cam = o.camera.empty() ? default_camera() : load_camera(o.camera);
  std::optional<SceneSpec> fixed;
  if (!o.scene.empty()) fixed = load_scene(o.scene);
  const CameraModel& frame_cam = fixed ? fixed->camera : cam;
  save_camera(root / "camera.json", frame_cam);
  const CropMetadata crop = crop_for_source(frame_cam.width, frame_cam.height);
  for (int i = 0; i < o.synth_count; ++i) {
    const SceneSpec scene = fixed ? *fixed : random_scene(o.seed + static_cast<std::uint64_t>(i), cam);
    const RenderedScene rendered = render_scene(scene);
    char name[16];
    std::snprintf(name, sizeof name, "%04d", i);
    write_pnm(root / "frames" / (std::string(name) + ".ppm"), rendered.rgb);
    write_mask(root / "masks" / (std::to_string(i) + ".pgm"), render_truth_map(scene, crop));
    save_scene(root / "scenes" / (std::string(name) + ".json"), scene);
  }
  std::cout << "{\"frames\": " << o.synth_count << ", \"dir\": \"" << root.string() << "\"}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Freespace maps to obstacle pointclouds and costmaps"};
  app.require_subcommand(1);
  Options o;

  auto add_camera = [&](CLI::App* sub) { sub->add_option("--camera", o.camera, "Camera JSON"); };
  auto add_extraction = [&](CLI::App* sub) {
    sub->add_option("--method", o.method, "vertical | polar | contour")->capture_default_str();
    sub->add_option("--count", o.count, "Lines or rays")->capture_default_str();
    sub->add_option("--stride", o.stride, "Contour sampling stride")->capture_default_str();
    sub->add_flag("--max-range-markers", o.max_range_markers, "Emit a point for lines without a border");
  };
  auto add_run = [&](CLI::App* sub) {
    add_camera(sub);
    add_extraction(sub);
    sub->add_option("--segmenter", o.segmenter, "file:<dir> | flood[:threshold] | exec:<command>")
        ->capture_default_str();
    sub->add_option("--beta0", o.beta0, "Blur factor giving weight 0.5 (default: run median)");
    sub->add_option("--resolution", o.resolution, "Costmap meters per cell")->capture_default_str();
    sub->add_option("--map-size", o.map_size, "Costmap side length, meters")->capture_default_str();
    sub->add_option("--max-range", o.max_range, "Drop ground points beyond this range")->capture_default_str();
    sub->add_flag("--normalized", o.normalized, "Blur factor as true variance");
  };

  auto* gradients = app.add_subcommand("gradients", "Sobel/Laplacian planes as 16-bit PGM");
  gradients->add_option("image", o.input, "PPM/PGM input")->required();
  gradients->add_option("--out", o.out, "Output prefix")->required();
  gradients->add_flag("--raw", o.raw, "Skip crop/resize");

  auto* blur = app.add_subcommand("blur", "Blur factor of an image");
  blur->add_option("image", o.input, "PPM/PGM input")->required();
  blur->add_flag("--normalized", o.normalized, "Divide by the pixel count");
  blur->add_flag("--raw", o.raw, "Skip crop/resize");

  auto* extract = app.add_subcommand("extract", "Border points of a mask as CSV");
  extract->add_option("mask", o.input, "Mask PGM")->required();
  add_extraction(extract);
  extract->add_option("--out", o.out, "CSV output (default stdout)");

  auto* project = app.add_subcommand("project", "Border CSV to a PLY pointcloud");
  project->add_option("points", o.input, "Border CSV")->required();
  add_camera(project);
  project->add_option("--beta", o.beta, "Blur factor of the source frame")->capture_default_str();
  project->add_option("--beta0", o.beta0, "Blur normalizer (default 1)");
  project->add_option("--max-range", o.max_range)->capture_default_str();
  project->add_option("--out", o.out, "PLY output (default stdout)");

  auto* pipeline = app.add_subcommand("pipeline", "Frames directory to clouds and a costmap");
  pipeline->add_option("frames", o.input, "Directory of .ppm frames")->required();
  add_run(pipeline);
  pipeline->add_option("--out", o.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "mIoU of a segmenter on scene JSON files");
  eval->add_option("scenes", o.inputs, "Scene JSON files or directories")->required();
  eval->add_option("--segmenter", o.segmenter)->capture_default_str();

  auto* bench_cmd = app.add_subcommand("bench", "Per-stage throughput");
  bench_cmd->add_option("frames", o.input, "Directory of .ppm frames")->required();
  add_run(bench_cmd);
  bench_cmd->add_option("--iterations", o.iterations)->capture_default_str();
  bench_cmd->add_option("--out", o.out, "Also write the report here");

  auto* synth = app.add_subcommand("synth", "Render synthetic frames with truth masks");
  add_camera(synth);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--count", o.synth_count)->capture_default_str();
  synth->add_option("--seed", o.seed)->capture_default_str();
  synth->add_option("--scene", o.scene, "Render this scene every frame");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: UsageError: " << msg << '\n';
    return 2;
  }

  try {
    if (*gradients) return cmd_gradients(o);
    if (*blur) return cmd_blur(o);
    if (*extract) return cmd_extract(o);
    if (*project) return cmd_project(o);
    if (*pipeline) return cmd_pipeline(o);
    if (*eval) return cmd_eval(o);
    if (*bench_cmd) return cmd_bench(o);
    if (*synth) return cmd_synth(o);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << to_string(e.kind()) << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
