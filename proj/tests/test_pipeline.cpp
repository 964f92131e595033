#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "fsnav/evaluation.hpp"
#include "fsnav/netpbm.hpp"
#include "fsnav/pipeline.hpp"

using namespace fsnav;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FSNAV_CLI_PATH;

CameraModel scene_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 300.0;
  cam.cx = cam.cy = 112.0;
  cam.width = cam.height = 224;
  cam.camera_height = 0.5;
  return cam;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("fsnav_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// frames/NNNN.ppm plus masks/<i>.pgm holding the map-space truth.
void write_corpus(const fs::path& root, const std::vector<SceneSpec>& scenes) {
  fs::create_directories(root / "frames");
  fs::create_directories(root / "masks");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const RenderedScene r = render_scene(scenes[i]);
    char name[16];
    std::snprintf(name, sizeof name, "%04zu.ppm", i);
    write_pnm(root / "frames" / name, r.rgb);
    const CropMetadata crop = crop_for_source(r.rgb.width, r.rgb.height);
    write_mask(root / "masks" / (std::to_string(i) + ".pgm"), render_truth_map(scenes[i], crop));
  }
}

SceneSpec wall_scene(double depth) {
  SceneSpec s;
  s.camera = scene_camera();
  s.walls.push_back({depth, depth + 0.5, -20.0, 20.0});
  return s;
}

PipelineConfig base_config() {
  PipelineConfig cfg;
  cfg.camera = scene_camera();
  cfg.extraction.method = ExtractionMethod::Polar;
  cfg.extraction.count = 64;
  return cfg;
}

struct Run {
  int status;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("summarize") {
  const StageStats s = summarize({5.0, 1.0, 3.0, 2.0, 4.0});
  CHECK(s.median_ms == 3.0);
  CHECK(s.p95_ms == 5.0);
  CHECK(s.samples == 5);
  CHECK(summarize({1.0, 2.0}).median_ms == 1.5);
  std::vector<double> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 1.0);
  CHECK(summarize(hundred).p95_ms == 95.0);
  CHECK(summarize({}).samples == 0);
}

TEST_CASE("empty frames directory") {
  TempDir dir("empty");
  FloodBackend flood;
  const PipelineResult r = run_pipeline(dir.path(), base_config(), flood);
  CHECK(r.clouds.empty());
  CHECK(r.timing.frames == 0);
  CHECK((r.costmap.costs() == 0).all());
  CHECK_THROWS_AS(run_pipeline(dir.path() / "missing", base_config(), flood), Error);
}

TEST_CASE("ten wall frames build a lethal band at the wall") {
  TempDir dir("wall");
  write_corpus(dir.path(), std::vector<SceneSpec>(10, wall_scene(2.0)));
  FileBackend masks(dir.path() / "masks");
  PipelineConfig cfg = base_config();
  cfg.out_dir = dir.path() / "out";
  const PipelineResult r = run_pipeline(dir.path() / "frames", cfg, masks);
  REQUIRE(r.clouds.size() == 10);

  const Costmap& map = r.costmap;
  int checked = 0;
  for (const auto& p : r.clouds[0].points) {
    const double bearing = std::atan2(p.position.y(), p.position.x());
    const double range = 2.0 / std::cos(bearing);
    const auto expected = map.world_to_cell(range * std::cos(bearing), range * std::sin(bearing));
    REQUIRE(expected.has_value());
    int best = 0;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) best = std::max<int>(best, map.cost({expected->col + dc, expected->row + dr}));
    CHECK(best == Costmap::kLethal);
    ++checked;
  }
  CHECK(checked > 40);

  // Nothing lethal well in front of the wall.
  for (int row = 0; row < map.height(); ++row)
    for (int col = 0; col < map.width(); ++col) {
      const Eigen::Vector2d c = map.cell_center({col, row});
      if (c.x() > 0.0 && c.x() < 1.9) CHECK(map.cost({col, row}) == 0);
    }

  CHECK(fs::exists(dir.path() / "out" / "costmap.pgm"));
  CHECK(fs::exists(dir.path() / "out" / "costmap.json"));
  CHECK(fs::exists(dir.path() / "out" / "clouds" / "0009.ply"));
  const auto timing = nlohmann::json::parse(read_file(dir.path() / "out" / "timing.json"));
  CHECK(timing["frames"] == 10);
  for (const char* stage : {"load", "preprocess", "segment", "gradients", "blur", "extract", "project", "integrate"}) {
    CHECK(timing["stages"].contains(stage));
  }
  CHECK(timing["fps"].get<double>() > 0.0);
}

TEST_CASE("uniform floor through the flood backend marks nothing") {
  TempDir dir("uniform");
  fs::create_directories(dir.path() / "frames");
  ImageBuffer frame(224, 224, 3, 150);
  for (int i = 0; i < 3; ++i) write_pnm(dir.path() / "frames" / (std::to_string(i) + ".ppm"), frame);
  FloodBackend flood;
  const PipelineResult r = run_pipeline(dir.path() / "frames", base_config(), flood);
  CHECK(r.clouds.size() == 3);
  for (const auto& c : r.clouds) CHECK(c.points.empty());
  CHECK((r.costmap.costs() == 0).all());
}

TEST_CASE("malformed frames are skipped, backend failures abort") {
  TempDir dir("malformed");
  write_corpus(dir.path(), {wall_scene(2.0), wall_scene(3.0)});
  {
    std::ofstream junk(dir.path() / "frames" / "0001b.ppm");
    junk << "P6\n224 224\n255\nshort";
  }
  FileBackend masks(dir.path() / "masks");
  const PipelineResult r = run_pipeline(dir.path() / "frames", base_config(), masks);
  CHECK(r.clouds.size() == 2);
  CHECK(r.timing.skipped == 1);
  REQUIRE(r.timing.warnings.size() == 1);
  CHECK(r.timing.warnings[0].find("0001b.ppm") != std::string::npos);

  fs::remove(dir.path() / "masks" / "1.pgm");
  try {
    run_pipeline(dir.path() / "frames", base_config(), masks);
    FAIL("missing mask accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BackendError);
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("pipeline is deterministic across runs and thread counts") {
  TempDir dir("determinism");
  std::vector<SceneSpec> scenes;
  for (std::uint64_t seed = 0; seed < 12; ++seed) scenes.push_back(random_scene(seed, scene_camera()));
  write_corpus(dir.path(), scenes);
  FloodBackend flood;
  PipelineConfig cfg = base_config();
  const PipelineResult a = run_pipeline(dir.path() / "frames", cfg, flood);
  const PipelineResult b = run_pipeline(dir.path() / "frames", cfg, flood);
  cfg.threads = 4;
  const PipelineResult c = run_pipeline(dir.path() / "frames", cfg, flood);
  CHECK((a.costmap.costs() == b.costmap.costs()).all());
  CHECK((a.costmap.costs() == c.costmap.costs()).all());
  CHECK(a.costmap.costs().maxCoeff() > 0);
  REQUIRE(a.clouds.size() == c.clouds.size());
  for (std::size_t i = 0; i < a.clouds.size(); ++i) {
    REQUIRE(a.clouds[i].points.size() == c.clouds[i].points.size());
    for (std::size_t k = 0; k < a.clouds[i].points.size(); ++k) {
      CHECK(a.clouds[i].points[k].position == c.clouds[i].points[k].position);
    }
  }
}

TEST_CASE("bench") {
  SceneSpec scene = wall_scene(2.0);
  const ImageBuffer frame = render_scene(scene).rgb;
  FloodBackend flood;
  const TimingReport r = bench(std::vector<ImageBuffer>{frame}, 100, base_config(), flood);
  CHECK(r.frames == 100);
  CHECK(r.total.samples == 100);
  for (const auto& name : r.stage_order) CHECK(r.stages.at(name).samples == 100);
  CHECK(r.fps == doctest::Approx(1000.0 / r.total.median_ms));
  double stage_sum = 0.0;
  for (const auto& [name, s] : r.stages) stage_sum += s.median_ms;
  CHECK(stage_sum <= 1.1 * r.total.median_ms);
  CHECK(stage_sum >= 0.5 * r.total.median_ms);
  CHECK_THROWS_AS(bench(std::vector<ImageBuffer>{frame}, 0, base_config(), flood), Error);
}

TEST_CASE("command line") {
  TempDir dir("cli");
  const std::string root = dir.path().string();

  auto synth = run_cli("synth --out " + root + "/corpus --count 4 --seed 3");
  REQUIRE(synth.status == 0);
  CHECK(fs::exists(dir.path() / "corpus" / "frames" / "0003.ppm"));
  CHECK(fs::exists(dir.path() / "corpus" / "masks" / "3.pgm"));
  CHECK(fs::exists(dir.path() / "corpus" / "camera.json"));

  const std::string pipeline_args = "pipeline " + root + "/corpus/frames --camera " + root +
                                    "/corpus/camera.json --segmenter file:" + root + "/corpus/masks --out ";
  auto first = run_cli(pipeline_args + root + "/run1");
  REQUIRE(first.status == 0);
  CHECK(nlohmann::json::parse(first.output)["frames"] == 4);
  REQUIRE(run_cli(pipeline_args + root + "/run2").status == 0);
  CHECK(read_file(dir.path() / "run1" / "costmap.pgm") == read_file(dir.path() / "run2" / "costmap.pgm"));
  CHECK(fs::exists(dir.path() / "run1" / "clouds" / "0000.ply"));

  auto eval = run_cli("eval " + root + "/corpus/scenes --segmenter flood");
  REQUIRE(eval.status == 0);
  const auto report = nlohmann::json::parse(eval.output);
  CHECK(report["frame_count"] == 4);
  CHECK(report["miou"].get<double>() > 0.5);

  auto blur = run_cli("blur " + root + "/corpus/frames/0000.ppm");
  REQUIRE(blur.status == 0);
  CHECK(nlohmann::json::parse(blur.output)["beta"].get<double>() > 0.0);

  REQUIRE(run_cli("gradients " + root + "/corpus/frames/0000.ppm --out " + root + "/grad").status == 0);
  CHECK(fs::exists(dir.path() / "grad_laplacian.pgm"));
  const auto planes = nlohmann::json::parse(read_file(dir.path() / "grad.json"));
  CHECK(planes["width"] == 112);

  auto extract = run_cli("extract " + root + "/corpus/masks/0.pgm --method contour --out " + root + "/pts.csv");
  REQUIRE(extract.status == 0);
  auto project = run_cli("project " + root + "/pts.csv --camera " + root + "/corpus/camera.json --beta 5 --beta0 5 --out " +
                         root + "/pts.ply");
  REQUIRE(project.status == 0);
  const PointCloud3D cloud = read_ply(dir.path() / "pts.ply");
  CHECK_FALSE(cloud.points.empty());
  for (const auto& p : cloud.points) CHECK(p.intensity == doctest::Approx(0.5));

  auto bench_run = run_cli("bench " + root + "/corpus/frames --camera " + root + "/corpus/camera.json --segmenter file:" +
                           root + "/corpus/masks --iterations 20");
  REQUIRE(bench_run.status == 0);
  CHECK(nlohmann::json::parse(bench_run.output)["total"]["samples"] == 20);

  SUBCASE("errors are one prefixed line") {
    for (const std::string& args :
         {"pipeline " + root + "/nowhere --out " + root + "/x", "extract " + root + "/missing.pgm",
          "extract " + root + "/corpus/masks/0.pgm --count 0 --method vertical", "eval " + root + "/corpus/scenes --segmenter bogus"}) {
      const auto r = run_cli(args);
      CHECK(r.status == 1);
      CHECK(r.output.rfind("error: ", 0) == 0);
      CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);
    }
    const auto usage = run_cli("extract");
    CHECK(usage.status == 2);
    CHECK(usage.output.rfind("error: UsageError: ", 0) == 0);
    CHECK(run_cli("").status == 2);
  }
}
