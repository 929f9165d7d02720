#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mgs/core.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = MGS_CLI_PATH;

fs::path scratch_root() {
  const auto dir = fs::temp_directory_path() / "mgs_cli_test";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

fs::path scene_file(const fs::path& dir, int frames, const std::string& motion = "static_tpose",
                    int clutter = 0) {
  const json scene = {{"motion", motion}, {"frames", frames},   {"dt_s", 0.1},
                      {"seed", 5},        {"clutter_points", clutter}};
  const auto path = dir / "scene.json";
  write_file(path, scene.dump());
  return path;
}

}  // namespace

TEST_CASE("help exits zero") {
  CHECK(run("--help") == 0);
  CHECK(run("synth --help") == 0);
}

TEST_CASE("unknown flags are config errors") {
  CHECK(run("--bogus") == 2);
  CHECK(run("cfar --nope in out") == 2);
}

TEST_CASE("synth writes frames, ground truth and manifest") {
  const auto dir = scratch_root() / "synth_basic";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto scene = scene_file(dir, 2);
  REQUIRE(run("synth --scene " + scene.string() + " --out-dir " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out/frame_0000.mgsh"));
  CHECK(fs::exists(dir / "out/frame_0001.mgsh"));
  CHECK(fs::exists(dir / "out/gt.poses"));
  CHECK(fs::exists(dir / "out/manifest.json"));
}

TEST_CASE("synth rejects a bad motion name, naming the field") {
  const auto dir = scratch_root() / "synth_bad";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file(dir / "scene.json", R"({"motion": "moonwalk"})");
  const std::string cmd = kCli + " synth --scene " + (dir / "scene.json").string() +
                          " --out-dir " + (dir / "out").string() + " 2> " +
                          (dir / "err.txt").string();
  const int rc = WEXITSTATUS(std::system(cmd.c_str()));
  CHECK(rc == 2);
  CHECK(slurp(dir / "err.txt").find("moonwalk") != std::string::npos);
}

TEST_CASE("synth is byte-identical across runs and thread counts") {
  const auto dir = scratch_root() / "synth_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const json scene = {{"motion", "arm_swing"}, {"frames", 2},        {"dt_s", 0.1},
                      {"seed", 11},            {"clutter_points", 4}, {"noise_snr_db", 15.0}};
  write_file(dir / "scene.json", scene.dump());
  REQUIRE(run("--threads 1 synth --scene " + (dir / "scene.json").string() + " --out-dir " +
              (dir / "a").string()) == 0);
  REQUIRE(run("--threads 8 synth --scene " + (dir / "scene.json").string() + " --out-dir " +
              (dir / "b").string()) == 0);
  for (const char* name : {"frame_0000.mgsh", "frame_0001.mgsh", "gt.poses", "manifest.json"})
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
}

TEST_CASE("fit pipeline runs end to end") {
  const auto dir = scratch_root() / "fit_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto scene = scene_file(dir, 1);
  REQUIRE(run("synth --scene " + scene.string() + " --out-dir " + (dir / "in").string()) == 0);

  const json fitcfg = {{"max_iters", 40}};
  write_file(dir / "fit.json", fitcfg.dump());
  REQUIRE(run("fit --in " + (dir / "in").string() + " --out " + (dir / "fit").string() +
              " --fit-cfg " + (dir / "fit.json").string()) == 0);
  REQUIRE(fs::exists(dir / "fit/frame_0000.dipr.json"));
  REQUIRE(fs::exists(dir / "fit/frame_0000.report.json"));

  json report;
  std::ifstream(dir / "fit/frame_0000.report.json") >> report;
  REQUIRE(report.at("loss_trace").is_array());
  CHECK(!report.at("loss_trace").empty());
  CHECK(report.at("final_loss").get<double>() <=
        report.at("loss_trace").front().get<double>() + 1e-15);

  // eval of the fit against the generator ground truth
  REQUIRE(run("eval --pred " + (dir / "fit").string() + " --gt " + (dir / "in/gt.poses").string() +
              " --out " + (dir / "eval.json").string()) == 0);
  json ev;
  std::ifstream(dir / "eval.json") >> ev;
  CHECK(ev.contains("mpjpe_m"));
  CHECK(ev.contains("pa_mpjpe_m"));
}

TEST_CASE("fit of an empty directory is a config error") {
  const auto dir = scratch_root() / "fit_empty";
  fs::remove_all(dir);
  fs::create_directories(dir / "in");
  CHECK(run("fit --in " + (dir / "in").string() + " --out " + (dir / "out").string()) == 2);
}

TEST_CASE("render and cfar round the loop") {
  const auto dir = scratch_root() / "render_cfar";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto scene = scene_file(dir, 1);
  REQUIRE(run("synth --scene " + scene.string() + " --out-dir " + (dir / "in").string()) == 0);
  const json fitcfg = {{"max_iters", 10}};
  write_file(dir / "fit.json", fitcfg.dump());
  REQUIRE(run("fit --in " + (dir / "in").string() + " --out " + (dir / "fit").string() +
              " --fit-cfg " + (dir / "fit.json").string()) == 0);
  REQUIRE(run("render --in " + (dir / "fit/frame_0000.dipr.json").string() + " --out " +
              (dir / "rerender.mgsh").string()) == 0);
  CHECK(fs::exists(dir / "rerender.mgsh"));
  CHECK(fs::exists(dir / "rerender.mgsh.meta.json"));

  REQUIRE(run("cfar --in " + (dir / "rerender.mgsh").string() + " --out " +
              (dir / "cloud.txt").string()) == 0);
  CHECK(fs::exists(dir / "cloud.txt"));
}

TEST_CASE("cfar of an all-zero heatmap writes an empty file") {
  const auto dir = scratch_root() / "cfar_zero";
  fs::remove_all(dir);
  fs::create_directories(dir);
  mgs::Heatmap h(mgs::HeatmapGrid{16, 4, 16, 0.5, 0.5, 0.1, 0.5, -1.0, -0.8});
  mgs::heatmap_write(h, dir / "zero.mgsh");
  REQUIRE(run("cfar --in " + (dir / "zero.mgsh").string() + " --out " +
              (dir / "cloud.txt").string()) == 0);
  CHECK(fs::file_size(dir / "cloud.txt") == 0);
}

TEST_CASE("gradcheck subcommand passes on a small budget") {
  CHECK(run("--seed 3 gradcheck --count 120 --scenes 3") == 0);
}

TEST_CASE("eval of identical sequences reports zero error") {
  const auto dir = scratch_root() / "eval_same";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto scene = scene_file(dir, 2);
  REQUIRE(run("synth --scene " + scene.string() + " --out-dir " + (dir / "in").string()) == 0);
  REQUIRE(run("eval --pred " + (dir / "in/gt.poses").string() + " --gt " +
              (dir / "in/gt.poses").string() + " --out " + (dir / "eval.json").string()) == 0);
  json ev;
  std::ifstream(dir / "eval.json") >> ev;
  CHECK(ev.at("mpjpe_m").get<double>() == 0.0);
}

TEST_CASE("export writes one PGM per Doppler slice with the peak at the right pixel") {
  const auto dir = scratch_root() / "export";
  fs::remove_all(dir);
  fs::create_directories(dir);
  mgs::HeatmapGrid g{6, 4, 5, 0.5, 0.5, 0.1, 0.5, -1.0, -0.25};
  mgs::Heatmap h(g);
  h.at(2, 1, 3) = 9.0;  // lone peak in slice 1
  mgs::heatmap_write(h, dir / "h.mgsh");
  REQUIRE(run("export --in " + (dir / "h.mgsh").string() + " --out-dir " +
              (dir / "img").string()) == 0);
  for (int m = 0; m < 4; ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%03d.pgm", m);
    REQUIRE(fs::exists(dir / "img" / name));
  }
  const std::string pgm = slurp(dir / "img/slice_001.pgm");
  const std::string header = "P5\n5 6\n255\n";
  REQUIRE(pgm.substr(0, header.size()) == header);
  const std::string body = pgm.substr(header.size());
  REQUIRE(body.size() == 30);
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (i == 2 * 5 + 3)
      CHECK(static_cast<unsigned char>(body[i]) == 255);
    else
      CHECK(static_cast<unsigned char>(body[i]) == 0);
  }
  // constant slice normalizes to all zeros
  const std::string flat = slurp(dir / "img/slice_000.pgm");
  for (std::size_t i = header.size(); i < flat.size(); ++i) CHECK(flat[i] == 0);
}

TEST_CASE("sweep subcommand emits a report") {
  const auto dir = scratch_root() / "sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const json scene = {{"motion", "static_tpose"}, {"frames", 1}, {"dt_s", 0.1}, {"seed", 2}};
  write_file(dir / "scene.json", scene.dump());
  const json cfg = {{"fit", {{"max_iters", 15}}}};
  write_file(dir / "config.json", cfg.dump());
  // keep it cheap: two values, one frame
  REQUIRE(run("--config " + (dir / "config.json").string() +
              " sweep --param lambda2 --values 0.3 1.0 --scene " + (dir / "scene.json").string() +
              " --out " + (dir / "sweep.json").string()) == 0);
  json doc;
  std::ifstream(dir / "sweep.json") >> doc;
  REQUIRE(doc.at("results").size() == 2);
  CHECK(doc.at("results").at(0).contains("mpjpe_m"));
}
