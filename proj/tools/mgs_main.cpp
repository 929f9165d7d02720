// mgs: command line front end for the M-GS pipeline.
//
// Exit codes: 0 success, 1 I/O, 2 configuration, 3 fit divergence,
// 4 metric/shape errors. Flags override values from --config; precedence is
// flags > config file > built-in defaults.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "mgs/config.hpp"
#include "mgs/eval.hpp"
#include "mgs/mgs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_of(mgs::ErrorKind kind) {
  switch (kind) {
    case mgs::ErrorKind::Io:
    case mgs::ErrorKind::Format:
      return 1;
    case mgs::ErrorKind::Config:
    case mgs::ErrorKind::Domain:
    case mgs::ErrorKind::Render:
    case mgs::ErrorKind::Scene:
      return 2;
    case mgs::ErrorKind::Fit:
      return 3;
    case mgs::ErrorKind::Metric:
    case mgs::ErrorKind::Shape:
    case mgs::ErrorKind::Oracle:
      return 4;
  }
  return 2;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw mgs::Error(mgs::ErrorKind::Io, "cannot open: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw mgs::Error(mgs::ErrorKind::Config, "bad JSON in " + path.string() + ": " + e.what());
  }
  return doc;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw mgs::Error(mgs::ErrorKind::Io, "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw mgs::Error(mgs::ErrorKind::Io, "write failed: " + path.string());
}

// Shared pipeline configuration resolved from --config.
struct Toolbox {
  mgs::RadarParams radar;
  mgs::HeatmapGrid grid = mgs::grid_from_json(json::object());
  mgs::RenderKernelParams kernel;
  mgs::FitConfig fit;
  mgs::CfarConfig cfar;
  mgs::Skeleton skeleton = mgs::default_skeleton();

  void load(const fs::path& config_path) {
    const json doc = load_json_file(config_path);
    if (!doc.is_object())
      throw mgs::Error(mgs::ErrorKind::Config, "config root must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "radar")
        radar = mgs::radar_from_json(value);
      else if (key == "grid")
        grid = mgs::grid_from_json(value);
      else if (key == "kernel")
        kernel = mgs::kernel_from_json(value);
      else if (key == "fit")
        fit = mgs::fit_from_json(value);
      else if (key == "cfar")
        cfar = mgs::cfar_from_json(value);
      else if (key == "skeleton")
        skeleton = mgs::skeleton_from_json(value);
      else
        throw mgs::Error(mgs::ErrorKind::Config, "unknown config section '" + key + "'");
    }
  }

  // Grid/radar/kernel as recorded by `synth` in its manifest.
  void load_manifest(const fs::path& manifest_path) {
    const json doc = load_json_file(manifest_path);
    if (doc.contains("radar")) radar = mgs::radar_from_json(doc.at("radar"));
    if (doc.contains("grid")) grid = mgs::grid_from_json(doc.at("grid"));
    if (doc.contains("kernel")) kernel = mgs::kernel_from_json(doc.at("kernel"));
  }
};

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_synth(const Toolbox& tb, const fs::path& scene_path, const fs::path& out_dir) {
  const mgs::SceneSpec spec = mgs::scene_from_json(load_json_file(scene_path));
  const auto [heatmaps, gt] = mgs::generate_scene(spec, tb.skeleton, tb.radar, tb.grid, tb.kernel);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  char name[64];
  for (std::size_t t = 0; t < heatmaps.size(); ++t) {
    std::snprintf(name, sizeof(name), "frame_%04zu.mgsh", t);
    mgs::heatmap_write(heatmaps[t], out_dir / name);
  }
  write_text_file(out_dir / "gt.poses",
                  mgs::poses_to_json(gt, tb.skeleton.joint_names).dump(2) + "\n");
  const json manifest = {{"scene", mgs::scene_to_json(spec)},
                         {"radar", mgs::radar_to_json(tb.radar)},
                         {"grid", mgs::grid_to_json(tb.grid)},
                         {"kernel", mgs::kernel_to_json(tb.kernel)},
                         {"skeleton", mgs::skeleton_to_json(tb.skeleton)}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  std::cerr << "synth: wrote " << heatmaps.size() << " frame(s) to " << out_dir << "\n";
  return 0;
}

int cmd_fit(Toolbox tb, const fs::path& in_path, const fs::path& out_dir,
            const std::string& fit_cfg_path) {
  if (!fit_cfg_path.empty()) tb.fit = mgs::fit_from_json(load_json_file(fit_cfg_path));

  std::vector<fs::path> inputs;
  if (fs::is_directory(in_path)) {
    if (fs::exists(in_path / "manifest.json")) tb.load_manifest(in_path / "manifest.json");
    inputs = sorted_files(in_path, ".mgsh");
    if (inputs.empty())
      throw mgs::Error(mgs::ErrorKind::Config, "no .mgsh frames in " + in_path.string());
  } else if (fs::exists(in_path)) {
    inputs.push_back(in_path);
  } else {
    throw mgs::Error(mgs::ErrorKind::Io, "input not found: " + in_path.string());
  }

  std::vector<mgs::Heatmap> frames;
  frames.reserve(inputs.size());
  for (const auto& p : inputs) frames.push_back(mgs::heatmap_read(p));
  tb.grid = frames.front().grid;

  const auto results = mgs::fit_sequence(frames, tb.skeleton, tb.radar, tb.grid, tb.kernel, tb.fit);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  char name[64];
  for (std::size_t t = 0; t < results.size(); ++t) {
    std::snprintf(name, sizeof(name), "frame_%04zu.dipr.json", t);
    write_text_file(out_dir / name, mgs::dipr_frame_to_json(results[t].first).dump(2) + "\n");
    std::snprintf(name, sizeof(name), "frame_%04zu.report.json", t);
    write_text_file(out_dir / name, mgs::fit_report_to_json(results[t].second).dump(2) + "\n");
  }
  std::cerr << "fit: " << results.size() << " frame(s), final loss "
            << results.back().second.final_loss << "\n";
  return 0;
}

int cmd_render(const Toolbox& tb, const fs::path& in_path, const fs::path& out_path) {
  const mgs::DiprFrame frame = mgs::dipr_frame_from_json(load_json_file(in_path));
  frame.validate(tb.skeleton);
  const mgs::Heatmap h = mgs::dipr_to_heatmap(frame, tb.radar, tb.grid, tb.kernel);
  mgs::heatmap_write(h, out_path);
  std::cerr << "render: wrote " << out_path << "\n";
  return 0;
}

int cmd_cfar(const Toolbox& tb, const fs::path& in_path, const fs::path& out_path) {
  const mgs::Heatmap h = mgs::heatmap_read(in_path);
  const mgs::PointCloud pc = mgs::ca_cfar(h, tb.cfar);
  mgs::pointcloud_write(pc, out_path);
  std::cerr << "cfar: " << pc.points.size() << " detection(s)\n";
  return 0;
}

int cmd_gradcheck(const Toolbox& tb, int count, int scenes, std::uint64_t seed,
                  const std::string& out_path) {
  mgs::GradCheckConfig cfg;
  cfg.skeleton = tb.skeleton;
  cfg.radar = tb.radar;
  cfg.kernel = tb.kernel;
  cfg.weights = tb.fit.loss_weights;
  cfg.scenes = scenes;
  const mgs::GradCheckReport report = mgs::gradcheck(cfg, count, seed);
  const json doc = {{"max_rel_err", report.max_rel_err},
                    {"worst_coordinate", report.worst_coordinate},
                    {"worst_scene", report.worst_scene},
                    {"checked", report.checked},
                    {"excluded_kinks", report.excluded_kinks},
                    {"below_floor", report.below_floor},
                    {"pass", report.pass}};
  if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
  std::cerr << "gradcheck: " << (report.pass ? "pass" : "FAIL")
            << " max_rel_err=" << report.max_rel_err << " checked=" << report.checked
            << " excluded=" << report.excluded_kinks << "\n";
  return report.pass ? 0 : 1;
}

mgs::PoseSequence load_pose_sequence(const fs::path& path) {
  if (fs::is_directory(path)) {
    const auto files = sorted_files(path, ".dipr.json");
    if (files.empty())
      throw mgs::Error(mgs::ErrorKind::Config, "no .dipr.json frames in " + path.string());
    std::vector<std::vector<mgs::Vec3>> frames;
    for (const auto& f : files) {
      const mgs::DiprFrame frame = mgs::dipr_frame_from_json(load_json_file(f));
      std::vector<mgs::Vec3> pose;
      pose.reserve(frame.joints.size());
      for (const auto& j : frame.joints) pose.push_back(j.position_m);
      frames.push_back(std::move(pose));
    }
    return mgs::PoseSequence::of(std::move(frames));
  }
  return mgs::PoseSequence::of(mgs::poses_from_json(load_json_file(path)));
}

int cmd_eval(const fs::path& pred_path, const fs::path& gt_path, double dt,
             const fs::path& out_path) {
  const mgs::PoseSequence pred = load_pose_sequence(pred_path);
  const mgs::PoseSequence gt = load_pose_sequence(gt_path);
  if (dt <= 0.0 && !fs::is_directory(gt_path)) {
    const json doc = load_json_file(gt_path);
    if (doc.contains("dt_s")) dt = doc.at("dt_s").get<double>();
  }

  json report = {{"mpjpe_m", mgs::mpjpe(pred, gt)}, {"pa_mpjpe_m", mgs::pa_mpjpe(pred, gt)}};
  if (pred.frames.size() >= 2 && dt > 0.0) {
    report["dt_s"] = dt;
    report["motion_intensity_pred_mps"] = mgs::motion_intensity(pred, dt);
    report["motion_intensity_gt_mps"] = mgs::motion_intensity(gt, dt);
  }
  write_text_file(out_path, report.dump(2) + "\n");
  std::cerr << "eval: MPJPE=" << report["mpjpe_m"] << " PA-MPJPE=" << report["pa_mpjpe_m"] << "\n";
  return 0;
}

// One 8-bit P5 graymap per Doppler slice, range rows x angle columns,
// min-max normalized per file.
int cmd_export(const fs::path& in_path, const fs::path& out_dir) {
  const mgs::Heatmap h = mgs::heatmap_read(in_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  char name[64];
  for (int m = 0; m < h.grid.doppler_bins; ++m) {
    double lo = h.at(0, m, 0), hi = lo;
    for (int k = 0; k < h.grid.range_bins; ++k)
      for (int n = 0; n < h.grid.angle_bins; ++n) {
        lo = std::min(lo, h.at(k, m, n));
        hi = std::max(hi, h.at(k, m, n));
      }
    std::string body;
    body.reserve(static_cast<std::size_t>(h.grid.range_bins * h.grid.angle_bins));
    for (int k = 0; k < h.grid.range_bins; ++k)
      for (int n = 0; n < h.grid.angle_bins; ++n) {
        const double norm = hi > lo ? (h.at(k, m, n) - lo) / (hi - lo) : 0.0;
        body.push_back(static_cast<char>(std::lround(norm * 255.0)));
      }
    std::snprintf(name, sizeof(name), "slice_%03d.pgm", m);
    std::string header = "P5\n" + std::to_string(h.grid.angle_bins) + " " +
                         std::to_string(h.grid.range_bins) + "\n255\n";
    write_text_file(out_dir / name, header + body);
  }
  std::cerr << "export: " << h.grid.doppler_bins << " slice image(s)\n";
  return 0;
}

// Hyperparameter sweep on a synthetic scene: fit with the ground-truth-
// perturbed initialization for each value of the chosen weight and report
// pose errors against the generator.
int cmd_sweep(const Toolbox& tb, const std::string& param, std::vector<double> values,
              const fs::path& scene_path, double init_noise_m, std::uint64_t seed,
              const fs::path& out_path) {
  mgs::SceneSpec spec;
  if (!scene_path.empty()) spec = mgs::scene_from_json(load_json_file(scene_path));
  spec.seed = seed;

  const auto [heatmaps, gt] = mgs::generate_scene(spec, tb.skeleton, tb.radar, tb.grid, tb.kernel);
  mgs::PoseSequence gt_seq = mgs::PoseSequence::of(gt.poses);

  json results = json::array();
  for (double value : values) {
    mgs::FitConfig fc = tb.fit;
    if (param == "lambda1")
      fc.loss_weights.lambda1 = value;
    else if (param == "lambda2")
      fc.loss_weights.lambda2 = value;
    else if (param == "top_t")
      fc.loss_weights.top_fraction_T = value;
    else
      throw mgs::Error(mgs::ErrorKind::Config, "unknown sweep parameter '" + param + "'");
    fc.loss_weights.validate();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, init_noise_m);
    std::vector<std::vector<mgs::Vec3>> fitted;
    std::optional<mgs::DiprFrame> warm;
    for (std::size_t t = 0; t < heatmaps.size(); ++t) {
      mgs::DiprFrame init;
      if (warm) {
        init = *warm;
      } else {
        init.joints.resize(gt.poses[t].size());
        const auto envelope = mgs::default_doppler_envelope(16, 2.0);
        for (std::size_t ji = 0; ji < init.joints.size(); ++ji) {
          auto& j = init.joints[ji];
          j.position_m = gt.poses[t][ji] + mgs::Vec3{noise(rng), noise(rng), noise(rng)};
          j.velocity_mps = gt.velocities[t][ji];
          const double s = mgs::is_torso_joint(tb.skeleton.joint_names[ji]) ? 0.12 : 0.08;
          j.scale_m = {s, s, s};
          j.opacity = 1.0;
          j.doppler_features = envelope;
        }
      }
      auto [frame, report] =
          mgs::fit_frame(heatmaps[t], tb.skeleton, tb.radar, tb.grid, tb.kernel, fc, init);
      std::vector<mgs::Vec3> pose;
      for (const auto& j : frame.joints) pose.push_back(j.position_m);
      fitted.push_back(std::move(pose));
      warm = frame;
    }
    const mgs::PoseSequence pred = mgs::PoseSequence::of(fitted);
    results.push_back({{"value", value},
                       {"mpjpe_m", mgs::mpjpe(pred, gt_seq)},
                       {"pa_mpjpe_m", mgs::pa_mpjpe(pred, gt_seq)}});
    std::cerr << "sweep " << param << "=" << value
              << ": mpjpe=" << results.back()["mpjpe_m"] << "\n";
  }
  const json doc = {{"param", param}, {"scene", mgs::scene_to_json(spec)}, {"results", results}};
  write_text_file(out_path, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mgs: DIPR fitting for mmWave radar heatmaps.\n"
      "Precedence: command-line flags > --config file > built-in defaults."};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--config", config_path, "pipeline config (JSON)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "internal parallelism cap (output-invariant)")
      ->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
  std::string synth_scene, synth_out;
  synth->add_option("--scene", synth_scene, "scene spec (JSON)")->required();
  synth->add_option("--out-dir", synth_out, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "fit DIPR frames to heatmaps");
  std::string fit_in, fit_out, fit_cfg;
  fit->add_option("--in", fit_in, "input .mgsh file or directory")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_option("--fit-cfg", fit_cfg, "fit config (JSON)");

  auto* render = app.add_subcommand("render", "render a DIPR frame to a heatmap");
  std::string render_in, render_out;
  render->add_option("--in", render_in, "DIPR frame document")->required();
  render->add_option("--out", render_out, "output .mgsh path")->required();

  auto* cfar = app.add_subcommand("cfar", "CFAR detection to a point cloud");
  std::string cfar_in, cfar_out;
  int cfar_guard = -1, cfar_train = -1;
  double cfar_pfa = -1.0;
  cfar->add_option("--in", cfar_in, "input .mgsh path")->required();
  cfar->add_option("--out", cfar_out, "output point cloud text path")->required();
  cfar->add_option("--guard", cfar_guard, "guard cells per axis");
  cfar->add_option("--train", cfar_train, "training cells per axis");
  cfar->add_option("--pfa", cfar_pfa, "false alarm probability");

  auto* gradcheck = app.add_subcommand("gradcheck", "verify gradients against finite differences");
  int gc_count = 1000, gc_scenes = 20;
  std::string gc_out;
  gradcheck->add_option("--count", gc_count, "coordinates to sample");
  gradcheck->add_option("--scenes", gc_scenes, "random scenes");
  gradcheck->add_option("--out", gc_out, "report path (JSON)");

  auto* eval = app.add_subcommand("eval", "pose error metrics");
  std::string eval_pred, eval_gt, eval_out = "eval_report.json";
  double eval_dt = 0.0;
  eval->add_option("--pred", eval_pred, "predicted poses (fit output dir or poses JSON)")
      ->required();
  eval->add_option("--gt", eval_gt, "ground-truth poses JSON")->required();
  eval->add_option("--dt", eval_dt, "frame interval for motion intensity");
  eval->add_option("--out", eval_out, "report path (JSON)");

  auto* exp = app.add_subcommand("export", "export Doppler slices as PGM images");
  std::string export_in, export_out;
  exp->add_option("--in", export_in, "input .mgsh path")->required();
  exp->add_option("--out-dir", export_out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep on a synthetic scene");
  std::string sweep_param = "lambda2", sweep_scene, sweep_out = "sweep_report.json";
  std::vector<double> sweep_values;
  double sweep_noise = 0.1;
  sweep->add_option("--param", sweep_param, "lambda1 | lambda2 | top_t");
  sweep->add_option("--values", sweep_values, "sweep values")->required();
  sweep->add_option("--scene", sweep_scene, "scene spec (JSON); default static scene");
  sweep->add_option("--init-noise-m", sweep_noise, "initialization position noise sigma");
  sweep->add_option("--out", sweep_out, "report path (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are config errors
  }

  try {
    Toolbox tb;
    if (!config_path.empty()) tb.load(config_path);
    tb.fit.seed = seed;
    (void)threads;  // accepted as an upper bound; outputs never depend on it

    if (*synth) return cmd_synth(tb, synth_scene, synth_out);
    if (*fit) return cmd_fit(tb, fit_in, fit_out, fit_cfg);
    if (*render) return cmd_render(tb, render_in, render_out);
    if (*cfar) {
      if (cfar_guard >= 0) tb.cfar.guard_cells = cfar_guard;
      if (cfar_train >= 0) tb.cfar.train_cells = cfar_train;
      if (cfar_pfa > 0.0) tb.cfar.pfa = cfar_pfa;
      tb.cfar.validate();
      return cmd_cfar(tb, cfar_in, cfar_out);
    }
    if (*gradcheck) return cmd_gradcheck(tb, gc_count, gc_scenes, seed, gc_out);
    if (*eval) return cmd_eval(eval_pred, eval_gt, eval_dt, eval_out);
    if (*exp) return cmd_export(export_in, export_out);
    if (*sweep)
      return cmd_sweep(tb, sweep_param, sweep_values, sweep_scene, sweep_noise, seed, sweep_out);
  } catch (const mgs::Error& e) {
    std::cerr << "error (" << mgs::error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code_of(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
