// Command-line front end: sample, project, train-toy, eval, ablate,
// export-viz, bench. Exit codes: 0 success, 2 config error, 3 data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roifusion/roifusion.hpp"

namespace fs = std::filesystem;
using namespace roifusion;

namespace {

RunConfig load_or_default(const std::string& config_path) {
  if (!config_path.empty()) return load_config(config_path);
  return toy_config();
}

void apply_fusion_override(RunConfig& cfg, const std::string& fusion) {
  if (fusion.empty()) return;
  cfg.fusion = fusion_from_name(fusion);
  if (cfg.fusion != FusionStrategy::Concat) cfg.pool2d_width = cfg.pool3d_width;
}

std::vector<ClassSpec> class_table(const RunConfig& cfg) {
  std::vector<ClassSpec> out;
  for (const auto& c : cfg.classes) out.push_back({c.name, c.h, c.w, c.l});
  return out;
}

std::vector<SyntheticScene> gen_scenes(const RunConfig& cfg, std::size_t count,
                                       std::uint64_t base_seed) {
  std::vector<SyntheticScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(gen_synthetic_scene(cfg.synthetic, base_seed + i));
  return out;
}

std::vector<PreparedScene> prepare_all(const std::vector<SyntheticScene>& scenes,
                                       const RunConfig& cfg) {
  std::vector<PreparedScene> out;
  Rng rng(cfg.seed ^ 0x9c6eULL);
  for (const auto& s : scenes) out.push_back(prepare_scene(s, cfg, rng));
  return out;
}

EvalConfig eval_config_from(const RunConfig& cfg) {
  EvalConfig ecfg;
  ecfg.classes.clear();
  ecfg.iou_thresholds.clear();
  for (const auto& c : cfg.classes) {
    ecfg.classes.push_back(c.name);
    ecfg.iou_thresholds[c.name] = c.iou;
  }
  ecfg.interp = cfg.interp == "r40" ? Interp::R40 : Interp::R11;
  ecfg.distance_edges = cfg.distance_edges;
  return ecfg;
}

struct EvalRun {
  EvalSummary summary;
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
};

EvalRun run_synthetic_eval(Detector& model, const RunConfig& cfg, bool oracle) {
  auto scenes = gen_scenes(cfg, cfg.heldout_scenes, cfg.scene_seed + 10000);
  auto prepared = prepare_all(scenes, cfg);
  EvalRun run;
  if (oracle) {
    for (std::size_t f = 0; f < prepared.size(); ++f) {
      for (const auto& gt : prepared[f].gts) {
        Detection d;
        d.box = gt.box;
        d.class_name = cfg.classes[gt.class_id].name;
        d.score = 1.0;
        d.frame = f;
        run.dets.push_back(d);
        GroundTruth g;
        g.box = gt.box;
        g.class_name = d.class_name;
        g.difficulty = Difficulty::Easy;
        g.frame = f;
        run.gts.push_back(g);
      }
    }
  } else {
    collect_eval_inputs(model, prepared, run.dets, run.gts);
  }
  run.summary = evaluate_detections(run.dets, run.gts, eval_config_from(cfg));
  return run;
}

double ap_for(const EvalSummary& s, const std::string& cls, Difficulty d) {
  for (const auto& e : s.ap)
    if (e.class_name == cls && e.difficulty == d) return e.ap;
  return 0.0;
}

int cmd_sample(const std::string& config_path, const std::string& velodyne,
               std::uint64_t scene_seed, std::size_t count,
               const std::string& strategy, const std::string& out) {
  RunConfig cfg = load_or_default(config_path);
  PointCloud cloud;
  if (!velodyne.empty()) {
    cloud = read_velodyne(velodyne);
  } else {
    cloud = gen_synthetic_scene(cfg.synthetic, scene_seed).cloud;
  }
  SampleSelection sel;
  if (strategy == "dfps") {
    sel = fps_euclidean(cloud.xyz, std::min(count, cloud.size()));
  } else if (strategy == "ffps") {
    sel = fps_feature(cloud.reflectance, 1, std::min(count, cloud.size()));
  } else {
    sel = fps_fused(cloud.xyz, cloud.reflectance, 1,
                    std::min(count, cloud.size()));
  }
  std::ostringstream os;
  for (std::size_t idx : sel.indices) os << idx << "\n";
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out);
    if (!f) throw DataError("cannot open for write: " + out);
    f << os.str();
  }
  std::fprintf(stderr, "sampled %zu of %zu points (%s)\n", sel.indices.size(),
               cloud.size(), strategy.c_str());
  return 0;
}

int cmd_project(const std::string& config_path, const std::string& velodyne,
                const std::string& calib_path, std::uint64_t scene_seed,
                const std::string& out) {
  RunConfig cfg = load_or_default(config_path);
  PointCloud cloud;
  CalibContext calib;
  if (!velodyne.empty()) {
    if (calib_path.empty())
      throw ConfigError("project: --calib required with --velodyne");
    cloud = read_velodyne(velodyne);
    calib = read_calib(calib_path);
  } else {
    SyntheticScene scene = gen_synthetic_scene(cfg.synthetic, scene_seed);
    cloud = scene.cloud;
    calib = scene.calib;
  }
  auto projected = project_points(cloud, calib);
  std::ostringstream os;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    char line[160];
    std::snprintf(line, sizeof(line), "%zu %.6f %.6f %.6f %d\n", i,
                  projected[i].u, projected[i].v, projected[i].depth,
                  projected[i].in_image ? 1 : 0);
    os << line;
  }
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out);
    if (!f) throw DataError("cannot open for write: " + out);
    f << os.str();
  }
  return 0;
}

int cmd_train_toy(const std::string& config_path, std::uint64_t seed_override,
                  bool has_seed, const std::string& fusion,
                  std::size_t epochs_override, const std::string& out_dir) {
  RunConfig cfg = load_or_default(config_path);
  if (has_seed) cfg.seed = seed_override;
  if (epochs_override) cfg.epochs = epochs_override;
  apply_fusion_override(cfg, fusion);
  cfg.validate();

  fs::create_directories(out_dir);
  auto scenes = gen_scenes(cfg, cfg.train_scenes, cfg.scene_seed);
  auto prepared = prepare_all(scenes, cfg);

  Detector model(cfg);
  std::ofstream log(fs::path(out_dir) / "train_log.txt");
  if (!log) throw DataError("cannot open train log for write");
  auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(model, cfg);
  auto history = trainer.train(prepared, &log);
  auto t1 = std::chrono::steady_clock::now();

  model.save((fs::path(out_dir) / "model.rfn").string());
  std::ofstream cfg_out(fs::path(out_dir) / "config.cfg");
  cfg_out << serialize_config(cfg);
  std::fprintf(stderr,
               "trained %zu epochs on %zu scenes in %.1f s; final loss %.6f\n",
               cfg.epochs, prepared.size(),
               std::chrono::duration<double>(t1 - t0).count(),
               history.empty() ? 0.0 : history.back().total);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             bool oracle, const std::string& dataset,
             const std::string& kitti_dir, const std::string& split,
             const std::string& out_dir) {
  RunConfig cfg = load_or_default(config_path);
  cfg.validate();
  fs::create_directories(out_dir);

  Detector model(cfg);
  if (!oracle) {
    if (checkpoint.empty())
      throw ConfigError("eval: --checkpoint or --oracle required");
    model.load(checkpoint);
  }

  EvalRun run;
  if (dataset == "synthetic") {
    run = run_synthetic_eval(model, cfg, oracle);
  } else if (dataset == "kitti") {
    if (kitti_dir.empty()) throw ConfigError("eval: --kitti-dir required");
    if (split.empty()) throw ConfigError("eval: --split required for kitti");
    auto ids = read_split(split);
    auto classes = class_table(cfg);
    for (std::size_t f = 0; f < ids.size(); ++f) {
      CalibContext calib = read_calib(kitti_dir + "/calib/" + ids[f] + ".txt");
      for (const auto& l :
           read_labels(kitti_dir + "/label_2/" + ids[f] + ".txt")) {
        if (class_id_for(classes, l.type) < 0) continue;
        GroundTruth g;
        g.box = label_to_lidar_box(l, calib);
        g.class_name = l.type;
        g.difficulty = classify_difficulty(l);
        g.frame = f;
        run.gts.push_back(g);
        if (oracle) {
          Detection d;
          d.box = g.box;
          d.class_name = g.class_name;
          d.score = 1.0;
          d.frame = f;
          run.dets.push_back(d);
        }
      }
      if (!oracle) {
        // precomputed KITTI-format results (15 fields + score per line)
        std::string result_path = kitti_dir + "/results/" + ids[f] + ".txt";
        if (fs::exists(result_path))
          for (auto& d : read_detections(result_path, calib, f))
            run.dets.push_back(std::move(d));
      }
    }
    run.summary = evaluate_detections(run.dets, run.gts, eval_config_from(cfg));
  } else {
    throw ConfigError("eval: unknown dataset '" + dataset + "'");
  }

  std::string table = render_report_table(run.summary);
  {
    std::ofstream f(fs::path(out_dir) / "report.txt");
    f << table;
    std::ofstream k(fs::path(out_dir) / "report.kv");
    k << render_report_kv(run.summary);
  }
  std::cout << table;
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis,
               const std::string& values_csv, const std::string& out_dir) {
  RunConfig base = load_or_default(config_path);
  base.validate();
  fs::create_directories(out_dir);

  auto train_and_eval = [&](RunConfig cfg) {
    Detector model(cfg);
    auto scenes = gen_scenes(cfg, cfg.train_scenes, cfg.scene_seed);
    auto prepared = prepare_all(scenes, cfg);
    Trainer trainer(model, cfg);
    trainer.train(prepared, nullptr);
    return run_synthetic_eval(model, cfg, false);
  };
  const std::string& cls = base.classes[0].name;

  std::ostringstream table;
  if (axis == "eta") {
    std::vector<double> values{0.0, 0.5, 1.0, 1.5, 2.0};
    if (!values_csv.empty())
      values = detail::parse_double_list(values_csv, "values");
    table << "eta       AP_easy   AP_moderate AP_hard\n";
    for (double eta : values) {
      RunConfig cfg = base;
      cfg.eta = eta;
      EvalRun run = train_and_eval(cfg);
      char line[160];
      std::snprintf(line, sizeof(line), "%-9.2f %.6f  %.6f    %.6f\n", eta,
                    ap_for(run.summary, cls, Difficulty::Easy),
                    ap_for(run.summary, cls, Difficulty::Moderate),
                    ap_for(run.summary, cls, Difficulty::Hard));
      table << line;
      std::fprintf(stderr, "ablate eta=%.2f done\n", eta);
    }
  } else if (axis == "fusion") {
    std::vector<std::string> values{"sum", "concat", "max"};
    if (!values_csv.empty()) values = detail::split(values_csv, ',');
    table << "fusion    AP_easy   AP_moderate AP_hard\n";
    for (const auto& name : values) {
      RunConfig cfg = base;
      apply_fusion_override(cfg, name);
      cfg.validate();
      EvalRun run = train_and_eval(cfg);
      char line[160];
      std::snprintf(line, sizeof(line), "%-9s %.6f  %.6f    %.6f\n",
                    name.c_str(), ap_for(run.summary, cls, Difficulty::Easy),
                    ap_for(run.summary, cls, Difficulty::Moderate),
                    ap_for(run.summary, cls, Difficulty::Hard));
      table << line;
      std::fprintf(stderr, "ablate fusion=%s done\n", name.c_str());
    }
  } else {
    throw ConfigError("ablate: axis must be eta or fusion");
  }
  {
    std::ofstream f(fs::path(out_dir) / "ablate.txt");
    f << table.str();
  }
  std::cout << table.str();
  return 0;
}

int cmd_export_viz(const std::string& config_path, std::uint64_t scene_seed,
                   const std::string& checkpoint, const std::string& out_dir) {
  RunConfig cfg = load_or_default(config_path);
  cfg.validate();
  fs::create_directories(out_dir);
  SyntheticScene scene = gen_synthetic_scene(cfg.synthetic, scene_seed);

  std::vector<Detection> dets;
  if (!checkpoint.empty()) {
    Detector model(cfg);
    model.load(checkpoint);
    Rng rng(cfg.seed ^ 0x9c6eULL);
    PreparedScene prepared = prepare_scene(scene, cfg, rng);
    Detector::Forward fwd = model.forward(prepared);
    dets = model.predict(fwd, 0);
  }
  write_ply((fs::path(out_dir) / "scene.ply").string(), scene.cloud, scene.calib,
            scene.seg, cfg.tau_fg);
  write_bev_svg((fs::path(out_dir) / "bev.svg").string(), scene.cloud,
                scene.boxes, dets);
  std::fprintf(stderr, "wrote scene.ply and bev.svg (%zu detections)\n",
               dets.size());
  return 0;
}

int cmd_bench(std::size_t n, std::size_t iters) {
  Rng rng(1);
  std::vector<double> coords(3 * n);
  for (double& v : coords) v = rng.uniform(-40, 40);

  auto time_it = [&](const char* name, auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < iters; ++i) fn();
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                double(iters);
    std::printf("%-28s %10.3f ms/iter\n", name, ms);
  };

  time_it("fps_euclidean N->N/8", [&] { fps_euclidean(coords, n / 8); });
  std::vector<double> centers(coords.begin(), coords.begin() + 3 * (n / 8));
  time_it("ball_query r=2 k=32", [&] { ball_query(centers, coords, 2.0, 32); });
  FeatureSet src;
  src.coords.assign(coords.begin(), coords.begin() + 3 * (n / 8));
  src.features = Tensor2(n / 8, 16);
  for (double& v : src.features.v) v = rng.uniform(-1, 1);
  time_it("fp_interpolate k=3", [&] { fp_interpolate(coords, src, 3); });
  time_it("iou_3d x1000", [&] {
    Rng r2(7);
    for (int i = 0; i < 1000; ++i) {
      OrientedBox3D a(r2.uniform(-2, 2), r2.uniform(-2, 2), 0, 1.5, 1.7, 4.0,
                      r2.uniform(-kPi, kPi));
      OrientedBox3D b(r2.uniform(-2, 2), r2.uniform(-2, 2), 0, 1.5, 1.7, 4.0,
                      r2.uniform(-kPi, kPi));
      iou_3d(a, b);
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RoIFusion LiDAR+camera 3D detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, velodyne, calib_path, out, checkpoint;
  std::string dataset = "synthetic";
  std::string kitti_dir, split, strategy = "dfps", axis, values_csv, fusion;
  std::uint64_t scene_seed = 1, seed_override = 0;
  std::size_t count = 256, epochs_override = 0, bench_n = 16384, bench_iters = 3;
  bool oracle = false;

  auto* sample = app.add_subcommand("sample", "farthest point sampling");
  sample->add_option("--config", config_path);
  sample->add_option("--velodyne", velodyne);
  sample->add_option("--scene-seed", scene_seed);
  sample->add_option("--count", count);
  sample->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"dfps", "ffps", "fused"}));
  sample->add_option("--out", out);

  auto* project = app.add_subcommand("project", "project a cloud to pixels");
  project->add_option("--config", config_path);
  project->add_option("--velodyne", velodyne);
  project->add_option("--calib", calib_path);
  project->add_option("--scene-seed", scene_seed);
  project->add_option("--out", out);

  auto* train = app.add_subcommand("train-toy", "desk-scale synthetic training");
  train->add_option("--config", config_path);
  auto* seed_opt = train->add_option("--seed", seed_override);
  train->add_option("--fusion", fusion)
      ->check(CLI::IsMember({"concat", "sum", "max"}));
  train->add_option("--epochs", epochs_override);
  train->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "evaluate detections");
  eval->add_option("--config", config_path);
  eval->add_option("--checkpoint", checkpoint);
  eval->add_flag("--oracle", oracle, "use ground truth as detections");
  eval->add_option("--dataset", dataset)
      ->check(CLI::IsMember({"synthetic", "kitti"}));
  eval->add_option("--kitti-dir", kitti_dir);
  eval->add_option("--split", split);
  eval->add_option("--out", out)->required();

  auto* ablate = app.add_subcommand("ablate", "sweep eta or fusion strategy");
  ablate->add_option("--config", config_path);
  ablate->add_option("--axis", axis)
      ->required()
      ->check(CLI::IsMember({"eta", "fusion"}));
  ablate->add_option("--values", values_csv);
  ablate->add_option("--out", out)->required();

  auto* viz = app.add_subcommand("export-viz", "write PLY + BEV SVG");
  viz->add_option("--config", config_path);
  viz->add_option("--scene-seed", scene_seed);
  viz->add_option("--checkpoint", checkpoint);
  viz->add_option("--out", out)->required();

  auto* bench = app.add_subcommand("bench", "kernel timings");
  bench->add_option("--n", bench_n);
  bench->add_option("--iters", bench_iters);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed())
      return cmd_sample(config_path, velodyne, scene_seed, count, strategy, out);
    if (project->parsed())
      return cmd_project(config_path, velodyne, calib_path, scene_seed, out);
    if (train->parsed())
      return cmd_train_toy(config_path, seed_override, seed_opt->count() > 0,
                           fusion, epochs_override, out);
    if (eval->parsed())
      return cmd_eval(config_path, checkpoint, oracle, dataset, kitti_dir,
                      split, out);
    if (ablate->parsed()) return cmd_ablate(config_path, axis, values_csv, out);
    if (viz->parsed())
      return cmd_export_viz(config_path, scene_seed, checkpoint, out);
    if (bench->parsed()) return cmd_bench(bench_n, bench_iters);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
