#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/data.hpp"
#include "roifusion/roi.hpp"

namespace roifusion {

// Full run configuration. Defaults reproduce the reference model-structure
// constants (16384-point clouds, 256 keypoints split 128/128, eta = 1 m,
// per-class RoI dims); backbone widths and radii are configurable because
// only desk-scale values are trainable here.
struct RunConfig {
  // [model]
  std::size_t cloud_points = 16384;  // N
  std::size_t keypoints_pc = 128;    // M1
  std::size_t keypoints_img = 128;   // M2
  double eta = 1.0;
  std::size_t angle_bins = 12;
  std::size_t k_pool = 64;
  std::size_t pool_grid = 7;
  FusionStrategy fusion = FusionStrategy::Concat;
  double tau_fg = 0.5;
  double geom_blend = 0.0;
  std::size_t vote_hidden = 128;
  bool frustum_filter = true;
  // backbone; empty sa_points derives {N/4, N/16, N/64, max(N/256, M1)}
  std::vector<std::size_t> sa_points;
  std::vector<double> sa_radius{0.8, 1.6, 3.2, 6.4};
  std::vector<std::size_t> sa_neighbors{32, 32, 32, 32};
  std::vector<std::vector<std::size_t>> sa_mlp{
      {16, 16, 32}, {32, 32, 64}, {32, 32, 64}, {32, 64, 64}};
  std::vector<std::string> sa_sampler{"dfps", "fused", "fused", "fused"};
  std::vector<std::vector<std::size_t>> fp_mlp{{64}, {64}, {64}, {64}};
  std::size_t fp_k = 3;
  std::size_t pool3d_width = 64;   // 3D pooling MLP output width
  std::size_t pool2d_width = 64;   // 2D pooling dense output width
  std::size_t fuse_width = 128;    // fusion MLP output width
  std::size_t head_hidden = 128;
  std::size_t seg_channels = 0;    // image feature map width; 0 = from synthetic

  // [classes] name -> (h, w, l, iou_threshold)
  struct ClassEntry {
    std::string name;
    double h = 0, w = 0, l = 0;
    double iou = 0.5;
  };
  std::vector<ClassEntry> classes{{"Car", 1.8, 5.0, 5.0, 0.7},
                                  {"Pedestrian", 1.8, 1.0, 1.0, 0.5},
                                  {"Cyclist", 1.8, 1.8, 1.8, 0.5}};

  // [train]
  std::size_t epochs = 50;
  double lr = 0.002;
  std::size_t lr_drop_epoch = 40;
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 4;
  std::size_t train_scenes = 64;
  std::size_t heldout_scenes = 32;
  double lambda_cls = 1.0, lambda_center = 1.0, lambda_size = 1.0;
  double lambda_bin = 1.0, lambda_residual = 1.0, lambda_vote = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t scene_seed = 100;
  std::size_t threads = 2;

  // [eval]
  std::string interp = "r11";
  std::vector<double> distance_edges{0.0, 20.0, 40.0};
  double score_threshold = 0.05;
  double nms_iou = 0.1;

  // [synthetic]
  SyntheticConfig synthetic;

  std::vector<std::size_t> effective_sa_points() const {
    if (!sa_points.empty()) return sa_points;
    std::vector<std::size_t> pts{cloud_points / 4, cloud_points / 16,
                                 cloud_points / 64, cloud_points / 256};
    for (auto& p : pts) p = std::max(p, keypoints_pc);
    return pts;
  }

  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + s + "'");
  }
}

inline std::size_t parse_size(const std::string& s, const std::string& key) {
  double v = parse_double(s, key);
  if (v < 0 || v != std::floor(v))
    throw ConfigError("expected non-negative integer for " + key + ": '" + s + "'");
  return std::size_t(v);
}

inline std::vector<double> parse_double_list(const std::string& s,
                                             const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split(s, ','))
    if (!item.empty()) out.push_back(parse_double(item, key));
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s,
                                                const std::string& key) {
  std::vector<std::size_t> out;
  for (const auto& item : split(s, ','))
    if (!item.empty()) out.push_back(parse_size(item, key));
  return out;
}

inline std::vector<std::vector<std::size_t>> parse_stage_list(
    const std::string& s, const std::string& key) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& stage : split(s, ';'))
    if (!stage.empty()) out.push_back(parse_size_list(stage, key));
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string fmt_double_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

inline std::string fmt_stage_list(const std::vector<std::vector<std::size_t>>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ";" : "") + fmt_size_list(v[i]);
  return s;
}

}  // namespace detail

inline FusionStrategy fusion_from_name(const std::string& name) {
  if (name == "concat") return FusionStrategy::Concat;
  if (name == "sum") return FusionStrategy::Sum;
  if (name == "max") return FusionStrategy::Max;
  throw ConfigError("unknown fusion strategy: " + name);
}

inline void RunConfig::validate() const {
  if (keypoints_pc + keypoints_img == 0)
    throw ConfigError("keypoints_pc + keypoints_img must be >= 1");
  if (eta < 0) throw ConfigError("eta must be >= 0");
  if (angle_bins < 2) throw ConfigError("angle_bins must be >= 2");
  if (k_pool < 1 || pool_grid < 1) throw ConfigError("k_pool and pool_grid must be >= 1");
  if (tau_fg < 0 || tau_fg > 1) throw ConfigError("tau_fg must lie in [0,1]");
  if (classes.empty()) throw ConfigError("at least one class required");
  for (const auto& c : classes)
    if (c.h <= 0 || c.w <= 0 || c.l <= 0)
      throw ConfigError("class dims must be positive: " + c.name);
  auto pts = effective_sa_points();
  if (pts.empty()) throw ConfigError("backbone needs at least one SA stage");
  if (pts.size() != sa_radius.size() || pts.size() != sa_neighbors.size() ||
      pts.size() != sa_mlp.size() || pts.size() != fp_mlp.size() ||
      pts.size() != sa_sampler.size())
    throw ConfigError("sa_points/sa_radius/sa_neighbors/sa_mlp/sa_sampler/fp_mlp "
                      "must have one entry per stage");
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i] > pts[i - 1]) throw ConfigError("sa_points must be non-increasing");
  if (pts.back() < keypoints_pc)
    throw ConfigError("last SA stage must keep at least keypoints_pc points");
  for (double r : sa_radius)
    if (r <= 0) throw ConfigError("sa_radius entries must be positive");
  for (const auto& m : sa_mlp)
    if (m.empty()) throw ConfigError("sa_mlp stages must be non-empty");
  for (const auto& m : fp_mlp)
    if (m.empty()) throw ConfigError("fp_mlp stages must be non-empty");
  if (fp_mlp.front().back() != sa_mlp.back().back())
    throw ConfigError("final FP width must equal the last SA width so point- and "
                      "pixel-guided keypoint features can be fused");
  for (const auto& s : sa_sampler)
    if (s != "dfps" && s != "ffps" && s != "fused")
      throw ConfigError("sa_sampler entries must be dfps|ffps|fused");
  if (fusion != FusionStrategy::Concat && pool3d_width != pool2d_width)
    throw ConfigError("sum/max fusion requires pool3d_width == pool2d_width");
  if (interp != "r11" && interp != "r40")
    throw ConfigError("interp must be r11 or r40");
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (synthetic.max_objects < synthetic.min_objects)
    throw ConfigError("synthetic max_objects < min_objects");
}

// Strict key=value parser with [section] headers. Unknown sections or keys
// are rejected; '#' starts a comment.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  bool classes_reset = false;
  std::string section;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = line.substr(1, line.size() - 2);
      if (section != "model" && section != "classes" && section != "train" &&
          section != "eval" && section != "synthetic")
        throw ConfigError("unknown section: [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");

    if (section == "model") {
      if (key == "cloud_points") cfg.cloud_points = detail::parse_size(val, key);
      else if (key == "keypoints_pc") cfg.keypoints_pc = detail::parse_size(val, key);
      else if (key == "keypoints_img") cfg.keypoints_img = detail::parse_size(val, key);
      else if (key == "eta") cfg.eta = detail::parse_double(val, key);
      else if (key == "angle_bins") cfg.angle_bins = detail::parse_size(val, key);
      else if (key == "k_pool") cfg.k_pool = detail::parse_size(val, key);
      else if (key == "pool_grid") cfg.pool_grid = detail::parse_size(val, key);
      else if (key == "fusion") cfg.fusion = fusion_from_name(val);
      else if (key == "tau_fg") cfg.tau_fg = detail::parse_double(val, key);
      else if (key == "geom_blend") cfg.geom_blend = detail::parse_double(val, key);
      else if (key == "vote_hidden") cfg.vote_hidden = detail::parse_size(val, key);
      else if (key == "frustum_filter") cfg.frustum_filter = detail::parse_size(val, key) != 0;
      else if (key == "sa_points") cfg.sa_points = detail::parse_size_list(val, key);
      else if (key == "sa_radius") cfg.sa_radius = detail::parse_double_list(val, key);
      else if (key == "sa_neighbors") cfg.sa_neighbors = detail::parse_size_list(val, key);
      else if (key == "sa_mlp") cfg.sa_mlp = detail::parse_stage_list(val, key);
      else if (key == "sa_sampler") cfg.sa_sampler = detail::split(val, ';');
      else if (key == "fp_mlp") cfg.fp_mlp = detail::parse_stage_list(val, key);
      else if (key == "fp_k") cfg.fp_k = detail::parse_size(val, key);
      else if (key == "pool3d_width") cfg.pool3d_width = detail::parse_size(val, key);
      else if (key == "pool2d_width") cfg.pool2d_width = detail::parse_size(val, key);
      else if (key == "fuse_width") cfg.fuse_width = detail::parse_size(val, key);
      else if (key == "head_hidden") cfg.head_hidden = detail::parse_size(val, key);
      else if (key == "seg_channels") cfg.seg_channels = detail::parse_size(val, key);
      else throw ConfigError("unknown key in [model]: " + key);
    } else if (section == "classes") {
      if (!classes_reset) {
        cfg.classes.clear();
        classes_reset = true;
      }
      auto vals = detail::parse_double_list(val, key);
      if (vals.size() != 3 && vals.size() != 4)
        throw ConfigError("class " + key + " needs h,w,l[,iou]");
      RunConfig::ClassEntry e;
      e.name = key;
      e.h = vals[0];
      e.w = vals[1];
      e.l = vals[2];
      e.iou = vals.size() == 4 ? vals[3] : 0.5;
      cfg.classes.push_back(e);
    } else if (section == "train") {
      if (key == "epochs") cfg.epochs = detail::parse_size(val, key);
      else if (key == "lr") cfg.lr = detail::parse_double(val, key);
      else if (key == "lr_drop_epoch") cfg.lr_drop_epoch = detail::parse_size(val, key);
      else if (key == "lr_drop_factor") cfg.lr_drop_factor = detail::parse_double(val, key);
      else if (key == "batch_size") cfg.batch_size = detail::parse_size(val, key);
      else if (key == "train_scenes") cfg.train_scenes = detail::parse_size(val, key);
      else if (key == "heldout_scenes") cfg.heldout_scenes = detail::parse_size(val, key);
      else if (key == "lambda_cls") cfg.lambda_cls = detail::parse_double(val, key);
      else if (key == "lambda_center") cfg.lambda_center = detail::parse_double(val, key);
      else if (key == "lambda_size") cfg.lambda_size = detail::parse_double(val, key);
      else if (key == "lambda_bin") cfg.lambda_bin = detail::parse_double(val, key);
      else if (key == "lambda_residual") cfg.lambda_residual = detail::parse_double(val, key);
      else if (key == "lambda_vote") cfg.lambda_vote = detail::parse_double(val, key);
      else if (key == "seed") cfg.seed = detail::parse_size(val, key);
      else if (key == "scene_seed") cfg.scene_seed = detail::parse_size(val, key);
      else if (key == "threads") cfg.threads = detail::parse_size(val, key);
      else throw ConfigError("unknown key in [train]: " + key);
    } else if (section == "eval") {
      if (key == "interp") {
        if (val != "r11" && val != "r40") throw ConfigError("interp must be r11|r40");
        cfg.interp = val;
      } else if (key == "distance_edges") {
        cfg.distance_edges = detail::parse_double_list(val, key);
      } else if (key == "score_threshold") {
        cfg.score_threshold = detail::parse_double(val, key);
      } else if (key == "nms_iou") {
        cfg.nms_iou = detail::parse_double(val, key);
      } else {
        throw ConfigError("unknown key in [eval]: " + key);
      }
    } else if (section == "synthetic") {
      auto& s = cfg.synthetic;
      if (key == "n_points") s.n_points = detail::parse_size(val, key);
      else if (key == "min_objects") s.min_objects = detail::parse_size(val, key);
      else if (key == "max_objects") s.max_objects = detail::parse_size(val, key);
      else if (key == "points_per_object") s.points_per_object = detail::parse_size(val, key);
      else if (key == "min_points_per_box") s.min_points_per_box = detail::parse_size(val, key);
      else if (key == "noise_sigma") s.noise_sigma = detail::parse_double(val, key);
      else if (key == "dilate_px") s.dilate_px = int(detail::parse_size(val, key));
      else if (key == "obj_h") s.obj_h = detail::parse_double(val, key);
      else if (key == "obj_w") s.obj_w = detail::parse_double(val, key);
      else if (key == "obj_l") s.obj_l = detail::parse_double(val, key);
      else if (key == "dim_jitter") s.dim_jitter = detail::parse_double(val, key);
      else if (key == "image_w") s.image_w = int(detail::parse_size(val, key));
      else if (key == "image_h") s.image_h = int(detail::parse_size(val, key));
      else if (key == "focal") s.focal = detail::parse_double(val, key);
      else if (key == "cam_height") s.cam_height = detail::parse_double(val, key);
      else if (key == "region_x_min") s.region_x_min = detail::parse_double(val, key);
      else if (key == "region_x_max") s.region_x_max = detail::parse_double(val, key);
      else if (key == "region_y_half") s.region_y_half = detail::parse_double(val, key);
      else if (key == "n_classes") s.n_classes = detail::parse_size(val, key);
      else throw ConfigError("unknown key in [synthetic]: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const RunConfig& c) {
  using namespace detail;
  std::ostringstream os;
  os << "[model]\n";
  os << "cloud_points = " << c.cloud_points << "\n";
  os << "keypoints_pc = " << c.keypoints_pc << "\n";
  os << "keypoints_img = " << c.keypoints_img << "\n";
  os << "eta = " << fmt_double(c.eta) << "\n";
  os << "angle_bins = " << c.angle_bins << "\n";
  os << "k_pool = " << c.k_pool << "\n";
  os << "pool_grid = " << c.pool_grid << "\n";
  os << "fusion = " << fusion_strategy_name(c.fusion) << "\n";
  os << "tau_fg = " << fmt_double(c.tau_fg) << "\n";
  os << "geom_blend = " << fmt_double(c.geom_blend) << "\n";
  os << "vote_hidden = " << c.vote_hidden << "\n";
  os << "frustum_filter = " << (c.frustum_filter ? 1 : 0) << "\n";
  if (!c.sa_points.empty()) os << "sa_points = " << fmt_size_list(c.sa_points) << "\n";
  os << "sa_radius = " << fmt_double_list(c.sa_radius) << "\n";
  os << "sa_neighbors = " << fmt_size_list(c.sa_neighbors) << "\n";
  os << "sa_mlp = " << fmt_stage_list(c.sa_mlp) << "\n";
  {
    std::string s;
    for (std::size_t i = 0; i < c.sa_sampler.size(); ++i)
      s += (i ? ";" : "") + c.sa_sampler[i];
    os << "sa_sampler = " << s << "\n";
  }
  os << "fp_mlp = " << fmt_stage_list(c.fp_mlp) << "\n";
  os << "fp_k = " << c.fp_k << "\n";
  os << "pool3d_width = " << c.pool3d_width << "\n";
  os << "pool2d_width = " << c.pool2d_width << "\n";
  os << "fuse_width = " << c.fuse_width << "\n";
  os << "head_hidden = " << c.head_hidden << "\n";
  os << "seg_channels = " << c.seg_channels << "\n";
  os << "\n[classes]\n";
  for (const auto& e : c.classes)
    os << e.name << " = " << fmt_double(e.h) << "," << fmt_double(e.w) << ","
       << fmt_double(e.l) << "," << fmt_double(e.iou) << "\n";
  os << "\n[train]\n";
  os << "epochs = " << c.epochs << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "lr_drop_epoch = " << c.lr_drop_epoch << "\n";
  os << "lr_drop_factor = " << fmt_double(c.lr_drop_factor) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "train_scenes = " << c.train_scenes << "\n";
  os << "heldout_scenes = " << c.heldout_scenes << "\n";
  os << "lambda_cls = " << fmt_double(c.lambda_cls) << "\n";
  os << "lambda_center = " << fmt_double(c.lambda_center) << "\n";
  os << "lambda_size = " << fmt_double(c.lambda_size) << "\n";
  os << "lambda_bin = " << fmt_double(c.lambda_bin) << "\n";
  os << "lambda_residual = " << fmt_double(c.lambda_residual) << "\n";
  os << "lambda_vote = " << fmt_double(c.lambda_vote) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "scene_seed = " << c.scene_seed << "\n";
  os << "threads = " << c.threads << "\n";
  os << "\n[eval]\n";
  os << "interp = " << c.interp << "\n";
  os << "distance_edges = " << fmt_double_list(c.distance_edges) << "\n";
  os << "score_threshold = " << fmt_double(c.score_threshold) << "\n";
  os << "nms_iou = " << fmt_double(c.nms_iou) << "\n";
  os << "\n[synthetic]\n";
  const auto& s = c.synthetic;
  os << "n_points = " << s.n_points << "\n";
  os << "min_objects = " << s.min_objects << "\n";
  os << "max_objects = " << s.max_objects << "\n";
  os << "points_per_object = " << s.points_per_object << "\n";
  os << "min_points_per_box = " << s.min_points_per_box << "\n";
  os << "noise_sigma = " << fmt_double(s.noise_sigma) << "\n";
  os << "dilate_px = " << s.dilate_px << "\n";
  os << "obj_h = " << fmt_double(s.obj_h) << "\n";
  os << "obj_w = " << fmt_double(s.obj_w) << "\n";
  os << "obj_l = " << fmt_double(s.obj_l) << "\n";
  os << "dim_jitter = " << fmt_double(s.dim_jitter) << "\n";
  os << "image_w = " << s.image_w << "\n";
  os << "image_h = " << s.image_h << "\n";
  os << "focal = " << fmt_double(s.focal) << "\n";
  os << "cam_height = " << fmt_double(s.cam_height) << "\n";
  os << "region_x_min = " << fmt_double(s.region_x_min) << "\n";
  os << "region_x_max = " << fmt_double(s.region_x_max) << "\n";
  os << "region_y_half = " << fmt_double(s.region_y_half) << "\n";
  os << "n_classes = " << s.n_classes << "\n";
  return os.str();
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// Desk-scale preset used by toy training and the examples.
inline RunConfig toy_config() {
  RunConfig c;
  c.cloud_points = 2048;
  c.keypoints_pc = 32;
  c.keypoints_img = 32;
  c.vote_hidden = 64;
  c.sa_points = {512, 128, 32};
  c.sa_radius = {1.0, 2.0, 4.0};
  c.sa_neighbors = {16, 16, 16};
  c.sa_mlp = {{16, 16}, {32, 32}, {32, 32}};
  c.sa_sampler = {"dfps", "fused", "fused"};
  c.fp_mlp = {{32}, {32}, {32}};
  c.k_pool = 24;
  c.pool_grid = 5;
  c.pool3d_width = 24;
  c.pool2d_width = 24;
  c.fuse_width = 48;
  c.head_hidden = 64;
  c.classes = {{"Car", 1.8, 5.0, 5.0, 0.7}};
  c.epochs = 200;
  c.lr = 0.002;
  c.lr_drop_epoch = 160;
  c.batch_size = 8;
  c.train_scenes = 64;
  c.heldout_scenes = 32;
  c.lambda_vote = 5.0;
  c.synthetic.min_objects = 2;
  c.synthetic.max_objects = 2;
  c.synthetic.noise_sigma = 0.04;
  c.synthetic.dim_jitter = 0.15;
  c.synthetic.n_classes = 1;
  c.synthetic.image_w = 192;
  c.synthetic.image_h = 96;
  c.synthetic.focal = 110.0;
  c.validate();
  return c;
}

}  // namespace roifusion
