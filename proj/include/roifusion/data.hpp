#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/fusionkp.hpp"
#include "roifusion/geom.hpp"

namespace roifusion {

// ---- KITTI files ----

struct KittiLabel {
  std::string type;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  double bbox[4] = {0, 0, 0, 0};  // left, top, right, bottom (pixels)
  double dim_h = 0, dim_w = 0, dim_l = 0;
  double loc[3] = {0, 0, 0};  // camera frame, bottom-face center
  double rotation_y = 0.0;
  double score = -1.0;  // detections only

  double bbox_height() const { return bbox[3] - bbox[1]; }
};

enum class Difficulty { Easy, Moderate, Hard, Ignored };

inline const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
    case Difficulty::Ignored: return "ignored";
  }
  return "?";
}

// Easiest level whose (min box height, max occlusion, max truncation)
// constraints the label meets.
inline Difficulty classify_difficulty(const KittiLabel& label) {
  const double h = label.bbox_height();
  if (h >= 40.0 && label.occlusion <= 0 && label.truncation <= 0.15)
    return Difficulty::Easy;
  if (h >= 25.0 && label.occlusion <= 1 && label.truncation <= 0.30)
    return Difficulty::Moderate;
  if (h >= 25.0 && label.occlusion <= 2 && label.truncation <= 0.50)
    return Difficulty::Hard;
  return Difficulty::Ignored;
}

// Little-endian float32 quadruples (x, y, z, reflectance).
inline PointCloud read_velodyne(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DataError("cannot open: " + path);
  const std::streamoff bytes = is.tellg();
  if (bytes % 16 != 0)
    throw MalformedFile("velodyne file size not divisible by 16: " + path);
  is.seekg(0);
  const std::size_t n = std::size_t(bytes) / 16;
  if (n == 0) throw MalformedFile("velodyne file empty: " + path);
  std::vector<float> raw(n * 4);
  is.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!is) throw MalformedFile("velodyne read failed: " + path);
  PointCloud cloud;
  cloud.xyz.reserve(3 * n);
  cloud.reflectance.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k)
      if (!std::isfinite(raw[4 * i + k]))
        throw MalformedFile("velodyne file has non-finite values: " + path);
    cloud.push(raw[4 * i], raw[4 * i + 1], raw[4 * i + 2],
               std::clamp(double(raw[4 * i + 3]), 0.0, 1.0));
  }
  return cloud;
}

inline void write_velodyne(const std::string& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for write: " + path);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float q[4] = {float(cloud.x(i)), float(cloud.y(i)), float(cloud.z(i)),
                  float(cloud.reflectance[i])};
    os.write(reinterpret_cast<const char*>(q), 16);
  }
  if (!os) throw DataError("write failed: " + path);
}

namespace detail {

inline std::array<double, 16> expand4(const std::vector<double>& vals) {
  std::array<double, 16> m{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  if (vals.size() == 9) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m[4 * r + c] = vals[3 * r + c];
  } else {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m[4 * r + c] = vals[4 * r + c];
  }
  return m;
}

inline std::array<double, 16> mat4_mul(const std::array<double, 16>& a,
                                       const std::array<double, 16>& b) {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[4 * r + k] * b[4 * k + c];
      out[4 * r + c] = s;
    }
  return out;
}

// Inverse of a rigid transform (orthonormal rotation + translation).
inline std::array<double, 16> rigid_inverse(const std::array<double, 16>& t) {
  std::array<double, 16> inv{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) inv[4 * r + c] = t[4 * c + r];
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += inv[4 * r + k] * t[4 * k + 3];
    inv[4 * r + 3] = -s;
  }
  return inv;
}

}  // namespace detail

// KITTI calibration: M = P2, T = expand4(R0_rect) * expand4(Tr_velo_to_cam).
// The calib file carries no image size, so it is supplied by the caller
// (KITTI left color camera default).
inline CalibContext read_calib(const std::string& path, int image_w = 1242,
                               int image_h = 375) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    std::istringstream vals(line.substr(colon + 1));
    std::vector<double> v;
    double d;
    while (vals >> d) v.push_back(d);
    if (!v.empty()) rows[key] = v;
  }
  for (const char* key : {"P2", "R0_rect", "Tr_velo_to_cam"})
    if (!rows.count(key)) throw MissingKey(key);
  if (rows["P2"].size() != 12) throw MalformedFile("P2 needs 12 values: " + path);

  CalibContext calib;
  for (int i = 0; i < 12; ++i) calib.M[i] = rows["P2"][i];
  calib.T = detail::mat4_mul(detail::expand4(rows["R0_rect"]),
                             detail::expand4(rows["Tr_velo_to_cam"]));
  calib.width = image_w;
  calib.height = image_h;
  return calib;
}

// 15 whitespace-separated fields per object; a 16th field, when present, is a
// detection score.
inline std::vector<KittiLabel> read_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<KittiLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ss(line);
    KittiLabel l;
    double occ;
    if (!(ss >> l.type >> l.truncation >> occ >> l.alpha >> l.bbox[0] >>
          l.bbox[1] >> l.bbox[2] >> l.bbox[3] >> l.dim_h >> l.dim_w >> l.dim_l >>
          l.loc[0] >> l.loc[1] >> l.loc[2] >> l.rotation_y))
      throw MalformedFile(path + ":" + std::to_string(line_no) +
                          ": expected 15 label fields");
    l.occlusion = int(occ);
    ss >> l.score;  // optional
    for (double d : {l.truncation, l.alpha, l.dim_h, l.dim_w, l.dim_l, l.loc[0],
                     l.loc[1], l.loc[2], l.rotation_y})
      if (!std::isfinite(d))
        throw MalformedFile(path + ":" + std::to_string(line_no) +
                            ": non-finite field");
    out.push_back(l);
  }
  return out;
}

// Known object classes with canonical RoI base dimensions (h, w, l).
struct ClassSpec {
  std::string name;
  double roi_h = 0, roi_w = 0, roi_l = 0;
};

inline std::vector<ClassSpec> default_classes() {
  return {{"Car", 1.8, 5.0, 5.0},
          {"Pedestrian", 1.8, 1.0, 1.0},
          {"Cyclist", 1.8, 1.8, 1.8}};
}

inline int class_id_for(const std::vector<ClassSpec>& classes,
                        const std::string& name) {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i].name == name) return int(i);
  return -1;
}

// Camera-frame label -> LiDAR-frame oriented box. The KITTI location is the
// bottom-face center, so the center is lifted by h/2 along camera -y before
// the inverse rigid transform; the yaw comes from transforming the heading
// direction into the LiDAR frame.
inline OrientedBox3D label_to_lidar_box(const KittiLabel& label,
                                        const CalibContext& calib) {
  auto tinv = detail::rigid_inverse(calib.T);
  double cam[3] = {label.loc[0], label.loc[1] - 0.5 * label.dim_h, label.loc[2]};
  double lidar[3];
  for (int r = 0; r < 3; ++r)
    lidar[r] = tinv[4 * r] * cam[0] + tinv[4 * r + 1] * cam[1] +
               tinv[4 * r + 2] * cam[2] + tinv[4 * r + 3];
  // heading in camera frame: +x rotated by rotation_y about +y (y down)
  double dir_cam[3] = {std::cos(label.rotation_y), 0.0, -std::sin(label.rotation_y)};
  double dir[3];
  for (int r = 0; r < 3; ++r)
    dir[r] = tinv[4 * r] * dir_cam[0] + tinv[4 * r + 1] * dir_cam[1] +
             tinv[4 * r + 2] * dir_cam[2];
  double yaw = std::atan2(dir[1], dir[0]);
  return OrientedBox3D(lidar[0], lidar[1], lidar[2], label.dim_h, label.dim_w,
                       label.dim_l, yaw);
}

// One frame id per line, blanks skipped.
inline std::vector<std::string> read_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

// Seeded shuffle down to n points; clouds smaller than n are padded by
// resampling with replacement.
inline PointCloud subsample_cloud(const PointCloud& cloud, std::size_t n, Rng& rng) {
  const std::size_t sz = cloud.size();
  PointCloud out;
  if (sz >= n) {
    std::vector<std::size_t> idx(sz);
    for (std::size_t i = 0; i < sz; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i)
      std::swap(idx[i], idx[i + rng.index(sz - i)]);
    idx.resize(n);
    for (std::size_t i : idx)
      out.push(cloud.x(i), cloud.y(i), cloud.z(i), cloud.reflectance[i]);
  } else {
    out = cloud;
    for (std::size_t i = sz; i < n; ++i) {
      std::size_t j = rng.index(sz);
      out.push(cloud.x(j), cloud.y(j), cloud.z(j), cloud.reflectance[j]);
    }
  }
  return out;
}

inline PointCloud frustum_filter(const PointCloud& cloud, const CalibContext& calib) {
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (project_point(cloud.x(i), cloud.y(i), cloud.z(i), calib).in_image)
      out.push(cloud.x(i), cloud.y(i), cloud.z(i), cloud.reflectance[i]);
  }
  return out;
}

// ---- Synthetic scenes ----

struct SyntheticConfig {
  std::size_t min_objects = 1, max_objects = 4;
  double region_x_min = 8.0, region_x_max = 36.0;
  double region_y_half = 11.0;
  std::size_t n_points = 2048;
  std::size_t points_per_object = 256;
  std::size_t min_points_per_box = 32;
  double noise_sigma = 0.02;
  int dilate_px = 0;
  // object dims (mean car) with jitter fraction
  double obj_h = 1.55, obj_w = 1.7, obj_l = 4.0;
  double dim_jitter = 0.1;
  std::size_t class_id = 0;  // index into the class table ("Car")
  std::size_t n_classes = 3;
  // camera: at (0, 0, cam_height) looking along +x
  int image_w = 256, image_h = 160;
  double focal = 150.0;
  double cam_height = 2.0;
  std::size_t max_placement_attempts = 200;
};

struct SyntheticScene {
  std::vector<LabeledBox> boxes;
  PointCloud cloud;
  std::vector<int> point_object;  // object index per point, -1 for clutter
  CalibContext calib;
  SegScores seg;
  std::uint64_t seed = 0;
};

inline CalibContext synthetic_calib(const SyntheticConfig& cfg) {
  CalibContext calib;
  // rows of R: camera x = -y_lidar, camera y = -z_lidar, camera z = +x_lidar
  calib.T = {0, -1, 0, 0,
             0, 0, -1, cfg.cam_height,
             1, 0, 0, 0,
             0, 0, 0, 1};
  calib.M = {cfg.focal, 0, cfg.image_w / 2.0, 0,
             0, cfg.focal, cfg.image_h / 2.0, 0,
             0, 0, 1, 0};
  calib.width = cfg.image_w;
  calib.height = cfg.image_h;
  return calib;
}

namespace detail {

// Uniform point on the surface of a box, by face area.
inline std::array<double, 3> sample_box_surface(const OrientedBox3D& box, Rng& rng) {
  const double ah = box.w * box.l;  // top/bottom
  const double aw = box.h * box.l;  // sides along length
  const double al = box.h * box.w;  // front/back
  double pick = rng.uniform() * 2.0 * (ah + aw + al);
  double lx, ly, lz;
  if (pick < 2.0 * ah) {
    lx = rng.uniform(-0.5, 0.5) * box.l;
    ly = rng.uniform(-0.5, 0.5) * box.w;
    lz = (pick < ah ? 0.5 : -0.5) * box.h;
  } else if (pick < 2.0 * (ah + aw)) {
    pick -= 2.0 * ah;
    lx = rng.uniform(-0.5, 0.5) * box.l;
    ly = (pick < aw ? 0.5 : -0.5) * box.w;
    lz = rng.uniform(-0.5, 0.5) * box.h;
  } else {
    pick -= 2.0 * (ah + aw);
    lx = (pick < al ? 0.5 : -0.5) * box.l;
    ly = rng.uniform(-0.5, 0.5) * box.w;
    lz = rng.uniform(-0.5, 0.5) * box.h;
  }
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {box.center[0] + c * lx - s * ly, box.center[1] + s * lx + c * ly,
          box.center[2] + lz};
}

}  // namespace detail

// Deterministic synthetic scene: yaw-oriented boxes on the ground plane
// (z = 0), surface-sampled object points with Gaussian noise, ground clutter
// in the camera frustum, and oracle segmentation scores. Clutter that the
// depth buffer says is hidden behind an object is rejected, so the oracle
// mask stays consistent with visibility.
inline SyntheticScene gen_synthetic_scene(const SyntheticConfig& cfg,
                                          std::uint64_t seed) {
  Rng rng(seed);
  SyntheticScene scene;
  scene.seed = seed;
  scene.calib = synthetic_calib(cfg);

  const std::size_t n_obj =
      cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);

  // place boxes: non-overlapping in BEV, fully visible in the image
  std::size_t attempts = 0;
  while (scene.boxes.size() < n_obj) {
    if (++attempts > cfg.max_placement_attempts)
      throw PlacementFailure("synthetic placement failed after " +
                             std::to_string(attempts) + " attempts");
    double h = cfg.obj_h * (1.0 + cfg.dim_jitter * (2.0 * rng.uniform() - 1.0));
    double w = cfg.obj_w * (1.0 + cfg.dim_jitter * (2.0 * rng.uniform() - 1.0));
    double l = cfg.obj_l * (1.0 + cfg.dim_jitter * (2.0 * rng.uniform() - 1.0));
    double x = rng.uniform(cfg.region_x_min, cfg.region_x_max);
    double y = rng.uniform(-cfg.region_y_half, cfg.region_y_half);
    double yaw = rng.uniform(-kPi, kPi);
    OrientedBox3D box(x, y, 0.5 * h, h, w, l, yaw);

    bool ok = true;
    for (const auto& other : scene.boxes)
      if (iou_bev(box, other.box) > 0.0) ok = false;
    for (const auto& corner : box_corners(box))
      if (!project_point(corner[0], corner[1], corner[2], scene.calib).in_image)
        ok = false;
    if (!ok) continue;
    scene.boxes.push_back({box, cfg.class_id});
  }

  // object surface points
  for (std::size_t o = 0; o < scene.boxes.size(); ++o) {
    for (std::size_t i = 0; i < cfg.points_per_object; ++i) {
      auto p = detail::sample_box_surface(scene.boxes[o].box, rng);
      double px = p[0] + rng.normal(0.0, cfg.noise_sigma);
      double py = p[1] + rng.normal(0.0, cfg.noise_sigma);
      double pz = p[2] + rng.normal(0.0, cfg.noise_sigma);
      scene.cloud.push(px, py, pz, 0.8);
      scene.point_object.push_back(int(o));
    }
  }

  // object depth buffer for clutter occlusion tests
  const int w = cfg.image_w, h = cfg.image_h;
  std::vector<double> depth(std::size_t(w) * h,
                            std::numeric_limits<double>::infinity());
  std::vector<int> pixel_object(std::size_t(w) * h, -1);
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    ProjectedPoint p =
        project_point(scene.cloud.x(i), scene.cloud.y(i), scene.cloud.z(i),
                      scene.calib);
    if (!p.in_image) continue;
    std::size_t px = std::size_t(int(p.u)) * h + std::size_t(int(p.v));
    if (p.depth < depth[px]) depth[px] = p.depth;
    pixel_object[px] = scene.point_object[i];
  }

  // ground clutter, uniform in the frustum, visibility-consistent
  const std::size_t target = std::max(cfg.n_points,
                                      scene.cloud.size());
  std::size_t clutter_attempts = 0;
  while (scene.cloud.size() < target &&
         clutter_attempts < 200 * cfg.n_points) {
    ++clutter_attempts;
    double x = rng.uniform(2.0, cfg.region_x_max + 4.0);
    double y = rng.uniform(-cfg.region_y_half - 4.0, cfg.region_y_half + 4.0);
    ProjectedPoint p = project_point(x, y, 0.0, scene.calib);
    if (!p.in_image) continue;
    std::size_t px = std::size_t(int(p.u)) * h + std::size_t(int(p.v));
    if (pixel_object[px] >= 0 && p.depth > depth[px]) continue;  // occluded
    scene.cloud.push(x, y, 0.0, 0.3);
    scene.point_object.push_back(-1);
  }

  // oracle segmentation: one-hot class at projected object-point pixels
  // (optionally dilated), background elsewhere; features are the score
  // channels plus normalized pixel coordinates.
  SegScores& seg = scene.seg;
  seg.width = w;
  seg.height = h;
  seg.classes = 1 + cfg.n_classes;
  seg.scores.assign(std::size_t(w) * h * seg.classes, 0.0);
  for (int u = 0; u < w; ++u)
    for (int v = 0; v < h; ++v) seg.score_at(u, v, 0) = 1.0;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.point_object[i] < 0) continue;
    ProjectedPoint p =
        project_point(scene.cloud.x(i), scene.cloud.y(i), scene.cloud.z(i),
                      scene.calib);
    if (!p.in_image) continue;
    std::size_t cls = 1 + scene.boxes[scene.point_object[i]].class_id;
    int u0 = int(p.u), v0 = int(p.v);
    for (int du = -cfg.dilate_px; du <= cfg.dilate_px; ++du) {
      for (int dv = -cfg.dilate_px; dv <= cfg.dilate_px; ++dv) {
        int u = u0 + du, v = v0 + dv;
        if (u < 0 || u >= w || v < 0 || v >= h) continue;
        for (std::size_t c = 0; c < seg.classes; ++c) seg.score_at(u, v, c) = 0.0;
        seg.score_at(u, v, cls) = 1.0;
      }
    }
  }
  seg.feature_dim = seg.classes + 2;
  seg.features.assign(std::size_t(w) * h * seg.feature_dim, 0.0);
  for (int u = 0; u < w; ++u)
    for (int v = 0; v < h; ++v) {
      for (std::size_t c = 0; c < seg.classes; ++c)
        seg.feature_at(u, v, c) = seg.score_at(u, v, c);
      seg.feature_at(u, v, seg.classes) = double(u) / w;
      seg.feature_at(u, v, seg.classes + 1) = double(v) / h;
    }

  // invariant: enough points inside every box
  for (std::size_t o = 0; o < scene.boxes.size(); ++o) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < scene.cloud.size(); ++i)
      if (box_contains(scene.boxes[o].box, scene.cloud.x(i), scene.cloud.y(i),
                       scene.cloud.z(i)))
        ++count;
    if (count < cfg.min_points_per_box)
      throw PlacementFailure("box " + std::to_string(o) + " has only " +
                             std::to_string(count) + " interior points");
  }
  return scene;
}

// Serves the oracle scores of pre-generated scenes.
class OracleSegProvider : public SegmentationProvider {
 public:
  explicit OracleSegProvider(const std::vector<SyntheticScene>* scenes)
      : scenes_(scenes) {}
  const SegScores& get(std::size_t frame) override {
    return (*scenes_)[frame].seg;
  }

 private:
  const std::vector<SyntheticScene>* scenes_;
};

// ---- RFSC scene archive: magic "RFSC", u16 version, then tagged sections
// (4-byte tag, u64 payload size, payload). Unknown tags are skipped. ----

namespace detail {

inline void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool read_u16(std::istream& is, std::uint16_t& v) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) return false;
  v = std::uint16_t(b[0] | (b[1] << 8));
  return true;
}

inline bool read_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return true;
}

inline void write_section(std::ostream& os, const char tag[4],
                          const std::string& payload) {
  os.write(tag, 4);
  write_u64(os, payload.size());
  os.write(payload.data(), std::streamsize(payload.size()));
}

}  // namespace detail

inline void write_scene(const std::string& path, const SyntheticScene& scene) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for write: " + path);
  os.write("RFSC", 4);
  detail::write_u16(os, 1);

  {
    std::ostringstream p;
    detail::write_u32(p, std::uint32_t(scene.cloud.size()));
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      detail::write_f64(p, scene.cloud.x(i));
      detail::write_f64(p, scene.cloud.y(i));
      detail::write_f64(p, scene.cloud.z(i));
      detail::write_f64(p, scene.cloud.reflectance[i]);
    }
    detail::write_section(os, "CLD0", p.str());
  }
  {
    std::ostringstream p;
    detail::write_u32(p, std::uint32_t(scene.boxes.size()));
    for (const auto& lb : scene.boxes) {
      for (double d : {lb.box.center[0], lb.box.center[1], lb.box.center[2],
                       lb.box.h, lb.box.w, lb.box.l, lb.box.yaw})
        detail::write_f64(p, d);
      detail::write_u32(p, std::uint32_t(lb.class_id));
    }
    detail::write_section(os, "BOX0", p.str());
  }
  {
    std::ostringstream p;
    detail::write_u32(p, std::uint32_t(scene.point_object.size()));
    for (int v : scene.point_object)
      detail::write_u32(p, std::uint32_t(std::int32_t(v)));
    detail::write_section(os, "PID0", p.str());
  }
  {
    std::ostringstream p;
    for (double d : scene.calib.T) detail::write_f64(p, d);
    for (double d : scene.calib.M) detail::write_f64(p, d);
    detail::write_u32(p, std::uint32_t(scene.calib.width));
    detail::write_u32(p, std::uint32_t(scene.calib.height));
    detail::write_section(os, "CAL0", p.str());
  }
  {
    std::ostringstream p;
    detail::write_u32(p, std::uint32_t(scene.seg.width));
    detail::write_u32(p, std::uint32_t(scene.seg.height));
    detail::write_u32(p, std::uint32_t(scene.seg.classes));
    for (double d : scene.seg.scores) detail::write_f32(p, float(d));
    unsigned char flag = scene.seg.features.empty() ? 0 : 1;
    p.write(reinterpret_cast<const char*>(&flag), 1);
    if (flag) {
      detail::write_u32(p, std::uint32_t(scene.seg.feature_dim));
      for (double d : scene.seg.features) detail::write_f32(p, float(d));
    }
    detail::write_section(os, "SEG0", p.str());
  }
  {
    std::ostringstream p;
    detail::write_u64(p, scene.seed);
    detail::write_section(os, "SEED", p.str());
  }
  if (!os) throw DataError("write failed: " + path);
}

inline SyntheticScene read_scene(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RFSC", 4) != 0)
    throw MalformedFile("bad RFSC magic: " + path);
  std::uint16_t version = 0;
  if (!detail::read_u16(is, version) || version != 1)
    throw MalformedFile("unsupported RFSC version: " + path);

  SyntheticScene scene;
  char tag[4];
  while (is.read(tag, 4)) {
    std::uint64_t size = 0;
    if (!detail::read_u64(is, size))
      throw MalformedFile("RFSC section header truncated: " + path);
    std::string payload(size, '\0');
    if (!is.read(payload.data(), std::streamsize(size)))
      throw MalformedFile("RFSC section truncated: " + path);
    std::istringstream p(payload);
    if (std::memcmp(tag, "CLD0", 4) == 0) {
      std::uint32_t n = 0;
      detail::read_u32(p, n);
      for (std::uint32_t i = 0; i < n; ++i) {
        double x, y, z, r;
        if (!detail::read_f64(p, x) || !detail::read_f64(p, y) ||
            !detail::read_f64(p, z) || !detail::read_f64(p, r))
          throw MalformedFile("RFSC cloud truncated: " + path);
        scene.cloud.push(x, y, z, r);
      }
    } else if (std::memcmp(tag, "BOX0", 4) == 0) {
      std::uint32_t n = 0;
      detail::read_u32(p, n);
      for (std::uint32_t i = 0; i < n; ++i) {
        double vals[7];
        for (double& d : vals)
          if (!detail::read_f64(p, d))
            throw MalformedFile("RFSC boxes truncated: " + path);
        std::uint32_t cls = 0;
        detail::read_u32(p, cls);
        scene.boxes.push_back({OrientedBox3D(vals[0], vals[1], vals[2], vals[3],
                                             vals[4], vals[5], vals[6]),
                               cls});
      }
    } else if (std::memcmp(tag, "PID0", 4) == 0) {
      std::uint32_t n = 0;
      detail::read_u32(p, n);
      scene.point_object.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t v = 0;
        detail::read_u32(p, v);
        scene.point_object[i] = int(std::int32_t(v));
      }
    } else if (std::memcmp(tag, "CAL0", 4) == 0) {
      for (double& d : scene.calib.T) detail::read_f64(p, d);
      for (double& d : scene.calib.M) detail::read_f64(p, d);
      std::uint32_t w = 0, h = 0;
      detail::read_u32(p, w);
      detail::read_u32(p, h);
      scene.calib.width = int(w);
      scene.calib.height = int(h);
    } else if (std::memcmp(tag, "SEG0", 4) == 0) {
      std::uint32_t w = 0, h = 0, c = 0;
      detail::read_u32(p, w);
      detail::read_u32(p, h);
      detail::read_u32(p, c);
      scene.seg.width = int(w);
      scene.seg.height = int(h);
      scene.seg.classes = c;
      scene.seg.scores.resize(std::size_t(w) * h * c);
      for (double& d : scene.seg.scores) {
        float f;
        if (!detail::read_f32(p, f))
          throw MalformedFile("RFSC scores truncated: " + path);
        d = f;
      }
      char flag = 0;
      p.read(&flag, 1);
      if (flag) {
        std::uint32_t fd = 0;
        detail::read_u32(p, fd);
        scene.seg.feature_dim = fd;
        scene.seg.features.resize(std::size_t(w) * h * fd);
        for (double& d : scene.seg.features) {
          float f;
          if (!detail::read_f32(p, f))
            throw MalformedFile("RFSC features truncated: " + path);
          d = f;
        }
      }
    } else if (std::memcmp(tag, "SEED", 4) == 0) {
      detail::read_u64(p, scene.seed);
    }
    // unknown tags: payload already consumed
  }
  if (scene.cloud.size() == 0) throw MalformedFile("RFSC has no cloud: " + path);
  return scene;
}

}  // namespace roifusion
