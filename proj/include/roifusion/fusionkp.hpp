#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "roifusion/backbone.hpp"
#include "roifusion/common.hpp"
#include "roifusion/geom.hpp"
#include "roifusion/micronet.hpp"
#include "roifusion/sampling.hpp"

namespace roifusion {

// Per-pixel segmentation scores (class 0 is background) and an optional
// feature map. Storage is row-major over (u, v, channel), matching the RFSG
// file layout.
struct SegScores {
  int width = 0, height = 0;
  std::size_t classes = 0;
  std::vector<double> scores;    // W*H*C
  std::vector<double> features;  // W*H*F, empty when absent
  std::size_t feature_dim = 0;

  double score_at(int u, int v, std::size_t c) const {
    return scores[(std::size_t(u) * height + v) * classes + c];
  }
  double& score_at(int u, int v, std::size_t c) {
    return scores[(std::size_t(u) * height + v) * classes + c];
  }
  double feature_at(int u, int v, std::size_t f) const {
    return features[(std::size_t(u) * height + v) * feature_dim + f];
  }
  double& feature_at(int u, int v, std::size_t f) {
    return features[(std::size_t(u) * height + v) * feature_dim + f];
  }

  // Highest non-background class score at a pixel.
  double max_foreground(int u, int v) const {
    double best = 0.0;
    for (std::size_t c = 1; c < classes; ++c)
      best = std::max(best, score_at(u, v, c));
    return best;
  }
  std::size_t argmax_class(int u, int v) const {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (score_at(u, v, c) > score_at(u, v, best)) best = c;
    return best;
  }

  bool valid(double tol = 1e-6) const {
    if (scores.size() != std::size_t(width) * height * classes) return false;
    for (int u = 0; u < width; ++u)
      for (int v = 0; v < height; ++v) {
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) s += score_at(u, v, c);
        if (std::abs(s - 1.0) > tol) return false;
      }
    return true;
  }
};

// Source of segmentation scores per frame; implementations are the synthetic
// oracle and a loader of precomputed RFSG files.
struct SegmentationProvider {
  virtual ~SegmentationProvider() = default;
  virtual const SegScores& get(std::size_t frame) = 0;
};

// Keypoints selected from the cloud. source_rows maps each keypoint to a row
// of the feature matrix it was drawn from (SA stage or FP output).
struct KeypointSet {
  std::vector<double> coords;  // 3*M
  Tensor2 features;            // M x F
  std::vector<std::size_t> source_rows;

  std::size_t size() const { return coords.size() / 3; }
};

// Point-guided keypoints: fused-FPS selection over the coarsest SA stage.
inline KeypointSet point_guided_keypoints(const FeatureSet& sa_last,
                                          std::size_t count) {
  SampleSelection sel =
      fps_fused(sa_last.coords, sa_last.features.v, sa_last.features.cols, count);
  KeypointSet kp;
  kp.coords.resize(3 * sel.indices.size());
  kp.features = Tensor2(sel.indices.size(), sa_last.features.cols);
  kp.source_rows = sel.indices;
  for (std::size_t j = 0; j < sel.indices.size(); ++j) {
    for (int k = 0; k < 3; ++k)
      kp.coords[3 * j + k] = sa_last.coords[3 * sel.indices[j] + k];
    const double* src = sa_last.features.row(sel.indices[j]);
    double* dst = kp.features.row(j);
    for (std::size_t c = 0; c < sa_last.features.cols; ++c) dst[c] = src[c];
  }
  return kp;
}

// Pixel-guided keypoints: project the cloud into the image, keep points whose
// pixel has foreground score >= tau_fg, gather their point-cloud segmentation
// features, F-FPS down to `count`. Points projecting outside the image are
// excluded by the mask.
inline KeypointSet pixel_guided_keypoints(const PointCloud& cloud,
                                          const CalibContext& calib,
                                          const SegScores& seg,
                                          const Tensor2& point_seg_features,
                                          std::size_t count, double tau_fg) {
  if (seg.width != calib.width || seg.height != calib.height)
    throw ShapeMismatch("pixel_guided_keypoints: segmentation/image size mismatch");
  if (point_seg_features.rows != cloud.size())
    throw ShapeMismatch("pixel_guided_keypoints: feature rows != cloud size");

  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    ProjectedPoint p = project_point(cloud.x(i), cloud.y(i), cloud.z(i), calib);
    if (!p.in_image) continue;
    int u = int(p.u), v = int(p.v);
    if (seg.max_foreground(u, v) >= tau_fg) mask.push_back(i);
  }
  if (mask.empty())
    throw NoForegroundPoints("pixel_guided_keypoints: mask removed every point");

  const std::size_t f = point_seg_features.cols;
  std::vector<double> cand_coords(3 * mask.size());
  std::vector<double> cand_feats(mask.size() * f);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    cand_coords[3 * j] = cloud.x(mask[j]);
    cand_coords[3 * j + 1] = cloud.y(mask[j]);
    cand_coords[3 * j + 2] = cloud.z(mask[j]);
    const double* src = point_seg_features.row(mask[j]);
    for (std::size_t c = 0; c < f; ++c) cand_feats[j * f + c] = src[c];
  }

  std::size_t take = std::min(count, mask.size());
  SampleSelection sel = fps_feature(cand_feats, f, take);

  KeypointSet kp;
  kp.coords.resize(3 * take);
  kp.features = Tensor2(take, f);
  kp.source_rows.resize(take);
  for (std::size_t j = 0; j < take; ++j) {
    std::size_t cand = sel.indices[j];
    for (int k = 0; k < 3; ++k) kp.coords[3 * j + k] = cand_coords[3 * cand + k];
    for (std::size_t c = 0; c < f; ++c)
      kp.features(j, c) = cand_feats[cand * f + c];
    kp.source_rows[j] = mask[cand];
  }
  return kp;
}

// Row-wise concatenation, point-guided first. Duplicate coordinates are kept.
inline KeypointSet fuse_keypoints(const KeypointSet& pc_kp, const KeypointSet& img_kp) {
  if (img_kp.size() == 0) return pc_kp;
  if (pc_kp.size() == 0) return img_kp;
  if (pc_kp.features.cols != img_kp.features.cols)
    throw ShapeMismatch("fuse_keypoints: feature width mismatch");
  KeypointSet out;
  out.coords = pc_kp.coords;
  out.coords.insert(out.coords.end(), img_kp.coords.begin(), img_kp.coords.end());
  out.features = Tensor2(pc_kp.size() + img_kp.size(), pc_kp.features.cols);
  std::copy(pc_kp.features.v.begin(), pc_kp.features.v.end(),
            out.features.v.begin());
  std::copy(img_kp.features.v.begin(), img_kp.features.v.end(),
            out.features.v.begin() + pc_kp.features.v.size());
  out.source_rows = pc_kp.source_rows;
  out.source_rows.insert(out.source_rows.end(), img_kp.source_rows.begin(),
                         img_kp.source_rows.end());
  return out;
}

// ---- RFSG score file: magic "RFSG", u32 W, u32 H, u32 C, row-major f32
// scores, u8 feature flag, then (u32 F, row-major f32 features) if set. ----

namespace detail {

inline void write_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4] = {static_cast<unsigned char>(u),
                        static_cast<unsigned char>(u >> 8),
                        static_cast<unsigned char>(u >> 16),
                        static_cast<unsigned char>(u >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_f32(std::istream& is, float& f) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                    (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  std::memcpy(&f, &u, 4);
  return true;
}

}  // namespace detail

inline void write_seg_scores(const std::string& path, const SegScores& seg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for write: " + path);
  os.write("RFSG", 4);
  detail::write_u32(os, std::uint32_t(seg.width));
  detail::write_u32(os, std::uint32_t(seg.height));
  detail::write_u32(os, std::uint32_t(seg.classes));
  for (double d : seg.scores) detail::write_f32(os, float(d));
  unsigned char flag = seg.features.empty() ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&flag), 1);
  if (flag) {
    detail::write_u32(os, std::uint32_t(seg.feature_dim));
    for (double d : seg.features) detail::write_f32(os, float(d));
  }
  if (!os) throw DataError("write failed: " + path);
}

inline SegScores read_seg_scores(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RFSG", 4) != 0)
    throw MalformedFile("bad RFSG magic: " + path);
  std::uint32_t w = 0, h = 0, c = 0;
  if (!detail::read_u32(is, w) || !detail::read_u32(is, h) || !detail::read_u32(is, c))
    throw MalformedFile("RFSG header truncated: " + path);
  SegScores seg;
  seg.width = int(w);
  seg.height = int(h);
  seg.classes = c;
  seg.scores.resize(std::size_t(w) * h * c);
  for (double& d : seg.scores) {
    float f;
    if (!detail::read_f32(is, f)) throw MalformedFile("RFSG scores truncated: " + path);
    d = f;
  }
  unsigned char flag = 0;
  if (!is.read(reinterpret_cast<char*>(&flag), 1))
    throw MalformedFile("RFSG feature flag missing: " + path);
  if (flag) {
    std::uint32_t fd = 0;
    if (!detail::read_u32(is, fd)) throw MalformedFile("RFSG feature dim missing: " + path);
    seg.feature_dim = fd;
    seg.features.resize(std::size_t(w) * h * fd);
    for (double& d : seg.features) {
      float f;
      if (!detail::read_f32(is, f))
        throw MalformedFile("RFSG features truncated: " + path);
      d = f;
    }
  }
  return seg;
}

// Loads precomputed per-frame RFSG files from a directory ("000000.rfsg", ...).
class FileSegProvider : public SegmentationProvider {
 public:
  explicit FileSegProvider(std::string dir) : dir_(std::move(dir)) {}

  const SegScores& get(std::size_t frame) override {
    auto it = cache_.find(frame);
    if (it != cache_.end()) return it->second;
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.rfsg", frame);
    return cache_.emplace(frame, read_seg_scores(dir_ + "/" + name)).first->second;
  }

 private:
  std::string dir_;
  std::map<std::size_t, SegScores> cache_;
};

}  // namespace roifusion
