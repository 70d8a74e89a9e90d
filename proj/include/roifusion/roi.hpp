#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/fusionkp.hpp"
#include "roifusion/geom.hpp"
#include "roifusion/micronet.hpp"

namespace roifusion {

struct VoteOutput {
  std::vector<double> centers;  // 3*M, keypoint coords + predicted offsets
  Tensor2 vote_features;        // M x hidden width
};

struct VoteCache {
  std::vector<DenseCache> mlp;
};

// Single hidden layer vote network: keypoint feature -> 3D offset to the
// object centroid.
class VoteNet {
 public:
  VoteNet() = default;
  VoteNet(std::size_t feature_dim, std::size_t hidden, Rng& rng)
      : mlp_(feature_dim, {hidden, 3}, rng, Activation::None) {}

  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  VoteOutput forward(const KeypointSet& kp, VoteCache* cache = nullptr) const {
    VoteCache local;
    VoteCache& c = cache ? *cache : local;
    Tensor2 offsets = mlp_.forward(kp.features, &c.mlp);
    VoteOutput out;
    out.centers.resize(kp.coords.size());
    for (std::size_t i = 0; i < kp.size(); ++i)
      for (int k = 0; k < 3; ++k)
        out.centers[3 * i + k] = kp.coords[3 * i + k] + offsets(i, k);
    out.vote_features = c.mlp.front().output;
    return out;
  }

  // grad_centers is d loss / d predicted centers (== d loss / d offsets).
  Tensor2 backward(const VoteCache& cache, const Tensor2& grad_centers,
                   std::vector<DenseGrads>& grads) const {
    return mlp_.backward(cache.mlp, grad_centers, grads);
  }

 private:
  Mlp mlp_;
};

// Axis-aligned RoI around a center: extent = class dims + eta on every side.
inline RoI3D make_roi3d(const std::array<double, 3>& center, double h, double w,
                        double l, double eta) {
  RoI3D roi;
  roi.center = center;
  roi.extent_h = h + eta;
  roi.extent_w = w + eta;
  roi.extent_l = l + eta;
  return roi;
}

struct Pool3DCache {
  std::vector<std::size_t> rows;  // gathered cloud rows, K_pool entries
  std::vector<DenseCache> mlp;
  MaxPoolCache pool;
  bool empty = false;
};

// Gather cloud points inside the RoI, shift to RoI-relative coordinates,
// deterministically resample to K_pool rows (strided subset when over, cyclic
// repetition when under), shared MLP, channel max-pool. An empty RoI yields
// the zero vector with the empty flag set.
inline std::vector<double> pool_roi3d(const RoI3D& roi,
                                      const std::vector<double>& cloud_coords,
                                      const Tensor2& cloud_features,
                                      std::size_t k_pool, const Mlp& pool_mlp,
                                      Pool3DCache* cache = nullptr) {
  const std::size_t n = cloud_coords.size() / 3;
  const std::size_t f = cloud_features.cols;
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < n; ++i)
    if (roi.contains(cloud_coords[3 * i], cloud_coords[3 * i + 1],
                     cloud_coords[3 * i + 2]))
      inside.push_back(i);

  if (inside.empty()) {
    if (cache) cache->empty = true;
    return std::vector<double>(pool_mlp.fan_out(), 0.0);
  }

  std::vector<std::size_t> rows(k_pool);
  if (inside.size() >= k_pool)
    for (std::size_t i = 0; i < k_pool; ++i)
      rows[i] = inside[i * inside.size() / k_pool];
  else
    for (std::size_t i = 0; i < k_pool; ++i) rows[i] = inside[i % inside.size()];

  Tensor2 stacked(k_pool, 3 + f);
  for (std::size_t i = 0; i < k_pool; ++i) {
    double* r = stacked.row(i);
    for (int k = 0; k < 3; ++k)
      r[k] = cloud_coords[3 * rows[i] + k] - roi.center[k];
    const double* fr = cloud_features.row(rows[i]);
    for (std::size_t c = 0; c < f; ++c) r[3 + c] = fr[c];
  }

  Pool3DCache local;
  Pool3DCache& c = cache ? *cache : local;
  c.empty = false;
  c.rows = std::move(rows);
  Tensor2 transformed = pool_mlp.forward(stacked, &c.mlp);
  std::vector<std::vector<std::size_t>> one_group(1);
  one_group[0].resize(k_pool);
  for (std::size_t i = 0; i < k_pool; ++i) one_group[0][i] = i;
  Tensor2 pooled = set_maxpool(transformed, one_group, &c.pool);
  return std::vector<double>(pooled.v.begin(), pooled.v.end());
}

// Accumulates parameter grads, scatters feature grads into
// grad_cloud_features, and (optionally) reports the gradient w.r.t. the RoI
// center flowing through the relative-coordinate shift.
inline void pool_roi3d_backward(const Pool3DCache& cache, const Mlp& pool_mlp,
                                const std::vector<double>& grad_vec,
                                std::vector<DenseGrads>& grads,
                                Tensor2& grad_cloud_features,
                                std::array<double, 3>* grad_center = nullptr) {
  if (cache.empty) return;
  Tensor2 g_pool(1, grad_vec.size());
  std::copy(grad_vec.begin(), grad_vec.end(), g_pool.v.begin());
  Tensor2 g_transformed = set_maxpool_backward(cache.pool, g_pool);
  Tensor2 g_stacked = pool_mlp.backward(cache.mlp, g_transformed, grads);
  const std::size_t f = grad_cloud_features.cols;
  for (std::size_t i = 0; i < cache.rows.size(); ++i) {
    const double* gr = g_stacked.row(i);
    double* dst = grad_cloud_features.row(cache.rows[i]);
    for (std::size_t c = 0; c < f; ++c) dst[c] += gr[3 + c];
    if (grad_center)
      for (int k = 0; k < 3; ++k) (*grad_center)[k] -= gr[k];
  }
}

// Read-only view of a per-pixel feature map, (u*H + v)*C + c layout.
struct ImageFeatureMap {
  int width = 0, height = 0;
  std::size_t channels = 0;
  const std::vector<double>* data = nullptr;

  double at(int u, int v, std::size_t c) const {
    return (*data)[(std::size_t(u) * height + v) * channels + c];
  }
};

// Feature map backing 2D pooling: the provider's feature block when present,
// otherwise the score channels.
inline ImageFeatureMap image_feature_map(const SegScores& seg) {
  ImageFeatureMap map;
  map.width = seg.width;
  map.height = seg.height;
  if (!seg.features.empty()) {
    map.channels = seg.feature_dim;
    map.data = &seg.features;
  } else {
    map.channels = seg.classes;
    map.data = &seg.scores;
  }
  return map;
}

// Bilinear sample at continuous pixel coordinates; pixel centers sit at
// (i + 0.5, j + 0.5), clamped at the borders.
inline void bilinear_sample(const ImageFeatureMap& map, double u, double v,
                            double* out) {
  double gx = std::clamp(u - 0.5, 0.0, double(map.width - 1));
  double gy = std::clamp(v - 0.5, 0.0, double(map.height - 1));
  int x0 = int(gx), y0 = int(gy);
  int x1 = std::min(x0 + 1, map.width - 1);
  int y1 = std::min(y0 + 1, map.height - 1);
  double fx = gx - x0, fy = gy - y0;
  for (std::size_t c = 0; c < map.channels; ++c) {
    out[c] = (1 - fx) * (1 - fy) * map.at(x0, y0, c) +
             fx * (1 - fy) * map.at(x1, y0, c) +
             (1 - fx) * fy * map.at(x0, y1, c) + fx * fy * map.at(x1, y1, c);
  }
}

struct Pool2DCache {
  DenseCache dense;
  bool degenerate = false;
};

// G x G bilinear grid over the RoI's interior cell centers, flattened
// (row-major over (j, i, channel)), then a dense layer. A RoI narrower than
// one pixel in either direction is degenerate: zero vector plus flag.
inline std::vector<double> pool_roi2d(const RoI2D& roi, const ImageFeatureMap& map,
                                      std::size_t grid, const DenseLayer& dense,
                                      Pool2DCache* cache = nullptr) {
  if (roi.width() < 1.0 || roi.height() < 1.0) {
    if (cache) cache->degenerate = true;
    return std::vector<double>(dense.fan_out(), 0.0);
  }
  Tensor2 flat(1, grid * grid * map.channels);
  std::vector<double> sample(map.channels);
  for (std::size_t j = 0; j < grid; ++j) {
    double v = roi.v_min + (j + 0.5) * roi.height() / grid;
    for (std::size_t i = 0; i < grid; ++i) {
      double u = roi.u_min + (i + 0.5) * roi.width() / grid;
      bilinear_sample(map, u, v, sample.data());
      for (std::size_t c = 0; c < map.channels; ++c)
        flat(0, (j * grid + i) * map.channels + c) = sample[c];
    }
  }
  Pool2DCache local;
  Pool2DCache& c = cache ? *cache : local;
  c.degenerate = false;
  Tensor2 out = dense.forward(flat, &c.dense);
  return std::vector<double>(out.v.begin(), out.v.end());
}

// The image feature map is provider data, not a trained input, so backward
// only accumulates the dense layer's parameter grads.
inline void pool_roi2d_backward(const Pool2DCache& cache, const DenseLayer& dense,
                                const std::vector<double>& grad_vec,
                                DenseGrads& grads) {
  if (cache.degenerate) return;
  Tensor2 g(1, grad_vec.size());
  std::copy(grad_vec.begin(), grad_vec.end(), g.v.begin());
  dense.backward(cache.dense, g, grads);
}

enum class FusionStrategy { Concat, Sum, Max };

inline const char* fusion_strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Concat: return "concat";
    case FusionStrategy::Sum: return "sum";
    case FusionStrategy::Max: return "max";
  }
  return "?";
}

struct FuseCache {
  FusionStrategy strategy = FusionStrategy::Concat;
  std::size_t pc_width = 0, img_width = 0;
  std::vector<unsigned char> max_from_img;  // elementwise argmax for Max
  std::vector<DenseCache> mlp;
};

// Combine pooled point-cloud and image features, then the fusion MLP.
// concat admits differing widths; sum and max require equal widths.
inline std::vector<double> fuse_roi(const std::vector<double>& pc_feat,
                                    const std::vector<double>& img_feat,
                                    FusionStrategy strategy, const Mlp& fuse_mlp,
                                    FuseCache* cache = nullptr) {
  std::vector<double> pre;
  FuseCache local;
  FuseCache& c = cache ? *cache : local;
  c.strategy = strategy;
  c.pc_width = pc_feat.size();
  c.img_width = img_feat.size();
  switch (strategy) {
    case FusionStrategy::Concat:
      pre = pc_feat;
      pre.insert(pre.end(), img_feat.begin(), img_feat.end());
      break;
    case FusionStrategy::Sum: {
      if (pc_feat.size() != img_feat.size())
        throw ShapeMismatch("fuse_roi: sum requires equal widths");
      pre.resize(pc_feat.size());
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = pc_feat[i] + img_feat[i];
      break;
    }
    case FusionStrategy::Max: {
      if (pc_feat.size() != img_feat.size())
        throw ShapeMismatch("fuse_roi: max requires equal widths");
      pre.resize(pc_feat.size());
      c.max_from_img.resize(pre.size());
      for (std::size_t i = 0; i < pre.size(); ++i) {
        c.max_from_img[i] = img_feat[i] > pc_feat[i];
        pre[i] = c.max_from_img[i] ? img_feat[i] : pc_feat[i];
      }
      break;
    }
  }
  Tensor2 x(1, pre.size());
  std::copy(pre.begin(), pre.end(), x.v.begin());
  Tensor2 out = fuse_mlp.forward(x, &c.mlp);
  return std::vector<double>(out.v.begin(), out.v.end());
}

inline void fuse_roi_backward(const FuseCache& cache, const Mlp& fuse_mlp,
                              const std::vector<double>& grad_vec,
                              std::vector<DenseGrads>& grads,
                              std::vector<double>& grad_pc,
                              std::vector<double>& grad_img) {
  Tensor2 g(1, grad_vec.size());
  std::copy(grad_vec.begin(), grad_vec.end(), g.v.begin());
  Tensor2 g_pre = fuse_mlp.backward(cache.mlp, g, grads);
  grad_pc.assign(cache.pc_width, 0.0);
  grad_img.assign(cache.img_width, 0.0);
  switch (cache.strategy) {
    case FusionStrategy::Concat:
      for (std::size_t i = 0; i < cache.pc_width; ++i) grad_pc[i] = g_pre.v[i];
      for (std::size_t i = 0; i < cache.img_width; ++i)
        grad_img[i] = g_pre.v[cache.pc_width + i];
      break;
    case FusionStrategy::Sum:
      for (std::size_t i = 0; i < cache.pc_width; ++i) {
        grad_pc[i] = g_pre.v[i];
        grad_img[i] = g_pre.v[i];
      }
      break;
    case FusionStrategy::Max:
      for (std::size_t i = 0; i < cache.pc_width; ++i) {
        if (cache.max_from_img[i])
          grad_img[i] = g_pre.v[i];
        else
          grad_pc[i] = g_pre.v[i];
      }
      break;
  }
}

}  // namespace roifusion
