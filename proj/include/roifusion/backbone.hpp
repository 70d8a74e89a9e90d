#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/micronet.hpp"
#include "roifusion/sampling.hpp"

namespace roifusion {

// A set of 3D points paired with per-point feature vectors.
struct FeatureSet {
  std::vector<double> coords;  // 3*K flat
  Tensor2 features;            // K x F

  std::size_t size() const { return coords.size() / 3; }
};

// For each center, indices of cloud points within radius R, nearest first,
// capped at max_neighbors. A center with no neighbor in range falls back to
// the single nearest cloud point so groups are never empty.
inline std::vector<std::vector<std::size_t>> ball_query(
    const std::vector<double>& centers, const std::vector<double>& cloud,
    double radius, std::size_t max_neighbors) {
  const std::size_t m = centers.size() / 3;
  const std::size_t n = cloud.size() / 3;
  const double r2 = radius * radius;
  std::vector<std::vector<std::size_t>> groups(m);
  std::vector<std::pair<double, std::size_t>> hits;
  for (std::size_t c = 0; c < m; ++c) {
    const double cx = centers[3 * c], cy = centers[3 * c + 1], cz = centers[3 * c + 2];
    hits.clear();
    double nearest_d2 = std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double dx = cloud[3 * i] - cx;
      double dy = cloud[3 * i + 1] - cy;
      double dz = cloud[3 * i + 2] - cz;
      double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 <= r2) hits.emplace_back(d2, i);
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = i;
      }
    }
    if (hits.empty()) {
      groups[c].push_back(nearest);
      continue;
    }
    std::sort(hits.begin(), hits.end());
    std::size_t keep = std::min(max_neighbors, hits.size());
    groups[c].reserve(keep);
    for (std::size_t j = 0; j < keep; ++j) groups[c].push_back(hits[j].second);
  }
  return groups;
}

struct SAConfig {
  std::size_t out_points = 0;
  double radius = 1.0;
  std::size_t max_neighbors = 32;
  std::vector<std::size_t> mlp_channels;
  FpsStrategy sampler = FpsStrategy::DFps;
};

struct SACache {
  std::vector<std::size_t> selection;           // sampled point indices
  std::vector<std::vector<std::size_t>> groups; // cloud indices per center
  std::vector<std::size_t> stacked_src;         // source row per stacked row
  std::vector<DenseCache> mlp;
  MaxPoolCache pool;
  std::size_t in_rows = 0, in_cols = 0;
};

// Set Abstraction: FPS-downsample, ball-query group, shared MLP over
// (relative coordinate (+) feature) rows, channel max-pool per group.
class SALayer {
 public:
  SALayer() = default;
  SALayer(const SAConfig& cfg, std::size_t in_feature_dim, Rng& rng)
      : cfg_(cfg), mlp_(3 + in_feature_dim, cfg.mlp_channels, rng) {}

  const SAConfig& config() const { return cfg_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }
  std::size_t out_dim() const { return mlp_.fan_out(); }

  FeatureSet forward(const FeatureSet& in, SACache* cache = nullptr) const {
    const std::size_t n = in.size();
    const std::size_t f = in.features.cols;
    std::size_t out_points = std::min(cfg_.out_points, n);

    SampleSelection sel;
    switch (cfg_.sampler) {
      case FpsStrategy::DFps:
        sel = fps_euclidean(in.coords, out_points);
        break;
      case FpsStrategy::FFps:
        sel = fps_feature(in.features.v, f, out_points);
        break;
      case FpsStrategy::Fused:
        sel = fps_fused(in.coords, in.features.v, f, out_points);
        break;
    }

    FeatureSet out;
    out.coords.resize(3 * sel.indices.size());
    for (std::size_t j = 0; j < sel.indices.size(); ++j)
      for (int k = 0; k < 3; ++k)
        out.coords[3 * j + k] = in.coords[3 * sel.indices[j] + k];

    auto groups = ball_query(out.coords, in.coords, cfg_.radius, cfg_.max_neighbors);

    // Stack all groups into one matrix of (rel_coord (+) feature) rows.
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    Tensor2 stacked(total, 3 + f);
    std::vector<std::size_t> stacked_src(total);
    std::vector<std::vector<std::size_t>> pool_groups(groups.size());
    std::size_t row = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      pool_groups[g].reserve(groups[g].size());
      for (std::size_t idx : groups[g]) {
        double* r = stacked.row(row);
        r[0] = in.coords[3 * idx] - out.coords[3 * g];
        r[1] = in.coords[3 * idx + 1] - out.coords[3 * g + 1];
        r[2] = in.coords[3 * idx + 2] - out.coords[3 * g + 2];
        const double* fr = in.features.row(idx);
        for (std::size_t k = 0; k < f; ++k) r[3 + k] = fr[k];
        stacked_src[row] = idx;
        pool_groups[g].push_back(row);
        ++row;
      }
    }

    Tensor2 transformed = mlp_.forward(stacked, cache ? &cache->mlp : nullptr);
    out.features = set_maxpool(transformed, pool_groups, cache ? &cache->pool : nullptr);

    if (cache) {
      cache->selection = std::move(sel.indices);
      cache->groups = std::move(groups);
      cache->stacked_src = std::move(stacked_src);
      cache->in_rows = n;
      cache->in_cols = f;
    }
    return out;
  }

  // Gradient w.r.t. the input features (coordinates are data, not params).
  Tensor2 backward(const SACache& cache, const Tensor2& grad_out,
                   std::vector<DenseGrads>& grads) const {
    Tensor2 g_transformed = set_maxpool_backward(cache.pool, grad_out);
    Tensor2 g_stacked = mlp_.backward(cache.mlp, g_transformed, grads);
    Tensor2 g_in(cache.in_rows, cache.in_cols);
    for (std::size_t row = 0; row < g_stacked.rows; ++row) {
      const double* gr = g_stacked.row(row);
      double* dst = g_in.row(cache.stacked_src[row]);
      for (std::size_t k = 0; k < cache.in_cols; ++k) dst[k] += gr[3 + k];
    }
    return g_in;
  }

 private:
  SAConfig cfg_;
  Mlp mlp_;
};

struct InterpCache {
  std::vector<std::size_t> idx;  // q*k flat
  std::vector<double> w;         // q*k flat, normalized
  std::size_t k = 0;
  std::size_t src_rows = 0;
};

// Inverse-squared-distance weighted average of the k nearest source features
// per query. A query coinciding with a source point (d < 1e-8) takes that
// point's feature exactly.
inline Tensor2 fp_interpolate(const std::vector<double>& query_coords,
                              const FeatureSet& source, std::size_t k = 3,
                              InterpCache* cache = nullptr) {
  const std::size_t q = query_coords.size() / 3;
  const std::size_t n = source.size();
  if (n == 0) throw ShapeMismatch("fp_interpolate: empty source");
  k = std::min(k, n);
  const std::size_t f = source.features.cols;
  Tensor2 out(q, f);
  if (cache) {
    cache->idx.assign(q * k, 0);
    cache->w.assign(q * k, 0.0);
    cache->k = k;
    cache->src_rows = n;
  }
  std::vector<std::pair<double, std::size_t>> best(k);
  for (std::size_t i = 0; i < q; ++i) {
    const double qx = query_coords[3 * i], qy = query_coords[3 * i + 1],
                 qz = query_coords[3 * i + 2];
    std::size_t filled = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double dx = source.coords[3 * j] - qx;
      double dy = source.coords[3 * j + 1] - qy;
      double dz = source.coords[3 * j + 2] - qz;
      double d2 = dx * dx + dy * dy + dz * dz;
      if (filled < k) {
        best[filled++] = {d2, j};
        if (filled == k) std::sort(best.begin(), best.end());
      } else if (d2 < best[k - 1].first) {
        best[k - 1] = {d2, j};
        for (std::size_t b = k - 1; b > 0 && best[b] < best[b - 1]; --b)
          std::swap(best[b], best[b - 1]);
      }
    }
    std::sort(best.begin(), best.begin() + filled);

    double* o = out.row(i);
    // exact-match passthrough: d < 1e-8 meters
    if (best[0].first < 1e-16) {
      const double* src = source.features.row(best[0].second);
      for (std::size_t c = 0; c < f; ++c) o[c] = src[c];
      if (cache) {
        cache->idx[i * k] = best[0].second;
        cache->w[i * k] = 1.0;
      }
      continue;
    }
    double wsum = 0.0;
    for (std::size_t b = 0; b < filled; ++b) wsum += 1.0 / best[b].first;
    for (std::size_t b = 0; b < filled; ++b) {
      double wn = (1.0 / best[b].first) / wsum;
      const double* src = source.features.row(best[b].second);
      for (std::size_t c = 0; c < f; ++c) o[c] += wn * src[c];
      if (cache) {
        cache->idx[i * k + b] = best[b].second;
        cache->w[i * k + b] = wn;
      }
    }
  }
  return out;
}

inline Tensor2 fp_interpolate_backward(const InterpCache& cache,
                                       const Tensor2& grad_out) {
  Tensor2 gs(cache.src_rows, grad_out.cols);
  for (std::size_t i = 0; i < grad_out.rows; ++i) {
    const double* g = grad_out.row(i);
    for (std::size_t b = 0; b < cache.k; ++b) {
      double w = cache.w[i * cache.k + b];
      if (w == 0.0) continue;
      double* dst = gs.row(cache.idx[i * cache.k + b]);
      for (std::size_t c = 0; c < grad_out.cols; ++c) dst[c] += w * g[c];
    }
  }
  return gs;
}

struct FPCache {
  InterpCache interp;
  std::vector<DenseCache> mlp;
  std::size_t skip_cols = 0;
};

// Feature Propagation: interpolate coarse features onto the query points,
// concatenate the query's skip features, shared MLP.
class FPLayer {
 public:
  FPLayer() = default;
  FPLayer(std::size_t source_dim, std::size_t skip_dim,
          const std::vector<std::size_t>& mlp_channels, Rng& rng)
      : mlp_(source_dim + skip_dim, mlp_channels, rng) {}

  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }
  std::size_t out_dim() const { return mlp_.fan_out(); }

  FeatureSet forward(const FeatureSet& query, const FeatureSet& source,
                     std::size_t k = 3, FPCache* cache = nullptr) const {
    Tensor2 interp =
        fp_interpolate(query.coords, source, k, cache ? &cache->interp : nullptr);
    const std::size_t f_skip = query.features.cols;
    Tensor2 cat(query.size(), interp.cols + f_skip);
    for (std::size_t r = 0; r < cat.rows; ++r) {
      double* row = cat.row(r);
      const double* ir = interp.row(r);
      for (std::size_t c = 0; c < interp.cols; ++c) row[c] = ir[c];
      const double* sr = query.features.row(r);
      for (std::size_t c = 0; c < f_skip; ++c) row[interp.cols + c] = sr[c];
    }
    if (cache) cache->skip_cols = f_skip;
    FeatureSet out;
    out.coords = query.coords;
    out.features = mlp_.forward(cat, cache ? &cache->mlp : nullptr);
    return out;
  }

  // Returns (grad wrt source features, grad wrt query skip features).
  std::pair<Tensor2, Tensor2> backward(const FPCache& cache, const Tensor2& grad_out,
                                       std::vector<DenseGrads>& grads) const {
    Tensor2 g_cat = mlp_.backward(cache.mlp, grad_out, grads);
    const std::size_t f_interp = g_cat.cols - cache.skip_cols;
    Tensor2 g_interp(g_cat.rows, f_interp);
    Tensor2 g_skip(g_cat.rows, cache.skip_cols);
    for (std::size_t r = 0; r < g_cat.rows; ++r) {
      const double* row = g_cat.row(r);
      for (std::size_t c = 0; c < f_interp; ++c) g_interp(r, c) = row[c];
      for (std::size_t c = 0; c < cache.skip_cols; ++c)
        g_skip(r, c) = row[f_interp + c];
    }
    return {fp_interpolate_backward(cache.interp, g_interp), std::move(g_skip)};
  }

 private:
  Mlp mlp_;
};

struct BackboneConfig {
  std::vector<SAConfig> sa_stages;
  std::vector<std::vector<std::size_t>> fp_channels;  // one per level 0..n-1
  std::size_t fp_k = 3;
};

struct BackboneCache {
  std::vector<FeatureSet> levels;  // levels[0] = input, levels[i] = SA_i out
  std::vector<SACache> sa;
  std::vector<FPCache> fp;  // fp[lvl] refines level `lvl`
};

struct BackboneGrads {
  std::vector<std::vector<DenseGrads>> sa;
  std::vector<std::vector<DenseGrads>> fp;
};

// SA encoder plus mirrored FP decoder. forward() fills the cache with every
// intermediate level; point_features are the level-0 (full resolution)
// semantic features.
class PointBackbone {
 public:
  PointBackbone() = default;
  PointBackbone(const BackboneConfig& cfg, std::size_t in_feature_dim, Rng& rng)
      : cfg_(cfg) {
    if (cfg.fp_channels.size() != cfg.sa_stages.size())
      throw ConfigError("backbone: need one FP stage per SA stage");
    std::size_t dim = in_feature_dim;
    std::vector<std::size_t> level_dims{dim};
    for (const auto& sc : cfg.sa_stages) {
      sa_.emplace_back(sc, dim, rng);
      dim = sa_.back().out_dim();
      level_dims.push_back(dim);
    }
    // fp_[lvl] maps source level lvl+1 down to level lvl
    const std::size_t n = sa_.size();
    fp_.resize(n);
    std::size_t src_dim = level_dims[n];
    for (std::size_t lvl = n; lvl-- > 0;) {
      fp_[lvl] = FPLayer(src_dim, level_dims[lvl], cfg.fp_channels[lvl], rng);
      src_dim = fp_[lvl].out_dim();
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  std::vector<SALayer>& sa_layers() { return sa_; }
  std::vector<FPLayer>& fp_layers() { return fp_; }
  const std::vector<SALayer>& sa_layers() const { return sa_; }
  const std::vector<FPLayer>& fp_layers() const { return fp_; }
  std::size_t point_feature_dim() const { return fp_.front().out_dim(); }
  std::size_t keypoint_feature_dim() const { return sa_.back().out_dim(); }

  // Returns per-point features at input resolution; cache->levels holds the
  // SA pyramid (levels.back() is the coarsest stage = keypoint candidates).
  FeatureSet forward(const FeatureSet& input, BackboneCache& cache) const {
    cache.levels.clear();
    cache.sa.resize(sa_.size());
    cache.fp.resize(fp_.size());
    cache.levels.push_back(input);
    for (std::size_t i = 0; i < sa_.size(); ++i)
      cache.levels.push_back(sa_[i].forward(cache.levels.back(), &cache.sa[i]));

    FeatureSet cur = cache.levels.back();
    for (std::size_t lvl = sa_.size(); lvl-- > 0;)
      cur = fp_[lvl].forward(cache.levels[lvl], cur, cfg_.fp_k, &cache.fp[lvl]);
    return cur;
  }

  BackboneGrads make_grads() const {
    BackboneGrads g;
    for (const auto& l : sa_) g.sa.push_back(l.mlp().make_grads());
    for (const auto& l : fp_) g.fp.push_back(l.mlp().make_grads());
    return g;
  }

  // grad_point_features: gradient on the FP output (input resolution).
  // grad_sa_last: optional gradient on the coarsest SA features (empty to skip).
  void backward(const BackboneCache& cache, const Tensor2& grad_point_features,
                const Tensor2& grad_sa_last, BackboneGrads& grads) const {
    const std::size_t n = sa_.size();
    // accumulated gradient on each SA level's output features
    std::vector<Tensor2> g_level(n + 1);
    Tensor2 g_cur = grad_point_features;
    for (std::size_t lvl = 0; lvl < n; ++lvl) {
      auto [g_source, g_skip] = fp_[lvl].backward(cache.fp[lvl], g_cur, grads.fp[lvl]);
      if (lvl > 0) accumulate(g_level[lvl], g_skip);
      g_cur = std::move(g_source);
    }
    accumulate(g_level[n], g_cur);
    if (grad_sa_last.rows > 0) accumulate(g_level[n], grad_sa_last);

    for (std::size_t i = n; i-- > 0;) {
      if (g_level[i + 1].rows == 0) continue;
      Tensor2 g_in = sa_[i].backward(cache.sa[i], g_level[i + 1], grads.sa[i]);
      if (i > 0) accumulate(g_level[i], g_in);
    }
  }

 private:
  static void accumulate(Tensor2& dst, const Tensor2& src) {
    if (dst.rows == 0) {
      dst = src;
      return;
    }
    if (dst.rows != src.rows || dst.cols != src.cols)
      throw ShapeMismatch("backbone backward: gradient shape mismatch");
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
  }

  BackboneConfig cfg_;
  std::vector<SALayer> sa_;
  std::vector<FPLayer> fp_;
};

}  // namespace roifusion
