#pragma once

#include <cstddef>
#include <limits>
#include <unordered_set>
#include <vector>

#include "roifusion/common.hpp"

namespace roifusion {

enum class FpsStrategy { DFps, FFps, Fused };

// Ordered farthest-point-sampling result. indices[0] is the seed.
struct SampleSelection {
  std::vector<std::size_t> indices;
  FpsStrategy strategy = FpsStrategy::DFps;
};

namespace detail {

// Greedy max-min selection over N rows of width `dim`, squared distances.
// Ties broken by lowest index. O(N*M).
inline std::vector<std::size_t> fps_core(const std::vector<double>& rows,
                                         std::size_t dim, std::size_t count,
                                         std::size_t seed_index) {
  if (dim == 0) throw ShapeMismatch("fps: zero-width rows");
  const std::size_t n = rows.size() / dim;
  if (count > n) throw CountExceedsInput("fps: requested count exceeds input size");
  if (seed_index >= n) throw CountExceedsInput("fps: seed index out of range");

  std::vector<std::size_t> picked;
  picked.reserve(count);
  if (count == 0) return picked;

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> selected(n, 0);
  std::size_t cur = seed_index;
  picked.push_back(cur);
  selected[cur] = 1;
  for (std::size_t step = 1; step < count; ++step) {
    const double* p = &rows[cur * dim];
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* q = &rows[i * dim];
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        double d = q[k] - p[k];
        d2 += d * d;
      }
      if (d2 < min_d2[i]) min_d2[i] = d2;
      // argmax over unselected points only, ties to the lowest index
      if (!selected[i] && min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    cur = best;
    picked.push_back(cur);
    selected[cur] = 1;
  }
  return picked;
}

}  // namespace detail

// D-FPS: greedy max-min over 3D coordinates (flat 3*N array).
inline SampleSelection fps_euclidean(const std::vector<double>& coords,
                                     std::size_t count, std::size_t seed_index = 0) {
  return {detail::fps_core(coords, 3, count, seed_index), FpsStrategy::DFps};
}

// F-FPS: greedy max-min in feature space. An optional geometric blend adds
// geom_blend * squared coordinate distance to the feature distance.
inline SampleSelection fps_feature(const std::vector<double>& features,
                                   std::size_t feature_dim, std::size_t count,
                                   std::size_t seed_index = 0,
                                   const std::vector<double>& coords = {},
                                   double geom_blend = 0.0) {
  if (geom_blend == 0.0 || coords.empty())
    return {detail::fps_core(features, feature_dim, count, seed_index),
            FpsStrategy::FFps};
  // Blend by embedding scaled coordinates as extra feature channels:
  // d_feat^2 + blend * d_geom^2.
  const std::size_t n = features.size() / feature_dim;
  const double scale = std::sqrt(geom_blend);
  std::vector<double> blended(n * (feature_dim + 3));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < feature_dim; ++k)
      blended[i * (feature_dim + 3) + k] = features[i * feature_dim + k];
    for (std::size_t k = 0; k < 3; ++k)
      blended[i * (feature_dim + 3) + feature_dim + k] = scale * coords[3 * i + k];
  }
  return {detail::fps_core(blended, feature_dim + 3, count, seed_index),
          FpsStrategy::FFps};
}

// Combined strategy: ceil(M/2) D-FPS picks followed by the first floor(M/2)
// F-FPS sequence indices not already selected. The F-FPS sequence is extended
// past floor(M/2) as needed to replace collisions, so the output has exactly
// M unique indices (or N when N < M).
inline SampleSelection fps_fused(const std::vector<double>& coords,
                                 const std::vector<double>& features,
                                 std::size_t feature_dim, std::size_t count,
                                 std::size_t seed_index = 0,
                                 double geom_blend = 0.0) {
  const std::size_t n = coords.size() / 3;
  if (count > n) count = n;
  const std::size_t m_geo = (count + 1) / 2;
  const std::size_t m_feat = count - m_geo;

  SampleSelection geo = fps_euclidean(coords, m_geo, seed_index);
  std::unordered_set<std::size_t> taken(geo.indices.begin(), geo.indices.end());

  // An F-FPS sequence of length `count` always contains at least m_feat
  // indices outside the D-FPS half, since at most m_geo of them can collide.
  std::vector<std::size_t> out = geo.indices;
  if (m_feat > 0) {
    SampleSelection feat =
        fps_feature(features, feature_dim, count, seed_index, coords, geom_blend);
    std::size_t have = 0;
    for (std::size_t idx : feat.indices) {
      if (taken.count(idx)) continue;
      out.push_back(idx);
      if (++have == m_feat) break;
    }
  }
  return {std::move(out), FpsStrategy::Fused};
}

}  // namespace roifusion
