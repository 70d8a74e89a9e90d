#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/eval.hpp"
#include "roifusion/fusionkp.hpp"
#include "roifusion/geom.hpp"

namespace roifusion {

// ASCII PLY with per-point color from the segmentation mask: foreground
// points get a class color, background points gray.
inline void write_ply(const std::string& path, const PointCloud& cloud,
                      const CalibContext& calib, const SegScores& seg,
                      double tau_fg = 0.5) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for write: " + path);
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "end_header\n";
  const int palette[6][3] = {{60, 180, 75},  {230, 25, 75}, {0, 130, 200},
                             {245, 130, 48}, {145, 30, 180}, {70, 240, 240}};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    int r = 128, g = 128, b = 128;
    ProjectedPoint p =
        project_point(cloud.x(i), cloud.y(i), cloud.z(i), calib);
    if (p.in_image && seg.max_foreground(int(p.u), int(p.v)) >= tau_fg) {
      std::size_t cls = seg.argmax_class(int(p.u), int(p.v));
      const int* c = palette[(cls - 1) % 6];
      r = c[0];
      g = c[1];
      b = c[2];
    }
    char line[128];
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %d %d %d\n", cloud.x(i),
                  cloud.y(i), cloud.z(i), r, g, b);
    os << line;
  }
  if (!os) throw DataError("write failed: " + path);
}

namespace detail {

inline std::string bev_polygon_points(const OrientedBox3D& box, double scale,
                                      double off_x, double off_y) {
  // BEV ring: corner index bits (l, w) -> ring order 0,1,3,2
  auto corners = box_corners(box);
  const int ring[4] = {0, 1, 3, 2};
  std::string pts;
  for (int k : ring) {
    // scene x forward -> svg up, scene y left -> svg left
    double sx = off_x - corners[std::size_t(k)][1] * scale;
    double sy = off_y - corners[std::size_t(k)][0] * scale;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx, sy);
    pts += buf;
  }
  return pts;
}

}  // namespace detail

// Bird's-eye-view SVG: cloud points gray, ground truth green, detections red.
inline void write_bev_svg(const std::string& path, const PointCloud& cloud,
                          const std::vector<LabeledBox>& gts,
                          const std::vector<Detection>& dets,
                          double extent = 45.0) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for write: " + path);
  const double scale = 10.0;
  const double size = 2.0 * extent * scale;
  const double off = extent * scale;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
     << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << " " << size
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double sx = off - cloud.y(i) * scale;
    double sy = off - cloud.x(i) * scale;
    if (sx < 0 || sx > size || sy < 0 || sy > size) continue;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"0.8\" fill=\"#bbbbbb\"/>\n",
                  sx, sy);
    os << buf;
  }
  for (const auto& gt : gts)
    os << "<polygon points=\"" << detail::bev_polygon_points(gt.box, scale, off, off)
       << "\" fill=\"none\" stroke=\"green\" stroke-width=\"2\"/>\n";
  for (const auto& det : dets)
    os << "<polygon points=\"" << detail::bev_polygon_points(det.box, scale, off, off)
       << "\" fill=\"none\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
  os << "</svg>\n";
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace roifusion
