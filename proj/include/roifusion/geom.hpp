#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "roifusion/common.hpp"

namespace roifusion {

// LiDAR frame: x forward, y left, z up.
// Rectified camera frame: x right, y down, z forward (KITTI convention).

// Point cloud with per-point reflectance, flat row-major storage.
struct PointCloud {
  std::vector<double> xyz;          // 3*N, (x,y,z) per point
  std::vector<double> reflectance;  // N, in [0,1]

  std::size_t size() const { return reflectance.size(); }
  double x(std::size_t i) const { return xyz[3 * i]; }
  double y(std::size_t i) const { return xyz[3 * i + 1]; }
  double z(std::size_t i) const { return xyz[3 * i + 2]; }

  void push(double px, double py, double pz, double r) {
    xyz.insert(xyz.end(), {px, py, pz});
    reflectance.push_back(r);
  }
};

// LiDAR -> rectified camera transform T (4x4) and camera projection M (3x4),
// both row-major, plus the image extent in pixels.
struct CalibContext {
  std::array<double, 16> T{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  std::array<double, 12> M{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  int width = 0;
  int height = 0;

  bool valid(double tol = 1e-6) const {
    if (T[12] != 0.0 || T[13] != 0.0 || T[14] != 0.0 || T[15] != 1.0) return false;
    // rotation block orthonormality: R^T R == I
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += T[4 * k + i] * T[4 * k + j];
        if (std::abs(dot - (i == j ? 1.0 : 0.0)) > tol) return false;
      }
    }
    return width > 0 && height > 0;
  }
};

// Yaw-oriented 3D box. size = (h, w, l); yaw about +z, stored in [-pi, pi).
// l spans the box's local x axis at yaw 0, w the local y, h the vertical z.
struct OrientedBox3D {
  std::array<double, 3> center{0, 0, 0};
  double h = 0, w = 0, l = 0;
  double yaw = 0;

  OrientedBox3D() = default;
  OrientedBox3D(double cx, double cy, double cz, double bh, double bw, double bl,
                double byaw)
      : center{cx, cy, cz}, h(bh), w(bw), l(bl), yaw(normalize_angle(byaw)) {}

  bool valid() const {
    return h > 0 && w > 0 && l > 0 && std::isfinite(center[0]) &&
           std::isfinite(center[1]) && std::isfinite(center[2]) &&
           yaw >= -kPi && yaw < kPi;
  }
  double volume() const { return h * w * l; }
};

// A box carrying its object class (0-based id into the configured class list).
struct LabeledBox {
  OrientedBox3D box;
  std::size_t class_id = 0;
};

// Axis-aligned 3D region; extent = (h+eta, w+eta, l+eta) mapped to (z, y, x).
struct RoI3D {
  std::array<double, 3> center{0, 0, 0};
  double extent_h = 0, extent_w = 0, extent_l = 0;

  bool contains(double px, double py, double pz) const {
    return std::abs(px - center[0]) <= 0.5 * extent_l &&
           std::abs(py - center[1]) <= 0.5 * extent_w &&
           std::abs(pz - center[2]) <= 0.5 * extent_h;
  }
};

// Image-plane rectangle, clipped to [0,W]x[0,H].
struct RoI2D {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
};

struct ProjectedPoint {
  double u = 0, v = 0;
  double depth = 0;  // camera-frame z, meters
  bool in_image = false;
};

inline ProjectedPoint project_point(double px, double py, double pz,
                                    const CalibContext& calib) {
  const auto& T = calib.T;
  const auto& M = calib.M;
  double cx = T[0] * px + T[1] * py + T[2] * pz + T[3];
  double cy = T[4] * px + T[5] * py + T[6] * pz + T[7];
  double cz = T[8] * px + T[9] * py + T[10] * pz + T[11];
  double hu = M[0] * cx + M[1] * cy + M[2] * cz + M[3];
  double hv = M[4] * cx + M[5] * cy + M[6] * cz + M[7];
  double hw = M[8] * cx + M[9] * cy + M[10] * cz + M[11];
  ProjectedPoint out;
  out.depth = cz;
  if (std::abs(hw) > 1e-12) {
    out.u = hu / hw;
    out.v = hv / hw;
  }
  out.in_image = out.depth > 0.0 && hw > 0.0 && out.u >= 0.0 &&
                 out.u < calib.width && out.v >= 0.0 && out.v < calib.height;
  return out;
}

inline std::vector<ProjectedPoint> project_points(const PointCloud& cloud,
                                                  const CalibContext& calib) {
  std::vector<ProjectedPoint> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out[i] = project_point(cloud.x(i), cloud.y(i), cloud.z(i), calib);
  return out;
}

// Corners in a fixed order: bit 0 of the index selects +l/2 vs -l/2 along the
// local x axis, bit 1 selects +w/2 vs -w/2 along local y, bit 2 selects
// +h/2 vs -h/2 along z. Yaw rotation is applied before translation.
inline std::array<std::array<double, 3>, 8> box_corners(const OrientedBox3D& box) {
  std::array<std::array<double, 3>, 8> corners;
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  for (int k = 0; k < 8; ++k) {
    double dx = (k & 1) ? 0.5 * box.l : -0.5 * box.l;
    double dy = (k & 2) ? 0.5 * box.w : -0.5 * box.w;
    double dz = (k & 4) ? 0.5 * box.h : -0.5 * box.h;
    corners[k] = {box.center[0] + c * dx - s * dy,
                  box.center[1] + s * dx + c * dy, box.center[2] + dz};
  }
  return corners;
}

inline std::array<std::array<double, 3>, 8> roi3d_corners(const RoI3D& roi) {
  OrientedBox3D b(roi.center[0], roi.center[1], roi.center[2], roi.extent_h,
                  roi.extent_w, roi.extent_l, 0.0);
  return box_corners(b);
}

// Bounding rectangle of the projected RoI corners, clipped to image bounds.
// Corners behind the camera are skipped; throws if nothing is visible.
inline RoI2D project_box_to_roi2d(const RoI3D& roi, const CalibContext& calib) {
  auto corners = roi3d_corners(roi);
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  int visible = 0;
  for (const auto& corner : corners) {
    ProjectedPoint p = project_point(corner[0], corner[1], corner[2], calib);
    if (p.depth <= 0.0) continue;
    ++visible;
    u0 = std::min(u0, p.u);
    v0 = std::min(v0, p.v);
    u1 = std::max(u1, p.u);
    v1 = std::max(v1, p.v);
  }
  if (visible == 0) throw NoVisibleCorners("all RoI corners behind camera");
  RoI2D rect;
  rect.u_min = std::clamp(u0, 0.0, double(calib.width));
  rect.u_max = std::clamp(u1, 0.0, double(calib.width));
  rect.v_min = std::clamp(v0, 0.0, double(calib.height));
  rect.v_max = std::clamp(v1, 0.0, double(calib.height));
  return rect;
}

namespace detail {

struct Pt2 {
  double x, y;
};

// Counterclockwise BEV footprint of a box.
inline std::vector<Pt2> bev_polygon(const OrientedBox3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  auto rot = [&](double dx, double dy) {
    return Pt2{box.center[0] + c * dx - s * dy, box.center[1] + s * dx + c * dy};
  };
  return {rot(0.5 * box.l, 0.5 * box.w), rot(-0.5 * box.l, 0.5 * box.w),
          rot(-0.5 * box.l, -0.5 * box.w), rot(0.5 * box.l, -0.5 * box.w)};
}

inline double polygon_area(const std::vector<Pt2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pt2& p = poly[i];
    const Pt2& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of `subject` against the CCW convex `clip` polygon.
// Points exactly on a clip edge count as inside.
inline std::vector<Pt2> clip_polygon(std::vector<Pt2> subject,
                                     const std::vector<Pt2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Pt2 a = clip[e];
    const Pt2 b = clip[(e + 1) % clip.size()];
    auto side = [&](const Pt2& p) {
      return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    };
    std::vector<Pt2> out;
    out.reserve(subject.size() + 4);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Pt2 cur = subject[i];
      const Pt2 nxt = subject[(i + 1) % subject.size()];
      const double sc = side(cur), sn = side(nxt);
      if (sc >= 0.0) out.push_back(cur);
      if ((sc >= 0.0) != (sn >= 0.0)) {
        double t = sc / (sc - sn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

inline double bev_intersection_area(const OrientedBox3D& a, const OrientedBox3D& b) {
  double area = polygon_area(clip_polygon(bev_polygon(a), bev_polygon(b)));
  return area < 1e-9 ? 0.0 : area;
}

inline bool box_less(const OrientedBox3D& a, const OrientedBox3D& b) {
  auto key = [](const OrientedBox3D& x) {
    return std::array<double, 7>{x.center[0], x.center[1], x.center[2],
                                 x.h,         x.w,         x.l,
                                 x.yaw};
  };
  return key(a) < key(b);
}

}  // namespace detail

// Rotated 3D IoU: BEV polygon-clipping intersection times vertical overlap.
// The operand pair is canonically ordered first so the result is exactly
// symmetric in its arguments.
inline double iou_3d(const OrientedBox3D& a_in, const OrientedBox3D& b_in) {
  const OrientedBox3D& a = detail::box_less(b_in, a_in) ? b_in : a_in;
  const OrientedBox3D& b = detail::box_less(b_in, a_in) ? a_in : b_in;
  double area_a = detail::polygon_area(detail::bev_polygon(a));
  double area_b = detail::polygon_area(detail::bev_polygon(b));
  if (area_a < 1e-9 || area_b < 1e-9) return 0.0;
  double inter_area = detail::bev_intersection_area(a, b);
  if (inter_area <= 0.0) return 0.0;
  double z0 = std::max(a.center[2] - 0.5 * a.h, b.center[2] - 0.5 * b.h);
  double z1 = std::min(a.center[2] + 0.5 * a.h, b.center[2] + 0.5 * b.h);
  double dz = z1 - z0;
  if (dz <= 0.0) return 0.0;
  // Volumes use the same z-extent arithmetic as the overlap so that
  // iou_3d(a, a) divides a quantity by itself and yields exactly 1.
  double vol_a = area_a * ((a.center[2] + 0.5 * a.h) - (a.center[2] - 0.5 * a.h));
  double vol_b = area_b * ((b.center[2] + 0.5 * b.h) - (b.center[2] - 0.5 * b.h));
  double inter = inter_area * dz;
  double uni = vol_a + vol_b - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// BEV-only IoU over the rotated footprints (used for synthetic placement and
// quick overlap tests).
inline double iou_bev(const OrientedBox3D& a_in, const OrientedBox3D& b_in) {
  const OrientedBox3D& a = detail::box_less(b_in, a_in) ? b_in : a_in;
  const OrientedBox3D& b = detail::box_less(b_in, a_in) ? a_in : b_in;
  double area_a = detail::polygon_area(detail::bev_polygon(a));
  double area_b = detail::polygon_area(detail::bev_polygon(b));
  if (area_a < 1e-9 || area_b < 1e-9) return 0.0;
  double inter = detail::bev_intersection_area(a, b);
  double uni = area_a + area_b - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

// Point-in-box test in the box's local frame.
inline bool box_contains(const OrientedBox3D& box, double px, double py, double pz) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  double dx = px - box.center[0], dy = py - box.center[1], dz = pz - box.center[2];
  double lx = c * dx + s * dy;
  double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.l && std::abs(ly) <= 0.5 * box.w &&
         std::abs(dz) <= 0.5 * box.h;
}

}  // namespace roifusion
