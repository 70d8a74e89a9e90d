#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/geom.hpp"
#include "roifusion/micronet.hpp"

namespace roifusion {

// Yaw as a discrete bin plus a continuous residual from the bin center.
// H equal bins over [-pi, pi); bin i's center is -pi + (i + 0.5) * 2pi/H.
struct AngleBinCodec {
  std::size_t bins = 12;

  double bin_width() const { return 2.0 * kPi / double(bins); }
  double bin_center(std::size_t b) const {
    return -kPi + (double(b) + 0.5) * bin_width();
  }

  std::pair<std::size_t, double> encode(double theta) const {
    double t = normalize_angle(theta);
    auto b = std::size_t(std::clamp(std::floor((t + kPi) / bin_width()), 0.0,
                                    double(bins - 1)));
    return {b, t - bin_center(b)};
  }

  double decode(std::size_t bin, double residual) const {
    if (bin >= bins) throw BinOutOfRange("decode_angle: bin >= H");
    return normalize_angle(bin_center(bin) + residual);
  }
};

// Raw regression targets/outputs for one RoI. Only the assigned bin's
// residual is supervised; class logit 0 is background.
struct BoxEncoding {
  std::array<double, 3> center_offset{0, 0, 0};
  std::array<double, 3> size{0, 0, 0};  // (h, w, l) meters
  std::vector<double> bin_logits;
  std::vector<double> bin_residuals;
  std::vector<double> class_logits;
};

// Output vector layout of the head network per RoI:
// [offset(3) | size(3) | bin_logits(H) | bin_residuals(H) | class_logits(C)].
struct HeadLayout {
  std::size_t bins = 12;
  std::size_t classes = 2;  // background + object classes

  std::size_t width() const { return 6 + 2 * bins + classes; }
  std::size_t offset_at() const { return 0; }
  std::size_t size_at() const { return 3; }
  std::size_t bin_logit_at() const { return 6; }
  std::size_t bin_residual_at() const { return 6 + bins; }
  std::size_t class_logit_at() const { return 6 + 2 * bins; }

  BoxEncoding unpack(const double* row) const {
    BoxEncoding e;
    for (int k = 0; k < 3; ++k) e.center_offset[k] = row[k];
    for (int k = 0; k < 3; ++k) e.size[k] = row[3 + k];
    e.bin_logits.assign(row + bin_logit_at(), row + bin_logit_at() + bins);
    e.bin_residuals.assign(row + bin_residual_at(), row + bin_residual_at() + bins);
    e.class_logits.assign(row + class_logit_at(), row + class_logit_at() + classes);
    return e;
  }
};

// Assemble a box from an encoding and the RoI center it is relative to.
// Sizes are regressed in absolute meters; a small floor keeps early,
// untrained predictions valid.
inline OrientedBox3D decode_box(const BoxEncoding& enc,
                                const std::array<double, 3>& roi_center,
                                const AngleBinCodec& codec) {
  std::size_t best = 0;
  for (std::size_t b = 1; b < enc.bin_logits.size(); ++b)
    if (enc.bin_logits[b] > enc.bin_logits[best]) best = b;
  double yaw = codec.decode(best, enc.bin_residuals[best]);
  return OrientedBox3D(roi_center[0] + enc.center_offset[0],
                       roi_center[1] + enc.center_offset[1],
                       roi_center[2] + enc.center_offset[2],
                       std::max(enc.size[0], 0.01), std::max(enc.size[1], 0.01),
                       std::max(enc.size[2], 0.01), yaw);
}

struct LossWeights {
  double cls = 1.0, center = 1.0, size = 1.0, bin = 1.0, residual = 1.0;
};

// An RoI is positive when its voted center lies within 0.8 * min(w, l) / 2 of
// a ground-truth centroid; the nearest centroid wins conflicts. Returns -1
// for background RoIs.
inline std::vector<int> assign_rois(const std::vector<double>& roi_centers,
                                    const std::vector<LabeledBox>& gts) {
  const std::size_t m = roi_centers.size() / 3;
  std::vector<int> out(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const auto& c = gts[g].box.center;
      double dx = roi_centers[3 * i] - c[0];
      double dy = roi_centers[3 * i + 1] - c[1];
      double dz = roi_centers[3 * i + 2] - c[2];
      double d2 = dx * dx + dy * dy + dz * dz;
      double radius = 0.8 * std::min(gts[g].box.w, gts[g].box.l) * 0.5;
      if (d2 <= radius * radius && d2 < best_d2) {
        best_d2 = d2;
        out[i] = int(g);
      }
    }
  }
  return out;
}

struct DetectionLossResult {
  double total = 0.0;
  double cls = 0.0, center = 0.0, size = 0.0, bin = 0.0, residual = 0.0;
  std::size_t assigned = 0;
  bool no_assigned = false;
  Tensor2 grad;              // d total / d raw head outputs, same shape as input
  Tensor2 grad_roi_centers;  // M x 3; the center target is gt - roi_center
};

// Five-term loss over the head's raw outputs.
//   cls  = mean over active RoIs of class cross-entropy (background for
//          unassigned RoIs)
//   center/size = smooth-L1 vs (gt center - roi center) and gt dims,
//                 averaged over assigned RoIs
//   bin  = cross-entropy on the encoded yaw bin, averaged over assigned
//   res  = smooth-L1 on the assigned bin's residual only, averaged over
//          assigned
// total = weighted sum; with no assigned RoIs only the background
// classification term remains and no_assigned is set.
// assignment: gt index, -1 for background, -2 for suppressed (empty RoIs
// contribute nothing at all).
inline DetectionLossResult detection_loss(const Tensor2& head_out,
                                          const std::vector<int>& assignment,
                                          const std::vector<LabeledBox>& gts,
                                          const std::vector<double>& roi_centers,
                                          const AngleBinCodec& codec,
                                          const HeadLayout& layout,
                                          const LossWeights& weights) {
  if (head_out.cols != layout.width())
    throw ShapeMismatch("detection_loss: head output width mismatch");
  const std::size_t m = head_out.rows;
  DetectionLossResult res;
  res.grad = Tensor2(m, head_out.cols);
  res.grad_roi_centers = Tensor2(m, 3);
  if (m == 0) {
    res.no_assigned = true;
    return res;
  }

  std::size_t n_assigned = 0, n_active = 0;
  for (int a : assignment) {
    if (a >= -1) ++n_active;
    if (a >= 0) ++n_assigned;
  }
  res.assigned = n_assigned;
  res.no_assigned = n_assigned == 0;
  const double inv_m = n_active > 0 ? 1.0 / double(n_active) : 0.0;
  const double inv_a = n_assigned > 0 ? 1.0 / double(n_assigned) : 0.0;

  std::vector<double> tmp_grad;
  for (std::size_t i = 0; i < m; ++i) {
    const int a = assignment[i];
    if (a < -1) continue;
    const double* row = head_out.row(i);
    double* grow = res.grad.row(i);
    const std::size_t target_class =
        a < 0 ? 0 : gts[std::size_t(a)].class_id + 1;

    // classification over every RoI
    std::vector<double> logits(row + layout.class_logit_at(),
                               row + layout.class_logit_at() + layout.classes);
    res.cls += cross_entropy(logits, target_class, &tmp_grad) * inv_m;
    for (std::size_t c = 0; c < layout.classes; ++c)
      grow[layout.class_logit_at() + c] +=
          weights.cls * tmp_grad[c] * inv_m;

    if (a < 0) continue;
    const LabeledBox& gt = gts[std::size_t(a)];

    std::vector<double> pred_off(row, row + 3);
    std::vector<double> target_off = {gt.box.center[0] - roi_centers[3 * i],
                                      gt.box.center[1] - roi_centers[3 * i + 1],
                                      gt.box.center[2] - roi_centers[3 * i + 2]};
    res.center += smooth_l1(pred_off, target_off, &tmp_grad) * inv_a;
    for (int k = 0; k < 3; ++k) {
      grow[k] += weights.center * tmp_grad[std::size_t(k)] * inv_a;
      // d = pred - (gt - roi_center), so d(d)/d(roi_center) = +1
      res.grad_roi_centers(i, std::size_t(k)) +=
          weights.center * tmp_grad[std::size_t(k)] * inv_a;
    }

    std::vector<double> pred_size(row + 3, row + 6);
    std::vector<double> target_size = {gt.box.h, gt.box.w, gt.box.l};
    res.size += smooth_l1(pred_size, target_size, &tmp_grad) * inv_a;
    for (int k = 0; k < 3; ++k)
      grow[3 + k] += weights.size * tmp_grad[std::size_t(k)] * inv_a;

    auto [bin, residual] = codec.encode(gt.box.yaw);
    std::vector<double> bin_logits(row + layout.bin_logit_at(),
                                   row + layout.bin_logit_at() + layout.bins);
    res.bin += cross_entropy(bin_logits, bin, &tmp_grad) * inv_a;
    for (std::size_t b = 0; b < layout.bins; ++b)
      grow[layout.bin_logit_at() + b] += weights.bin * tmp_grad[b] * inv_a;

    std::vector<double> pred_res = {row[layout.bin_residual_at() + bin]};
    std::vector<double> target_res = {residual};
    res.residual += smooth_l1(pred_res, target_res, &tmp_grad) * inv_a;
    grow[layout.bin_residual_at() + bin] +=
        weights.residual * tmp_grad[0] * inv_a;
  }

  res.total = weights.cls * res.cls + weights.center * res.center +
              weights.size * res.size + weights.bin * res.bin +
              weights.residual * res.residual;
  return res;
}

// Class-wise greedy NMS on 3D IoU; returns kept indices in score order.
inline std::vector<std::size_t> nms_3d(const std::vector<OrientedBox3D>& boxes,
                                       const std::vector<double>& scores,
                                       const std::vector<std::size_t>& class_ids,
                                       double iou_threshold = 0.1) {
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<std::size_t> keep;
  std::vector<bool> dead(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    std::size_t i = order[oi];
    if (dead[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      std::size_t j = order[oj];
      if (dead[j] || class_ids[i] != class_ids[j]) continue;
      if (iou_3d(boxes[i], boxes[j]) > iou_threshold) dead[j] = true;
    }
  }
  return keep;
}

}  // namespace roifusion
