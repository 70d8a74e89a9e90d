#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "roifusion/common.hpp"
#include "roifusion/data.hpp"
#include "roifusion/geom.hpp"

namespace roifusion {

// The unit of evaluation: predicted box, class, confidence, source frame.
struct Detection {
  OrientedBox3D box;
  std::string class_name;
  double score = 0.0;
  std::size_t frame = 0;
};

struct GroundTruth {
  OrientedBox3D box;
  std::string class_name;
  Difficulty difficulty = Difficulty::Easy;
  std::size_t frame = 0;
};

enum class MatchKind { TP, FP, IgnoredMatch };

struct MatchResult {
  std::vector<MatchKind> det;      // aligned with the sorted detection order
  std::vector<std::size_t> order;  // detection indices, score desc / id asc
  std::vector<bool> gt_matched;
  std::size_t counted_gts = 0;  // non-Ignored ground truths
};

// Greedy matching within one frame. Detections are visited in descending
// score (ties by ascending index); each takes the highest-IoU unmatched,
// counted ground truth of its class at IoU >= threshold. If only an
// Ignored-difficulty ground truth qualifies, the detection is neither TP nor
// FP and the ground truth does not count as missed.
inline MatchResult match_detections(const std::vector<Detection>& dets,
                                    const std::vector<GroundTruth>& gts,
                                    double iou_threshold) {
  MatchResult res;
  res.order.resize(dets.size());
  for (std::size_t i = 0; i < res.order.size(); ++i) res.order[i] = i;
  std::sort(res.order.begin(), res.order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  res.det.resize(dets.size(), MatchKind::FP);
  res.gt_matched.assign(gts.size(), false);
  for (const auto& gt : gts)
    if (gt.difficulty != Difficulty::Ignored) ++res.counted_gts;

  for (std::size_t oi = 0; oi < res.order.size(); ++oi) {
    const Detection& det = dets[res.order[oi]];
    int best_counted = -1, best_ignored = -1;
    double best_counted_iou = 0.0, best_ignored_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (res.gt_matched[g] || gts[g].class_name != det.class_name) continue;
      double iou = iou_3d(det.box, gts[g].box);
      if (iou < iou_threshold) continue;
      if (gts[g].difficulty == Difficulty::Ignored) {
        if (iou > best_ignored_iou) {
          best_ignored_iou = iou;
          best_ignored = int(g);
        }
      } else if (iou > best_counted_iou) {
        best_counted_iou = iou;
        best_counted = int(g);
      }
    }
    if (best_counted >= 0) {
      res.det[oi] = MatchKind::TP;
      res.gt_matched[std::size_t(best_counted)] = true;
    } else if (best_ignored >= 0) {
      res.det[oi] = MatchKind::IgnoredMatch;
      res.gt_matched[std::size_t(best_ignored)] = true;
    }
  }
  return res;
}

enum class Interp { R11, R40 };

// (recall, precision) per detection prefix over the score-ranked pooled
// detections, starting from the empty prefix (recall 0, precision 1).
struct PRCurve {
  std::vector<std::pair<double, double>> points;
  std::size_t total_tp = 0;
  std::size_t counted_gts = 0;
};

// Pools matches across frames: rank all detections by score (ties by frame
// then index), accumulate TP/FP prefixes. IgnoredMatch detections are
// omitted from the ranking entirely.
inline PRCurve pr_curve(const std::vector<std::pair<double, MatchKind>>& scored,
                        std::size_t counted_gts) {
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
    return a < b;
  });
  PRCurve curve;
  curve.counted_gts = counted_gts;
  curve.points.emplace_back(0.0, 1.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i : order) {
    if (scored[i].second == MatchKind::IgnoredMatch) continue;
    if (scored[i].second == MatchKind::TP)
      ++tp;
    else
      ++fp;
    double recall = counted_gts ? double(tp) / double(counted_gts) : 0.0;
    double precision = double(tp) / double(tp + fp);
    curve.points.emplace_back(recall, precision);
  }
  curve.total_tp = tp;
  return curve;
}

// Interpolated AP: mean over the recall grid of the maximum precision at or
// beyond each recall. R11 uses {0, 0.1, ..., 1.0}; R40 uses {1/40, ..., 1}.
// With no true positive (or no ground truth) the AP is 0 by definition.
inline double average_precision(const PRCurve& curve, Interp interp = Interp::R11) {
  if (curve.total_tp == 0 || curve.counted_gts == 0) return 0.0;
  const int n = interp == Interp::R11 ? 11 : 40;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    double r = interp == Interp::R11 ? 0.1 * k : double(k + 1) / 40.0;
    double best = 0.0;
    for (const auto& [recall, precision] : curve.points)
      if (recall >= r - 1e-12) best = std::max(best, precision);
    sum += best;
  }
  return sum / n;
}

struct BucketStats {
  double range_lo = 0.0, range_hi = 0.0;
  std::size_t gts = 0, tp_gts = 0;
  std::size_t det_tp = 0, det_fp = 0;
  std::optional<double> recall;    // TP ground truths / ground truths
  std::optional<double> accuracy;  // TP detections / (TP + FP detections)
};

// Buckets ground truths and detections by BEV distance from the sensor
// origin. Empty buckets report absent statistics rather than zero.
inline std::vector<BucketStats> distance_buckets(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
    const MatchResult& match, const std::vector<double>& edges) {
  auto bev = [](const OrientedBox3D& b) {
    return std::sqrt(b.center[0] * b.center[0] + b.center[1] * b.center[1]);
  };
  std::vector<BucketStats> buckets(edges.size());
  for (std::size_t b = 0; b < edges.size(); ++b) {
    buckets[b].range_lo = edges[b];
    buckets[b].range_hi = b + 1 < edges.size()
                              ? edges[b + 1]
                              : std::numeric_limits<double>::infinity();
  }
  auto bucket_of = [&](double d) {
    std::size_t b = 0;
    while (b + 1 < edges.size() && d >= edges[b + 1]) ++b;
    return b;
  };
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].difficulty == Difficulty::Ignored) continue;
    auto& bk = buckets[bucket_of(bev(gts[g].box))];
    ++bk.gts;
    if (match.gt_matched[g]) ++bk.tp_gts;
  }
  for (std::size_t oi = 0; oi < match.order.size(); ++oi) {
    if (match.det[oi] == MatchKind::IgnoredMatch) continue;
    auto& bk = buckets[bucket_of(bev(dets[match.order[oi]].box))];
    if (match.det[oi] == MatchKind::TP)
      ++bk.det_tp;
    else
      ++bk.det_fp;
  }
  for (auto& bk : buckets) {
    if (bk.gts > 0) bk.recall = double(bk.tp_gts) / double(bk.gts);
    if (bk.det_tp + bk.det_fp > 0)
      bk.accuracy = double(bk.det_tp) / double(bk.det_tp + bk.det_fp);
  }
  return buckets;
}

// ---- Multi-frame evaluation driver ----

struct EvalConfig {
  std::vector<std::string> classes{"Car", "Pedestrian", "Cyclist"};
  std::map<std::string, double> iou_thresholds{
      {"Car", 0.7}, {"Pedestrian", 0.5}, {"Cyclist", 0.5}};
  Interp interp = Interp::R11;
  std::vector<double> distance_edges{0.0, 20.0, 40.0};
};

struct ClassDifficultyAP {
  std::string class_name;
  Difficulty difficulty;
  double ap = 0.0;
  std::size_t gts = 0;
};

struct EvalSummary {
  std::vector<ClassDifficultyAP> ap;
  std::vector<BucketStats> buckets;  // pooled over classes at Hard level
};

// Evaluates at each difficulty level by treating ground truths harder than
// the level as Ignored, then matching per frame and pooling.
inline EvalSummary evaluate_detections(const std::vector<Detection>& dets,
                                       const std::vector<GroundTruth>& gts,
                                       const EvalConfig& cfg) {
  EvalSummary summary;
  std::vector<std::size_t> frames;
  for (const auto& d : dets) frames.push_back(d.frame);
  for (const auto& g : gts) frames.push_back(g.frame);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  const Difficulty levels[3] = {Difficulty::Easy, Difficulty::Moderate,
                                Difficulty::Hard};
  for (const auto& cls : cfg.classes) {
    double thr = cfg.iou_thresholds.count(cls) ? cfg.iou_thresholds.at(cls) : 0.5;
    for (Difficulty level : levels) {
      std::vector<std::pair<double, MatchKind>> scored;
      std::size_t counted = 0;
      std::vector<Detection> frame_dets;
      std::vector<GroundTruth> frame_gts;
      for (std::size_t f : frames) {
        frame_dets.clear();
        frame_gts.clear();
        for (const auto& d : dets)
          if (d.frame == f && d.class_name == cls) frame_dets.push_back(d);
        for (const auto& g : gts)
          if (g.frame == f && g.class_name == cls) {
            GroundTruth cpy = g;
            if (int(cpy.difficulty) > int(level)) cpy.difficulty = Difficulty::Ignored;
            frame_gts.push_back(cpy);
          }
        MatchResult m = match_detections(frame_dets, frame_gts, thr);
        counted += m.counted_gts;
        for (std::size_t oi = 0; oi < m.order.size(); ++oi)
          scored.emplace_back(frame_dets[m.order[oi]].score, m.det[oi]);
      }
      ClassDifficultyAP entry;
      entry.class_name = cls;
      entry.difficulty = level;
      entry.gts = counted;
      entry.ap = average_precision(pr_curve(scored, counted), cfg.interp);
      summary.ap.push_back(entry);
    }
  }

  // distance buckets pooled over all classes at the Hard level
  std::vector<BucketStats> pooled(cfg.distance_edges.size());
  for (std::size_t b = 0; b < pooled.size(); ++b) {
    pooled[b].range_lo = cfg.distance_edges[b];
    pooled[b].range_hi = b + 1 < cfg.distance_edges.size()
                             ? cfg.distance_edges[b + 1]
                             : std::numeric_limits<double>::infinity();
  }
  std::vector<Detection> frame_dets;
  std::vector<GroundTruth> frame_gts;
  for (std::size_t f : frames) {
    frame_dets.clear();
    frame_gts.clear();
    for (const auto& d : dets)
      if (d.frame == f) frame_dets.push_back(d);
    for (const auto& g : gts)
      if (g.frame == f) frame_gts.push_back(g);
    double thr = 0.5;
    MatchResult m = match_detections(frame_dets, frame_gts, thr);
    auto buckets = distance_buckets(frame_dets, frame_gts, m, cfg.distance_edges);
    for (std::size_t b = 0; b < pooled.size(); ++b) {
      pooled[b].gts += buckets[b].gts;
      pooled[b].tp_gts += buckets[b].tp_gts;
      pooled[b].det_tp += buckets[b].det_tp;
      pooled[b].det_fp += buckets[b].det_fp;
    }
  }
  for (auto& bk : pooled) {
    if (bk.gts > 0) bk.recall = double(bk.tp_gts) / double(bk.gts);
    if (bk.det_tp + bk.det_fp > 0)
      bk.accuracy = double(bk.det_tp) / double(bk.det_tp + bk.det_fp);
  }
  summary.buckets = pooled;
  return summary;
}

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

// Human-readable table; formatting is fixed so reruns are byte-identical.
inline std::string render_report_table(const EvalSummary& s) {
  std::ostringstream os;
  os << "class        difficulty  AP        gts\n";
  for (const auto& e : s.ap) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s %-10s  %.6f  %zu\n",
                  e.class_name.c_str(), difficulty_name(e.difficulty), e.ap,
                  e.gts);
    os << line;
  }
  os << "\nrange          recall    accuracy\n";
  for (const auto& b : s.buckets) {
    char range[48];
    if (std::isinf(b.range_hi))
      std::snprintf(range, sizeof(range), "[%g,inf)", b.range_lo);
    else
      std::snprintf(range, sizeof(range), "[%g,%g)", b.range_lo, b.range_hi);
    char line[128];
    std::snprintf(line, sizeof(line), "%-14s %-9s %-9s\n", range,
                  b.recall ? detail::fixed6(*b.recall).c_str() : "-",
                  b.accuracy ? detail::fixed6(*b.accuracy).c_str() : "-");
    os << line;
  }
  return os.str();
}

// Machine-readable key=value lines, bit-stable across runs.
inline std::string render_report_kv(const EvalSummary& s) {
  std::ostringstream os;
  for (const auto& e : s.ap)
    os << "ap." << e.class_name << "." << difficulty_name(e.difficulty) << "="
       << detail::fixed6(e.ap) << "\n";
  for (std::size_t b = 0; b < s.buckets.size(); ++b) {
    const auto& bk = s.buckets[b];
    os << "bucket." << b << ".lo=" << detail::fixed6(bk.range_lo) << "\n";
    if (bk.recall)
      os << "bucket." << b << ".recall=" << detail::fixed6(*bk.recall) << "\n";
    if (bk.accuracy)
      os << "bucket." << b << ".accuracy=" << detail::fixed6(*bk.accuracy) << "\n";
  }
  return os.str();
}

// ---- Detections file: KITTI result lines (15 label fields + score) ----

inline KittiLabel detection_to_label(const Detection& det, const CalibContext& calib) {
  KittiLabel l;
  l.type = det.class_name;
  l.score = det.score;
  l.dim_h = det.box.h;
  l.dim_w = det.box.w;
  l.dim_l = det.box.l;
  const auto& T = calib.T;
  const auto& c = det.box.center;
  for (int r = 0; r < 3; ++r)
    l.loc[r] = T[4 * r] * c[0] + T[4 * r + 1] * c[1] + T[4 * r + 2] * c[2] +
               T[4 * r + 3];
  l.loc[1] += 0.5 * det.box.h;  // bottom-face center, camera y points down
  double dir[3] = {std::cos(det.box.yaw), std::sin(det.box.yaw), 0.0};
  double dc[3];
  for (int r = 0; r < 3; ++r)
    dc[r] = T[4 * r] * dir[0] + T[4 * r + 1] * dir[1] + T[4 * r + 2] * dir[2];
  l.rotation_y = std::atan2(-dc[2], dc[0]);
  l.alpha = normalize_angle(l.rotation_y - std::atan2(l.loc[0], l.loc[2]));
  try {
    RoI3D as_roi;
    as_roi.center = det.box.center;
    as_roi.extent_h = det.box.h;
    as_roi.extent_w = std::max(det.box.w, det.box.l);
    as_roi.extent_l = std::max(det.box.w, det.box.l);
    RoI2D rect = project_box_to_roi2d(as_roi, calib);
    l.bbox[0] = rect.u_min;
    l.bbox[1] = rect.v_min;
    l.bbox[2] = rect.u_max;
    l.bbox[3] = rect.v_max;
  } catch (const NoVisibleCorners&) {
    // box behind the camera: leave a zero bbox
  }
  return l;
}

inline void write_detections(const std::string& path,
                             const std::vector<Detection>& dets,
                             const CalibContext& calib) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for write: " + path);
  for (const auto& det : dets) {
    KittiLabel l = detection_to_label(det, calib);
    char line[512];
    std::snprintf(line, sizeof(line),
                  "%s %.2f %d %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f "
                  "%.6f %.6f %.6f\n",
                  l.type.c_str(), l.truncation, l.occlusion, l.alpha, l.bbox[0],
                  l.bbox[1], l.bbox[2], l.bbox[3], l.dim_h, l.dim_w, l.dim_l,
                  l.loc[0], l.loc[1], l.loc[2], l.rotation_y, l.score);
    os << line;
  }
  if (!os) throw DataError("write failed: " + path);
}

inline std::vector<Detection> read_detections(const std::string& path,
                                              const CalibContext& calib,
                                              std::size_t frame = 0) {
  std::vector<Detection> out;
  for (const auto& l : read_labels(path)) {
    Detection d;
    d.class_name = l.type;
    d.score = l.score;
    d.frame = frame;
    d.box = label_to_lidar_box(l, calib);
    out.push_back(d);
  }
  return out;
}

}  // namespace roifusion
