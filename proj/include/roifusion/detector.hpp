#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "roifusion/backbone.hpp"
#include "roifusion/common.hpp"
#include "roifusion/config.hpp"
#include "roifusion/data.hpp"
#include "roifusion/eval.hpp"
#include "roifusion/fusionkp.hpp"
#include "roifusion/geom.hpp"
#include "roifusion/head.hpp"
#include "roifusion/micronet.hpp"
#include "roifusion/roi.hpp"
#include "roifusion/sampling.hpp"

namespace roifusion {

// Margin added to ground-truth boxes when assigning vote targets, so surface
// keypoints pushed out by sensor noise still supervise their object's center.
constexpr double kVoteSupervisionMargin = 0.2;

// One ready-to-run frame: fixed-size cloud, calibration, segmentation scores,
// ground truth.
struct PreparedScene {
  PointCloud cloud;
  CalibContext calib;
  const SegScores* seg = nullptr;
  std::vector<LabeledBox> gts;
};

inline PreparedScene prepare_scene(const SyntheticScene& scene,
                                   const RunConfig& cfg, Rng& rng) {
  PreparedScene out;
  out.calib = scene.calib;
  out.seg = &scene.seg;
  out.gts = scene.boxes;
  PointCloud cloud =
      cfg.frustum_filter ? frustum_filter(scene.cloud, scene.calib) : scene.cloud;
  out.cloud = subsample_cloud(cloud, cfg.cloud_points, rng);
  return out;
}

// The full RoIFusion pipeline: SA/FP backbone, fused keypoint generation,
// voting, RoI generation and 3D/2D pooling, feature fusion, prediction head.
class Detector {
 public:
  explicit Detector(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    BackboneConfig bb;
    auto pts = cfg_.effective_sa_points();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      SAConfig sc;
      sc.out_points = pts[i];
      sc.radius = cfg_.sa_radius[i];
      sc.max_neighbors = cfg_.sa_neighbors[i];
      sc.mlp_channels = cfg_.sa_mlp[i];
      sc.sampler = cfg_.sa_sampler[i] == "dfps"  ? FpsStrategy::DFps
                   : cfg_.sa_sampler[i] == "ffps" ? FpsStrategy::FFps
                                                  : FpsStrategy::Fused;
      bb.sa_stages.push_back(sc);
    }
    bb.fp_channels = cfg_.fp_mlp;
    bb.fp_k = cfg_.fp_k;
    backbone_ = PointBackbone(bb, 1, rng);

    const std::size_t f = backbone_.point_feature_dim();
    vote_ = VoteNet(f, cfg_.vote_hidden, rng);
    pool3d_mlp_ = Mlp(3 + f, {cfg_.pool3d_width}, rng);

    layout_.bins = cfg_.angle_bins;
    layout_.classes = 1 + cfg_.classes.size();
    codec_.bins = cfg_.angle_bins;

    std::size_t seg_channels = cfg_.seg_channels
                                   ? cfg_.seg_channels
                                   : 1 + cfg_.synthetic.n_classes + 2;
    pool2d_dense_ = DenseLayer(cfg_.pool_grid * cfg_.pool_grid * seg_channels,
                               cfg_.pool2d_width, Activation::ReLU, rng);
    std::size_t fuse_in = cfg_.fusion == FusionStrategy::Concat
                              ? cfg_.pool3d_width + cfg_.pool2d_width
                              : cfg_.pool3d_width;
    fuse_mlp_ = Mlp(fuse_in, {cfg_.fuse_width}, rng);
    head_mlp_ = Mlp(cfg_.fuse_width, {cfg_.head_hidden, layout_.width()}, rng,
                    Activation::None);
  }

  const RunConfig& config() const { return cfg_; }
  const AngleBinCodec& codec() const { return codec_; }
  const HeadLayout& layout() const { return layout_; }
  PointBackbone& backbone() { return backbone_; }
  VoteNet& vote_net() { return vote_; }

  // Canonical layer order for checkpoints and the optimizer: SA stages, FP
  // stages, vote net, 3D pool MLP, 2D pool dense, fusion MLP, head MLP.
  std::vector<DenseLayer*> layers() {
    std::vector<DenseLayer*> out;
    for (auto& sa : backbone_.sa_layers())
      for (auto& l : sa.mlp().layers()) out.push_back(&l);
    for (auto& fp : backbone_.fp_layers())
      for (auto& l : fp.mlp().layers()) out.push_back(&l);
    for (auto& l : vote_.mlp().layers()) out.push_back(&l);
    for (auto& l : pool3d_mlp_.layers()) out.push_back(&l);
    out.push_back(&pool2d_dense_);
    for (auto& l : fuse_mlp_.layers()) out.push_back(&l);
    for (auto& l : head_mlp_.layers()) out.push_back(&l);
    return out;
  }
  std::vector<const DenseLayer*> layers() const {
    auto mut = const_cast<Detector*>(this)->layers();
    return {mut.begin(), mut.end()};
  }

  struct Grads {
    BackboneGrads backbone;
    std::vector<DenseGrads> vote, pool3d, fuse, head;
    DenseGrads pool2d;
  };

  Grads make_grads() const {
    Grads g;
    g.backbone = backbone_.make_grads();
    g.vote = vote_.mlp().make_grads();
    g.pool3d = pool3d_mlp_.make_grads();
    g.pool2d = pool2d_dense_.make_grads();
    g.fuse = fuse_mlp_.make_grads();
    g.head = head_mlp_.make_grads();
    return g;
  }

  // Gradient blocks in the same order as layers().
  static std::vector<std::vector<double>*> grad_blocks(Grads& g) {
    std::vector<std::vector<double>*> out;
    auto push = [&](std::vector<DenseGrads>& v) {
      for (auto& d : v) {
        out.push_back(&d.w);
        out.push_back(&d.b);
      }
    };
    for (auto& stage : g.backbone.sa) push(stage);
    for (auto& stage : g.backbone.fp) push(stage);
    push(g.vote);
    push(g.pool3d);
    out.push_back(&g.pool2d.w);
    out.push_back(&g.pool2d.b);
    push(g.fuse);
    push(g.head);
    return out;
  }

  struct Forward {
    FeatureSet input;
    BackboneCache backbone;
    FeatureSet point_feats;
    KeypointSet kp_pc, kp_img, kp;
    bool no_foreground = false;
    VoteCache vote_cache;
    VoteOutput votes;
    std::vector<RoI3D> rois;            // keypoint-major, class-minor
    std::vector<RoI2D> rois2d;
    std::vector<double> roi_centers;    // 3 per roi
    std::vector<unsigned char> roi_empty;
    std::vector<Pool3DCache> pool3d_cache;
    std::vector<Pool2DCache> pool2d_cache;
    std::vector<FuseCache> fuse_cache;
    std::vector<DenseCache> head_cache;
    Tensor2 head_out;
  };

  Forward forward(const PreparedScene& scene) const {
    Forward fwd;
    fwd.input.coords = scene.cloud.xyz;
    fwd.input.features = Tensor2(scene.cloud.size(), 1);
    for (std::size_t i = 0; i < scene.cloud.size(); ++i)
      fwd.input.features(i, 0) = scene.cloud.reflectance[i];

    fwd.point_feats = backbone_.forward(fwd.input, fwd.backbone);
    fwd.kp_pc =
        point_guided_keypoints(fwd.backbone.levels.back(), cfg_.keypoints_pc);
    if (cfg_.keypoints_img > 0) {
      try {
        fwd.kp_img = pixel_guided_keypoints(scene.cloud, scene.calib, *scene.seg,
                                            fwd.point_feats.features,
                                            cfg_.keypoints_img, cfg_.tau_fg);
      } catch (const NoForegroundPoints&) {
        fwd.no_foreground = true;  // fall back to point-guided only
      }
    }
    fwd.kp = fuse_keypoints(fwd.kp_pc, fwd.kp_img);
    fwd.votes = vote_.forward(fwd.kp, &fwd.vote_cache);

    const std::size_t m = fwd.kp.size();
    const std::size_t nc = cfg_.classes.size();
    const std::size_t n_rois = m * nc;
    fwd.rois.resize(n_rois);
    fwd.rois2d.resize(n_rois);
    fwd.roi_centers.resize(3 * n_rois);
    fwd.roi_empty.assign(n_rois, 0);
    fwd.pool3d_cache.resize(n_rois);
    fwd.pool2d_cache.resize(n_rois);
    fwd.fuse_cache.resize(n_rois);

    ImageFeatureMap map = image_feature_map(*scene.seg);
    Tensor2 fused(n_rois, cfg_.fuse_width);
    for (std::size_t k = 0; k < m; ++k) {
      std::array<double, 3> center = {fwd.votes.centers[3 * k],
                                      fwd.votes.centers[3 * k + 1],
                                      fwd.votes.centers[3 * k + 2]};
      for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t r = k * nc + c;
        const auto& cls = cfg_.classes[c];
        fwd.rois[r] = make_roi3d(center, cls.h, cls.w, cls.l, cfg_.eta);
        for (int d = 0; d < 3; ++d) fwd.roi_centers[3 * r + d] = center[d];
        try {
          fwd.rois2d[r] = project_box_to_roi2d(fwd.rois[r], scene.calib);
        } catch (const NoVisibleCorners&) {
          fwd.rois2d[r] = RoI2D{};  // degenerate: pooled as zero + flag
        }
        std::vector<double> pc_feat =
            pool_roi3d(fwd.rois[r], scene.cloud.xyz, fwd.point_feats.features,
                       cfg_.k_pool, pool3d_mlp_, &fwd.pool3d_cache[r]);
        fwd.roi_empty[r] = fwd.pool3d_cache[r].empty ? 1 : 0;
        std::vector<double> img_feat =
            pool_roi2d(fwd.rois2d[r], map, cfg_.pool_grid, pool2d_dense_,
                       &fwd.pool2d_cache[r]);
        std::vector<double> f = fuse_roi(pc_feat, img_feat, cfg_.fusion,
                                         fuse_mlp_, &fwd.fuse_cache[r]);
        std::copy(f.begin(), f.end(), fused.row(r));
      }
    }
    fwd.head_out = head_mlp_.forward(fused, &fwd.head_cache);
    return fwd;
  }

  struct LossBreakdown {
    double total = 0, vote = 0, cls = 0, center = 0, size = 0, bin = 0,
           residual = 0;
    std::size_t assigned = 0;
  };

  // Vote target: the center of the (margin-expanded) ground-truth box that
  // contains the keypoint; keypoints on background contribute no vote loss.
  std::vector<int> vote_targets(const KeypointSet& kp,
                                const std::vector<LabeledBox>& gts) const {
    std::vector<int> out(kp.size(), -1);
    for (std::size_t k = 0; k < kp.size(); ++k) {
      for (std::size_t g = 0; g < gts.size(); ++g) {
        OrientedBox3D grown = gts[g].box;
        grown.h += kVoteSupervisionMargin;
        grown.w += kVoteSupervisionMargin;
        grown.l += kVoteSupervisionMargin;
        if (box_contains(grown, kp.coords[3 * k], kp.coords[3 * k + 1],
                         kp.coords[3 * k + 2])) {
          out[k] = int(g);
          break;
        }
      }
    }
    return out;
  }

  std::vector<int> assign(const Forward& fwd,
                          const std::vector<LabeledBox>& gts) const {
    std::vector<int> assignment = assign_rois(fwd.roi_centers, gts);
    for (std::size_t r = 0; r < assignment.size(); ++r)
      if (fwd.roi_empty[r]) assignment[r] = -2;
    return assignment;
  }

  LossBreakdown loss_and_backward(const Forward& fwd,
                                  const std::vector<LabeledBox>& gts,
                                  Grads& grads) const {
    LossBreakdown out;
    const std::size_t m = fwd.kp.size();
    const std::size_t nc = cfg_.classes.size();

    LossWeights w;
    w.cls = cfg_.lambda_cls;
    w.center = cfg_.lambda_center;
    w.size = cfg_.lambda_size;
    w.bin = cfg_.lambda_bin;
    w.residual = cfg_.lambda_residual;

    std::vector<int> assignment = assign(fwd, gts);
    DetectionLossResult det =
        detection_loss(fwd.head_out, assignment, gts, fwd.roi_centers, codec_,
                       layout_, w);
    out.cls = det.cls;
    out.center = det.center;
    out.size = det.size;
    out.bin = det.bin;
    out.residual = det.residual;
    out.assigned = det.assigned;

    // vote loss
    Tensor2 grad_centers(m, 3);
    std::vector<int> vt = vote_targets(fwd.kp, gts);
    std::size_t n_votes = 0;
    for (int t : vt)
      if (t >= 0) ++n_votes;
    if (n_votes > 0) {
      const double inv = 1.0 / double(n_votes);
      std::vector<double> pred(3), target(3), g;
      for (std::size_t k = 0; k < m; ++k) {
        if (vt[k] < 0) continue;
        const auto& c = gts[std::size_t(vt[k])].box.center;
        for (int d = 0; d < 3; ++d) {
          pred[std::size_t(d)] = fwd.votes.centers[3 * k + d];
          target[std::size_t(d)] = c[d];
        }
        out.vote += smooth_l1(pred, target, &g) * inv;
        for (int d = 0; d < 3; ++d)
          grad_centers(k, std::size_t(d)) += cfg_.lambda_vote * g[std::size_t(d)] * inv;
      }
    }
    out.total = cfg_.lambda_vote * out.vote + det.total;

    // head -> fusion -> pooling
    Tensor2 grad_fused = head_mlp_.backward(fwd.head_cache, det.grad, grads.head);
    Tensor2 grad_point_feats(fwd.point_feats.features.rows,
                             fwd.point_feats.features.cols);
    std::vector<double> grad_fuse_vec(cfg_.fuse_width);
    std::vector<double> grad_pc, grad_img;
    for (std::size_t r = 0; r < fwd.rois.size(); ++r) {
      std::copy(grad_fused.row(r), grad_fused.row(r) + cfg_.fuse_width,
                grad_fuse_vec.begin());
      fuse_roi_backward(fwd.fuse_cache[r], fuse_mlp_, grad_fuse_vec, grads.fuse,
                        grad_pc, grad_img);
      std::array<double, 3> grad_center{0, 0, 0};
      pool_roi3d_backward(fwd.pool3d_cache[r], pool3d_mlp_, grad_pc, grads.pool3d,
                          grad_point_feats, &grad_center);
      pool_roi2d_backward(fwd.pool2d_cache[r], pool2d_dense_, grad_img,
                          grads.pool2d);
      const std::size_t k = r / nc;
      for (int d = 0; d < 3; ++d)
        grad_centers(k, std::size_t(d)) +=
            grad_center[std::size_t(d)] + det.grad_roi_centers(r, std::size_t(d));
    }

    // votes -> keypoint features
    Tensor2 grad_kp_features =
        vote_.backward(fwd.vote_cache, grad_centers, grads.vote);

    // scatter keypoint gradients to their source feature matrices
    Tensor2 grad_sa_last(fwd.backbone.levels.back().features.rows,
                         fwd.backbone.levels.back().features.cols);
    const std::size_t m1 = fwd.kp_pc.size();
    for (std::size_t k = 0; k < m; ++k) {
      const double* g = grad_kp_features.row(k);
      double* dst = k < m1
                        ? grad_sa_last.row(fwd.kp_pc.source_rows[k])
                        : grad_point_feats.row(fwd.kp_img.source_rows[k - m1]);
      for (std::size_t c = 0; c < grad_kp_features.cols; ++c) dst[c] += g[c];
    }

    backbone_.backward(fwd.backbone, grad_point_feats, grad_sa_last,
                       grads.backbone);
    return out;
  }

  std::vector<Detection> predict(const Forward& fwd, std::size_t frame) const {
    const std::size_t nc = cfg_.classes.size();
    std::vector<OrientedBox3D> boxes;
    std::vector<double> scores;
    std::vector<std::size_t> class_ids;
    for (std::size_t r = 0; r < fwd.rois.size(); ++r) {
      if (fwd.roi_empty[r]) continue;
      const std::size_t c = r % nc;
      BoxEncoding enc = layout_.unpack(fwd.head_out.row(r));
      std::vector<double> probs(enc.class_logits.size());
      double mx = *std::max_element(enc.class_logits.begin(), enc.class_logits.end());
      double sum = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = std::exp(enc.class_logits[i] - mx);
        sum += probs[i];
      }
      double score = probs[c + 1] / sum;
      if (score < cfg_.score_threshold) continue;
      std::array<double, 3> center = {fwd.roi_centers[3 * r],
                                      fwd.roi_centers[3 * r + 1],
                                      fwd.roi_centers[3 * r + 2]};
      boxes.push_back(decode_box(enc, center, codec_));
      scores.push_back(score);
      class_ids.push_back(c);
    }
    std::vector<Detection> out;
    for (std::size_t i : nms_3d(boxes, scores, class_ids, cfg_.nms_iou)) {
      Detection d;
      d.box = boxes[i];
      d.class_name = cfg_.classes[class_ids[i]].name;
      d.score = scores[i];
      d.frame = frame;
      out.push_back(d);
    }
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(path, layers()); }
  void load(const std::string& path) {
    auto mut = layers();
    load_checkpoint(path, mut);
  }

 private:
  RunConfig cfg_;
  PointBackbone backbone_;
  VoteNet vote_;
  Mlp pool3d_mlp_;
  DenseLayer pool2d_dense_;
  Mlp fuse_mlp_;
  Mlp head_mlp_;
  HeadLayout layout_;
  AngleBinCodec codec_;
};

// ---- training ----

struct EpochStats {
  double total = 0, vote = 0, cls = 0, center = 0, size = 0, bin = 0,
         residual = 0;
};

inline std::string format_epoch(std::size_t epoch, const EpochStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "epoch=%zu total=%.6f vote=%.6f cls=%.6f center=%.6f "
                "size=%.6f bin=%.6f residual=%.6f",
                epoch, s.total, s.vote, s.cls, s.center, s.size, s.bin,
                s.residual);
  return buf;
}

// Adam over shuffled mini-batches; scene forward/backward runs scene-parallel
// and per-scene gradients merge in batch order, so results are independent of
// thread scheduling.
class Trainer {
 public:
  Trainer(Detector& model, const RunConfig& cfg) : model_(model), cfg_(cfg) {}

  std::vector<EpochStats> train(const std::vector<PreparedScene>& scenes,
                                std::ostream* log = nullptr) {
    Adam opt(cfg_.lr);
    Rng shuffle_rng(cfg_.seed ^ 0x5eedULL);
    std::vector<EpochStats> history;
    std::vector<std::size_t> order(scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      opt.set_lr(epoch > cfg_.lr_drop_epoch ? cfg_.lr / cfg_.lr_drop_factor
                                            : cfg_.lr);
      for (std::size_t i = 0; i + 1 < order.size(); ++i)
        std::swap(order[i], order[i + shuffle_rng.index(order.size() - i)]);

      EpochStats stats;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size();
           start += cfg_.batch_size) {
        const std::size_t count =
            std::min(cfg_.batch_size, order.size() - start);
        std::vector<Detector::Grads> scene_grads(count);
        std::vector<LossBreakdownSlot> losses(count);
        run_batch(scenes, order, start, count, scene_grads, losses);

        Detector::Grads total = model_.make_grads();
        auto total_blocks = Detector::grad_blocks(total);
        for (std::size_t s = 0; s < count; ++s) {
          auto blocks = Detector::grad_blocks(scene_grads[s]);
          for (std::size_t b = 0; b < blocks.size(); ++b)
            for (std::size_t i = 0; i < blocks[b]->size(); ++i)
              (*total_blocks[b])[i] += (*blocks[b])[i] / double(count);
          stats.total += losses[s].v.total;
          stats.vote += losses[s].v.vote;
          stats.cls += losses[s].v.cls;
          stats.center += losses[s].v.center;
          stats.size += losses[s].v.size;
          stats.bin += losses[s].v.bin;
          stats.residual += losses[s].v.residual;
        }
        auto params = model_.layers();
        opt.begin_step();
        std::size_t block_id = 0;
        for (std::size_t l = 0; l < params.size(); ++l) {
          opt.update(block_id++, params[l]->weights(), *total_blocks[2 * l]);
          opt.update(block_id++, params[l]->bias(), *total_blocks[2 * l + 1]);
        }
        ++batches;
      }
      const double inv = scenes.empty() ? 0.0 : 1.0 / double(scenes.size());
      stats.total *= inv;
      stats.vote *= inv;
      stats.cls *= inv;
      stats.center *= inv;
      stats.size *= inv;
      stats.bin *= inv;
      stats.residual *= inv;
      history.push_back(stats);
      if (log) *log << format_epoch(epoch, stats) << "\n";
    }
    return history;
  }

 private:
  struct LossBreakdownSlot {
    Detector::LossBreakdown v;
  };

  void run_batch(const std::vector<PreparedScene>& scenes,
                 const std::vector<std::size_t>& order, std::size_t start,
                 std::size_t count, std::vector<Detector::Grads>& scene_grads,
                 std::vector<LossBreakdownSlot>& losses) {
    auto work = [&](std::size_t s) {
      const PreparedScene& scene = scenes[order[start + s]];
      scene_grads[s] = model_.make_grads();
      Detector::Forward fwd = model_.forward(scene);
      losses[s].v = model_.loss_and_backward(fwd, scene.gts, scene_grads[s]);
    };
    const std::size_t n_threads = std::min(cfg_.threads, count);
    if (n_threads <= 1) {
      for (std::size_t s = 0; s < count; ++s) work(s);
      return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t s = t; s < count; s += n_threads) work(s);
      });
    for (auto& th : pool) th.join();
  }

  Detector& model_;
  RunConfig cfg_;
};

// Runs inference over scenes and pools detections/ground truths for
// evaluation. Synthetic ground truths are all fully visible, so they carry
// the Easy difficulty.
inline void collect_eval_inputs(Detector& model,
                                const std::vector<PreparedScene>& scenes,
                                std::vector<Detection>& dets,
                                std::vector<GroundTruth>& gts) {
  for (std::size_t f = 0; f < scenes.size(); ++f) {
    Detector::Forward fwd = model.forward(scenes[f]);
    for (auto& d : model.predict(fwd, f)) dets.push_back(std::move(d));
    for (const auto& gt : scenes[f].gts) {
      GroundTruth g;
      g.box = gt.box;
      g.class_name = model.config().classes[gt.class_id].name;
      g.difficulty = Difficulty::Easy;
      g.frame = f;
      gts.push_back(g);
    }
  }
}

}  // namespace roifusion
