#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "roifusion/common.hpp"

namespace roifusion {

// Row-major 64-bit real matrix.
struct Tensor2 {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), v(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  double* row(std::size_t r) { return v.data() + r * cols; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }
};

enum class Activation { None, ReLU };

struct DenseCache {
  Tensor2 input;
  Tensor2 output;  // post-activation; for ReLU the mask is output > 0
};

struct DenseGrads {
  std::vector<double> w;  // fan_in x fan_out, row-major
  std::vector<double> b;  // fan_out
};

// Fully connected layer applied row-wise; also serves as one stage of a
// shared per-point MLP (rows are points).
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t fan_in, std::size_t fan_out, Activation act, Rng& rng)
      : fan_in_(fan_in), fan_out_(fan_out), act_(act),
        w_(fan_in * fan_out), b_(fan_out, 0.0) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (double& x : w_) x = rng.uniform(-bound, bound);
  }

  std::size_t fan_in() const { return fan_in_; }
  std::size_t fan_out() const { return fan_out_; }
  Activation activation() const { return act_; }
  std::vector<double>& weights() { return w_; }
  const std::vector<double>& weights() const { return w_; }
  std::vector<double>& bias() { return b_; }
  const std::vector<double>& bias() const { return b_; }

  DenseGrads make_grads() const {
    return DenseGrads{std::vector<double>(w_.size(), 0.0),
                      std::vector<double>(b_.size(), 0.0)};
  }

  Tensor2 forward(const Tensor2& x, DenseCache* cache = nullptr) const {
    if (x.cols != fan_in_)
      throw ShapeMismatch("dense_forward: input cols " + std::to_string(x.cols) +
                          " != fan_in " + std::to_string(fan_in_));
    Tensor2 y(x.rows, fan_out_);
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* yr = y.row(r);
      const double* xr = x.row(r);
      for (std::size_t o = 0; o < fan_out_; ++o) yr[o] = b_[o];
      for (std::size_t i = 0; i < fan_in_; ++i) {
        const double xv = xr[i];
        if (xv == 0.0) continue;
        const double* wi = &w_[i * fan_out_];
        for (std::size_t o = 0; o < fan_out_; ++o) yr[o] += xv * wi[o];
      }
    }
    if (act_ == Activation::ReLU)
      for (double& x2 : y.v)
        if (x2 < 0.0) x2 = 0.0;
    if (cache) {
      cache->input = x;
      cache->output = y;
    }
    return y;
  }

  // Returns grad w.r.t. the input; accumulates parameter grads into `g`.
  Tensor2 backward(const DenseCache& cache, const Tensor2& grad_out,
                   DenseGrads& g) const {
    if (grad_out.rows != cache.output.rows || grad_out.cols != fan_out_)
      throw ShapeMismatch("dense_backward: grad shape mismatch");
    Tensor2 gy = grad_out;
    if (act_ == Activation::ReLU) {
      for (std::size_t k = 0; k < gy.v.size(); ++k)
        if (cache.output.v[k] <= 0.0) gy.v[k] = 0.0;
    }
    Tensor2 gx(cache.input.rows, fan_in_);
    for (std::size_t r = 0; r < gy.rows; ++r) {
      const double* gyr = gy.row(r);
      const double* xr = cache.input.row(r);
      double* gxr = gx.row(r);
      for (std::size_t o = 0; o < fan_out_; ++o) g.b[o] += gyr[o];
      for (std::size_t i = 0; i < fan_in_; ++i) {
        const double* wi = &w_[i * fan_out_];
        double* gwi = &g.w[i * fan_out_];
        double acc = 0.0;
        const double xv = xr[i];
        for (std::size_t o = 0; o < fan_out_; ++o) {
          acc += gyr[o] * wi[o];
          gwi[o] += xv * gyr[o];
        }
        gxr[i] = acc;
      }
    }
    return gx;
  }

 private:
  std::size_t fan_in_ = 0, fan_out_ = 0;
  Activation act_ = Activation::None;
  std::vector<double> w_;
  std::vector<double> b_;
};

// Stack of dense layers sharing one forward/backward call.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t fan_in, const std::vector<std::size_t>& widths, Rng& rng,
      Activation last = Activation::ReLU) {
    std::size_t in = fan_in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      Activation act = (i + 1 == widths.size()) ? last : Activation::ReLU;
      layers_.emplace_back(in, widths[i], act, rng);
      in = widths[i];
    }
  }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }
  std::size_t fan_in() const { return layers_.front().fan_in(); }
  std::size_t fan_out() const { return layers_.back().fan_out(); }

  Tensor2 forward(const Tensor2& x, std::vector<DenseCache>* caches = nullptr) const {
    Tensor2 cur = x;
    if (caches) caches->resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i)
      cur = layers_[i].forward(cur, caches ? &(*caches)[i] : nullptr);
    return cur;
  }

  Tensor2 backward(const std::vector<DenseCache>& caches, const Tensor2& grad_out,
                   std::vector<DenseGrads>& grads) const {
    Tensor2 g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;)
      g = layers_[i].backward(caches[i], g, grads[i]);
    return g;
  }

  std::vector<DenseGrads> make_grads() const {
    std::vector<DenseGrads> g;
    g.reserve(layers_.size());
    for (const auto& l : layers_) g.push_back(l.make_grads());
    return g;
  }

 private:
  std::vector<DenseLayer> layers_;
};

struct MaxPoolCache {
  std::vector<std::size_t> argmax;  // groups x cols, row index into the input
  std::size_t in_rows = 0;
  std::size_t cols = 0;
};

// Channel-wise max over each group of input rows. Ties keep the first
// (lowest) row index; the backward pass routes gradient to the argmax row.
inline Tensor2 set_maxpool(const Tensor2& feats,
                           const std::vector<std::vector<std::size_t>>& groups,
                           MaxPoolCache* cache = nullptr) {
  Tensor2 out(groups.size(), feats.cols);
  if (cache) {
    cache->argmax.assign(groups.size() * feats.cols, 0);
    cache->in_rows = feats.rows;
    cache->cols = feats.cols;
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (grp.empty()) throw EmptyGroup("set_maxpool: empty group");
    double* o = out.row(g);
    const double* first = feats.row(grp[0]);
    for (std::size_t c = 0; c < feats.cols; ++c) o[c] = first[c];
    if (cache)
      for (std::size_t c = 0; c < feats.cols; ++c)
        cache->argmax[g * feats.cols + c] = grp[0];
    for (std::size_t j = 1; j < grp.size(); ++j) {
      const double* f = feats.row(grp[j]);
      for (std::size_t c = 0; c < feats.cols; ++c) {
        if (f[c] > o[c]) {
          o[c] = f[c];
          if (cache) cache->argmax[g * feats.cols + c] = grp[j];
        }
      }
    }
  }
  return out;
}

inline Tensor2 set_maxpool_backward(const MaxPoolCache& cache,
                                    const Tensor2& grad_out) {
  Tensor2 gx(cache.in_rows, cache.cols);
  for (std::size_t g = 0; g < grad_out.rows; ++g)
    for (std::size_t c = 0; c < cache.cols; ++c)
      gx(cache.argmax[g * cache.cols + c], c) += grad_out(g, c);
  return gx;
}

// Smooth-L1 (Huber, transition at 1): sum over elements. Optional gradient
// w.r.t. pred.
inline double smooth_l1(const std::vector<double>& pred,
                        const std::vector<double>& target,
                        std::vector<double>* grad = nullptr) {
  if (pred.size() != target.size())
    throw ShapeMismatch("smooth_l1: size mismatch");
  if (grad) grad->assign(pred.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    double ad = std::abs(d);
    if (ad <= 1.0) {
      loss += 0.5 * d * d;
      if (grad) (*grad)[i] = d;
    } else {
      loss += ad - 0.5;
      if (grad) (*grad)[i] = d > 0.0 ? 1.0 : -1.0;
    }
  }
  return loss;
}

// Softmax cross-entropy for one row of logits against an integer label.
inline double cross_entropy(const std::vector<double>& logits, std::size_t label,
                            std::vector<double>* grad = nullptr) {
  if (label >= logits.size()) throw ShapeMismatch("cross_entropy: label out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  double log_sum = std::log(sum) + mx;
  if (grad) {
    grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      (*grad)[i] = std::exp(logits[i] - log_sum);
      if (i == label) (*grad)[i] -= 1.0;
    }
  }
  return log_sum - logits[label];
}

// Central finite-difference check: perturbs every entry of every parameter
// block, recomputes the loss through `loss_fn`, and returns the worst
// relative error against the supplied analytic gradients.
inline double grad_check(const std::vector<std::vector<double>*>& params,
                         const std::vector<const std::vector<double>*>& analytic,
                         const std::function<double()>& loss_fn,
                         double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::vector<double>& p = *params[b];
    const std::vector<double>& a = *analytic[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double keep = p[i];
      p[i] = keep + step;
      double up = loss_fn();
      p[i] = keep - step;
      double dn = loss_fn();
      p[i] = keep;
      double numeric = (up - dn) / (2.0 * step);
      double denom = std::max({std::abs(numeric), std::abs(a[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - a[i]) / denom);
    }
  }
  return worst;
}

// Adam with bias correction. One state block per registered parameter vector.
class Adam {
 public:
  explicit Adam(double lr = 0.002, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void begin_step() { ++t_; }

  void update(std::size_t block_id, std::vector<double>& params,
              const std::vector<double>& grads) {
    if (state_.size() <= block_id) state_.resize(block_id + 1);
    auto& st = state_[block_id];
    if (st.m.size() != params.size()) {
      st.m.assign(params.size(), 0.0);
      st.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * grads[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * grads[i] * grads[i];
      double mhat = st.m[i] / c1;
      double vhat = st.v[i] / c2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<State> state_;
};

// ---- Checkpoint file: magic "RFN1", then per layer
// (fan_in: u32, fan_out: u32, f64 weights row-major, f64 biases),
// all little-endian. ----

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
      (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  return true;
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool read_f64(std::istream& is, double& d) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  std::memcpy(&d, &u, 8);
  return true;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<const DenseLayer*>& layers) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for write: " + path);
  os.write("RFN1", 4);
  for (const DenseLayer* l : layers) {
    detail::write_u32(os, static_cast<std::uint32_t>(l->fan_in()));
    detail::write_u32(os, static_cast<std::uint32_t>(l->fan_out()));
    for (double d : l->weights()) detail::write_f64(os, d);
    for (double d : l->bias()) detail::write_f64(os, d);
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

inline void load_checkpoint(const std::string& path,
                            const std::vector<DenseLayer*>& layers) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RFN1", 4) != 0)
    throw IncompatibleCheckpoint("bad checkpoint magic: " + path);
  for (DenseLayer* l : layers) {
    std::uint32_t fi = 0, fo = 0;
    if (!detail::read_u32(is, fi) || !detail::read_u32(is, fo))
      throw IncompatibleCheckpoint("checkpoint truncated: " + path);
    if (fi != l->fan_in() || fo != l->fan_out())
      throw IncompatibleCheckpoint(
          "layer shape mismatch: checkpoint " + std::to_string(fi) + "x" +
          std::to_string(fo) + " vs model " + std::to_string(l->fan_in()) + "x" +
          std::to_string(l->fan_out()));
    for (double& d : l->weights())
      if (!detail::read_f64(is, d))
        throw IncompatibleCheckpoint("checkpoint truncated: " + path);
    for (double& d : l->bias())
      if (!detail::read_f64(is, d))
        throw IncompatibleCheckpoint("checkpoint truncated: " + path);
  }
  // Trailing data means the checkpoint was written for a larger model.
  char extra;
  if (is.read(&extra, 1))
    throw IncompatibleCheckpoint("checkpoint has extra layers: " + path);
}

}  // namespace roifusion
