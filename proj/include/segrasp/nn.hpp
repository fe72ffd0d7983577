#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "segrasp/gemm.hpp"
#include "segrasp/rng.hpp"
#include "segrasp/tensor.hpp"

namespace segrasp {

struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct WeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename S>
struct ParamRef {
  std::string name;
  Tensor<S>* value;
  Tensor<S>* grad;
};

// ---- layers; activations are batch-major ([N,C,H,W] spatial, [N,F] flat)

template <typename S>
class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int k, int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
        W_({out_c, in_c * k * k}), b_({out_c}), dW_({out_c, in_c * k * k}), db_({out_c}) {}

  // spatial shape this layer produces for a given input
  static int out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
  }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.shape.size() != 4 || x.shape[1] != in_c_)
      throw ShapeError("conv2d: got " + shape_str(x.shape) + ", want [N," +
                       std::to_string(in_c_) + ",H,W]");
    N_ = x.shape[0];
    hi_ = x.shape[2];
    wi_ = x.shape[3];
    ho_ = out_extent(hi_, k_, stride_, pad_);
    wo_ = out_extent(wi_, k_, stride_, pad_);
    if (ho_ <= 0 || wo_ <= 0)
      throw ShapeError("conv2d: kernel " + std::to_string(k_) + " exceeds input " +
                       shape_str(x.shape));
    const int K = in_c_ * k_ * k_, P = ho_ * wo_;
    // scratch reused across calls; im2col writes every entry, pads included
    const size_t need = static_cast<size_t>(N_) * K * P;
    if (cols_.size() < need) cols_.resize(need);
    Tensor<S> y({N_, out_c_, ho_, wo_});
    for (int n = 0; n < N_; n++) {
      S* cols = cols_.data() + static_cast<size_t>(n) * K * P;
      im2col(x.data() + static_cast<size_t>(n) * in_c_ * hi_ * wi_, cols);
      S* yn = y.data() + static_cast<size_t>(n) * out_c_ * P;
      gemm(false, false, out_c_, P, K, S(1), W_.data(), K, cols, P, S(0), yn, P);
      for (int c = 0; c < out_c_; c++)
        for (int p = 0; p < P; p++) yn[static_cast<size_t>(c) * P + p] += b_.v[c];
    }
    has_fwd_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("conv2d: backward before forward");
    dy.require_shape({N_, out_c_, ho_, wo_}, "conv2d backward");
    const int K = in_c_ * k_ * k_, P = ho_ * wo_;
    Tensor<S> dx;
    if (input_grad_) {
      dx = Tensor<S>({N_, in_c_, hi_, wi_});
      if (dcols_.size() < static_cast<size_t>(K) * P) dcols_.resize(static_cast<size_t>(K) * P);
    }
    for (int n = 0; n < N_; n++) {
      const S* dyn = dy.data() + static_cast<size_t>(n) * out_c_ * P;
      const S* cols = cols_.data() + static_cast<size_t>(n) * K * P;
      gemm(false, true, out_c_, K, P, S(1), dyn, P, cols, P, S(1), dW_.data(), K);
      for (int c = 0; c < out_c_; c++)
        for (int p = 0; p < P; p++) db_.v[c] += dyn[static_cast<size_t>(c) * P + p];
      if (!input_grad_) continue;
      gemm(true, false, K, P, out_c_, S(1), W_.data(), K, dyn, P, S(0), dcols_.data(), P);
      col2im(dcols_.data(), dx.data() + static_cast<size_t>(n) * in_c_ * hi_ * wi_);
    }
    return dx;
  }

  // An input layer can skip its (unused) input gradient: the worst-shaped
  // GEMM of the backward pass plus a full col2im scatter.
  void set_input_grad(bool want) { input_grad_ = want; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".W", &W_, &dW_});
    out.push_back({prefix + ".b", &b_, &db_});
  }

  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }
  Tensor<S>& W() { return W_; }
  Tensor<S>& b() { return b_; }

 private:
  void im2col(const S* x, S* cols) const {
    const int P = ho_ * wo_;
    for (int c = 0; c < in_c_; c++)
      for (int ky = 0; ky < k_; ky++)
        for (int kx = 0; kx < k_; kx++) {
          S* row = cols + (static_cast<size_t>(c) * k_ * k_ + static_cast<size_t>(ky) * k_ + kx) * P;
          for (int oy = 0; oy < ho_; oy++) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= hi_) {
              std::fill(row + static_cast<size_t>(oy) * wo_, row + (static_cast<size_t>(oy) + 1) * wo_, S(0));
              continue;
            }
            const S* src = x + (static_cast<size_t>(c) * hi_ + iy) * wi_;
            for (int ox = 0; ox < wo_; ox++) {
              const int ix = ox * stride_ + kx - pad_;
              row[static_cast<size_t>(oy) * wo_ + ox] = (ix < 0 || ix >= wi_) ? S(0) : src[ix];
            }
          }
        }
  }

  void col2im(const S* cols, S* dx) const {
    for (int c = 0; c < in_c_; c++)
      for (int ky = 0; ky < k_; ky++)
        for (int kx = 0; kx < k_; kx++) {
          const S* row =
              cols + (static_cast<size_t>(c) * k_ * k_ + static_cast<size_t>(ky) * k_ + kx) * static_cast<size_t>(ho_) * wo_;
          for (int oy = 0; oy < ho_; oy++) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= hi_) continue;
            S* dst = dx + (static_cast<size_t>(c) * hi_ + iy) * wi_;
            for (int ox = 0; ox < wo_; ox++) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < wi_) dst[ix] += row[static_cast<size_t>(oy) * wo_ + ox];
            }
          }
        }
  }

  int in_c_, out_c_, k_, stride_, pad_;
  Tensor<S> W_, b_, dW_, db_;
  std::vector<S> cols_, dcols_;  // im2col scratch, grown once and reused
  int N_ = 0, hi_ = 0, wi_ = 0, ho_ = 0, wo_ = 0;
  bool has_fwd_ = false;
  bool input_grad_ = true;
};

template <typename S>
class Dense {
 public:
  Dense(int in, int out) : in_(in), out_(out), W_({out, in}), b_({out}), dW_({out, in}), db_({out}) {}

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.shape.size() != 2 || x.shape[1] != in_)
      throw ShapeError("dense: got " + shape_str(x.shape) + ", want [N," + std::to_string(in_) + "]");
    N_ = x.shape[0];
    x_ = x;
    Tensor<S> y({N_, out_});
    gemm(false, true, N_, out_, in_, S(1), x.data(), in_, W_.data(), in_, S(0), y.data(), out_);
    for (int n = 0; n < N_; n++)
      for (int o = 0; o < out_; o++) y.v[static_cast<size_t>(n) * out_ + o] += b_.v[o];
    has_fwd_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("dense: backward before forward");
    dy.require_shape({N_, out_}, "dense backward");
    gemm(true, false, out_, in_, N_, S(1), dy.data(), out_, x_.data(), in_, S(1), dW_.data(), in_);
    for (int n = 0; n < N_; n++)
      for (int o = 0; o < out_; o++) db_.v[o] += dy.v[static_cast<size_t>(n) * out_ + o];
    Tensor<S> dx({N_, in_});
    gemm(false, false, N_, in_, out_, S(1), dy.data(), out_, W_.data(), in_, S(0), dx.data(), in_);
    return dx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".W", &W_, &dW_});
    out.push_back({prefix + ".b", &b_, &db_});
  }

  int in() const { return in_; }
  int out() const { return out_; }
  Tensor<S>& W() { return W_; }
  Tensor<S>& b() { return b_; }

 private:
  int in_, out_;
  Tensor<S> W_, b_, dW_, db_;
  Tensor<S> x_;
  int N_ = 0;
  bool has_fwd_ = false;
};

template <typename S>
class ReLU {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    x_ = x;
    Tensor<S> y = x;
    for (S& v : y.v) v = v > S(0) ? v : S(0);
    has_fwd_ = true;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("relu: backward before forward");
    dy.require_shape(x_.shape, "relu backward");
    Tensor<S> dx = dy;
    for (size_t i = 0; i < dx.size(); i++)
      if (x_.v[i] <= S(0)) dx.v[i] = S(0);
    return dx;
  }

 private:
  Tensor<S> x_;
  bool has_fwd_ = false;
};

template <typename S>
class Tanh {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    y_ = x;
    for (S& v : y_.v) v = std::tanh(v);
    has_fwd_ = true;
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("tanh: backward before forward");
    dy.require_shape(y_.shape, "tanh backward");
    Tensor<S> dx = dy;
    for (size_t i = 0; i < dx.size(); i++) dx.v[i] *= S(1) - y_.v[i] * y_.v[i];
    return dx;
  }

 private:
  Tensor<S> y_;
  bool has_fwd_ = false;
};

template <typename S>
class Sigmoid {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    y_ = x;
    for (S& v : y_.v) v = S(1) / (S(1) + std::exp(-v));
    has_fwd_ = true;
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("sigmoid: backward before forward");
    dy.require_shape(y_.shape, "sigmoid backward");
    Tensor<S> dx = dy;
    for (size_t i = 0; i < dx.size(); i++) dx.v[i] *= y_.v[i] * (S(1) - y_.v[i]);
    return dx;
  }

 private:
  Tensor<S> y_;
  bool has_fwd_ = false;
};

template <typename S>
class Flatten {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    if (x.shape.size() < 2) throw ShapeError("flatten: got " + shape_str(x.shape));
    in_shape_ = x.shape;
    int f = 1;
    for (size_t i = 1; i < x.shape.size(); i++) f *= x.shape[i];
    Tensor<S> y = x;
    y.shape = {x.shape[0], f};
    has_fwd_ = true;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    if (!has_fwd_) throw UsageError("flatten: backward before forward");
    Tensor<S> dx = dy;
    dx.shape = in_shape_;
    return dx;
  }

 private:
  std::vector<int> in_shape_;
  bool has_fwd_ = false;
};

// ---- sequential container built from a declarative spec

enum class LayerKind { kConv2d, kDense, kRelu, kTanh, kSigmoid, kFlatten, kConcat };

struct LayerSpec {
  LayerKind kind;
  int filters = 0, kernel = 0, stride = 1, pad = 0;  // conv2d
  int units = 0;                                     // dense

  static LayerSpec conv2d(int filters, int kernel, int stride, int pad) {
    return {LayerKind::kConv2d, filters, kernel, stride, pad, 0};
  }
  static LayerSpec dense(int units) { return {LayerKind::kDense, 0, 0, 1, 0, units}; }
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec tanh() { return {LayerKind::kTanh}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten}; }
};

// He-uniform before ReLU, Xavier-uniform before tanh/sigmoid (or at the end).
template <typename S>
void init_uniform(Tensor<S>& W, int fan_in, int fan_out, bool feeds_relu, Rng& rng) {
  const double limit =
      feeds_relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
  for (S& v : W.v) v = static_cast<S>(rng.uniform(-limit, limit));
}

template <typename S>
class Sequential {
 public:
  using LayerVar = std::variant<Conv2d<S>, Dense<S>, ReLU<S>, Tanh<S>, Sigmoid<S>, Flatten<S>>;

  // Validates the whole chain against the per-sample input shape up front
  // and initializes weights from the given stream.
  Sequential(const std::vector<LayerSpec>& specs, std::vector<int> in_shape, Rng rng) {
    std::vector<int> shape = std::move(in_shape);  // per-sample, no batch dim
    in_shape_ = shape;
    for (size_t i = 0; i < specs.size(); i++) {
      const LayerSpec& sp = specs[i];
      const bool feeds_relu = i + 1 < specs.size() && specs[i + 1].kind == LayerKind::kRelu;
      switch (sp.kind) {
        case LayerKind::kConv2d: {
          if (shape.size() != 3)
            throw ShapeError("conv2d needs [C,H,W] input, got " + shape_str(shape));
          Conv2d<S> c(shape[0], sp.filters, sp.kernel, sp.stride, sp.pad);
          const int ho = Conv2d<S>::out_extent(shape[1], sp.kernel, sp.stride, sp.pad);
          const int wo = Conv2d<S>::out_extent(shape[2], sp.kernel, sp.stride, sp.pad);
          if (ho <= 0 || wo <= 0)
            throw ShapeError("conv2d kernel " + std::to_string(sp.kernel) + " too large for " +
                             shape_str(shape));
          init_uniform(c.W(), shape[0] * sp.kernel * sp.kernel, sp.filters * sp.kernel * sp.kernel,
                       feeds_relu, rng);
          shape = {sp.filters, ho, wo};
          layers_.emplace_back(std::move(c));
          break;
        }
        case LayerKind::kDense: {
          if (shape.size() != 1)
            throw ShapeError("dense needs flat input, got " + shape_str(shape));
          Dense<S> d(shape[0], sp.units);
          init_uniform(d.W(), shape[0], sp.units, feeds_relu, rng);
          shape = {sp.units};
          layers_.emplace_back(std::move(d));
          break;
        }
        case LayerKind::kRelu: layers_.emplace_back(ReLU<S>{}); break;
        case LayerKind::kTanh: layers_.emplace_back(Tanh<S>{}); break;
        case LayerKind::kSigmoid: layers_.emplace_back(Sigmoid<S>{}); break;
        case LayerKind::kFlatten: {
          int f = 1;
          for (int e : shape) f *= e;
          shape = {f};
          layers_.emplace_back(Flatten<S>{});
          break;
        }
        case LayerKind::kConcat:
          throw ShapeError("concat is a network-level join, not a sequential layer");
      }
    }
    out_shape_ = shape;
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> h = x;
    for (LayerVar& l : layers_)
      h = std::visit([&](auto& layer) { return layer.forward(h); }, l);
    return h;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = std::visit([&](auto& layer) { return layer.backward(g); }, *it);
    return g;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    int idx = 0;
    for (LayerVar& l : layers_) {
      const std::string name = prefix + "." + std::to_string(idx++);
      std::visit(
          [&](auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Conv2d<S>> || std::is_same_v<T, Dense<S>>)
              layer.collect_params(name, out);
          },
          l);
    }
  }

  // For chains whose input is data (not an upstream activation): the first
  // conv layer stops producing its input gradient.
  void skip_input_grad() {
    if (!layers_.empty())
      if (auto* c = std::get_if<Conv2d<S>>(&layers_.front())) c->set_input_grad(false);
  }

  const std::vector<int>& in_shape() const { return in_shape_; }
  const std::vector<int>& out_shape() const { return out_shape_; }
  std::vector<LayerVar>& layers() { return layers_; }

 private:
  std::vector<LayerVar> layers_;
  std::vector<int> in_shape_;
  std::vector<int> out_shape_;
};

// ---- losses

template <typename S>
S squared_l2(const Tensor<S>& pred, const Tensor<S>& target) {
  pred.require_shape(target.shape, "squared_l2");
  S s = 0;
  for (size_t i = 0; i < pred.size(); i++) {
    const S d = pred.v[i] - target.v[i];
    s += d * d;
  }
  return s;
}

template <typename S>
Tensor<S> squared_l2_grad(const Tensor<S>& pred, const Tensor<S>& target) {
  pred.require_shape(target.shape, "squared_l2");
  Tensor<S> g(pred.shape);
  for (size_t i = 0; i < pred.size(); i++) g.v[i] = S(2) * (pred.v[i] - target.v[i]);
  return g;
}

template <typename S>
S bce_clamp(S p) {
  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  return p < lo ? lo : (p > hi ? hi : p);
}

// mean over every entry, probabilities clamped away from {0,1}
template <typename S>
S bce(const Tensor<S>& prob, const Tensor<S>& target) {
  prob.require_shape(target.shape, "bce");
  double s = 0;
  for (size_t i = 0; i < prob.size(); i++) {
    const double p = bce_clamp(prob.v[i]);
    const double t = target.v[i];
    s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return static_cast<S>(s / prob.size());
}

template <typename S>
Tensor<S> bce_grad(const Tensor<S>& prob, const Tensor<S>& target) {
  prob.require_shape(target.shape, "bce");
  Tensor<S> g(prob.shape);
  const S inv_n = S(1) / static_cast<S>(prob.size());
  for (size_t i = 0; i < prob.size(); i++) {
    const S p = bce_clamp(prob.v[i]);
    g.v[i] = inv_n * (p - target.v[i]) / (p * (S(1) - p));
  }
  return g;
}

// ---- optimizer

template <typename S>
class Adam {
 public:
  Adam(double lr, double b1, double b2, double eps) : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void init(const std::vector<ParamRef<S>>& params) {
    m_.clear();
    v_.clear();
    for (const ParamRef<S>& p : params) {
      m_.emplace_back(p.value->shape);
      v_.emplace_back(p.value->shape);
    }
    t_ = 0;
  }

  void step(const std::vector<ParamRef<S>>& params) {
    if (m_.size() != params.size()) throw UsageError("adam: step before init");
    t_++;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); i++) {
      Tensor<S>& val = *params[i].value;
      const Tensor<S>& g = *params[i].grad;
      g.require_shape(val.shape, "adam");
      for (size_t j = 0; j < val.size(); j++) {
        m_[i].v[j] = static_cast<S>(b1_) * m_[i].v[j] + static_cast<S>(1 - b1_) * g.v[j];
        v_[i].v[j] = static_cast<S>(b2_) * v_[i].v[j] + static_cast<S>(1 - b2_) * g.v[j] * g.v[j];
        const double mhat = m_[i].v[j] / c1;
        const double vhat = v_[i].v[j] / c2;
        val.v[j] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long long step_count() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

  void save(std::ostream& f) const {
    const uint64_t n = m_.size(), t = static_cast<uint64_t>(t_);
    f.write(reinterpret_cast<const char*>(&t), 8);
    f.write(reinterpret_cast<const char*>(&n), 8);
    for (size_t i = 0; i < m_.size(); i++) {
      write_tensor(f, m_[i]);
      write_tensor(f, v_[i]);
    }
  }

  void load(std::istream& f) {
    uint64_t t = 0, n = 0;
    f.read(reinterpret_cast<char*>(&t), 8);
    f.read(reinterpret_cast<char*>(&n), 8);
    if (!f || n != m_.size()) throw WeightsError("adam state does not match this network");
    t_ = static_cast<long long>(t);
    for (size_t i = 0; i < m_.size(); i++) {
      read_tensor(f, m_[i]);
      read_tensor(f, v_[i]);
    }
    if (!f) throw WeightsError("truncated adam state");
  }

 private:
  static void write_tensor(std::ostream& f, const Tensor<S>& t) {
    for (S x : t.v) {
      const float fx = static_cast<float>(x);
      f.write(reinterpret_cast<const char*>(&fx), 4);
    }
  }
  static void read_tensor(std::istream& f, Tensor<S>& t) {
    for (S& x : t.v) {
      float fx;
      f.read(reinterpret_cast<char*>(&fx), 4);
      x = static_cast<S>(fx);
    }
  }

  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

// ---- weight persistence: magic, version, manifest, then f32 payload

inline constexpr char kWeightsMagic[8] = {'S', 'G', 'R', 'A', 'S', 'P', 'W', '1'};
inline constexpr uint32_t kWeightsVersion = 1;

template <typename S>
void save_weights(const std::vector<ParamRef<S>>& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WeightsError("cannot open for write: " + path);
  f.write(kWeightsMagic, 8);
  f.write(reinterpret_cast<const char*>(&kWeightsVersion), 4);
  const uint32_t n = static_cast<uint32_t>(params.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (const ParamRef<S>& p : params) {
    const uint32_t len = static_cast<uint32_t>(p.name.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(p.name.data(), len);
    const uint32_t nd = static_cast<uint32_t>(p.value->shape.size());
    f.write(reinterpret_cast<const char*>(&nd), 4);
    for (int e : p.value->shape) {
      const int32_t e32 = e;
      f.write(reinterpret_cast<const char*>(&e32), 4);
    }
  }
  for (const ParamRef<S>& p : params)
    for (S x : p.value->v) {
      const float fx = static_cast<float>(x);
      f.write(reinterpret_cast<const char*>(&fx), 4);
    }
  if (!f) throw WeightsError("write failed: " + path);
}

// Loads into an existing network after validating the manifest against its
// parameter list; nothing is modified unless the whole file checks out.
template <typename S>
void load_weights(const std::vector<ParamRef<S>>& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightsError("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kWeightsMagic, 8) != 0)
    throw WeightsError("not a weights file: " + path);
  uint32_t version = 0, n = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&n), 4);
  if (!f || version != kWeightsVersion)
    throw WeightsError("unsupported weights version " + std::to_string(version) + " in " + path);
  if (n != params.size())
    throw WeightsError("manifest mismatch: file has " + std::to_string(n) + " tensors, network has " +
                       std::to_string(params.size()));
  for (const ParamRef<S>& p : params) {
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    if (!f || len > 4096) throw WeightsError("corrupt manifest in " + path);
    std::string name(len, '\0');
    f.read(name.data(), len);
    uint32_t nd = 0;
    f.read(reinterpret_cast<char*>(&nd), 4);
    if (!f || nd > 8) throw WeightsError("corrupt manifest in " + path);
    std::vector<int> shape(nd);
    for (uint32_t d = 0; d < nd; d++) {
      int32_t e = 0;
      f.read(reinterpret_cast<char*>(&e), 4);
      shape[d] = e;
    }
    if (!f) throw WeightsError("truncated manifest in " + path);
    if (name != p.name || shape != p.value->shape)
      throw WeightsError("manifest mismatch: file has " + name + shape_str(shape) +
                         ", network wants " + p.name + shape_str(p.value->shape));
  }
  // stage the full payload before committing any of it
  std::vector<std::vector<float>> staged;
  staged.reserve(params.size());
  for (const ParamRef<S>& p : params) {
    std::vector<float> buf(p.value->size());
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (static_cast<size_t>(f.gcount()) != buf.size() * 4)
      throw WeightsError("truncated payload in " + path);
    staged.push_back(std::move(buf));
  }
  for (size_t i = 0; i < params.size(); i++)
    for (size_t j = 0; j < staged[i].size(); j++)
      params[i].value->v[j] = static_cast<S>(staged[i][j]);
}

// ---- finite-difference gradient verification

// Call after one backward pass has filled the grads. Central differences on
// up to `samples` parameters, spread across every tensor; returns the max
// relative disagreement (denominator floored at 1e-6).
template <typename S, typename LossFn>
double gradcheck_max_rel(const std::vector<ParamRef<S>>& params, LossFn compute_loss, double h,
                         int samples, Rng rng) {
  std::vector<std::pair<size_t, size_t>> picks;
  const size_t per = std::max<size_t>(1, static_cast<size_t>(samples) / std::max<size_t>(1, params.size()));
  for (size_t i = 0; i < params.size(); i++) {
    const size_t n = params[i].value->size();
    for (size_t s = 0; s < std::min(per, n); s++) picks.emplace_back(i, rng.next_below(n));
  }
  double worst = 0;
  for (const auto& [pi, j] : picks) {
    S& slot = params[pi].value->v[j];
    const S saved = slot;
    slot = saved + static_cast<S>(h);
    const double lp = static_cast<double>(compute_loss());
    slot = saved - static_cast<S>(h);
    const double lm = static_cast<double>(compute_loss());
    slot = saved;
    const double fd = (lp - lm) / (2 * h);
    const double bp = static_cast<double>(params[pi].grad->v[j]);
    const double rel = std::abs(fd - bp) / std::max(std::abs(fd) + std::abs(bp), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace segrasp
