#pragma once
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "segrasp/camera.hpp"
#include "segrasp/config.hpp"
#include "segrasp/image.hpp"
#include "segrasp/nn.hpp"
#include "segrasp/render.hpp"
#include "segrasp/rng.hpp"

namespace segrasp {

// ---- HSV-threshold baseline

struct HsvThreshold {
  double h_lo = 45, h_hi = 75;  // degrees; lo > hi wraps through 0
  double s_min = 0.4, v_min = 0.3;  // floor sits just under the ambient-lit sphere's 0.315
};

inline HsvThreshold hsv_threshold_from(const RunConfig& cfg) {
  return {cfg.hsv_h_lo, cfg.hsv_h_hi, cfg.hsv_s_min, cfg.hsv_v_min};
}

inline bool hsv_passes(const Hsv& c, const HsvThreshold& th) {
  return c.s >= th.s_min && c.v >= th.v_min && hue_in_band(c.h, th.h_lo, th.h_hi);
}

// full-resolution per-pixel decision map
inline Bitmap hsv_decision_map(const RgbImage& img, const HsvThreshold& th) {
  Bitmap m(img.w, img.h);
  for (int y = 0; y < img.h; y++)
    for (int x = 0; x < img.w; x++) {
      const float* p = img.px(y, x);
      if (hsv_passes(rgb_to_hsv(p[0], p[1], p[2]), th)) m.at(y, x) = 1;
    }
  return m;
}

inline SegMask hsv_threshold_segment(const RgbImage& img, const HsvThreshold& th) {
  return majority_pool(hsv_decision_map(img, th), kMaskSize, kMaskSize);
}

// ---- global HSV shift (lighting / camera gain / color balance stand-in)

struct HsvJitter {
  double dh = 0;          // degrees, wraps
  double ds = 0, dv = 0;  // added, then clamped to [0,1]
};

inline void apply_hsv_shift(RgbImage& img, const HsvJitter& j) {
  for (size_t i = 0; i < img.v.size(); i += 3) {
    Hsv c = rgb_to_hsv(img.v[i], img.v[i + 1], img.v[i + 2]);
    c.h = std::fmod(std::fmod(c.h + j.dh, 360.0) + 360.0, 360.0);
    c.s = clamp(c.s + j.ds, 0.0, 1.0);
    c.v = clamp(c.v + j.dv, 0.0, 1.0);
    double r, g, b;
    hsv_to_rgb(c, r, g, b);
    img.v[i] = static_cast<float>(clamp(r, 0.0, 1.0));
    img.v[i + 1] = static_cast<float>(clamp(g, 0.0, 1.0));
    img.v[i + 2] = static_cast<float>(clamp(b, 0.0, 1.0));
  }
}

// uniform jitter half-ranges; the value range is kept asymmetric so a
// shadow-heavy split can force darkening only
struct JitterSpec {
  double h = 15.0, s = 0.15;
  double v_lo = -0.3, v_hi = 0.3;
};

inline JitterSpec jitter_from(const RunConfig& cfg) {
  return {cfg.jitter_h, cfg.jitter_s, -cfg.jitter_v, cfg.jitter_v};
}

inline JitterSpec shadow_jitter_from(const RunConfig& cfg) {
  return {cfg.jitter_h, cfg.jitter_s, cfg.shadow_v_lo, cfg.shadow_v_hi};
}

inline HsvJitter draw_jitter(const JitterSpec& js, Rng& rng) {
  return {rng.uniform(-js.h, js.h), rng.uniform(-js.s, js.s), rng.uniform(js.v_lo, js.v_hi)};
}

// ---- compositing

inline RgbImage composite_blend(const RgbImage& fg, const std::vector<float>& alpha,
                                const RgbImage& bg) {
  if (fg.w != bg.w || fg.h != bg.h)
    throw ImageError("composite: foreground " + std::to_string(fg.w) + "x" +
                     std::to_string(fg.h) + " vs background " + std::to_string(bg.w) + "x" +
                     std::to_string(bg.h));
  if (alpha.size() != static_cast<size_t>(fg.w) * fg.h)
    throw ImageError("composite: alpha size does not match the images");
  RgbImage out(fg.w, fg.h);
  for (size_t p = 0, i = 0; p < alpha.size(); p++, i += 3) {
    const float a = alpha[p];
    for (int ch = 0; ch < 3; ch++) out.v[i + ch] = a * fg.v[i + ch] + (1.f - a) * bg.v[i + ch];
  }
  return out;
}

inline std::vector<float> alpha_from_cover(const std::vector<uint8_t>& cover) {
  std::vector<float> a(cover.size());
  for (size_t i = 0; i < cover.size(); i++) a[i] = cover[i] ? 1.f : 0.f;
  return a;
}

struct CompositeSample {
  RgbImage image;    // blended, then globally HSV-shifted
  SegMask truth;     // full-res sphere visibility, majority-pooled to 100x100
  HsvJitter jitter;  // the shift that was applied
  // generation metadata, carried into dataset manifests
  bool has_sphere = false;
  Vec3 sphere_cam;  // camera-frame center
  uint64_t seed = 0;
};

inline CompositeSample composite_sample(const FgRender& fg, const Bitmap& truth_full,
                                        const RgbImage& bg, const JitterSpec& js, uint64_t seed) {
  if (truth_full.w != fg.rgb.w || truth_full.h != fg.rgb.h)
    throw ImageError("composite: truth mask " + std::to_string(truth_full.w) + "x" +
                     std::to_string(truth_full.h) + " vs render " + std::to_string(fg.rgb.w) +
                     "x" + std::to_string(fg.rgb.h));
  CompositeSample s;
  s.image = composite_blend(fg.rgb, alpha_from_cover(fg.cover), bg);
  Rng rng(seed);
  s.jitter = draw_jitter(js, rng);
  apply_hsv_shift(s.image, s.jitter);
  s.truth = majority_pool(truth_full, kMaskSize, kMaskSize);
  s.seed = seed;
  return s;
}

// ---- procedural backgrounds

enum class BackgroundKind { kSolid = 0, kGradient, kPerlin, kChecker, kClutter };
inline constexpr int kBackgroundKindCount = 5;

inline const char* background_kind_name(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kSolid: return "solid";
    case BackgroundKind::kGradient: return "gradient";
    case BackgroundKind::kPerlin: return "perlin-noise";
    case BackgroundKind::kChecker: return "checker";
    default: return "clutter-blobs";
  }
}

namespace detail {

// hue drawn uniformly from the arc staying >=5 degrees clear of the pass band
inline double hue_outside_band(Rng& rng, const RunConfig& cfg) {
  const double lo = cfg.hsv_h_lo - 5.0, hi = cfg.hsv_h_hi + 5.0;
  return std::fmod(hi + rng.next_double() * (lo + 360.0 - hi), 360.0);
}

inline void fill_solid(RgbImage& img, const Hsv& c) {
  double r, g, b;
  hsv_to_rgb(c, r, g, b);
  for (size_t i = 0; i < img.v.size(); i += 3) {
    img.v[i] = static_cast<float>(r);
    img.v[i + 1] = static_cast<float>(g);
    img.v[i + 2] = static_cast<float>(b);
  }
}

inline double lattice01(uint64_t seed, int gx, int gy) {
  const uint64_t cell = (static_cast<uint64_t>(static_cast<uint32_t>(gx)) << 32) |
                        static_cast<uint32_t>(gy);
  return static_cast<double>(splitmix64(hash_combine(seed, cell)) >> 11) * 0x1.0p-53;
}

// smoothstep-interpolated value noise
inline double value_noise(uint64_t seed, double x, double y) {
  const int ix = static_cast<int>(std::floor(x)), iy = static_cast<int>(std::floor(y));
  const double fx = x - ix, fy = y - iy;
  auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double u = fade(fx), w = fade(fy);
  const double top = lattice01(seed, ix, iy) * (1 - u) + lattice01(seed, ix + 1, iy) * u;
  const double bot = lattice01(seed, ix, iy + 1) * (1 - u) + lattice01(seed, ix + 1, iy + 1) * u;
  return top * (1 - w) + bot * w;
}

inline void draw_blob(RgbImage& img, double cx, double cy, double rx, double ry, double ang,
                      const Hsv& c) {
  double r, g, b;
  hsv_to_rgb(c, r, g, b);
  const float fr = static_cast<float>(r), fg = static_cast<float>(g), fb = static_cast<float>(b);
  const double ct = std::cos(ang), st = std::sin(ang);
  const double rad = std::max(rx, ry);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rad)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - rad)));
  const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + rad)));
  const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + rad)));
  for (int y = y0; y <= y1; y++)
    for (int x = x0; x <= x1; x++) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double a = (dx * ct + dy * st) / rx, q = (-dx * st + dy * ct) / ry;
      if (a * a + q * q > 1.0) continue;
      float* px = img.px(y, x);
      px[0] = fr;
      px[1] = fg;
      px[2] = fb;
    }
}

}  // namespace detail

// Seeded 400x400 backdrops. All kinds except clutter-blobs keep every hue
// clear of the sphere band; clutter-blobs plants at least one sphere-hued
// distractor to exercise color confusion.
inline RgbImage generate_background(BackgroundKind kind, uint64_t seed, const RunConfig& cfg) {
  const int n = cfg.cam_rgb_size;
  RgbImage img(n, n);
  Rng rng = Rng(seed).derive(0x62616b67ull);
  switch (kind) {
    case BackgroundKind::kSolid: {
      detail::fill_solid(
          img, {detail::hue_outside_band(rng, cfg), rng.uniform(0.1, 0.9), rng.uniform(0.25, 1.0)});
      break;
    }
    case BackgroundKind::kGradient: {
      // fixed hue and saturation, value ramp along a seeded direction (linear
      // blends of same-hue colors stay on that hue)
      const double h = detail::hue_outside_band(rng, cfg), s = rng.uniform(0.2, 0.9);
      const double v0 = rng.uniform(0.15, 0.5), v1 = rng.uniform(0.55, 1.0);
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      const double dx = std::cos(ang), dy = std::sin(ang);
      double tmin = 0, tmax = 0;
      for (int cy = 0; cy < 2; cy++)
        for (int cx = 0; cx < 2; cx++) {
          const double t = cx * (n - 1) * dx + cy * (n - 1) * dy;
          tmin = std::min(tmin, t);
          tmax = std::max(tmax, t);
        }
      const double span = std::max(tmax - tmin, 1e-9);
      for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) {
          const double t = (x * dx + y * dy - tmin) / span;
          double r, g, b;
          hsv_to_rgb({h, s, v0 + (v1 - v0) * t}, r, g, b);
          float* px = img.px(y, x);
          px[0] = static_cast<float>(r);
          px[1] = static_cast<float>(g);
          px[2] = static_cast<float>(b);
        }
      break;
    }
    case BackgroundKind::kPerlin: {
      const double h = detail::hue_outside_band(rng, cfg), s = rng.uniform(0.2, 0.8);
      const uint64_t ns = rng.next_u64();
      const double cell = rng.uniform(0.08, 0.2) * n;
      for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) {
          const double z = 0.65 * detail::value_noise(ns, x / cell, y / cell) +
                           0.35 * detail::value_noise(ns ^ 0x9e3779b97f4a7c15ull, 2.0 * x / cell,
                                                      2.0 * y / cell);
          double r, g, b;
          hsv_to_rgb({h, s, 0.2 + 0.75 * z}, r, g, b);
          float* px = img.px(y, x);
          px[0] = static_cast<float>(r);
          px[1] = static_cast<float>(g);
          px[2] = static_cast<float>(b);
        }
      break;
    }
    case BackgroundKind::kChecker: {
      double ca[2][3];
      for (int i = 0; i < 2; i++) {
        const Hsv c{detail::hue_outside_band(rng, cfg), rng.uniform(0.2, 0.9),
                    rng.uniform(0.25, 1.0)};
        hsv_to_rgb(c, ca[i][0], ca[i][1], ca[i][2]);
      }
      const int cellpx = std::max(8, static_cast<int>(rng.uniform(0.05, 0.2) * n));
      for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) {
          const double* c = ca[((x / cellpx) + (y / cellpx)) & 1];
          float* px = img.px(y, x);
          px[0] = static_cast<float>(c[0]);
          px[1] = static_cast<float>(c[1]);
          px[2] = static_cast<float>(c[2]);
        }
      break;
    }
    case BackgroundKind::kClutter: {
      detail::fill_solid(img, {detail::hue_outside_band(rng, cfg), rng.uniform(0.1, 0.7),
                               rng.uniform(0.3, 0.9)});
      const int blobs = 5 + static_cast<int>(rng.next_below(7));
      for (int i = 0; i < blobs; i++)
        detail::draw_blob(img, rng.uniform(0, n), rng.uniform(0, n),
                          rng.uniform(0.04, 0.17) * n, rng.uniform(0.04, 0.17) * n,
                          rng.uniform(0.0, kPi), {detail::hue_outside_band(rng, cfg),
                          rng.uniform(0.2, 1.0), rng.uniform(0.3, 1.0)});
      // the sphere-hued distractor goes last so nothing paints over it
      const auto sc = cfg.sphere_color;
      const double sphere_hue = rgb_to_hsv(sc[0], sc[1], sc[2]).h;
      const double hue = std::fmod(std::fmod(sphere_hue + rng.uniform(-15.0, 15.0), 360.0) +
                                   360.0, 360.0);
      detail::draw_blob(img, rng.uniform(0.2, 0.8) * n, rng.uniform(0.2, 0.8) * n,
                        rng.uniform(0.045, 0.17) * n, rng.uniform(0.045, 0.17) * n,
                        rng.uniform(0.0, kPi), {hue, rng.uniform(0.5, 1.0),
                        rng.uniform(0.4, 1.0)});
      break;
    }
  }
  return img;
}

// ---- the five-conv segmentation net: 400 -> 200 -> 100 -> 100 -> 100 -> 100

template <typename S>
Sequential<S> make_vision_net(uint64_t seed, int in_size = 400) {
  const std::vector<LayerSpec> spec = {
      LayerSpec::conv2d(8, 5, 2, 2),  LayerSpec::relu(),
      LayerSpec::conv2d(16, 5, 2, 2), LayerSpec::relu(),
      LayerSpec::conv2d(16, 3, 1, 1), LayerSpec::relu(),
      LayerSpec::conv2d(16, 3, 1, 1), LayerSpec::relu(),
      LayerSpec::conv2d(1, 1, 1, 0),  LayerSpec::sigmoid(),
  };
  Sequential<S> net(spec, {3, in_size, in_size}, Rng(seed).derive(0x76697336ull));
  net.skip_input_grad();  // pixels never receive gradients
  return net;
}

// interleaved [0,1] image -> planar [3,H,W] scalars
template <typename S>
void rgb_into(const RgbImage& img, S* dst) {
  const size_t plane = static_cast<size_t>(img.w) * img.h;
  for (size_t p = 0; p < plane; p++)
    for (int c = 0; c < 3; c++) dst[c * plane + p] = static_cast<S>(img.v[p * 3 + c]);
}

template <typename S>
void rgb_into(const Rgb8Image& img, S* dst) {
  const size_t plane = static_cast<size_t>(img.w) * img.h;
  const S k = S(1) / S(255);
  for (size_t p = 0; p < plane; p++)
    for (int c = 0; c < 3; c++) dst[c * plane + p] = k * static_cast<S>(img.v[p * 3 + c]);
}

// probability >= 0.5 maps to 1 (so an all-zero net yields an all-ones mask)
template <typename S>
SegMask segment(Sequential<S>& net, const RgbImage& img) {
  const std::vector<int>& in = net.in_shape();
  if (img.w != in[2] || img.h != in[1])
    throw ImageError("segment: expected " + std::to_string(in[2]) + "x" + std::to_string(in[1]) +
                     " input, got " + std::to_string(img.w) + "x" + std::to_string(img.h));
  Tensor<S> x({1, 3, img.h, img.w});
  rgb_into(img, x.data());
  const Tensor<S> y = net.forward(x);
  SegMask m(y.shape[3], y.shape[2]);
  for (size_t i = 0; i < y.size(); i++) m.v[i] = y.v[i] >= S(0.5) ? 1 : 0;
  return m;
}

// ---- aggregate pixel metrics

struct PixelMetrics {
  uint64_t tp = 0, fp = 0, fn = 0;
  double precision = 1, recall = 1, iou = 1;
};

inline PixelMetrics evaluate_precision_recall(const std::vector<SegMask>& pred,
                                              const std::vector<SegMask>& truth) {
  if (pred.size() != truth.size())
    throw UsageError("evaluate_precision_recall: " + std::to_string(pred.size()) +
                     " predictions vs " + std::to_string(truth.size()) + " truths");
  PixelMetrics m;
  for (size_t i = 0; i < pred.size(); i++) {
    if (pred[i].w != truth[i].w || pred[i].h != truth[i].h)
      throw UsageError("evaluate_precision_recall: mask " + std::to_string(i) +
                       " dimensions differ");
    for (size_t j = 0; j < pred[i].v.size(); j++) {
      const int p = pred[i].v[j], t = truth[i].v[j];
      m.tp += p & t;
      m.fp += p & ~t & 1;
      m.fn += ~p & t & 1;
    }
  }
  auto ratio = [](uint64_t num, uint64_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 1.0;
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.iou = ratio(m.tp, m.tp + m.fp + m.fn);
  return m;
}

// single-pair IoU, empty-vs-empty counting as a perfect 1
inline double mask_iou(const SegMask& a, const SegMask& b) {
  if (a.w != b.w || a.h != b.h) throw UsageError("mask_iou: dimensions differ");
  uint64_t inter = 0, uni = 0;
  for (size_t j = 0; j < a.v.size(); j++) {
    inter += a.v[j] & b.v[j];
    uni += (a.v[j] | b.v[j]) & 1;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

// ---- composite generation around the wrist camera

// camera at the origin looking along +z, image x right, image y down
inline CameraFrame canonical_camera() {
  return {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
}

// The scene light as the canonical camera sees it. The configured direction
// points up in the world; a wrist camera faces the table during a grasp, so
// in its frame the light comes from behind the lens (negative view-axis
// component) and the surfaces it images are the lit ones.
inline Vec3 camera_light(const RunConfig& cfg) {
  return normalized({cfg.light_dir[0], cfg.light_dir[1], -cfg.light_dir[2]});
}

// the gripper as its own camera sees it: fingers run along the view axis,
// tips at the tool point (cam_back_offset in front of the lens)
inline SceneGeom gripper_scene(const RunConfig& cfg, bool closed) {
  SceneGeom g;
  g.has_gripper = true;
  const double half = 0.5 * (closed ? cfg.finger_span_closed : cfg.finger_span_open);
  for (int j = 0; j < 2; j++) {
    const double x = j == 0 ? half : -half;
    g.fingers[j].b = {x, 0, cfg.cam_back_offset};
    g.fingers[j].a = {x, 0, cfg.cam_back_offset - cfg.finger_length};
    g.fingers[j].r = cfg.finger_radius;
  }
  return g;
}

// One simulated view: the sphere is placed by back-projecting a random pixel
// at a random depth so position and scale both vary; a slice of frames is
// empty and another holds the sphere at the tool point between closed
// fingers. The rng is taken by value: a sample is a pure function of it.
inline CompositeSample make_vision_sample(const RunConfig& cfg, Rng rng, bool shadow = false) {
  const CameraIntrinsics k = make_intrinsics(cfg.cam_rgb_size, cfg.cam_fov_deg);
  const CameraFrame cf = canonical_camera();
  const double roll = rng.next_double();
  const bool empty = roll < cfg.empty_frame_frac;
  const bool attached = !empty && roll < cfg.empty_frame_frac + cfg.attached_frac;
  SceneGeom g = gripper_scene(cfg, attached);
  if (attached) {
    g.has_sphere = true;
    g.sphere_c = {0, 0, cfg.cam_back_offset};
    g.sphere_r = cfg.sphere_radius;
  } else if (!empty) {
    g.has_sphere = true;
    const double margin = 0.025 * cfg.cam_rgb_size;
    const double u = rng.uniform(margin, cfg.cam_rgb_size - margin);
    const double v = rng.uniform(margin, cfg.cam_rgb_size - margin);
    const double d = rng.uniform(cfg.cam_back_offset + 0.003, 0.40);
    g.sphere_c = cf.c + cf.z * d + cf.x * ((u - k.cx) * d / k.f) + cf.y * ((v - k.cy) * d / k.f);
    g.sphere_r = cfg.sphere_radius;
  }
  const auto kind = static_cast<BackgroundKind>(rng.next_below(kBackgroundKindCount));
  const RgbImage bg = generate_background(kind, rng.next_u64(), cfg);
  const FgRender fg = render_foreground(g, cf, k, cfg, camera_light(cfg));
  const Bitmap truth = sphere_visible_mask(g, cf, k);
  const JitterSpec js = shadow ? shadow_jitter_from(cfg) : jitter_from(cfg);
  CompositeSample s = composite_sample(fg, truth, bg, js, rng.next_u64());
  s.has_sphere = g.has_sphere;
  s.sphere_cam = g.sphere_c;
  s.seed = rng.seed();
  return s;
}

// dataset storage: composites quantized to what their PPM files would hold,
// so in-memory and from-disk training see identical bytes
struct VisionSample {
  Rgb8Image image;
  SegMask truth;
  HsvJitter jitter;
  bool has_sphere = false;
  Vec3 sphere_cam;
  uint64_t seed = 0;
};

using VisionSet = std::vector<VisionSample>;

inline VisionSample pack_sample(const CompositeSample& s) {
  return {quantize_rgb(s.image), s.truth, s.jitter, s.has_sphere, s.sphere_cam, s.seed};
}

// stream tags keep train/val/test/shadow sets disjoint under one run seed
inline constexpr uint64_t kVisionTrainStream = 1, kVisionValStream = 2, kVisionTestStream = 3,
                          kVisionShadowStream = 4;

inline VisionSet make_vision_set(const RunConfig& cfg, uint64_t stream, int count,
                                 bool shadow = false) {
  VisionSet out;
  out.reserve(count);
  const Rng root = Rng(cfg.seed).derive(0x76697364ull, stream);
  for (int i = 0; i < count; i++)
    out.push_back(pack_sample(make_vision_sample(cfg, root.derive(i), shadow)));
  return out;
}

// ---- training (Adam on per-pixel bce, early stopping on validation IoU)

struct VisionReport {
  int epochs = 0;      // epochs executed
  int best_epoch = -1; // 0-based index of the returned weights
  double best_val_iou = 0;
  std::vector<double> val_iou;     // one entry per epoch
  std::vector<double> train_loss;  // mean per-batch bce per epoch
};

namespace detail {

template <typename S>
Tensor<S> image_batch(const VisionSet& set, const std::vector<int>& idx, size_t b0, size_t b1) {
  const Rgb8Image& first = set[idx[b0]].image;
  Tensor<S> x({static_cast<int>(b1 - b0), 3, first.h, first.w});
  const size_t stride = 3ul * first.w * first.h;
  for (size_t i = b0; i < b1; i++) {
    const Rgb8Image& im = set[idx[i]].image;
    if (im.w != first.w || im.h != first.h) throw ShapeError("vision batch: mixed image sizes");
    rgb_into(im, x.data() + (i - b0) * stride);
  }
  return x;
}

template <typename S>
Tensor<S> truth_batch(const VisionSet& set, const std::vector<int>& idx, size_t b0, size_t b1,
                      int h, int w) {
  Tensor<S> t({static_cast<int>(b1 - b0), 1, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (size_t i = b0; i < b1; i++) {
    const SegMask& m = set[idx[i]].truth;
    if (m.w != w || m.h != h) throw ShapeError("vision batch: truth mask size mismatch");
    S* dst = t.data() + (i - b0) * plane;
    for (size_t j = 0; j < plane; j++) dst[j] = static_cast<S>(m.v[j]);
  }
  return t;
}

}  // namespace detail

template <typename S>
std::vector<SegMask> segment_all(Sequential<S>& net, const VisionSet& set, int batch) {
  std::vector<SegMask> out;
  out.reserve(set.size());
  std::vector<int> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::vector<int>& os = net.out_shape();  // {1,h,w}
  const size_t plane = static_cast<size_t>(os[1]) * os[2];
  for (size_t at = 0; at < set.size(); at += batch) {
    const size_t hi = std::min(set.size(), at + batch);
    const Tensor<S> y = net.forward(detail::image_batch<S>(set, idx, at, hi));
    for (size_t i = at; i < hi; i++) {
      SegMask m(os[2], os[1]);
      const S* src = y.data() + (i - at) * plane;
      for (size_t j = 0; j < plane; j++) m.v[j] = src[j] >= S(0.5) ? 1 : 0;
      out.push_back(std::move(m));
    }
  }
  return out;
}

template <typename S>
double validation_mean_iou(Sequential<S>& net, const VisionSet& val, int batch) {
  const std::vector<SegMask> pred = segment_all(net, val, batch);
  double acc = 0;
  for (size_t i = 0; i < val.size(); i++) acc += mask_iou(pred[i], val[i].truth);
  return acc / static_cast<double>(val.size());
}

inline std::vector<SegMask> truths_of(const VisionSet& set) {
  std::vector<SegMask> t;
  t.reserve(set.size());
  for (const VisionSample& s : set) t.push_back(s.truth);
  return t;
}

inline std::vector<SegMask> baseline_all(const VisionSet& set, const HsvThreshold& th) {
  std::vector<SegMask> out;
  out.reserve(set.size());
  for (const VisionSample& s : set) out.push_back(hsv_threshold_segment(dequantize_rgb(s.image), th));
  return out;
}

// Trains in place; on return the net carries the weights of the best
// validation epoch, not the last one.
template <typename S>
VisionReport train_vision(Sequential<S>& net, const VisionSet& train, const VisionSet& val,
                          const RunConfig& cfg, uint64_t seed,
                          const std::function<void(int, double, double)>& log = {}) {
  if (train.empty()) throw UsageError("train_vision: empty training set");
  if (val.empty()) throw UsageError("train_vision: empty validation set");
  pin_blas_single_thread();
  std::vector<ParamRef<S>> params;
  net.collect_params("vision", params);
  Adam<S> opt(cfg.vision_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  opt.init(params);
  Rng rng = Rng(seed).derive(0x7674726eull);
  std::vector<int> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::vector<int>& os = net.out_shape();
  VisionReport rep;
  std::vector<Tensor<S>> best;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.vision_max_epochs; epoch++) {
    opt.set_lr(cfg.vision_lr * std::pow(cfg.vision_lr_decay, epoch));
    for (size_t i = idx.size(); i > 1; i--)
      std::swap(idx[i - 1], idx[rng.next_below(i)]);
    double loss_sum = 0;
    int batches = 0;
    for (size_t at = 0; at < idx.size(); at += cfg.vision_batch) {
      const size_t hi = std::min(idx.size(), at + cfg.vision_batch);
      const Tensor<S> t = detail::truth_batch<S>(train, idx, at, hi, os[1], os[2]);
      for (ParamRef<S>& p : params) p.grad->zero();
      const Tensor<S> y = net.forward(detail::image_batch<S>(train, idx, at, hi));
      loss_sum += bce(y, t);
      net.backward(bce_grad(y, t));
      opt.step(params);
      batches++;
    }
    rep.train_loss.push_back(loss_sum / batches);
    const double iou = validation_mean_iou(net, val, cfg.vision_batch);
    rep.val_iou.push_back(iou);
    rep.epochs = epoch + 1;
    if (log) log(epoch, rep.train_loss.back(), iou);
    if (rep.best_epoch < 0 || iou > rep.best_val_iou) {
      rep.best_val_iou = iou;
      rep.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (ParamRef<S>& p : params) best.push_back(*p.value);
    } else if (++since_best >= cfg.vision_patience) {
      break;
    }
  }
  for (size_t i = 0; i < params.size(); i++) *params[i].value = best[i];
  return rep;
}

}  // namespace segrasp
