#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "segrasp/vision.hpp"

using namespace segrasp;

namespace {

// sphere center projecting to pixel (u,v) at the given depth
Vec3 at_pixel(const CameraFrame& cf, const CameraIntrinsics& k, double u, double v, double d) {
  return cf.c + cf.z * d + cf.x * ((u - k.cx) * d / k.f) + cf.y * ((v - k.cy) * d / k.f);
}

RgbImage constant_image(int n, float r, float g, float b) {
  RgbImage img(n, n);
  for (size_t i = 0; i < img.v.size(); i += 3) {
    img.v[i] = r;
    img.v[i + 1] = g;
    img.v[i + 2] = b;
  }
  return img;
}

}  // namespace

TEST_CASE("hsv threshold matches hand-computed hexcone values") {
  const HsvThreshold th;  // yellow band [45,75], s_min 0.4, v_min 0.3
  const Hsv yellow = rgb_to_hsv(1.0, 1.0, 0.0);
  REQUIRE(yellow.h == Catch::Approx(60.0).margin(1e-12));
  REQUIRE(yellow.s == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(yellow.v == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(hsv_passes(yellow, th));

  const Hsv gray = rgb_to_hsv(0.5, 0.5, 0.5);
  REQUIRE(gray.s == 0.0);
  REQUIRE_FALSE(hsv_passes(gray, th));

  // the default shaded sphere color stays comfortably inside the band
  const Hsv sphere = rgb_to_hsv(0.9 * 0.35, 0.85 * 0.35, 0.1 * 0.35);
  REQUIRE(sphere.h == Catch::Approx(56.25).margin(1e-9));
  REQUIRE(hsv_passes(sphere, th));
}

TEST_CASE("hsv round-trips rgb within 1e-6") {
  Rng rng(11);
  for (int i = 0; i < 2000; i++) {
    const double r = rng.next_double(), g = rng.next_double(), b = rng.next_double();
    double r2, g2, b2;
    hsv_to_rgb(rgb_to_hsv(r, g, b), r2, g2, b2);
    REQUIRE(r2 == Catch::Approx(r).margin(1e-6));
    REQUIRE(g2 == Catch::Approx(g).margin(1e-6));
    REQUIRE(b2 == Catch::Approx(b).margin(1e-6));
  }
}

TEST_CASE("baseline equals the renderer ground truth bit-for-bit on clean renders") {
  RunConfig cfg;
  const CameraIntrinsics k = make_intrinsics(cfg.cam_rgb_size, cfg.cam_fov_deg);
  const CameraFrame cf = canonical_camera();
  const HsvThreshold th = hsv_threshold_from(cfg);
  for (int i = 0; i < 100; i++) {
    Rng rng = Rng(7).derive(i);
    const bool held = i % 7 == 0;  // some frames with the sphere between closed fingers
    SceneGeom g = gripper_scene(cfg, held);
    g.has_sphere = true;
    g.sphere_r = cfg.sphere_radius;
    if (held) {
      g.sphere_c = {0, 0, cfg.cam_back_offset};
    } else {
      g.sphere_c = at_pixel(cf, k, rng.uniform(10, 390), rng.uniform(10, 390),
                            rng.uniform(cfg.cam_back_offset + 0.003, 0.4));
    }
    // every non-clutter backdrop keeps its hues clear of the band; the
    // invariant is shading-independent, so cover both lighting frames
    const auto kind = static_cast<BackgroundKind>(i % 4);
    const RgbImage bg = generate_background(kind, 1000 + i, cfg);
    RgbImage img;
    if (i % 2 == 0) {
      img = render_rgb(g, cf, k, bg, cfg);  // world-frame light
    } else {
      const FgRender fg = render_foreground(g, cf, k, cfg, camera_light(cfg));
      img = composite_blend(fg.rgb, alpha_from_cover(fg.cover), bg);
    }
    const SegMask truth = majority_pool(sphere_visible_mask(g, cf, k), kMaskSize, kMaskSize);
    REQUIRE(hsv_threshold_segment(img, th) == truth);
  }
}

TEST_CASE("compositing is exact linear interpolation per pixel") {
  const int n = 8;
  Rng rng(21);
  RgbImage fg(n, n), bg(n, n);
  std::vector<float> alpha(static_cast<size_t>(n) * n);
  for (float& v : fg.v) v = static_cast<float>(rng.next_double());
  for (float& v : bg.v) v = static_cast<float>(rng.next_double());
  for (float& a : alpha) a = static_cast<float>(rng.next_double());

  const RgbImage out = composite_blend(fg, alpha, bg);
  for (size_t p = 0; p < alpha.size(); p++)
    for (int c = 0; c < 3; c++) {
      const float want = alpha[p] * fg.v[p * 3 + c] + (1.f - alpha[p]) * bg.v[p * 3 + c];
      REQUIRE(out.v[p * 3 + c] == want);
    }

  REQUIRE(composite_blend(fg, std::vector<float>(alpha.size(), 1.f), bg) == fg);
  REQUIRE(composite_blend(fg, std::vector<float>(alpha.size(), 0.f), bg) == bg);
}

TEST_CASE("composite rejects mismatched dimensions") {
  RgbImage a(8, 8), b(9, 8);
  const std::vector<float> alpha(64, 1.f);
  REQUIRE_THROWS_AS(composite_blend(a, alpha, b), ImageError);
  REQUIRE_THROWS_AS(composite_blend(a, std::vector<float>(63, 1.f), a), ImageError);

  FgRender fg(8);
  Bitmap wrong(9, 9);
  REQUIRE_THROWS_AS(composite_sample(fg, wrong, RgbImage(8, 8), {}, 1), ImageError);
  REQUIRE_THROWS_AS(composite_sample(fg, Bitmap(8, 8), RgbImage(9, 9), {}, 1), ImageError);
}

TEST_CASE("composite samples are seed-deterministic with jitter in range") {
  RunConfig cfg;
  const int n = cfg.cam_rgb_size;
  const CameraIntrinsics k = make_intrinsics(n, cfg.cam_fov_deg);
  SceneGeom g = gripper_scene(cfg, false);
  g.has_sphere = true;
  g.sphere_c = {0.0, 0.0, 0.1};
  g.sphere_r = 0.02;
  const FgRender fg = render_foreground(g, canonical_camera(), k, cfg);
  const Bitmap truth = sphere_visible_mask(g, canonical_camera(), k);
  const RgbImage bg = constant_image(n, 0.2f, 0.3f, 0.9f);

  const JitterSpec js = jitter_from(cfg);
  const CompositeSample a = composite_sample(fg, truth, bg, js, 77);
  const CompositeSample b = composite_sample(fg, truth, bg, js, 77);
  const CompositeSample c = composite_sample(fg, truth, bg, js, 78);
  REQUIRE(a.image == b.image);
  REQUIRE(a.truth == b.truth);
  REQUIRE(a.jitter.dh == b.jitter.dh);
  REQUIRE(a.image.v != c.image.v);
  REQUIRE(a.truth == majority_pool(truth, kMaskSize, kMaskSize));

  REQUIRE(std::abs(a.jitter.dh) <= cfg.jitter_h);
  REQUIRE(std::abs(a.jitter.ds) <= cfg.jitter_s);
  REQUIRE(std::abs(a.jitter.dv) <= cfg.jitter_v);

  const JitterSpec sh = shadow_jitter_from(cfg);
  for (int i = 0; i < 20; i++) {
    const CompositeSample s = composite_sample(fg, truth, bg, sh, 100 + i);
    REQUIRE(s.jitter.dv >= cfg.shadow_v_lo);
    REQUIRE(s.jitter.dv <= cfg.shadow_v_hi);
  }

  // zero jitter with binary alpha degenerates to fg-or-bg per pixel (up to
  // the hsv round trip)
  const CompositeSample plain = composite_sample(fg, truth, bg, {0, 0, 0, 0}, 5);
  REQUIRE(plain.jitter.dh == 0.0);
  float worst = 0;
  for (int y = 0; y < n; y++)
    for (int x = 0; x < n; x++) {
      const float* want = fg.cover[static_cast<size_t>(y) * n + x] ? fg.rgb.px(y, x) : bg.px(y, x);
      const float* got = plain.image.px(y, x);
      for (int ch = 0; ch < 3; ch++) worst = std::max(worst, std::abs(got[ch] - want[ch]));
    }
  REQUIRE(worst < 2e-6f);
}

TEST_CASE("backgrounds are seeded and respect the hue contract") {
  RunConfig cfg;
  const HsvThreshold th = hsv_threshold_from(cfg);
  const double sphere_hue = rgb_to_hsv(cfg.sphere_color[0], cfg.sphere_color[1],
                                       cfg.sphere_color[2]).h;
  for (int kind = 0; kind < kBackgroundKindCount; kind++) {
    const auto bk = static_cast<BackgroundKind>(kind);
    const RgbImage a = generate_background(bk, 42, cfg);
    REQUIRE(a.w == cfg.cam_rgb_size);
    REQUIRE(a == generate_background(bk, 42, cfg));
    REQUIRE_FALSE(a == generate_background(bk, 43, cfg));
  }
  for (int seed = 0; seed < 8; seed++) {
    // nothing in the first four kinds may trip the color filter
    for (int kind = 0; kind < 4; kind++) {
      const RgbImage bg = generate_background(static_cast<BackgroundKind>(kind), seed, cfg);
      REQUIRE(hsv_decision_map(bg, th).count() == 0);
    }
    // clutter always carries a sphere-hued distractor
    const RgbImage bg = generate_background(BackgroundKind::kClutter, seed, cfg);
    size_t near_sphere_hue = 0;
    for (size_t i = 0; i < bg.v.size(); i += 3) {
      const Hsv c = rgb_to_hsv(bg.v[i], bg.v[i + 1], bg.v[i + 2]);
      double dh = std::fabs(c.h - sphere_hue);
      dh = std::min(dh, 360.0 - dh);
      if (dh <= 15.0 + 1e-6 && c.s >= 0.4) near_sphere_hue++;
    }
    REQUIRE(near_sphere_hue > 100);
  }
}

TEST_CASE("solid background is constant") {
  RunConfig cfg;
  const RgbImage bg = generate_background(BackgroundKind::kSolid, 9, cfg);
  for (size_t i = 3; i < bg.v.size(); i++) REQUIRE(bg.v[i] == bg.v[i % 3]);
}

TEST_CASE("segmentation net reduces 400x400 rgb to a 100x100 mask") {
  auto net = make_vision_net<float>(5);
  REQUIRE(net.in_shape() == std::vector<int>{3, 400, 400});
  REQUIRE(net.out_shape() == std::vector<int>{1, 100, 100});

  RunConfig cfg;
  const RgbImage img = generate_background(BackgroundKind::kPerlin, 3, cfg);
  const SegMask m = segment(net, img);
  REQUIRE(m.w == 100);
  REQUIRE(m.h == 100);

  // all-zero weights leave every sigmoid at exactly 0.5, and 0.5 maps to 1
  std::vector<ParamRef<float>> params;
  net.collect_params("vision", params);
  for (ParamRef<float>& p : params) p.value->zero();
  REQUIRE(segment(net, img).count() == 100 * 100);

  REQUIRE_THROWS_AS(segment(net, RgbImage(200, 200)), ImageError);
  REQUIRE_THROWS_AS(segment(net, RgbImage(400, 200)), ImageError);
}

TEST_CASE("vision architecture gradients agree with finite differences") {
  auto net = make_vision_net<double>(17, 20);  // same stack, 20x20 input, 5x5 output
  REQUIRE(net.out_shape() == std::vector<int>{1, 5, 5});
  Rng rng(31);
  Tensor<double> x({2, 3, 20, 20}), t({2, 1, 5, 5});
  for (double& v : x.v) v = rng.next_double();
  for (double& v : t.v) v = rng.next_below(2);

  std::vector<ParamRef<double>> params;
  net.collect_params("vision", params);
  auto loss = [&] { return bce(net.forward(x), t); };
  for (ParamRef<double>& p : params) p.grad->zero();
  net.backward(bce_grad(net.forward(x), t));
  REQUIRE(gradcheck_max_rel(params, loss, 1e-5, 60, Rng(32)) < 1e-4);
}

TEST_CASE("pixel metrics follow the aggregate formulas") {
  // tp=80 on cells [0,80), fp=20 on [80,100), fn=5 on [100,105), rest tn
  SegMask pred(15, 10), truth(15, 10);
  for (int i = 0; i < 100; i++) pred.v[i] = 1;
  for (int i = 0; i < 80; i++) truth.v[i] = 1;
  for (int i = 100; i < 105; i++) truth.v[i] = 1;
  const PixelMetrics m = evaluate_precision_recall({pred}, {truth});
  REQUIRE(m.tp == 80);
  REQUIRE(m.fp == 20);
  REQUIRE(m.fn == 5);
  REQUIRE(m.precision == Catch::Approx(0.8).margin(1e-12));
  REQUIRE(m.recall == Catch::Approx(80.0 / 85.0).margin(1e-12));
  REQUIRE(m.iou == Catch::Approx(80.0 / 105.0).margin(1e-12));

  // the counts aggregate over a whole stream, not per image
  const PixelMetrics two = evaluate_precision_recall({pred, truth}, {truth, pred});
  REQUIRE(two.tp == 160);
  REQUIRE(two.fp == 25);
  REQUIRE(two.fn == 25);
}

TEST_CASE("pixel metrics handle the documented conventions and errors") {
  SegMask a(10, 10), b(10, 10);
  for (int i = 20; i < 60; i++) a.v[i] = 1;
  const PixelMetrics same = evaluate_precision_recall({a}, {a});
  REQUIRE(same.precision == 1.0);
  REQUIRE(same.recall == 1.0);
  REQUIRE(same.iou == 1.0);

  const PixelMetrics zero = evaluate_precision_recall({SegMask(10, 10)}, {SegMask(10, 10)});
  REQUIRE(zero.precision == 1.0);
  REQUIRE(zero.recall == 1.0);
  REQUIRE(zero.iou == 1.0);

  // symmetry: swapping prediction and truth swaps precision and recall
  for (int i = 30; i < 85; i++) b.v[i] = 1;
  const PixelMetrics pq = evaluate_precision_recall({a}, {b});
  const PixelMetrics qp = evaluate_precision_recall({b}, {a});
  REQUIRE(pq.precision == qp.recall);
  REQUIRE(pq.recall == qp.precision);
  REQUIRE(pq.iou == qp.iou);

  REQUIRE_THROWS_AS(evaluate_precision_recall({a, b}, {a}), UsageError);
  REQUIRE_THROWS_AS(evaluate_precision_recall({SegMask(10, 10)}, {SegMask(9, 10)}), UsageError);
}

TEST_CASE("sample generation is deterministic and mixes frame kinds") {
  RunConfig cfg;
  cfg.seed = 5;
  const VisionSet a = make_vision_set(cfg, kVisionTrainStream, 60);
  const VisionSet b = make_vision_set(cfg, kVisionTrainStream, 60);
  REQUIRE(a.size() == 60);
  for (size_t i = 0; i < a.size(); i++) {
    REQUIRE(a[i].image == b[i].image);
    REQUIRE(a[i].truth == b[i].truth);
    REQUIRE(a[i].seed == b[i].seed);
  }
  const VisionSet other = make_vision_set(cfg, kVisionValStream, 60);
  REQUIRE_FALSE(a[0].image == other[0].image);

  int empties = 0, with_mask = 0;
  for (const VisionSample& s : a) {
    if (!s.has_sphere) {
      empties++;
      REQUIRE(s.truth.count() == 0);
    }
    if (s.truth.count() > 0) with_mask++;
    REQUIRE(s.image.w == cfg.cam_rgb_size);
    REQUIRE(s.truth.w == kMaskSize);
  }
  REQUIRE(empties > 0);
  REQUIRE(empties < 30);
  REQUIRE(with_mask > 30);
}

TEST_CASE("vision training restores the best validation epoch") {
  RunConfig cfg;
  cfg.seed = 12;
  cfg.vision_batch = 4;
  cfg.vision_max_epochs = 6;
  cfg.vision_patience = 1;
  cfg.vision_lr = 0.5;  // deliberately unstable so validation dips early
  const VisionSet train = make_vision_set(cfg, kVisionTrainStream, 8);
  const VisionSet val = make_vision_set(cfg, kVisionValStream, 4);

  auto net = make_vision_net<float>(cfg.seed);
  const VisionReport rep = train_vision(net, train, val, cfg, cfg.seed);
  REQUIRE(rep.epochs == static_cast<int>(rep.val_iou.size()));
  REQUIRE(rep.best_epoch >= 0);
  REQUIRE(rep.best_val_iou == *std::max_element(rep.val_iou.begin(), rep.val_iou.end()));
  REQUIRE(rep.best_val_iou == rep.val_iou[rep.best_epoch]);
  // the net now carries the best epoch's weights: re-evaluating reproduces
  // the reported best exactly
  REQUIRE(validation_mean_iou(net, val, cfg.vision_batch) == rep.best_val_iou);
}

TEST_CASE("vision training is seed-reproducible and rejects empty sets") {
  RunConfig cfg;
  cfg.seed = 13;
  cfg.vision_batch = 4;
  cfg.vision_max_epochs = 2;
  const VisionSet train = make_vision_set(cfg, kVisionTrainStream, 8);
  const VisionSet val = make_vision_set(cfg, kVisionValStream, 3);

  auto n1 = make_vision_net<float>(cfg.seed);
  auto n2 = make_vision_net<float>(cfg.seed);
  const VisionReport r1 = train_vision(n1, train, val, cfg, cfg.seed);
  const VisionReport r2 = train_vision(n2, train, val, cfg, cfg.seed);
  REQUIRE(r1.epochs == r2.epochs);
  REQUIRE(r1.val_iou == r2.val_iou);
  REQUIRE(r1.train_loss == r2.train_loss);
  std::vector<ParamRef<float>> p1, p2;
  n1.collect_params("vision", p1);
  n2.collect_params("vision", p2);
  for (size_t i = 0; i < p1.size(); i++) REQUIRE(p1[i].value->v == p2[i].value->v);

  auto n3 = make_vision_net<float>(1);
  REQUIRE_THROWS_AS(train_vision(n3, {}, val, cfg, 1), UsageError);
  REQUIRE_THROWS_AS(train_vision(n3, train, {}, cfg, 1), UsageError);
}
