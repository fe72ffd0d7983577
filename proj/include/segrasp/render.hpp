#pragma once
#include <algorithm>
#include <array>
#include <cmath>

#include "segrasp/camera.hpp"
#include "segrasp/image.hpp"
#include "segrasp/world.hpp"

namespace segrasp {

// ---- ray/primitive intersections (t = distance along a unit ray)

inline bool ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r, double& t) {
  const Vec3 oc = c - o;
  const double b = dot(d, oc);
  const double disc = b * b - (norm2(oc) - r * r);
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  double tt = b - s;
  if (tt <= 1e-9) tt = b + s;  // inside: exit point
  if (tt <= 1e-9) return false;
  t = tt;
  return true;
}

inline bool ray_capsule(const Vec3& o, const Vec3& d, const Capsule& cap, double& t) {
  const Vec3 ba = cap.b - cap.a;
  const Vec3 oa = o - cap.a;
  const double baba = dot(ba, ba);
  const double bard = dot(ba, d);
  const double baoa = dot(ba, oa);
  const double rdoa = dot(d, oa);
  const double oaoa = dot(oa, oa);
  const double A = baba - bard * bard;
  const double B = baba * rdoa - baoa * bard;
  const double C = baba * oaoa - baoa * baoa - cap.r * cap.r * baba;
  if (std::abs(A) > 1e-14) {
    const double h = B * B - A * C;
    if (h >= 0) {
      const double tt = (-B - std::sqrt(h)) / A;
      const double y = baoa + tt * bard;
      if (tt > 1e-9 && y >= 0 && y <= baba) {
        t = tt;
        return true;
      }
    }
  }
  double t0, t1;
  const bool h0 = ray_sphere(o, d, cap.a, cap.r, t0);
  const bool h1 = ray_sphere(o, d, cap.b, cap.r, t1);
  if (!h0 && !h1) return false;
  t = h0 && h1 ? std::min(t0, t1) : (h0 ? t0 : t1);
  return true;
}

// Camera-relative scene: the sphere plus the two finger capsules.
struct SceneGeom {
  bool has_sphere = false;
  Vec3 sphere_c;
  double sphere_r = 0;
  bool has_gripper = false;
  std::array<Capsule, 2> fingers{};
};

inline SceneGeom scene_from_world(const Sim& sim, const WorldState& w) {
  SceneGeom g;
  const Pose ee = sim.ee_pose(w);
  g.has_sphere = true;
  g.sphere_c = w.sphere.center;
  g.sphere_r = w.sphere.radius;
  g.has_gripper = true;
  g.fingers = finger_capsules(ee, w.robot.gripper_closed, sim.cfg());
  return g;
}

inline CameraFrame camera_from_world(const Sim& sim, const WorldState& w) {
  return camera_frame(sim.ee_pose(w), sim.cfg().cam_back_offset);
}

namespace detail {

// conservative pixel bounding box of the projected sphere; false if the
// sphere cannot appear (center at or behind the camera plane)
inline bool sphere_bbox(const CameraFrame& cf, const CameraIntrinsics& k, const Vec3& c, double r,
                        int& x0, int& y0, int& x1, int& y1) {
  double u, v, depth;
  if (!project(cf, k, c, u, v, depth)) return false;
  if (depth <= r) return false;
  const double pad = 3.0 * k.f * r / (depth - r) + 4.0;
  x0 = std::max(0, static_cast<int>(std::floor(u - pad)));
  y0 = std::max(0, static_cast<int>(std::floor(v - pad)));
  x1 = std::min(k.size - 1, static_cast<int>(std::ceil(u + pad)));
  y1 = std::min(k.size - 1, static_cast<int>(std::ceil(v + pad)));
  return x0 <= x1 && y0 <= y1;
}

}  // namespace detail

// Binary mask of the visible (unoccluded) sphere: pixel = 1 iff the ray
// through its center hits the sphere before any finger. Any resolution.
inline Bitmap sphere_visible_mask(const SceneGeom& g, const CameraFrame& cf,
                                  const CameraIntrinsics& k) {
  Bitmap m(k.size, k.size);
  if (!g.has_sphere) return m;
  int x0, y0, x1, y1;
  if (!detail::sphere_bbox(cf, k, g.sphere_c, g.sphere_r, x0, y0, x1, y1)) return m;
  for (int y = y0; y <= y1; y++)
    for (int x = x0; x <= x1; x++) {
      const Vec3 d = pixel_ray(cf, k, x + 0.5, y + 0.5);
      double ts;
      if (!ray_sphere(cf.c, d, g.sphere_c, g.sphere_r, ts)) continue;
      bool occluded = false;
      if (g.has_gripper)
        for (const Capsule& cap : g.fingers) {
          double tc;
          if (ray_capsule(cf.c, d, cap, tc) && tc < ts) {
            occluded = true;
            break;
          }
        }
      if (!occluded) m.at(y, x) = 1;
    }
  return m;
}

// The controller's eye: 100x100 visibility mask at the current world pose.
inline SegMask render_mask(const Sim& sim, const WorldState& w, const CameraIntrinsics& k) {
  return sphere_visible_mask(scene_from_world(sim, w), camera_from_world(sim, w), k);
}

// Foreground render: per-pixel class (0 none, 1 sphere, 2 finger) plus the
// Lambert-shaded color of the nearest surface. Background stays black.
struct FgRender {
  RgbImage rgb;
  std::vector<uint8_t> cover;

  explicit FgRender(int size) : rgb(size, size), cover(static_cast<size_t>(size) * size, 0) {}
};

// `light_toward` is the unit direction toward the light source, expressed in
// the same frame as the scene geometry.
inline FgRender render_foreground(const SceneGeom& g, const CameraFrame& cf,
                                  const CameraIntrinsics& k, const RunConfig& cfg,
                                  const Vec3& light_toward) {
  FgRender out(k.size);
  int sx0 = 0, sy0 = 0, sx1 = -1, sy1 = -1;
  const bool sphere_on =
      g.has_sphere && detail::sphere_bbox(cf, k, g.sphere_c, g.sphere_r, sx0, sy0, sx1, sy1);
  const Vec3 light = normalized(light_toward);
  for (int y = 0; y < k.size; y++)
    for (int x = 0; x < k.size; x++) {
      const Vec3 d = pixel_ray(cf, k, x + 0.5, y + 0.5);
      double best_t = 0;
      int cls = 0;
      Vec3 cn;  // surface normal at the hit
      if (sphere_on && x >= sx0 && x <= sx1 && y >= sy0 && y <= sy1) {
        double ts;
        if (ray_sphere(cf.c, d, g.sphere_c, g.sphere_r, ts)) {
          best_t = ts;
          cls = 1;
          cn = normalized(cf.c + d * ts - g.sphere_c);
        }
      }
      if (g.has_gripper)
        for (const Capsule& cap : g.fingers) {
          double tc;
          if (ray_capsule(cf.c, d, cap, tc) && (cls == 0 || tc < best_t)) {
            best_t = tc;
            cls = 2;
            const Vec3 hit = cf.c + d * tc;
            cn = normalized(hit - closest_on_segment(cap.a, cap.b, hit));
          }
        }
      if (cls == 0) continue;
      const double shade =
          clamp(cfg.light_ambient + cfg.light_diffuse * std::max(0.0, dot(cn, light)), 0.0, 1.0);
      const std::vector<double>& base = cls == 1 ? cfg.sphere_color : cfg.gripper_color;
      float* px = out.rgb.px(y, x);
      for (int ch = 0; ch < 3; ch++)
        px[ch] = static_cast<float>(clamp(base[ch] * shade, 0.0, 1.0));
      out.cover[static_cast<size_t>(y) * k.size + x] = static_cast<uint8_t>(cls);
    }
  return out;
}

inline FgRender render_foreground(const SceneGeom& g, const CameraFrame& cf,
                                  const CameraIntrinsics& k, const RunConfig& cfg) {
  return render_foreground(g, cf, k, cfg,
                           {cfg.light_dir[0], cfg.light_dir[1], cfg.light_dir[2]});
}

// Scene composited over a caller-supplied backdrop (hard-edged alpha, so a
// pixel is either pure foreground or pure background).
inline RgbImage render_rgb(const SceneGeom& g, const CameraFrame& cf, const CameraIntrinsics& k,
                           const RgbImage& background, const RunConfig& cfg) {
  if (background.w != k.size || background.h != k.size)
    throw ImageError("render_rgb: background dimensions must match the camera");
  const FgRender fg = render_foreground(g, cf, k, cfg);
  RgbImage out = background;
  for (int y = 0; y < k.size; y++)
    for (int x = 0; x < k.size; x++)
      if (fg.cover[static_cast<size_t>(y) * k.size + x]) {
        const float* s = fg.rgb.px(y, x);
        float* o = out.px(y, x);
        o[0] = s[0];
        o[1] = s[1];
        o[2] = s[2];
      }
  return out;
}

inline RgbImage render_world_rgb(const Sim& sim, const WorldState& w, const CameraIntrinsics& k,
                                 const RgbImage& background) {
  return render_rgb(scene_from_world(sim, w), camera_from_world(sim, w), k, background, sim.cfg());
}

}  // namespace segrasp
