#pragma once
#include <cmath>

#include "segrasp/geom.hpp"

namespace segrasp {

// Square pinhole camera. Pixel (ix,iy) covers [ix,ix+1)x[iy,iy+1); its center
// ray passes through (ix+0.5, iy+0.5). Principal point at the image center.
struct CameraIntrinsics {
  int size = 0;
  double f = 0, cx = 0, cy = 0;
};

inline CameraIntrinsics make_intrinsics(int size, double fov_deg) {
  CameraIntrinsics k;
  k.size = size;
  k.f = (size / 2.0) / std::tan(fov_deg * kPi / 180.0 / 2.0);
  k.cx = size / 2.0;
  k.cy = size / 2.0;
  return k;
}

// World-space camera basis: z looks forward, x right, y down (image axes).
struct CameraFrame {
  Vec3 c;        // optical center
  Vec3 x, y, z;  // unit axes in world
};

// Wrist-mounted camera: looks along the tool approach axis (EE local x),
// pulled back along it so the fingers stay in frame. Image x spans EE y.
inline CameraFrame camera_frame(const Pose& ee, double back_offset) {
  CameraFrame cf;
  cf.z = ee.axis_x();
  cf.x = ee.axis_y();
  cf.y = ee.axis_z();
  cf.c = ee.p - cf.z * back_offset;
  return cf;
}

// Perspective projection. False if the point is not strictly in front.
inline bool project(const CameraFrame& cf, const CameraIntrinsics& k, const Vec3& p, double& u,
                    double& v, double& depth) {
  const Vec3 d = p - cf.c;
  depth = dot(d, cf.z);
  if (depth <= 1e-9) return false;
  u = k.cx + k.f * dot(d, cf.x) / depth;
  v = k.cy + k.f * dot(d, cf.y) / depth;
  return true;
}

// Unit world-space direction of the ray through image coordinates (u,v).
inline Vec3 pixel_ray(const CameraFrame& cf, const CameraIntrinsics& k, double u, double v) {
  const Vec3 d = cf.z + cf.x * ((u - k.cx) / k.f) + cf.y * ((v - k.cy) / k.f);
  return normalized(d);
}

}  // namespace segrasp
