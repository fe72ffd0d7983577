#pragma once
#include <array>
#include <cmath>
#include <stdexcept>

namespace segrasp {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double norm2(const Vec3& a) { return dot(a, a); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n < 1e-300) throw std::domain_error("normalized: zero-length vector");
  return a * (1.0 / n);
}

// Unit quaternion, (w, x, y, z).
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  static Quat axis_angle(const Vec3& axis, double angle) {
    const Vec3 u = segrasp::normalized(axis);
    const double h = 0.5 * angle, s = std::sin(h);
    return {std::cos(h), u.x * s, u.y * s, u.z * s};
  }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  Quat conj() const { return {w, -x, -y, -z}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Vec3 rotate(const Vec3& v) const {
    // q v q*
    const Vec3 u{x, y, z};
    const Vec3 t = cross(u, v) * 2.0;
    return v + t * w + cross(u, t);
  }
};

// Rigid transform (rotation then translation).
struct Pose {
  Vec3 p;
  Quat q;

  Vec3 apply(const Vec3& v) const { return q.rotate(v) + p; }
  Pose compose(const Pose& o) const { return {apply(o.p), (q * o.q).normalized()}; }

  Vec3 axis_x() const { return q.rotate({1, 0, 0}); }
  Vec3 axis_y() const { return q.rotate({0, 1, 0}); }
  Vec3 axis_z() const { return q.rotate({0, 0, 1}); }
};

// Rotation error as an axis-angle vector taking `from` onto `to`.
inline Vec3 orientation_error(const Quat& to, const Quat& from) {
  Quat d = (to * from.conj()).normalized();
  if (d.w < 0) d = {-d.w, -d.x, -d.y, -d.z};
  const double s = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  if (s < 1e-12) return {2 * d.x, 2 * d.y, 2 * d.z};
  const double angle = 2.0 * std::atan2(s, d.w);
  return Vec3{d.x, d.y, d.z} * (angle / s);
}

inline double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace segrasp
