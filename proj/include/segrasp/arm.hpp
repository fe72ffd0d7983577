#pragma once
#include <array>
#include <string>

#include "segrasp/config.hpp"
#include "segrasp/geom.hpp"

namespace segrasp {

// Joint order of the 7-revolute chain, base to wrist.
enum JointIndex {
  kShoulderPan = 0,   // about local z
  kShoulderLift = 1,  // about local y
  kElbowRoll = 2,     // about local x
  kElbowFlex = 3,     // about local y
  kWristRoll = 4,     // about local x
  kWristFlex = 5,     // about local y
  kWristSpin = 6,     // about local x (axis runs through the tool point)
};

using JointVector = std::array<double, 7>;

inline const char* joint_name(int i) {
  static const char* names[7] = {"shoulder_pan", "shoulder_lift", "elbow_roll",
                                 "elbow_flex",   "wrist_roll",    "wrist_flex",
                                 "wrist_spin"};
  return names[i];
}

struct JointLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed chain structure: a base lift along z, a z-axis pan, a lift offset
// along z, then six links along local x with alternating y/x joint axes.
// The tool offset (last link length) runs along local x, so the end-effector
// approach axis is the tool frame's +x.
class ArmModel {
 public:
  explicit ArmModel(const RunConfig& cfg)
      : lengths_(), lo_(), hi_() {
    for (int i = 0; i < 8; i++) lengths_[i] = cfg.link_lengths[i];
    for (int i = 0; i < 7; i++) {
      lo_[i] = cfg.joint_limits_lo[i];
      hi_[i] = cfg.joint_limits_hi[i];
    }
  }

  void check_limits(const JointVector& q) const {
    for (int i = 0; i < 7; i++)
      if (q[i] < lo_[i] || q[i] > hi_[i])
        throw JointLimitError(std::string("joint '") + joint_name(i) +
                              "' out of limits: " + std::to_string(q[i]));
  }

  JointVector clamp_to_limits(const JointVector& q) const {
    JointVector out;
    for (int i = 0; i < 7; i++) out[i] = clamp(q[i], lo_[i], hi_[i]);
    return out;
  }

  double limit_lo(int i) const { return lo_[i]; }
  double limit_hi(int i) const { return hi_[i]; }

  // End-effector pose; throws JointLimitError on out-of-limit input.
  Pose forward_kinematics(const JointVector& q) const {
    check_limits(q);
    return fk_unchecked(q);
  }

  Pose fk_unchecked(const JointVector& q) const {
    Pose t{{0, 0, lengths_[0]}, {}};
    for (int i = 0; i < 7; i++) {
      t.q = (t.q * Quat::axis_angle(axis(i), q[i])).normalized();
      t.p = t.p + t.q.rotate(offset(i));
    }
    return t;
  }

  // Geometric Jacobian (6x7, rows vx,vy,vz,wx,wy,wz) at q, column-major in
  // the sense J[r][c]. Also returns the end-effector pose.
  Pose jacobian(const JointVector& q, std::array<std::array<double, 7>, 6>& J) const {
    Pose t{{0, 0, lengths_[0]}, {}};
    std::array<Vec3, 7> axes, origins;
    for (int i = 0; i < 7; i++) {
      origins[i] = t.p;
      axes[i] = t.q.rotate(axis(i));
      t.q = (t.q * Quat::axis_angle(axis(i), q[i])).normalized();
      t.p = t.p + t.q.rotate(offset(i));
    }
    for (int i = 0; i < 7; i++) {
      const Vec3 v = cross(axes[i], t.p - origins[i]);
      J[0][i] = v.x;
      J[1][i] = v.y;
      J[2][i] = v.z;
      J[3][i] = axes[i].x;
      J[4][i] = axes[i].y;
      J[5][i] = axes[i].z;
    }
    return t;
  }

 private:
  // rotation axis of joint i in its local frame
  static Vec3 axis(int i) {
    switch (i) {
      case kShoulderPan: return {0, 0, 1};
      case kShoulderLift: case kElbowFlex: case kWristFlex: return {0, 1, 0};
      default: return {1, 0, 0};
    }
  }
  // translation applied after joint i
  Vec3 offset(int i) const {
    if (i == kShoulderPan) return {0, 0, lengths_[1]};
    return {lengths_[i + 1], 0, 0};
  }

  std::array<double, 8> lengths_;
  std::array<double, 7> lo_, hi_;
};

}  // namespace segrasp
