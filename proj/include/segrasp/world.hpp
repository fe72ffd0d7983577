#pragma once
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "segrasp/arm.hpp"
#include "segrasp/config.hpp"
#include "segrasp/geom.hpp"
#include "segrasp/rng.hpp"

namespace segrasp {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RobotState {
  JointVector joints{};
  bool gripper_closed = false;
};

// 8-entry observation fed to policies: joint angles then gripper flag.
inline std::array<double, 8> observation_vector(const RobotState& r) {
  std::array<double, 8> o;
  for (int i = 0; i < 7; i++) o[i] = r.joints[i];
  o[7] = r.gripper_closed ? 1.0 : 0.0;
  return o;
}

struct Action {
  std::array<double, 7> deltas{};  // rad/step, each bounded by delta_max
  double gripper_cmd = 0.0;        // >0 close, <=0 open
};

struct SphereState {
  Vec3 center;
  double radius = 0.00685;
  bool attached = false;
};

// Stand-in for the sim-to-real gap: joint gain/bias errors, command latency,
// and noise on the *reported* joint angles (ground truth stays clean).
struct DynamicsPerturbation {
  std::array<double, 7> gain{1, 1, 1, 1, 1, 1, 1};
  std::array<double, 7> bias{0, 0, 0, 0, 0, 0, 0};
  int delay = 0;          // whole control steps
  double noise_std = 0.0;  // rad

  bool is_identity() const {
    for (int i = 0; i < 7; i++)
      if (gain[i] != 1.0 || bias[i] != 0.0) return false;
    return delay == 0 && noise_std == 0.0;
  }

  static DynamicsPerturbation from_config(const RunConfig& c) {
    DynamicsPerturbation p;
    for (int i = 0; i < 7; i++) {
      p.gain[i] = c.pert_gain[i];
      p.bias[i] = c.pert_bias[i];
    }
    p.delay = c.pert_delay;
    p.noise_std = c.pert_noise_std;
    return p;
  }
};

struct WorldState {
  RobotState robot;
  SphereState sphere;
  int step_count = 0;
  uint64_t episode_seed = 0;
  bool lifted_since_attach = false;
  std::vector<Action> pending;  // command-delay queue (empty when delay = 0)
};

struct Capsule {
  Vec3 a, b;  // segment endpoints
  double r = 0;
};

// Two parallel fingers along the approach axis (tool +x), tips at the tool
// point, separated along tool y by the open/closed span.
inline std::array<Capsule, 2> finger_capsules(const Pose& ee, bool closed, const RunConfig& cfg) {
  const Vec3 ax = ee.axis_x();
  const Vec3 lat = ee.axis_y();
  const double half = 0.5 * (closed ? cfg.finger_span_closed : cfg.finger_span_open);
  std::array<Capsule, 2> f;
  for (int j = 0; j < 2; j++) {
    const Vec3 off = lat * (j == 0 ? half : -half);
    f[j].b = ee.p + off;                          // tip
    f[j].a = f[j].b - ax * cfg.finger_length;     // base
    f[j].r = cfg.finger_radius;
  }
  return f;
}

inline Vec3 closest_on_segment(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = norm2(ab);
  if (len2 < 1e-300) return a;
  const double t = clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return a + ab * t;
}

inline double capsule_min_z(const Capsule& c) {
  return (c.a.z < c.b.z ? c.a.z : c.b.z) - c.r;
}

// Simulator context: config plus the arm it implies. All methods are pure
// functions of their arguments; WorldState is a value.
class Sim {
 public:
  explicit Sim(const RunConfig& cfg) : cfg_(cfg), arm_(cfg) {}

  const RunConfig& cfg() const { return cfg_; }
  const ArmModel& arm() const { return arm_; }

  Pose ee_pose(const WorldState& w) const { return arm_.fk_unchecked(w.robot.joints); }

  WorldState reset(const Vec2& sphere_xy, uint64_t seed) const {
    if (sphere_xy.x < cfg_.workspace[0] || sphere_xy.x > cfg_.workspace[2] ||
        sphere_xy.y < cfg_.workspace[1] || sphere_xy.y > cfg_.workspace[3])
      throw SimError("reset: sphere start outside the workspace rectangle");
    WorldState w;
    Rng jit = Rng(seed).derive(0x7265736574ull);  // "reset"
    for (int i = 0; i < 7; i++)
      w.robot.joints[i] = clamp(cfg_.home_joints[i] + jit.uniform(-cfg_.home_jitter, cfg_.home_jitter),
                                arm_.limit_lo(i), arm_.limit_hi(i));
    w.robot.gripper_closed = false;
    w.sphere.center = {sphere_xy.x, sphere_xy.y, cfg_.sphere_radius};
    w.sphere.radius = cfg_.sphere_radius;
    w.sphere.attached = false;
    w.episode_seed = seed;
    return w;
  }

  WorldState step(const WorldState& in, const Action& action, const DynamicsPerturbation& pert) const {
    WorldState w = in;
    w.step_count++;

    // command latency: actions queue up, zeros execute until the pipe fills
    Action eff{};
    if (pert.delay == 0) {
      eff = action;
    } else {
      w.pending.push_back(action);
      if (static_cast<int>(w.pending.size()) > pert.delay) {
        eff = w.pending.front();
        w.pending.erase(w.pending.begin());
      }
    }

    // joint targets under gain/bias, clamped to limits
    const JointVector q0 = w.robot.joints;
    JointVector dq;
    for (int i = 0; i < 7; i++) {
      const double target =
          clamp(q0[i] + pert.gain[i] * eff.deltas[i] + pert.bias[i], arm_.limit_lo(i), arm_.limit_hi(i));
      dq[i] = target - q0[i];
    }

    // table keep-out: scale the whole step back so the tool point stays at
    // or above the surface (bisection; q0 is always feasible)
    double s = 1.0;
    if (fk_at(q0, dq, 1.0).p.z < 0.0) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 40; it++) {
        const double mid = 0.5 * (lo + hi);
        if (fk_at(q0, dq, mid).p.z >= 0.0) lo = mid; else hi = mid;
      }
      s = lo;
    }
    for (int i = 0; i < 7; i++) w.robot.joints[i] = q0[i] + s * dq[i];
    const Pose ee = arm_.fk_unchecked(w.robot.joints);

    // gripper: binary command; closing against the table is refused
    const bool want_close = eff.gripper_cmd > 0.0;
    if (want_close && !w.robot.gripper_closed) {
      if (close_clears_table(ee)) {
        w.robot.gripper_closed = true;
        if (!w.sphere.attached && sphere_captured(ee, w.sphere)) {
          w.sphere.attached = true;
          w.lifted_since_attach = false;
        }
      }
    } else if (!want_close && w.robot.gripper_closed) {
      w.robot.gripper_closed = false;
      if (w.sphere.attached) {  // dropped: falls straight to the table
        w.sphere.attached = false;
        w.sphere.center.z = w.sphere.radius;
        w.lifted_since_attach = false;
      }
    }

    if (w.sphere.attached) {
      w.sphere.center = ee.p;
      if (ee.p.z >= cfg_.lift_height) w.lifted_since_attach = true;
    } else {
      push_sphere(ee, w);
      w.sphere.center.z = w.sphere.radius;  // rolls, never sinks or hops
    }
    return w;
  }

  // State as policies see it: true state plus seeded per-step joint noise.
  RobotState observed_robot(const WorldState& w, const DynamicsPerturbation& pert) const {
    RobotState r = w.robot;
    if (pert.noise_std != 0.0) {
      Rng n = Rng(w.episode_seed).derive(0x6e6f697365ull, static_cast<uint64_t>(w.step_count));
      for (int i = 0; i < 7; i++) r.joints[i] += pert.noise_std * n.normal();
    }
    return r;
  }

  bool check_grasp_success(const WorldState& w) const {
    return w.robot.gripper_closed && w.sphere.attached && w.lifted_since_attach;
  }

  // capture test used at the closing instant: sphere center near the tool
  // point, split into radial (perpendicular to approach) and axial parts
  bool sphere_captured(const Pose& ee, const SphereState& sphere) const {
    const Vec3 d = sphere.center - ee.p;
    const Vec3 ax = ee.axis_x();
    const double axial = dot(d, ax);
    const Vec3 radial = d - ax * axial;
    return norm(radial) <= cfg_.capture_radial && std::abs(axial) <= cfg_.capture_axial;
  }

  bool close_clears_table(const Pose& ee) const {
    const auto closed = finger_capsules(ee, true, cfg_);
    return capsule_min_z(closed[0]) >= 0.0 && capsule_min_z(closed[1]) >= 0.0;
  }

 private:
  Pose fk_at(const JointVector& q0, const JointVector& dq, double s) const {
    JointVector q;
    for (int i = 0; i < 7; i++) q[i] = q0[i] + s * dq[i];
    return arm_.fk_unchecked(q);
  }

  // quasi-static contact: overlap with a finger shoves the sphere along the
  // horizontal part of the contact normal, scaled by push_gain
  void push_sphere(const Pose& ee, WorldState& w) const {
    const auto fingers = finger_capsules(ee, w.robot.gripper_closed, cfg_);
    for (const Capsule& f : fingers) {
      const Vec3 cp = closest_on_segment(f.a, f.b, w.sphere.center);
      const Vec3 n = w.sphere.center - cp;
      const double d = norm(n);
      const double overlap = f.r + w.sphere.radius - d;
      if (overlap <= 0.0 || d < 1e-12) continue;
      Vec3 horiz{n.x / d, n.y / d, 0.0};
      const double h = norm(horiz);
      if (h < 1e-9) continue;  // dead-center vertical contact: no roll
      w.sphere.center += horiz * (overlap * cfg_.push_gain / h);
    }
  }

  RunConfig cfg_;
  ArmModel arm_;
};

}  // namespace segrasp
