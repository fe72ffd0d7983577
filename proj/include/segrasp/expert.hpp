#pragma once
#include <algorithm>
#include <cmath>
#include <string>

#include "segrasp/ik.hpp"
#include "segrasp/world.hpp"

namespace segrasp {

enum class ExpertPhase { Approach, Descend, Grasp, Lift };

inline const char* phase_name(ExpertPhase p) {
  switch (p) {
    case ExpertPhase::Approach: return "approach";
    case ExpertPhase::Descend: return "descend";
    case ExpertPhase::Grasp: return "grasp";
    default: return "lift";
  }
}

// Scripted supervisor: straight-line Cartesian segments realized as joint
// deltas through damped-least-squares IK, with a fixed top-down tool
// orientation. It reads privileged simulator state (true joints and true
// sphere position), so it works whether or not the sphere is in view.
class Expert {
 public:
  explicit Expert(const Sim& sim)
      : sim_(&sim), down_(Quat::axis_angle({0, 1, 0}, kPi / 2)) {}

  ExpertPhase phase() const { return phase_; }

  // One supervisory decision: update the phase from the current world, then
  // emit the action for the (possibly new) phase.
  Action step(const WorldState& w) {
    const RunConfig& c = sim_->cfg();
    const Pose ee = sim_->ee_pose(w);
    const Vec3 sphere = w.sphere.center;
    const Vec3 hover{sphere.x, sphere.y, sphere.z + c.hover_height};
    const double dist = norm(sphere - ee.p);
    const double horiz = std::hypot(sphere.x - ee.p.x, sphere.y - ee.p.y);

    if (w.sphere.attached) {
      phase_ = ExpertPhase::Lift;
    } else {
      switch (phase_) {
        case ExpertPhase::Approach:
          // alignment gate is tighter than the regression threshold below,
          // so approach/descend cannot chatter at the boundary
          if (norm(hover - ee.p) <= c.approach_tol && horiz <= 0.75 * c.align_tol)
            phase_ = ExpertPhase::Descend;
          break;
        case ExpertPhase::Descend:
          if (dist <= c.close_trigger)
            phase_ = ExpertPhase::Grasp;
          else if (horiz > c.align_tol)  // sphere slipped sideways
            phase_ = ExpertPhase::Approach;
          break;
        case ExpertPhase::Grasp:
          if (dist > c.close_trigger)  // close missed or was refused
            phase_ = (horiz <= c.align_tol && ee.p.z > sphere.z) ? ExpertPhase::Descend
                                                                 : ExpertPhase::Approach;
          break;
        case ExpertPhase::Lift:  // dropped it
          phase_ = ExpertPhase::Approach;
          break;
      }
    }

    switch (phase_) {
      case ExpertPhase::Approach:
        return move_toward(w, ee, hover, -c.gripper_target);
      case ExpertPhase::Descend:
        return move_toward(w, ee, sphere, -c.gripper_target);
      case ExpertPhase::Grasp: {
        Action a;
        a.gripper_cmd = c.gripper_target;
        return a;
      }
      default: {  // Lift
        const Vec3 up{ee.p.x, ee.p.y, c.lift_height + 0.01};
        return move_toward(w, ee, up, c.gripper_target);
      }
    }
  }

  void reset() { phase_ = ExpertPhase::Approach; }

 private:
  Action move_toward(const WorldState& w, const Pose& ee, const Vec3& target, double grip) const {
    const RunConfig& c = sim_->cfg();
    const Vec3 to = target - ee.p;
    const double d = norm(to);
    Action a;
    a.gripper_cmd = grip;
    if (d < 1e-9) return a;
    const Vec3 sub = ee.p + to * (std::min(c.path_step, d) / d);
    const IkResult ik = solve_ik(sim_->arm(), w.robot.joints, sub, down_, c);
    if (!ik.converged && ik.pos_residual > c.path_step)
      throw UnreachableTargetError("expert: target " + std::to_string(target.x) + "," +
                                   std::to_string(target.y) + "," + std::to_string(target.z) +
                                   " unreachable (residual " + std::to_string(ik.pos_residual) + ")");
    // scale the whole step uniformly into the per-joint bound so the
    // end-effector stays on the straight segment
    double scale = 1.0;
    for (int i = 0; i < 7; i++) {
      const double dq = std::abs(ik.q[i] - w.robot.joints[i]);
      if (dq > 1e-12) scale = std::min(scale, c.delta_max / dq);
    }
    for (int i = 0; i < 7; i++) a.deltas[i] = scale * (ik.q[i] - w.robot.joints[i]);
    return a;
  }

  const Sim* sim_;
  Quat down_;
  ExpertPhase phase_ = ExpertPhase::Approach;
};

}  // namespace segrasp
