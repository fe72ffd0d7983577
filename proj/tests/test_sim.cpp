#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "segrasp/ik.hpp"
#include "segrasp/rng.hpp"
#include "segrasp/world.hpp"

using namespace segrasp;

// ---- independent FK oracle: explicit 4x4 homogeneous matrix products

namespace {

struct M4 {
  double a[4][4] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
};

M4 mul(const M4& x, const M4& y) {
  M4 r;
  for (int i = 0; i < 4; i++)
    for (int j = 0; j < 4; j++) {
      double s = 0;
      for (int k = 0; k < 4; k++) s += x.a[i][k] * y.a[k][j];
      r.a[i][j] = s;
    }
  return r;
}

M4 rot_x(double t) {
  M4 m;
  m.a[1][1] = std::cos(t); m.a[1][2] = -std::sin(t);
  m.a[2][1] = std::sin(t); m.a[2][2] = std::cos(t);
  return m;
}
M4 rot_y(double t) {
  M4 m;
  m.a[0][0] = std::cos(t); m.a[0][2] = std::sin(t);
  m.a[2][0] = -std::sin(t); m.a[2][2] = std::cos(t);
  return m;
}
M4 rot_z(double t) {
  M4 m;
  m.a[0][0] = std::cos(t); m.a[0][1] = -std::sin(t);
  m.a[1][0] = std::sin(t); m.a[1][1] = std::cos(t);
  return m;
}
M4 trans(double x, double y, double z) {
  M4 m;
  m.a[0][3] = x; m.a[1][3] = y; m.a[2][3] = z;
  return m;
}

// The chain as one flat matrix product, written without shared code.
M4 oracle_fk(const RunConfig& c, const JointVector& q) {
  const std::vector<double>& L = c.link_lengths;
  M4 T = trans(0, 0, L[0]);
  T = mul(T, rot_z(q[0]));
  T = mul(T, trans(0, 0, L[1]));
  T = mul(T, rot_y(q[1]));
  T = mul(T, trans(L[2], 0, 0));
  T = mul(T, rot_x(q[2]));
  T = mul(T, trans(L[3], 0, 0));
  T = mul(T, rot_y(q[3]));
  T = mul(T, trans(L[4], 0, 0));
  T = mul(T, rot_x(q[4]));
  T = mul(T, trans(L[5], 0, 0));
  T = mul(T, rot_y(q[5]));
  T = mul(T, trans(L[6], 0, 0));
  T = mul(T, rot_x(q[6]));
  T = mul(T, trans(L[7], 0, 0));
  return T;
}

JointVector random_joints(const ArmModel& arm, Rng& r) {
  JointVector q;
  for (int i = 0; i < 7; i++) q[i] = r.uniform(arm.limit_lo(i), arm.limit_hi(i));
  return q;
}

}  // namespace

TEST_CASE("all-zero joints give the documented home of the chain") {
  RunConfig cfg;
  ArmModel arm(cfg);
  const Pose p = arm.forward_kinematics(JointVector{});
  // x = sum of the six x link offsets, z = base lift + shoulder offset
  REQUIRE(std::abs(p.p.x - 0.90) < 1e-12);
  REQUIRE(std::abs(p.p.y) < 1e-12);
  REQUIRE(std::abs(p.p.z - 0.40) < 1e-12);
}

TEST_CASE("fk is deterministic") {
  RunConfig cfg;
  ArmModel arm(cfg);
  Rng r(5);
  const JointVector q = random_joints(arm, r);
  const Pose a = arm.forward_kinematics(q);
  const Pose b = arm.forward_kinematics(q);
  REQUIRE(a.p.x == b.p.x);
  REQUIRE(a.p.y == b.p.y);
  REQUIRE(a.p.z == b.p.z);
  REQUIRE(a.q.w == b.q.w);
  REQUIRE(a.q.x == b.q.x);
}

TEST_CASE("rotating only the final wrist joint leaves the tool point fixed") {
  RunConfig cfg;
  ArmModel arm(cfg);
  Rng r(9);
  for (int trial = 0; trial < 20; trial++) {
    JointVector q = random_joints(arm, r);
    const Pose base = arm.forward_kinematics(q);
    q[kWristSpin] = r.uniform(arm.limit_lo(6), arm.limit_hi(6));
    const Pose spun = arm.forward_kinematics(q);
    REQUIRE(norm(spun.p - base.p) < 1e-12);
  }
}

TEST_CASE("fk matches the homogeneous-matrix oracle on 1000 random joints") {
  RunConfig cfg;
  ArmModel arm(cfg);
  Rng r(12345);
  for (int trial = 0; trial < 1000; trial++) {
    const JointVector q = random_joints(arm, r);
    const Pose p = arm.forward_kinematics(q);
    const M4 T = oracle_fk(cfg, q);
    REQUIRE(std::abs(p.p.x - T.a[0][3]) < 1e-10);
    REQUIRE(std::abs(p.p.y - T.a[1][3]) < 1e-10);
    REQUIRE(std::abs(p.p.z - T.a[2][3]) < 1e-10);
    // rotation compared through its action on the basis
    const Vec3 ax = p.axis_x(), ay = p.axis_y(), az = p.axis_z();
    REQUIRE(std::abs(ax.x - T.a[0][0]) < 1e-10);
    REQUIRE(std::abs(ax.y - T.a[1][0]) < 1e-10);
    REQUIRE(std::abs(ax.z - T.a[2][0]) < 1e-10);
    REQUIRE(std::abs(ay.x - T.a[0][1]) < 1e-10);
    REQUIRE(std::abs(ay.y - T.a[1][1]) < 1e-10);
    REQUIRE(std::abs(ay.z - T.a[2][1]) < 1e-10);
    REQUIRE(std::abs(az.x - T.a[0][2]) < 1e-10);
    REQUIRE(std::abs(az.y - T.a[1][2]) < 1e-10);
    REQUIRE(std::abs(az.z - T.a[2][2]) < 1e-10);
  }
}

TEST_CASE("out-of-limit joints are rejected naming the offender") {
  RunConfig cfg;
  ArmModel arm(cfg);
  JointVector q{};
  q[kShoulderLift] = 9.0;
  REQUIRE_THROWS_AS(arm.forward_kinematics(q), JointLimitError);
  REQUIRE_THROWS_WITH(arm.forward_kinematics(q),
                      Catch::Matchers::ContainsSubstring("shoulder_lift"));
}

TEST_CASE("geometric jacobian matches finite differences") {
  RunConfig cfg;
  ArmModel arm(cfg);
  Rng r(77);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; trial++) {
    JointVector q = random_joints(arm, r);
    // keep away from the limits so q +- h stays valid
    for (int i = 0; i < 7; i++) q[i] = clamp(q[i], arm.limit_lo(i) + 1e-3, arm.limit_hi(i) - 1e-3);
    std::array<std::array<double, 7>, 6> J;
    arm.jacobian(q, J);
    for (int i = 0; i < 7; i++) {
      JointVector qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const Pose pp = arm.fk_unchecked(qp), pm = arm.fk_unchecked(qm);
      const Vec3 dv = (pp.p - pm.p) * (1.0 / (2 * h));
      REQUIRE(std::abs(dv.x - J[0][i]) < 1e-6);
      REQUIRE(std::abs(dv.y - J[1][i]) < 1e-6);
      REQUIRE(std::abs(dv.z - J[2][i]) < 1e-6);
      const Vec3 w = orientation_error(pp.q, pm.q) * (1.0 / (2 * h));
      REQUIRE(std::abs(w.x - J[3][i]) < 1e-6);
      REQUIRE(std::abs(w.y - J[4][i]) < 1e-6);
      REQUIRE(std::abs(w.z - J[5][i]) < 1e-6);
    }
  }
}

// ---- world dynamics

namespace {

// put the tool exactly at `target` pointing straight down
WorldState world_with_tool_at(const Sim& sim, const Vec3& target, const Vec2& sphere_xy,
                              uint64_t seed = 3) {
  WorldState w = sim.reset(sphere_xy, seed);
  const IkResult ik =
      solve_ik(sim.arm(), w.robot.joints, target, Quat::axis_angle({0, 1, 0}, kPi / 2), sim.cfg());
  REQUIRE(ik.converged);
  w.robot.joints = ik.q;
  return w;
}

}  // namespace

TEST_CASE("zero action under identity perturbation only advances the clock") {
  RunConfig cfg;
  Sim sim(cfg);
  const WorldState w0 = sim.reset({0.55, 0.0}, 11);
  const WorldState w1 = sim.step(w0, Action{}, DynamicsPerturbation{});
  REQUIRE(w1.step_count == w0.step_count + 1);
  for (int i = 0; i < 7; i++) REQUIRE(w1.robot.joints[i] == w0.robot.joints[i]);
  REQUIRE(w1.robot.gripper_closed == w0.robot.gripper_closed);
  REQUIRE(w1.sphere.center.x == w0.sphere.center.x);
  REQUIRE(w1.sphere.center.y == w0.sphere.center.y);
  REQUIRE(w1.sphere.center.z == w0.sphere.center.z);
  REQUIRE(w1.sphere.attached == w0.sphere.attached);
}

TEST_CASE("closing with the sphere in the capture region attaches it") {
  RunConfig cfg;
  Sim sim(cfg);
  const Vec3 sc{0.55, 0.01, cfg.sphere_radius};
  WorldState w = world_with_tool_at(sim, sc, {sc.x, sc.y});
  Action close;
  close.gripper_cmd = 1.0;
  const WorldState w1 = sim.step(w, close, DynamicsPerturbation{});
  REQUIRE(w1.robot.gripper_closed);
  REQUIRE(w1.sphere.attached);
  // held sphere rides at the gripper center
  const Pose ee = sim.ee_pose(w1);
  REQUIRE(norm(w1.sphere.center - ee.p) < 1e-12);
}

TEST_CASE("closing far from the sphere attaches nothing") {
  RunConfig cfg;
  Sim sim(cfg);
  WorldState w = world_with_tool_at(sim, {0.50, 0.0, 0.05}, {0.55, 0.0});
  Action close;
  close.gripper_cmd = 1.0;
  const WorldState w1 = sim.step(w, close, DynamicsPerturbation{});
  REQUIRE(w1.robot.gripper_closed);
  REQUIRE_FALSE(w1.sphere.attached);
}

TEST_CASE("a close that would drive the fingers into the table is refused") {
  RunConfig cfg;
  Sim sim(cfg);
  // fingertip spheres reach finger_radius below the tool point
  WorldState w = world_with_tool_at(sim, {0.55, 0.0, 0.5 * cfg.finger_radius}, {0.60, 0.03});
  Action close;
  close.gripper_cmd = 1.0;
  const WorldState w1 = sim.step(w, close, DynamicsPerturbation{});
  REQUIRE_FALSE(w1.robot.gripper_closed);
}

TEST_CASE("a finger sweeping through the sphere shoves it horizontally") {
  RunConfig cfg;
  Sim sim(cfg);
  const Vec3 sc{0.55, 0.0, cfg.sphere_radius};
  // tool placed so the +y finger axis sits 8 mm from the sphere center,
  // inside the combined radius of 10.85 mm -> overlap 2.85 mm
  const double finger_off = 0.5 * cfg.finger_span_open;
  WorldState w = world_with_tool_at(sim, {sc.x, sc.y + 0.008 - finger_off, sc.z}, {sc.x, sc.y});
  const WorldState w1 = sim.step(w, Action{}, DynamicsPerturbation{});
  const double overlap = cfg.finger_radius + cfg.sphere_radius - 0.008;
  const double expect = -overlap * cfg.push_gain;  // pushed along -y
  REQUIRE(w1.sphere.center.y == Catch::Approx(expect + sc.y).margin(5e-4));
  REQUIRE(std::abs(w1.sphere.center.x - sc.x) < 5e-4);
  REQUIRE(w1.sphere.center.z == cfg.sphere_radius);
  REQUIRE_FALSE(w1.sphere.attached);
}

TEST_CASE("the tool point never goes below the table") {
  RunConfig cfg;
  Sim sim(cfg);
  WorldState w = world_with_tool_at(sim, {0.55, 0.0, 0.004}, {0.60, 0.03});
  // drive hard downward: solve for a pose below the table and take the step
  const IkResult ik = solve_ik(sim.arm(), w.robot.joints, {0.55, 0.0, -0.05},
                               Quat::axis_angle({0, 1, 0}, kPi / 2), cfg);
  Action a;
  for (int i = 0; i < 7; i++) a.deltas[i] = clamp(ik.q[i] - w.robot.joints[i], -cfg.delta_max, cfg.delta_max);
  WorldState cur = w;
  for (int s = 0; s < 30; s++) {
    cur = sim.step(cur, a, DynamicsPerturbation{});
    REQUIRE(sim.ee_pose(cur).p.z >= 0.0);
  }
  // it actually made it down to the surface rather than stopping early
  REQUIRE(sim.ee_pose(cur).p.z < 1e-4);
}

TEST_CASE("sphere rests on the table through arbitrary motion") {
  RunConfig cfg;
  Sim sim(cfg);
  WorldState w = sim.reset({0.52, -0.02}, 21);
  Rng r(33);
  for (int s = 0; s < 200; s++) {
    Action a;
    for (int i = 0; i < 7; i++) a.deltas[i] = r.uniform(-cfg.delta_max, cfg.delta_max);
    a.gripper_cmd = r.uniform(-1, 1);
    w = sim.step(w, a, DynamicsPerturbation{});
    if (!w.sphere.attached) REQUIRE(w.sphere.center.z >= w.sphere.radius - 1e-9);
  }
}

TEST_CASE("grasp success needs close + capture + lift") {
  RunConfig cfg;
  Sim sim(cfg);
  const Vec3 sc{0.55, 0.0, cfg.sphere_radius};
  WorldState w = world_with_tool_at(sim, sc, {sc.x, sc.y});
  REQUIRE_FALSE(sim.check_grasp_success(w));  // open gripper

  Action close;
  close.gripper_cmd = 1.0;
  w = sim.step(w, close, DynamicsPerturbation{});
  REQUIRE(w.sphere.attached);
  REQUIRE_FALSE(sim.check_grasp_success(w));  // attached but not lifted

  // lift straight up past the threshold, sphere riding along
  while (sim.ee_pose(w).p.z < cfg.lift_height + 0.005) {
    const Vec3 up{sc.x, sc.y, sim.ee_pose(w).p.z + 0.008};
    const IkResult ik =
        solve_ik(sim.arm(), w.robot.joints, up, Quat::axis_angle({0, 1, 0}, kPi / 2), cfg);
    Action a;
    a.gripper_cmd = 1.0;
    for (int i = 0; i < 7; i++)
      a.deltas[i] = clamp(ik.q[i] - w.robot.joints[i], -cfg.delta_max, cfg.delta_max);
    w = sim.step(w, a, DynamicsPerturbation{});
    REQUIRE(norm(w.sphere.center - sim.ee_pose(w).p) < 1e-12);
  }
  REQUIRE(sim.check_grasp_success(w));

  // dropping it ends the success condition
  Action open;
  open.gripper_cmd = -1.0;
  w = sim.step(w, open, DynamicsPerturbation{});
  REQUIRE_FALSE(w.sphere.attached);
  REQUIRE_FALSE(sim.check_grasp_success(w));
  REQUIRE(w.sphere.center.z == w.sphere.radius);
}

TEST_CASE("reset is seeded, jittered, and workspace-checked") {
  RunConfig cfg;
  Sim sim(cfg);
  const WorldState a = sim.reset({0.5, 0.02}, 100);
  const WorldState b = sim.reset({0.5, 0.02}, 100);
  const WorldState c = sim.reset({0.5, 0.02}, 101);
  for (int i = 0; i < 7; i++) REQUIRE(a.robot.joints[i] == b.robot.joints[i]);
  bool any_diff = false;
  for (int i = 0; i < 7; i++) {
    any_diff = any_diff || a.robot.joints[i] != c.robot.joints[i];
    REQUIRE(std::abs(a.robot.joints[i] - cfg.home_joints[i]) <= cfg.home_jitter + 1e-12);
  }
  REQUIRE(any_diff);
  REQUIRE(a.sphere.center.z == cfg.sphere_radius);
  REQUIRE(a.step_count == 0);
  REQUIRE_FALSE(a.robot.gripper_closed);
  REQUIRE_THROWS_AS(sim.reset({0.2, 0.0}, 1), SimError);
}

TEST_CASE("identity perturbation changes nothing about the transition") {
  RunConfig cfg;
  Sim sim(cfg);
  const DynamicsPerturbation ident = DynamicsPerturbation::from_config(cfg);
  REQUIRE(ident.is_identity());
  WorldState w1 = sim.reset({0.58, -0.01}, 5);
  WorldState w2 = w1;
  Rng r(8);
  for (int s = 0; s < 50; s++) {
    Action a;
    for (int i = 0; i < 7; i++) a.deltas[i] = r.uniform(-cfg.delta_max, cfg.delta_max);
    a.gripper_cmd = r.uniform(-1, 1);
    w1 = sim.step(w1, a, DynamicsPerturbation{});
    w2 = sim.step(w2, a, ident);
    for (int i = 0; i < 7; i++) REQUIRE(w1.robot.joints[i] == w2.robot.joints[i]);
    REQUIRE(w1.sphere.center.x == w2.sphere.center.x);
    REQUIRE(w1.sphere.center.y == w2.sphere.center.y);
  }
}

TEST_CASE("gain and bias reshape the executed deltas") {
  RunConfig cfg;
  Sim sim(cfg);
  DynamicsPerturbation pert;
  pert.gain[2] = 0.5;
  pert.bias[4] = 0.001;
  const WorldState w0 = sim.reset({0.55, 0.0}, 2);
  Action a;
  a.deltas[2] = 0.01;
  const WorldState w1 = sim.step(w0, a, pert);
  REQUIRE(w1.robot.joints[2] == Catch::Approx(w0.robot.joints[2] + 0.005).margin(1e-15));
  REQUIRE(w1.robot.joints[4] == Catch::Approx(w0.robot.joints[4] + 0.001).margin(1e-15));
}

TEST_CASE("command delay postpones execution by whole steps") {
  RunConfig cfg;
  Sim sim(cfg);
  DynamicsPerturbation pert;
  pert.delay = 2;
  const WorldState w0 = sim.reset({0.55, 0.0}, 2);
  Action a;
  a.deltas[1] = 0.01;
  WorldState w1 = sim.step(w0, a, pert);
  REQUIRE(w1.robot.joints[1] == w0.robot.joints[1]);
  WorldState w2 = sim.step(w1, Action{}, pert);
  REQUIRE(w2.robot.joints[1] == w0.robot.joints[1]);
  WorldState w3 = sim.step(w2, Action{}, pert);
  REQUIRE(w3.robot.joints[1] == Catch::Approx(w0.robot.joints[1] + 0.01).margin(1e-15));
}

TEST_CASE("observation noise corrupts only the report, deterministically") {
  RunConfig cfg;
  Sim sim(cfg);
  DynamicsPerturbation pert;
  pert.noise_std = 0.01;
  const WorldState w = sim.reset({0.55, 0.0}, 44);

  const RobotState seen1 = sim.observed_robot(w, pert);
  const RobotState seen2 = sim.observed_robot(w, pert);
  bool any_noise = false;
  for (int i = 0; i < 7; i++) {
    REQUIRE(seen1.joints[i] == seen2.joints[i]);  // same step -> same noise
    any_noise = any_noise || seen1.joints[i] != w.robot.joints[i];
  }
  REQUIRE(any_noise);

  // the underlying transition is untouched by the report noise
  Action a;
  a.deltas[0] = 0.004;
  const WorldState clean = sim.step(w, a, DynamicsPerturbation{});
  DynamicsPerturbation noisy;
  noisy.noise_std = 0.01;
  const WorldState still = sim.step(w, a, noisy);
  for (int i = 0; i < 7; i++) REQUIRE(clean.robot.joints[i] == still.robot.joints[i]);

  // different steps draw different noise
  const RobotState later = sim.observed_robot(clean, noisy);
  bool differs = false;
  for (int i = 0; i < 7; i++)
    differs = differs || (later.joints[i] - clean.robot.joints[i]) !=
                             (seen1.joints[i] - w.robot.joints[i]);
  REQUIRE(differs);
}

TEST_CASE("the policy observation is eight entries with a binary flag") {
  RobotState r;
  r.joints = {0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7};
  r.gripper_closed = true;
  const std::array<double, 8> o = observation_vector(r);
  for (int i = 0; i < 7; i++) REQUIRE(o[i] == r.joints[i]);
  REQUIRE(o[7] == 1.0);
  r.gripper_closed = false;
  REQUIRE(observation_vector(r)[7] == 0.0);
}
