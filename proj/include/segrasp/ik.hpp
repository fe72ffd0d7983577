#pragma once
#include <array>
#include <cmath>
#include <stdexcept>

#include "segrasp/arm.hpp"
#include "segrasp/config.hpp"
#include "segrasp/geom.hpp"

namespace segrasp {

struct UnreachableTargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Cholesky solve of a 6x6 SPD system, in place.
inline void solve6(std::array<std::array<double, 6>, 6>& A, std::array<double, 6>& b) {
  for (int i = 0; i < 6; i++) {
    for (int j = 0; j < i; j++) {
      double s = A[i][j];
      for (int k = 0; k < j; k++) s -= A[i][k] * A[j][k];
      A[i][j] = s / A[j][j];
    }
    double d = A[i][i];
    for (int k = 0; k < i; k++) d -= A[i][k] * A[i][k];
    A[i][i] = std::sqrt(d > 1e-300 ? d : 1e-300);
  }
  for (int i = 0; i < 6; i++) {
    double s = b[i];
    for (int k = 0; k < i; k++) s -= A[i][k] * b[k];
    b[i] = s / A[i][i];
  }
  for (int i = 5; i >= 0; i--) {
    double s = b[i];
    for (int k = i + 1; k < 6; k++) s -= A[k][i] * b[k];
    b[i] = s / A[i][i];
  }
}

}  // namespace detail

struct IkResult {
  JointVector q;
  double pos_residual = 0;
  double rot_residual = 0;
  int iters = 0;
  bool converged = false;
};

// Damped-least-squares differential IK: iterate dq = J^T (J J^T + l^2 I)^-1 e
// from q0 toward (target_p, target_q), joints clamped to limits throughout.
inline IkResult solve_ik(const ArmModel& arm, const JointVector& q0, const Vec3& target_p,
                         const Quat& target_q, const RunConfig& cfg) {
  IkResult res;
  res.q = q0;
  const double lam2 = cfg.ik_damping * cfg.ik_damping;
  for (int it = 0; it < cfg.ik_iters; it++) {
    std::array<std::array<double, 7>, 6> J;
    const Pose ee = arm.jacobian(res.q, J);
    const Vec3 ep = target_p - ee.p;
    const Vec3 er = orientation_error(target_q, ee.q);
    res.pos_residual = norm(ep);
    res.rot_residual = norm(er);
    res.iters = it;
    if (res.pos_residual < cfg.ik_tol_pos && res.rot_residual < cfg.ik_tol_rot) {
      res.converged = true;
      return res;
    }
    std::array<double, 6> e{ep.x, ep.y, ep.z, er.x, er.y, er.z};
    std::array<std::array<double, 6>, 6> A{};
    for (int r = 0; r < 6; r++) {
      for (int c = 0; c <= r; c++) {
        double s = 0;
        for (int k = 0; k < 7; k++) s += J[r][k] * J[c][k];
        A[r][c] = s;
        A[c][r] = s;
      }
      A[r][r] += lam2;
    }
    detail::solve6(A, e);
    for (int i = 0; i < 7; i++) {
      double dq = 0;
      for (int r = 0; r < 6; r++) dq += J[r][i] * e[r];
      res.q[i] = clamp(res.q[i] + dq, arm.limit_lo(i), arm.limit_hi(i));
    }
  }
  {
    std::array<std::array<double, 7>, 6> J;
    const Pose ee = arm.jacobian(res.q, J);
    res.pos_residual = norm(target_p - ee.p);
    res.rot_residual = norm(orientation_error(target_q, ee.q));
    res.iters = cfg.ik_iters;
    res.converged = res.pos_residual < cfg.ik_tol_pos && res.rot_residual < cfg.ik_tol_rot;
  }
  return res;
}

}  // namespace segrasp
