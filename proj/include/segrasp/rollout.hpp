#pragma once
#include <array>
#include <functional>
#include <vector>

#include "segrasp/expert.hpp"
#include "segrasp/render.hpp"
#include "segrasp/world.hpp"

namespace segrasp {

// Everything a policy is allowed to see / everything training needs: the
// (noisy) 8-entry state, the mask, the supervisor's action in the network's
// tanh output coordinates (joint deltas / delta_max, gripper cmd), and the
// action that actually ran (same as the label when the supervisor executes).
struct Frame {
  std::array<double, 8> obs{};
  SegMask mask;
  std::array<double, 8> label{};
  std::array<double, 8> executed{};
};

struct EpisodeRecord {
  std::vector<Frame> frames;
  bool success = false;
  bool label_failed = false;  // supervisor lost the sphere (out of reach)
  int steps = 0;
  Vec2 sphere_xy{};
  uint64_t seed = 0;
  Pose final_ee{};  // tool pose when the episode ended
};

inline std::array<double, 8> label_from_action(const Action& a, double delta_max) {
  std::array<double, 8> t;
  for (int i = 0; i < 7; i++) t[i] = clamp(a.deltas[i] / delta_max, -1.0, 1.0);
  t[7] = clamp(a.gripper_cmd, -1.0, 1.0);
  return t;
}

inline Action action_from_output(const std::array<double, 8>& o, double delta_max) {
  Action a;
  for (int i = 0; i < 7; i++) a.deltas[i] = clamp(o[i], -1.0, 1.0) * delta_max;
  a.gripper_cmd = clamp(o[7], -1.0, 1.0);
  return a;
}

// Executed action chosen from (step index, world, observation, mask).
using ExecFn = std::function<Action(int, const WorldState&, const std::array<double, 8>&,
                                    const SegMask&)>;
// Optional per-step tap for demos/exports.
using StepSink = std::function<void(int, const WorldState&, const SegMask&, const Action&,
                                    ExpertPhase)>;

struct RolloutOptions {
  bool use_expert_exec = false;  // supervisor acts (vs. the supplied policy)
  bool want_labels = false;      // record supervisor labels on every frame
  bool want_masks = true;        // render the camera mask each tick
  bool record_frames = false;
  bool run_to_cap = false;       // ignore grasp success; always run step_cap ticks
  StepSink sink;                 // called after each executed step, if set
  // Called at the top of every tick before the camera fires; may mutate the
  // world (e.g. teleport the sphere mid-episode).
  std::function<void(int, WorldState&)> intervene;
};

// One episode against the given dynamics. Runs to grasp success or the step
// cap. The supervisor is stepped along the visited trajectory whenever it
// executes or labels; if it loses the sphere (unreachable) while only
// labelling, the episode is truncated and flagged instead of failing hard.
inline EpisodeRecord run_episode(const Sim& sim, const DynamicsPerturbation& pert,
                                 const Vec2& sphere_xy, uint64_t seed, const ExecFn& policy,
                                 const RolloutOptions& opt) {
  const RunConfig& cfg = sim.cfg();
  const CameraIntrinsics intr = make_intrinsics(cfg.cam_mask_size, cfg.cam_fov_deg);
  EpisodeRecord rec;
  rec.sphere_xy = sphere_xy;
  rec.seed = seed;

  WorldState w = sim.reset(sphere_xy, seed);
  Expert expert(sim);
  const bool step_expert = opt.use_expert_exec || opt.want_labels;

  for (int step = 0; step < cfg.step_cap; step++) {
    if (opt.intervene) opt.intervene(step, w);
    const std::array<double, 8> obs = observation_vector(sim.observed_robot(w, pert));
    SegMask mask;
    if (opt.want_masks || opt.record_frames) mask = render_mask(sim, w, intr);

    Action expert_a;
    if (step_expert) {
      if (opt.use_expert_exec) {
        expert_a = expert.step(w);  // expert as executor: errors propagate
      } else {
        try {
          expert_a = expert.step(w);
        } catch (const UnreachableTargetError&) {
          rec.label_failed = true;
          break;
        }
      }
    }
    const Action exec = opt.use_expert_exec ? expert_a : policy(step, w, obs, mask);

    if (opt.record_frames)
      rec.frames.push_back({obs, mask, label_from_action(expert_a, cfg.delta_max),
                            label_from_action(exec, cfg.delta_max)});

    w = sim.step(w, exec, pert);
    if (opt.sink) opt.sink(step, w, mask, exec, expert.phase());
    if (sim.check_grasp_success(w)) {
      rec.success = true;
      if (!opt.run_to_cap) break;
    }
  }
  rec.steps = w.step_count;
  rec.final_ee = sim.ee_pose(w);
  return rec;
}

// The 10x5 evaluation lattice over the sphere-start rectangle.
inline std::vector<Vec2> evaluation_grid(const RunConfig& cfg) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<size_t>(cfg.grid_nx) * cfg.grid_ny);
  for (int iy = 0; iy < cfg.grid_ny; iy++)
    for (int ix = 0; ix < cfg.grid_nx; ix++) {
      const double fx = cfg.grid_nx == 1 ? 0.5 : static_cast<double>(ix) / (cfg.grid_nx - 1);
      const double fy = cfg.grid_ny == 1 ? 0.5 : static_cast<double>(iy) / (cfg.grid_ny - 1);
      pts.push_back({cfg.workspace[0] + fx * (cfg.workspace[2] - cfg.workspace[0]),
                     cfg.workspace[1] + fy * (cfg.workspace[3] - cfg.workspace[1])});
    }
  return pts;
}

}  // namespace segrasp
