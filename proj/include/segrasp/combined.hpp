#pragma once
// End-to-end evaluation: every control tick renders the wrist camera's RGB
// view over a procedural background, the segmentation net turns it into the
// 100x100 mask, and the controller acts on that mask instead of the
// renderer's ground truth.

#include "segrasp/dagger.hpp"
#include "segrasp/vision.hpp"

namespace segrasp {

inline constexpr uint64_t kCombinedEvalTag = 0x63657673ull;

// One episode's policy: the background is frozen for the whole grasp (the
// desk does not change mid-episode), the mask is recomputed every tick.
template <typename S>
ExecFn make_combined_exec(ControllerNet<S>& ctrl, Sequential<S>& vision, const Sim& sim,
                          RgbImage background) {
  const RunConfig& cfg = sim.cfg();
  const CameraIntrinsics intr = make_intrinsics(cfg.cam_rgb_size, cfg.cam_fov_deg);
  const double dm = cfg.delta_max;
  return [&ctrl, &vision, &sim, intr, dm, bg = std::move(background)](
             int, const WorldState& w, const std::array<double, 8>& obs, const SegMask&) {
    const SegMask seen = segment(vision, render_world_rgb(sim, w, intr, bg));
    return action_from_output(controller_output(ctrl, seen, obs), dm);
  };
}

// The grid protocol with per-episode random backgrounds drawn from the same
// stream as the episode seed.
template <typename S>
GridEval evaluate_grid_combined(const Sim& sim, const DynamicsPerturbation& pert, int repeats,
                                Rng stream, ControllerNet<S>& ctrl, Sequential<S>& vision) {
  const RunConfig& cfg = sim.cfg();
  const std::vector<Vec2> grid = evaluation_grid(cfg);
  GridEval ge;
  ge.nx = cfg.grid_nx;
  ge.ny = cfg.grid_ny;
  ge.repeats = repeats;
  ge.total = static_cast<int>(grid.size()) * repeats;
  ge.success.assign(static_cast<size_t>(ge.total), 0);
  RolloutOptions opt;
  opt.want_masks = false;  // the policy renders its own view
  for (int rep = 0; rep < repeats; rep++)
    for (size_t c = 0; c < grid.size(); c++) {
      Rng ep = stream.derive(static_cast<uint64_t>(rep), static_cast<uint64_t>(c));
      const auto kind = static_cast<BackgroundKind>(ep.next_below(kBackgroundKindCount));
      RgbImage bg = generate_background(kind, ep.next_u64(), cfg);
      const uint64_t eseed = ep.next_u64();
      const ExecFn policy = make_combined_exec(ctrl, vision, sim, std::move(bg));
      if (run_episode(sim, pert, grid[c], eseed, policy, opt).success) {
        ge.success[static_cast<size_t>(rep) * grid.size() + c] = 1;
        ge.successes++;
      }
    }
  ge.rate = ge.total ? static_cast<double>(ge.successes) / ge.total : 0.0;
  return ge;
}

}  // namespace segrasp
