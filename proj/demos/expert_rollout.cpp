// Minimal library tour: reset a world, run the scripted expert to a grasp,
// and print the trajectory summary.
#include <cstdio>

#include "segrasp/rollout.hpp"

int main() {
  using namespace segrasp;
  RunConfig cfg;
  cfg.validate();
  Sim sim(cfg);

  RolloutOptions opt;
  opt.use_expert_exec = true;
  opt.want_masks = true;
  opt.sink = [&](int step, const WorldState& w, const SegMask& mask, const Action&,
                 ExpertPhase phase) {
    if (step % 10 == 0 || sim.check_grasp_success(w)) {
      const Pose ee = sim.ee_pose(w);
      std::printf("step %3d  %-8s  ee=(%.3f,%.3f,%.3f)  sphere=(%.3f,%.3f,%.3f)%s  mask px=%zu\n",
                  step, phase_name(phase), ee.p.x, ee.p.y, ee.p.z, w.sphere.center.x,
                  w.sphere.center.y, w.sphere.center.z, w.sphere.attached ? " [held]" : "",
                  mask.count());
    }
  };

  const EpisodeRecord rec =
      run_episode(sim, DynamicsPerturbation{}, {0.55, 0.02}, /*seed=*/7, ExecFn{}, opt);
  std::printf("%s in %d steps\n", rec.success ? "grasped" : "failed", rec.steps);
  return rec.success ? 0 : 1;
}
