#include <catch2/catch_amalgamated.hpp>
#include <vector>

#include "segrasp/expert.hpp"
#include "segrasp/rollout.hpp"

using namespace segrasp;

namespace {

RolloutOptions fast_opts() {
  RolloutOptions o;
  o.use_expert_exec = true;
  o.want_masks = false;  // geometry-only: skip the camera
  return o;
}

// consecutive-duplicate-free phase sequence visited by the supervisor
std::vector<ExpertPhase> phase_ladder(const Sim& sim, const Vec2& xy, uint64_t seed,
                                      RolloutOptions o) {
  std::vector<ExpertPhase> seq;
  o.sink = [&](int, const WorldState&, const SegMask&, const Action&, ExpertPhase ph) {
    if (seq.empty() || seq.back() != ph) seq.push_back(ph);
  };
  run_episode(sim, {}, xy, seed, {}, o);
  return seq;
}

}  // namespace

TEST_CASE("a clean grasp walks the phases in order without regressing") {
  RunConfig cfg;
  Sim sim(cfg);
  const Vec2 center{0.5 * (cfg.workspace[0] + cfg.workspace[2]),
                    0.5 * (cfg.workspace[1] + cfg.workspace[3])};
  const auto seq = phase_ladder(sim, center, 7, fast_opts());
  REQUIRE(seq == std::vector<ExpertPhase>{ExpertPhase::Approach, ExpertPhase::Descend,
                                          ExpertPhase::Grasp, ExpertPhase::Lift});
}

TEST_CASE("the supervisor grasps from the workspace corners and center") {
  RunConfig cfg;
  Sim sim(cfg);
  const double x0 = cfg.workspace[0], y0 = cfg.workspace[1];
  const double x1 = cfg.workspace[2], y1 = cfg.workspace[3];
  const std::vector<Vec2> starts{
      {x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}, {0.5 * (x0 + x1), 0.5 * (y0 + y1)}};
  for (size_t i = 0; i < starts.size(); i++) {
    const EpisodeRecord rec = run_episode(sim, {}, starts[i], 100 + i, {}, fast_opts());
    INFO("start " << starts[i].x << "," << starts[i].y);
    CHECK(rec.success);
    CHECK(rec.steps < cfg.step_cap);
  }
}

TEST_CASE("expert actions honor the per-joint delta bound and gripper magnitude") {
  RunConfig cfg;
  Sim sim(cfg);
  RolloutOptions o = fast_opts();
  o.record_frames = true;
  const EpisodeRecord rec = run_episode(sim, {}, {0.52, -0.03}, 21, {}, o);
  REQUIRE(rec.success);
  REQUIRE(!rec.frames.empty());
  // frames carry tanh coordinates: deltas / delta_max, then the gripper cmd
  for (const Frame& f : rec.frames) {
    for (int i = 0; i < 7; i++) CHECK(std::abs(f.executed[i]) <= 1.0 + 1e-12);
    CHECK(std::abs(f.executed[7]) == Catch::Approx(cfg.gripper_target));
  }
}

TEST_CASE("expert rollouts are bitwise repeatable") {
  RunConfig cfg;
  Sim sim(cfg);
  const EpisodeRecord a = run_episode(sim, {}, {0.61, 0.04}, 5, {}, fast_opts());
  const EpisodeRecord b = run_episode(sim, {}, {0.61, 0.04}, 5, {}, fast_opts());
  REQUIRE(a.success == b.success);
  REQUIRE(a.steps == b.steps);
  REQUIRE(norm(a.final_ee.p - b.final_ee.p) == 0.0);
}

TEST_CASE("a mid-descent sphere displacement forces a re-approach that still succeeds") {
  RunConfig cfg;
  Sim sim(cfg);
  const Vec2 center{0.5 * (cfg.workspace[0] + cfg.workspace[2]),
                    0.5 * (cfg.workspace[1] + cfg.workspace[3])};

  bool displaced = false;
  bool saw_descend = false;
  std::vector<ExpertPhase> seq;
  RolloutOptions o = fast_opts();
  o.sink = [&](int, const WorldState&, const SegMask&, const Action&, ExpertPhase ph) {
    if (ph == ExpertPhase::Descend) saw_descend = true;
    if (seq.empty() || seq.back() != ph) seq.push_back(ph);
  };
  o.intervene = [&](int, WorldState& w) {
    if (saw_descend && !displaced && !w.sphere.attached) {
      w.sphere.center.y += 0.03;  // well past align_tol, still inside the workspace
      displaced = true;
    }
  };
  const EpisodeRecord rec = run_episode(sim, {}, center, 7, {}, o);
  REQUIRE(displaced);
  REQUIRE(rec.success);

  // the ladder must contain a regression: an Approach after the first Descend
  bool regressed = false;
  for (size_t i = 1; i < seq.size(); i++)
    if (seq[i] == ExpertPhase::Approach) regressed = true;
  CHECK(regressed);
}

TEST_CASE("phase names are stable strings") {
  CHECK(std::string(phase_name(ExpertPhase::Approach)) == "approach");
  CHECK(std::string(phase_name(ExpertPhase::Descend)) == "descend");
  CHECK(std::string(phase_name(ExpertPhase::Grasp)) == "grasp");
  CHECK(std::string(phase_name(ExpertPhase::Lift)) == "lift");
}
