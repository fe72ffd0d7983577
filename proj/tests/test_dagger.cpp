#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "segrasp/dagger.hpp"

using namespace segrasp;
namespace fs = std::filesystem;

namespace {

// small enough that a full outer loop runs in well under a second per pass
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.iterations = 3;
  cfg.frames_per_iteration = 40;
  cfg.epochs_per_iteration = 3;
  cfg.batch_size = 16;
  cfg.step_cap = 60;
  cfg.eval_every = 2;
  cfg.eval_repeats = 1;
  cfg.grid_nx = 3;
  cfg.grid_ny = 2;
  cfg.probe_episodes = 6;
  cfg.validate();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

ExecFn never_close() {
  return [](int, const WorldState&, const std::array<double, 8>&, const SegMask&) {
    Action a;
    a.gripper_cmd = -1.0;
    return a;
  };
}

}  // namespace

TEST_CASE("first collection pass executes exactly what it labels") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  DaggerDataset<float> ds;
  collect_iteration<float>(sim, ds, nullptr, 1, cfg);

  REQUIRE(ds.size() == static_cast<size_t>(cfg.frames_per_iteration));
  REQUIRE(ds.fast.size() == ds.size());
  for (size_t i = 0; i < ds.size(); i++) {
    REQUIRE(ds.iteration_of[i] == 1);
    for (int k = 0; k < 8; k++) REQUIRE(ds.frames[i].executed[k] == ds.frames[i].label[k]);
    REQUIRE(ds.frames[i].mask.w == kMaskSize);
  }
}

TEST_CASE("later passes execute the policy while the supervisor labels") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  DaggerDataset<float> ds;
  collect_iteration<float>(sim, ds, nullptr, 1, cfg);
  ControllerNet<float> net(dagger_net_seed(cfg));
  collect_iteration(sim, ds, &net, 2, cfg);

  REQUIRE(ds.size() == static_cast<size_t>(2 * cfg.frames_per_iteration));
  size_t differing = 0;
  for (size_t i = static_cast<size_t>(cfg.frames_per_iteration); i < ds.size(); i++) {
    REQUIRE(ds.iteration_of[i] == 2);
    bool same = true;
    for (int k = 0; k < 8; k++) same = same && ds.frames[i].executed[k] == ds.frames[i].label[k];
    if (!same) differing++;
  }
  // an untrained policy does not reproduce the supervisor
  REQUIRE(differing > static_cast<size_t>(cfg.frames_per_iteration) * 9 / 10);
}

TEST_CASE("collection is deterministic in the config seed") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  DaggerDataset<float> a, b;
  collect_iteration<float>(sim, a, nullptr, 1, cfg);
  collect_iteration<float>(sim, b, nullptr, 1, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); i++) {
    REQUIRE(a.frames[i].obs == b.frames[i].obs);
    REQUIRE(a.frames[i].label == b.frames[i].label);
    REQUIRE(a.frames[i].mask == b.frames[i].mask);
  }
}

TEST_CASE("dataset survives a disk round trip bit-for-bit") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  DaggerDataset<float> ds;
  collect_iteration<float>(sim, ds, nullptr, 1, cfg);
  ControllerNet<float> net(dagger_net_seed(cfg));
  collect_iteration(sim, ds, &net, 2, cfg);

  const fs::path dir = fresh_dir("segrasp_ds_roundtrip");
  fs::create_directories(dir);
  const std::string path = (dir / "pool.bin").string();
  save_dataset(ds, path);
  DaggerDataset<float> back;
  load_dataset(back, path);

  REQUIRE(back.size() == ds.size());
  REQUIRE(back.iteration_of == ds.iteration_of);
  for (size_t i = 0; i < ds.size(); i++) {
    REQUIRE(back.frames[i].obs == ds.frames[i].obs);
    REQUIRE(back.frames[i].label == ds.frames[i].label);
    REQUIRE(back.frames[i].executed == ds.frames[i].executed);
    REQUIRE(back.frames[i].mask == ds.frames[i].mask);
  }
  REQUIRE(back.fast.size() == ds.size());

  REQUIRE_THROWS_AS(load_dataset(back, (dir / "missing.bin").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("training refits deterministically and rejects an empty pool") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  DaggerDataset<float> ds;
  collect_iteration<float>(sim, ds, nullptr, 1, cfg);

  auto run = [&](std::vector<float>& flat) {
    ControllerNet<float> net(dagger_net_seed(cfg));
    FastControllerTrainer<float> tr(net);
    const std::vector<double> losses = train_policy(tr, ds.fast, cfg, 1);
    REQUIRE(losses.size() == static_cast<size_t>(cfg.epochs_per_iteration));
    REQUIRE(losses.back() < losses.front());  // it fits its own pool
    for (auto& p : net.params()) flat.insert(flat.end(), p.value->v.begin(), p.value->v.end());
    return losses;
  };
  std::vector<float> wa, wb;
  const std::vector<double> la = run(wa);
  const std::vector<double> lb = run(wb);
  REQUIRE(la == lb);
  REQUIRE(wa == wb);

  DaggerDataset<float> empty;
  ControllerNet<float> net(dagger_net_seed(cfg));
  FastControllerTrainer<float> tr(net);
  REQUIRE_THROWS_AS(train_policy(tr, empty.fast, cfg, 1), UsageError);
}

TEST_CASE("grid evaluation counts successes per cell") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);

  const GridEval none = evaluate_grid(sim, {}, cfg.eval_repeats, Rng(5), never_close());
  REQUIRE(none.total == cfg.grid_nx * cfg.grid_ny * cfg.eval_repeats);
  REQUIRE(none.successes == 0);
  REQUIRE(none.rate == 0.0);

  const GridEval expert = evaluate_grid(sim, {}, cfg.eval_repeats, Rng(5));
  REQUIRE(expert.success.size() == static_cast<size_t>(expert.total));
  int sum = 0;
  for (uint8_t s : expert.success) sum += s;
  REQUIRE(sum == expert.successes);
  REQUIRE(expert.rate > 0.9);  // the supervisor grasps nearly everywhere
}

TEST_CASE("outer loop resumes from a checkpoint bit-exactly") {
  RunConfig cfg = tiny_config();
  const fs::path full_dir = fresh_dir("segrasp_dagger_full");
  const fs::path resumed_dir = fresh_dir("segrasp_dagger_resumed");

  cfg.out_dir = full_dir.string();
  ControllerNet<float> net_a(dagger_net_seed(cfg));
  const TrainReport full = run_dagger(net_a, cfg);
  REQUIRE(full.iterations_done == cfg.iterations);
  REQUIRE(full.pool_size == std::vector<int64_t>{40, 80, 120});
  REQUIRE(full.loss.size() == 3);
  REQUIRE(full.evals.size() == 2);  // iterations 2 and 3
  REQUIRE(full.evals[0].first == 2);
  REQUIRE(full.evals[1].first == 3);

  // interrupted run: stop after iteration 2, then finish with the full target
  cfg.out_dir = resumed_dir.string();
  cfg.iterations = 2;
  {
    ControllerNet<float> net_b(dagger_net_seed(cfg));
    const TrainReport part = run_dagger(net_b, cfg);
    REQUIRE(part.iterations_done == 2);
  }
  cfg.iterations = 3;
  {
    ControllerNet<float> net_c(dagger_net_seed(cfg));
    const TrainReport rest = run_dagger(net_c, cfg);
    REQUIRE(rest.iterations_done == 3);
    REQUIRE(rest.pool_size == full.pool_size);
    REQUIRE(rest.loss == full.loss);
  }

  for (const char* f : {"weights_001.bin", "weights_002.bin", "weights_003.bin",
                        "policy_final.bin", "dataset.bin", "loss_curve.csv", "success_curve.csv",
                        "grid_evals.csv"})
    REQUIRE(slurp(full_dir / f) == slurp(resumed_dir / f));

  // a checkpoint refuses to continue under a different seed
  cfg.seed = 12;
  ControllerNet<float> net_d(dagger_net_seed(cfg));
  REQUIRE_THROWS_AS(run_dagger(net_d, cfg), ConfigError);

  fs::remove_all(full_dir);
  fs::remove_all(resumed_dir);
}

TEST_CASE("displacement probe pairs control and displaced episodes") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  const RecoveryStats st = recovery_probe(sim, {}, Rng(cfg.seed).derive(kRecoveryTag));
  REQUIRE(st.episodes == cfg.probe_episodes);
  REQUIRE(st.triggered > 0);  // the supervisor descends, so the teleport fires
  REQUIRE(st.triggered <= st.episodes);
  REQUIRE(st.static_rate >= 0.0);
  REQUIRE(st.static_rate <= 1.0);
  REQUIRE(st.static_success + st.displaced_success > 0);
  // privileged supervisor replans from true state: displacement barely hurts
  REQUIRE(st.displaced_rate >= st.static_rate - 0.35);
}

TEST_CASE("command replay diverges under perturbed dynamics but not identity") {
  const RunConfig cfg = tiny_config();
  const Sim sim(cfg);
  const Vec2 start{0.5 * (cfg.workspace[0] + cfg.workspace[2]),
                   0.5 * (cfg.workspace[1] + cfg.workspace[3])};
  const uint64_t eseed = 77;

  // identity replay reproduces the reference trajectory exactly
  std::vector<Action> log;
  RolloutOptions ref_opt;
  ref_opt.use_expert_exec = true;
  ref_opt.want_masks = false;
  ref_opt.run_to_cap = true;
  ref_opt.sink = [&log](int, const WorldState&, const SegMask&, const Action& a, ExpertPhase) {
    log.push_back(a);
  };
  const EpisodeRecord ref = run_episode(sim, {}, start, eseed, {}, ref_opt);
  REQUIRE(static_cast<int>(log.size()) == cfg.step_cap);

  RolloutOptions replay_opt;
  replay_opt.want_masks = false;
  replay_opt.run_to_cap = true;
  const ExecFn replay = [&log](int step, const WorldState&, const std::array<double, 8>&,
                               const SegMask&) { return log[static_cast<size_t>(step)]; };
  const EpisodeRecord same = run_episode(sim, {}, start, eseed, replay, replay_opt);
  REQUIRE(norm(same.final_ee.p - ref.final_ee.p) == 0.0);

  const GapReport rep = gap_experiment(sim, {}, start, eseed, 5, Rng(cfg.seed).derive(kGapTag));
  REQUIRE(rep.draws.size() == 5);
  REQUIRE(rep.reference_success);  // the supervisor grasps from the center
  for (const GapDraw& d : rep.draws) {
    REQUIRE(d.open_err > 0.0);  // perturbed replay never lands exactly
    REQUIRE(d.delay == 1);
    REQUIRE(d.noise_std == 0.002);
    for (double g : d.gain) {
      REQUIRE(g >= 0.95);
      REQUIRE(g <= 1.05);
    }
    for (double b : d.bias) REQUIRE(std::abs(b) <= 0.001);
  }
  REQUIRE(rep.closed_wins >= 0);
  REQUIRE(rep.closed_wins <= 5);
}
