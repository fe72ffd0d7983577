// Subcommand harness: every pipeline stage behind one binary, each run
// leaving a self-describing artifact directory (resolved config + CSVs +
// weights). Exit codes: 0 ok, 1 pipeline failure, 2 usage/config error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "segrasp/combined.hpp"
#include "segrasp/dataset.hpp"

using namespace segrasp;
namespace fs = std::filesystem;

namespace {

constexpr char kUsage[] = R"(usage: segrasp <subcommand> [options]

subcommands:
  demo-expert       roll the scripted supervisor and dump frames + CSVs
  gen-data          materialize the train/val/test/shadow composite sets
  train-vision      train the segmentation net, save weights + curve
  eval-vision       precision/recall/IoU of net and HSV baseline
  train-controller  the imitation-learning outer loop (checkpointed)
  eval              grid success rate (expert, or --weights policy)
  eval-combined     grid rate with masks from the segmentation net
  recovery-probe    paired static/displaced-sphere episodes
  gap-experiment    open- vs closed-loop under dynamics perturbations

options:
  --config FILE   read config keys from FILE (after $SEGRASP_CONFIG)
  --set KEY=VAL   override one config key (repeatable)
  --seed N        shorthand for --set seed=N
  --out DIR       shorthand for --set out_dir=DIR
  --weights FILE  controller weights; omitted means the scripted supervisor
  --vision FILE   segmentation-net weights (eval-vision, eval-combined)
  --workers N     accepted for compatibility; any value gives identical output
  --quiet         suppress progress lines
)";

struct CliArgs {
  std::string subcommand;
  RunConfig cfg;
  std::string weights, vision;
  bool quiet = false;
};

CliArgs parse_cli(int argc, char** argv) {
  if (argc < 2) throw ConfigError(kUsage);
  CliArgs a;
  a.subcommand = argv[1];

  // precedence: defaults < $SEGRASP_CONFIG < --config < --set/--seed/--out
  if (const char* env = std::getenv("SEGRASP_CONFIG")) {
    std::ifstream f(env);
    if (!f) throw ConfigError("config: cannot open '" + std::string(env) + "' ($SEGRASP_CONFIG)");
    parse_config_text(a.cfg, f, env);
  }
  auto need_value = [&](int i, const std::string& flag) {
    if (i + 1 >= argc) throw ConfigError("missing value for " + flag);
    return std::string(argv[i + 1]);
  };
  for (int i = 2; i < argc; i++) {
    const std::string flag = argv[i];
    if (flag == "--config") {
      const std::string path = need_value(i++, flag);
      std::ifstream f(path);
      if (!f) throw ConfigError("config: cannot open '" + path + "'");
      parse_config_text(a.cfg, f, path);
    } else if (flag == "--set") {
      const std::string kv = need_value(i++, flag);
      const size_t eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      apply_config_kv(a.cfg, kv.substr(0, eq), kv.substr(eq + 1), "--set");
    } else if (flag == "--seed") {
      apply_config_kv(a.cfg, "seed", need_value(i++, flag), "--seed");
    } else if (flag == "--out") {
      apply_config_kv(a.cfg, "out_dir", need_value(i++, flag), "--out");
    } else if (flag == "--weights") {
      a.weights = need_value(i++, flag);
    } else if (flag == "--vision") {
      a.vision = need_value(i++, flag);
    } else if (flag == "--workers") {
      // collection and generation are pure functions of (seed, index); a
      // parallel implementation must merge to these exact bytes, so the
      // worker count never changes results and the serial path is canonical
      const std::string n = need_value(i++, flag);
      if (std::atoi(n.c_str()) < 1) throw ConfigError("--workers must be >= 1");
    } else if (flag == "--quiet") {
      a.quiet = true;
    } else {
      throw ConfigError("unknown option '" + flag + "'\n" + kUsage);
    }
  }
  a.cfg.validate();
  return a;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  std::ofstream f(out / "config.txt", std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + (out / "config.txt").string());
  f << serialize_config(cfg);
  return out;
}

template <typename S>
void load_controller(ControllerNet<S>& net, const std::string& path) {
  load_weights(net.params(), path);
}

template <typename S>
Sequential<S> load_vision(const std::string& path, const RunConfig& cfg) {
  Sequential<S> net = make_vision_net<S>(cfg.seed, cfg.cam_rgb_size);
  std::vector<ParamRef<S>> params;
  net.collect_params("vision", params);
  load_weights(params, path);
  return net;
}

void write_grid_csv(const fs::path& path, const GridEval& ge) {
  CsvWriter csv(path.string());
  csv.row("rep", "ix", "iy", "success");
  for (int rep = 0; rep < ge.repeats; rep++)
    for (int iy = 0; iy < ge.ny; iy++)
      for (int ix = 0; ix < ge.nx; ix++) {
        const size_t cell = static_cast<size_t>(iy) * ge.nx + ix;
        csv.row(static_cast<int64_t>(rep), static_cast<int64_t>(ix), static_cast<int64_t>(iy),
                static_cast<int64_t>(ge.success[static_cast<size_t>(rep) * ge.nx * ge.ny + cell]));
      }
  csv.flush();
}

// per-grid-cell success fraction as a grayscale heatmap
void write_grid_heatmap(const fs::path& path, const GridEval& ge) {
  Bitmap cellwise(ge.nx, ge.ny);
  RgbImage img(ge.nx, ge.ny);
  for (int iy = 0; iy < ge.ny; iy++)
    for (int ix = 0; ix < ge.nx; ix++) {
      int hits = 0;
      for (int rep = 0; rep < ge.repeats; rep++)
        hits += ge.success[static_cast<size_t>(rep) * ge.nx * ge.ny +
                           static_cast<size_t>(iy) * ge.nx + ix];
      const float v = ge.repeats ? static_cast<float>(hits) / ge.repeats : 0.f;
      img.px(iy, ix)[0] = img.px(iy, ix)[1] = img.px(iy, ix)[2] = v;
    }
  write_ppm(path.string(), img);
}

// ---------------------------------------------------------------------------

int cmd_demo_expert(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const Sim sim(a.cfg);
  const RunConfig& cfg = a.cfg;
  const CameraIntrinsics rgb_intr = make_intrinsics(cfg.cam_rgb_size, cfg.cam_fov_deg);
  fs::create_directories(out / "frames");

  const Rng root = Rng(cfg.seed).derive(0x64656d6full);
  const double cx = 0.5 * (cfg.workspace[0] + cfg.workspace[2]);
  const double cy = 0.5 * (cfg.workspace[1] + cfg.workspace[3]);
  const std::vector<Vec2> starts = {
      {cx, cy},
      {cfg.workspace[0] + 0.15 * (cfg.workspace[2] - cfg.workspace[0]),
       cfg.workspace[1] + 0.2 * (cfg.workspace[3] - cfg.workspace[1])},
      {cfg.workspace[0] + 0.85 * (cfg.workspace[2] - cfg.workspace[0]),
       cfg.workspace[1] + 0.8 * (cfg.workspace[3] - cfg.workspace[1])}};

  CsvWriter episodes((out / "episodes.csv").string());
  episodes.row("episode", "sphere_x", "sphere_y", "steps", "success");
  CsvWriter frames((out / "frames.csv").string());
  frames.row("episode", "step", "phase", "ee_x", "ee_y", "ee_z", "sphere_x", "sphere_y",
             "sphere_z", "attached", "gripper_closed", "d0", "d1", "d2", "d3", "d4", "d5", "d6",
             "gripper_cmd");

  int successes = 0;
  for (size_t e = 0; e < starts.size(); e++) {
    const RgbImage bg = generate_background(BackgroundKind::kGradient,
                                            root.derive(e).next_u64(), cfg);
    RolloutOptions opt;
    opt.use_expert_exec = true;
    opt.sink = [&](int step, const WorldState& w, const SegMask& mask, const Action& act,
                   ExpertPhase phase) {
      const Pose ee = sim.ee_pose(w);
      frames.row(static_cast<int64_t>(e), static_cast<int64_t>(step), phase_name(phase), ee.p.x,
                 ee.p.y, ee.p.z, w.sphere.center.x, w.sphere.center.y, w.sphere.center.z,
                 static_cast<int64_t>(w.sphere.attached),
                 static_cast<int64_t>(w.robot.gripper_closed), act.deltas[0], act.deltas[1],
                 act.deltas[2], act.deltas[3], act.deltas[4], act.deltas[5], act.deltas[6],
                 act.gripper_cmd);
      if (e == 0) {
        char name[48];
        std::snprintf(name, sizeof(name), "mask_%03d.pgm", step);
        write_pgm((out / "frames" / name).string(), mask);
        if (step % 10 == 0) {
          std::snprintf(name, sizeof(name), "rgb_%03d.ppm", step);
          write_ppm((out / "frames" / name).string(), render_world_rgb(sim, w, rgb_intr, bg));
        }
      }
    };
    const uint64_t eseed = root.derive(e, 0x7365ull).next_u64();
    const EpisodeRecord rec = run_episode(sim, {}, starts[e], eseed, {}, opt);
    episodes.row(static_cast<int64_t>(e), rec.sphere_xy.x, rec.sphere_xy.y,
                 static_cast<int64_t>(rec.steps), static_cast<int64_t>(rec.success));
    if (rec.success) successes++;
    if (!a.quiet)
      std::printf("episode %zu: %s in %d steps\n", e, rec.success ? "grasped" : "failed",
                  rec.steps);
  }
  episodes.flush();
  frames.flush();
  if (successes == 0) {
    std::fprintf(stderr, "demo-expert: no episode succeeded\n");
    return 1;
  }
  if (!a.quiet) std::printf("artifacts in %s\n", out.string().c_str());
  return 0;
}

int cmd_gen_data(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const RunConfig& cfg = a.cfg;
  const struct { const char* name; uint64_t stream; int count; bool shadow; } splits[] = {
      {"train", kVisionTrainStream, cfg.vision_train_count, false},
      {"val", kVisionValStream, cfg.vision_val_count, false},
      {"test", kVisionTestStream, cfg.vision_test_count, false},
      {"shadow", kVisionShadowStream, cfg.vision_shadow_count, true},
  };
  for (const auto& s : splits) {
    save_vision_set(make_vision_set(cfg, s.stream, s.count, s.shadow), (out / s.name).string());
    if (!a.quiet) std::printf("%s: %d samples\n", s.name, s.count);
  }
  return 0;
}

int cmd_train_vision(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const RunConfig& cfg = a.cfg;
  if (!a.quiet) std::printf("generating %d train + %d val composites\n", cfg.vision_train_count,
                            cfg.vision_val_count);
  const VisionSet train = make_vision_set(cfg, kVisionTrainStream, cfg.vision_train_count);
  const VisionSet val = make_vision_set(cfg, kVisionValStream, cfg.vision_val_count);
  auto net = make_vision_net<float>(cfg.seed, cfg.cam_rgb_size);
  const auto log = [&](int epoch, double loss, double iou) {
    if (!a.quiet) {
      std::printf("epoch %d: loss %.5f val_iou %.4f\n", epoch, loss, iou);
      std::fflush(stdout);
    }
  };
  const VisionReport rep = train_vision(net, train, val, cfg, cfg.seed, log);

  std::vector<ParamRef<float>> params;
  net.collect_params("vision", params);
  save_weights(params, (out / "vision.bin").string());
  CsvWriter curve((out / "vision_curve.csv").string());
  curve.row("epoch", "train_loss", "val_iou");
  for (int e = 0; e < rep.epochs; e++)
    curve.row(static_cast<int64_t>(e), rep.train_loss[e], rep.val_iou[e]);
  curve.flush();
  if (!a.quiet)
    std::printf("best epoch %d val_iou %s -> %s\n", rep.best_epoch,
                csv_num(rep.best_val_iou).c_str(), (out / "vision.bin").string().c_str());
  return 0;
}

int cmd_eval_vision(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const RunConfig& cfg = a.cfg;
  if (a.vision.empty()) throw ConfigError("eval-vision needs --vision FILE");
  auto net = load_vision<float>(a.vision, cfg);

  const VisionSet test = make_vision_set(cfg, kVisionTestStream, cfg.vision_test_count);
  const VisionSet shadow = make_vision_set(cfg, kVisionShadowStream, cfg.vision_shadow_count,
                                           true);
  const HsvThreshold th = hsv_threshold_from(cfg);

  CsvWriter csv((out / "vision_eval.csv").string());
  csv.row("split", "segmenter", "tp", "fp", "fn", "precision", "recall", "iou");
  const auto emit = [&](const char* split, const char* seg, const PixelMetrics& m) {
    csv.row(split, seg, static_cast<int64_t>(m.tp), static_cast<int64_t>(m.fp),
            static_cast<int64_t>(m.fn), m.precision, m.recall, m.iou);
    if (!a.quiet)
      std::printf("%s %s: precision %.4f recall %.4f iou %.4f\n", split, seg, m.precision,
                  m.recall, m.iou);
  };
  const auto test_truth = truths_of(test), shadow_truth = truths_of(shadow);
  emit("test", "net", evaluate_precision_recall(segment_all(net, test, cfg.vision_batch),
                                                test_truth));
  emit("test", "baseline", evaluate_precision_recall(baseline_all(test, th), test_truth));
  emit("shadow", "net", evaluate_precision_recall(segment_all(net, shadow, cfg.vision_batch),
                                                  shadow_truth));
  emit("shadow", "baseline", evaluate_precision_recall(baseline_all(shadow, th), shadow_truth));
  csv.flush();
  return 0;
}

int cmd_train_controller(const CliArgs& a) {
  prepare_out_dir(a.cfg);
  ControllerNet<float> net(dagger_net_seed(a.cfg));
  const auto log = [&](const std::string& line) {
    if (!a.quiet) {
      std::printf("%s\n", line.c_str());
      std::fflush(stdout);
    }
  };
  const TrainReport rep = run_dagger(net, a.cfg, log);
  if (!a.quiet && !rep.evals.empty())
    std::printf("final success rate %s over %d episodes\n",
                csv_num(rep.evals.back().second.rate).c_str(), rep.evals.back().second.total);
  return 0;
}

int cmd_eval(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const Sim sim(a.cfg);
  const DynamicsPerturbation pert = DynamicsPerturbation::from_config(a.cfg);
  const Rng stream = Rng(a.cfg.seed).derive(kDaggerEvalTag, 0);
  GridEval ge;
  if (a.weights.empty()) {
    ge = evaluate_grid(sim, pert, a.cfg.eval_repeats, stream);
  } else {
    ControllerNet<float> net(dagger_net_seed(a.cfg));
    load_controller(net, a.weights);
    ge = evaluate_grid(sim, pert, a.cfg.eval_repeats, stream, make_policy_exec(net, a.cfg));
  }
  write_grid_csv(out / "eval_grid.csv", ge);
  write_grid_heatmap(out / "eval_grid.ppm", ge);
  std::printf("%s policy: %d/%d grasps (%s)\n", a.weights.empty() ? "supervisor" : "trained",
              ge.successes, ge.total, csv_num(ge.rate).c_str());
  return 0;
}

int cmd_eval_combined(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  if (a.weights.empty()) throw ConfigError("eval-combined needs --weights FILE");
  if (a.vision.empty()) throw ConfigError("eval-combined needs --vision FILE");
  const Sim sim(a.cfg);
  ControllerNet<float> ctrl(dagger_net_seed(a.cfg));
  load_controller(ctrl, a.weights);
  auto vision = load_vision<float>(a.vision, a.cfg);
  const DynamicsPerturbation pert = DynamicsPerturbation::from_config(a.cfg);
  const GridEval ge = evaluate_grid_combined(sim, pert, a.cfg.eval_repeats,
                                             Rng(a.cfg.seed).derive(kCombinedEvalTag), ctrl,
                                             vision);
  write_grid_csv(out / "combined_grid.csv", ge);
  write_grid_heatmap(out / "combined_grid.ppm", ge);
  std::printf("combined pipeline: %d/%d grasps (%s)\n", ge.successes, ge.total,
              csv_num(ge.rate).c_str());
  return 0;
}

int cmd_recovery_probe(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const Sim sim(a.cfg);
  RecoveryStats st;
  const Rng stream = Rng(a.cfg.seed).derive(kRecoveryTag);
  if (a.weights.empty()) {
    st = recovery_probe(sim, {}, stream);
  } else {
    ControllerNet<float> net(dagger_net_seed(a.cfg));
    load_controller(net, a.weights);
    st = recovery_probe(sim, make_policy_exec(net, a.cfg), stream);
  }
  CsvWriter csv((out / "recovery.csv").string());
  csv.row("episode", "static_success", "displaced_success");
  for (int e = 0; e < st.episodes; e++)
    csv.row(static_cast<int64_t>(e), static_cast<int64_t>(st.static_ok[e]),
            static_cast<int64_t>(st.displaced_ok[e]));
  csv.flush();
  std::printf("static %d/%d (%s), displaced %d/%d (%s), teleports fired %d\n", st.static_success,
              st.episodes, csv_num(st.static_rate).c_str(), st.displaced_success, st.episodes,
              csv_num(st.displaced_rate).c_str(), st.triggered);
  return 0;
}

int cmd_gap_experiment(const CliArgs& a) {
  const fs::path out = prepare_out_dir(a.cfg);
  const RunConfig& cfg = a.cfg;
  const Sim sim(cfg);
  const Vec2 start{0.5 * (cfg.workspace[0] + cfg.workspace[2]),
                   0.5 * (cfg.workspace[1] + cfg.workspace[3])};
  const Rng stream = Rng(cfg.seed).derive(kGapTag);
  const uint64_t eseed = Rng(cfg.seed).derive(kGapTag, 1).next_u64();

  GapReport rep;
  if (a.weights.empty()) {
    rep = gap_experiment(sim, {}, start, eseed, cfg.gap_draws, stream);
  } else {
    ControllerNet<float> net(dagger_net_seed(cfg));
    load_controller(net, a.weights);
    rep = gap_experiment(sim, make_policy_exec(net, cfg), start, eseed, cfg.gap_draws, stream);
  }

  CsvWriter csv((out / "gap.csv").string());
  csv.cell("draw");
  for (int j = 0; j < 7; j++) csv.cell("gain" + std::to_string(j));
  for (int j = 0; j < 7; j++) csv.cell("bias" + std::to_string(j));
  csv.row("delay", "noise_std", "open_err", "closed_err", "closed_win");
  for (size_t d = 0; d < rep.draws.size(); d++) {
    const GapDraw& g = rep.draws[d];
    csv.cell(static_cast<int64_t>(d));
    for (double v : g.gain) csv.cell(v);
    for (double v : g.bias) csv.cell(v);
    csv.row(static_cast<int64_t>(g.delay), g.noise_std, g.open_err, g.closed_err,
            static_cast<int64_t>(g.closed_err < g.open_err));
  }
  csv.flush();
  std::printf("closed-loop beat open-loop replay in %d/%zu draws (reference %s)\n",
              rep.closed_wins, rep.draws.size(), rep.reference_success ? "grasped" : "failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const CliArgs a = parse_cli(argc, argv);
    if (a.subcommand == "demo-expert") return cmd_demo_expert(a);
    if (a.subcommand == "gen-data") return cmd_gen_data(a);
    if (a.subcommand == "train-vision") return cmd_train_vision(a);
    if (a.subcommand == "eval-vision") return cmd_eval_vision(a);
    if (a.subcommand == "train-controller") return cmd_train_controller(a);
    if (a.subcommand == "eval") return cmd_eval(a);
    if (a.subcommand == "eval-combined") return cmd_eval_combined(a);
    if (a.subcommand == "recovery-probe") return cmd_recovery_probe(a);
    if (a.subcommand == "gap-experiment") return cmd_gap_experiment(a);
    std::fprintf(stderr, "unknown subcommand '%s'\n%s", a.subcommand.c_str(), kUsage);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
