#pragma once
// Imitation-learning outer loop: collect on-policy episodes with supervisor
// labels, aggregate, refit; plus the grid evaluation protocol and the
// displacement-recovery and dynamics-gap experiments built on the same
// episode runner.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "segrasp/csv.hpp"
#include "segrasp/fast_trainer.hpp"

namespace segrasp {

// stream tags; each phase of a run draws from its own (seed, tag, ...) stream
inline constexpr uint64_t kDaggerCollectTag = 0x64636f6cull;  // collection episodes
inline constexpr uint64_t kDaggerTrainTag = 0x6474726eull;    // epoch shuffles
inline constexpr uint64_t kDaggerEvalTag = 0x6465766cull;     // grid evaluations
inline constexpr uint64_t kDaggerNetTag = 0x646e6574ull;      // policy init
inline constexpr uint64_t kRecoveryTag = 0x64726563ull;       // displacement probe
inline constexpr uint64_t kGapTag = 0x64676170ull;            // perturbation draws

inline uint64_t dagger_net_seed(const RunConfig& cfg) {
  return Rng(cfg.seed).derive(kDaggerNetTag).seed();
}

// ---------------------------------------------------------------------------
// dataset: append-only pool of labeled frames, mirrored into the sparse
// training representation as frames arrive

template <typename S>
struct DaggerDataset {
  std::vector<Frame> frames;
  std::vector<int32_t> iteration_of;  // which collection pass produced each frame
  FastDataset<S> fast;

  void add(Frame f, int iteration) {
    fast.add(f.mask, f.obs, f.label);
    iteration_of.push_back(iteration);
    frames.push_back(std::move(f));
  }
  size_t size() const { return frames.size(); }

  void truncate(size_t n) {
    if (n >= size()) return;
    frames.resize(n);
    iteration_of.resize(n);
    fast.frames.resize(n);
  }
};

// binary pool file: magic, frame count, then per frame the iteration index,
// the three 8-vectors, and the mask bit-packed row-major
inline constexpr char kDatasetMagic[] = "SGDS v1\n";

template <typename S>
void save_dataset(const DaggerDataset<S>& ds, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + tmp);
    f.write(kDatasetMagic, sizeof(kDatasetMagic) - 1);
    const uint64_t count = ds.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    std::vector<uint8_t> packed;
    for (size_t i = 0; i < ds.size(); i++) {
      const Frame& fr = ds.frames[i];
      const int32_t it = ds.iteration_of[i];
      f.write(reinterpret_cast<const char*>(&it), sizeof(it));
      f.write(reinterpret_cast<const char*>(fr.obs.data()), 8 * sizeof(double));
      f.write(reinterpret_cast<const char*>(fr.label.data()), 8 * sizeof(double));
      f.write(reinterpret_cast<const char*>(fr.executed.data()), 8 * sizeof(double));
      const uint16_t w = static_cast<uint16_t>(fr.mask.w), h = static_cast<uint16_t>(fr.mask.h);
      f.write(reinterpret_cast<const char*>(&w), sizeof(w));
      f.write(reinterpret_cast<const char*>(&h), sizeof(h));
      packed.assign((fr.mask.v.size() + 7) / 8, 0);
      for (size_t p = 0; p < fr.mask.v.size(); p++)
        if (fr.mask.v[p]) packed[p >> 3] |= static_cast<uint8_t>(1u << (p & 7));
      f.write(reinterpret_cast<const char*>(packed.data()),
              static_cast<std::streamsize>(packed.size()));
    }
    if (!f) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename S>
void load_dataset(DaggerDataset<S>& ds, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[sizeof(kDatasetMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::string(magic, sizeof(magic)) != std::string(kDatasetMagic, sizeof(magic)))
    throw IoError("not a dataset file: " + path);
  uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  ds.frames.clear();
  ds.iteration_of.clear();
  ds.fast.frames.clear();
  std::vector<uint8_t> packed;
  for (uint64_t i = 0; i < count; i++) {
    int32_t it = 0;
    Frame fr;
    f.read(reinterpret_cast<char*>(&it), sizeof(it));
    f.read(reinterpret_cast<char*>(fr.obs.data()), 8 * sizeof(double));
    f.read(reinterpret_cast<char*>(fr.label.data()), 8 * sizeof(double));
    f.read(reinterpret_cast<char*>(fr.executed.data()), 8 * sizeof(double));
    uint16_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&w), sizeof(w));
    f.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!f) throw IoError("truncated dataset: " + path);
    fr.mask = SegMask(w, h);
    packed.assign((fr.mask.v.size() + 7) / 8, 0);
    f.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!f) throw IoError("truncated dataset: " + path);
    for (size_t p = 0; p < fr.mask.v.size(); p++)
      fr.mask.v[p] = (packed[p >> 3] >> (p & 7)) & 1u;
    ds.add(std::move(fr), it);
  }
}

// ---------------------------------------------------------------------------
// collection and training

template <typename S>
ExecFn make_policy_exec(ControllerNet<S>& net, const RunConfig& cfg) {
  const double dm = cfg.delta_max;
  return [&net, dm](int, const WorldState&, const std::array<double, 8>& obs,
                    const SegMask& mask) {
    return action_from_output(controller_output(net, mask, obs), dm);
  };
}

// One aggregation pass: episodes from uniformly seeded sphere starts until
// exactly cfg.frames_per_iteration new frames are pooled (the last episode is
// truncated). Iteration 1 executes the supervisor; later ones execute the
// policy while the supervisor only labels. Episodes are packed in episode-
// index order and every frame depends only on (seed, iteration, episode), so
// speculative parallel collection would pool the identical dataset.
template <typename S>
void collect_iteration(const Sim& sim, DaggerDataset<S>& ds, ControllerNet<S>* policy, int n,
                       const RunConfig& cfg) {
  const Rng root = Rng(cfg.seed).derive(kDaggerCollectTag, static_cast<uint64_t>(n));
  RolloutOptions opt;
  opt.want_labels = true;
  opt.record_frames = true;
  opt.use_expert_exec = n == 1 || policy == nullptr;
  ExecFn exec;
  if (!opt.use_expert_exec) exec = make_policy_exec(*policy, cfg);
  int added = 0, episode = 0, empty_streak = 0;
  while (added < cfg.frames_per_iteration) {
    Rng ep = root.derive(static_cast<uint64_t>(episode++));
    const Vec2 sxy{ep.uniform(cfg.workspace[0], cfg.workspace[2]),
                   ep.uniform(cfg.workspace[1], cfg.workspace[3])};
    const uint64_t eseed = ep.next_u64();
    EpisodeRecord rec = run_episode(sim, {}, sxy, eseed, exec, opt);
    if (rec.frames.empty()) {
      if (++empty_streak > 100) throw SimError("collection stalled: no labeled frames");
      continue;
    }
    empty_streak = 0;
    for (Frame& fr : rec.frames) {
      if (added == cfg.frames_per_iteration) break;
      ds.add(std::move(fr), n);
      added++;
    }
  }
}

// Refit on the whole pool: epochs_per_iteration shuffled passes of minibatch
// ADAM, warm-started weights, fresh optimizer state each call. Returns the
// per-epoch mean per-sample loss.
template <typename S>
std::vector<double> train_policy(FastControllerTrainer<S>& trainer, const FastDataset<S>& data,
                                 const RunConfig& cfg, int iteration) {
  if (data.size() == 0) throw UsageError("train_policy: empty dataset");
  pin_blas_single_thread();
  Adam<S> opt(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  opt.init(trainer.net().params());
  const size_t total = data.size();
  std::vector<uint32_t> idx(total);
  const Rng shuffles = Rng(cfg.seed).derive(kDaggerTrainTag, static_cast<uint64_t>(iteration));
  std::vector<double> epoch_loss;
  epoch_loss.reserve(static_cast<size_t>(cfg.epochs_per_iteration));
  for (int e = 0; e < cfg.epochs_per_iteration; e++) {
    std::iota(idx.begin(), idx.end(), 0u);
    Rng r = shuffles.derive(static_cast<uint64_t>(e));
    for (size_t i = total; i > 1; i--) std::swap(idx[i - 1], idx[r.next_below(i)]);
    double sum = 0;
    for (size_t b0 = 0; b0 < total; b0 += static_cast<size_t>(cfg.batch_size)) {
      const int bn = static_cast<int>(std::min<size_t>(cfg.batch_size, total - b0));
      sum += trainer.train_batch(data, idx.data() + b0, bn, opt) * bn;
    }
    epoch_loss.push_back(sum / static_cast<double>(total));
  }
  return epoch_loss;
}

// ---------------------------------------------------------------------------
// grid evaluation

struct GridEval {
  int nx = 0, ny = 0, repeats = 0;
  std::vector<uint8_t> success;  // [rep * cells + cell]
  int successes = 0, total = 0;
  double rate = 0;
};

// Success fraction over the evaluation lattice, `repeats` episodes per cell.
// An empty policy evaluates the supervisor itself (lost-sphere errors count
// as failures rather than aborting the sweep).
inline GridEval evaluate_grid(const Sim& sim, const DynamicsPerturbation& pert, int repeats,
                              Rng stream, const ExecFn& policy = {}) {
  const RunConfig& cfg = sim.cfg();
  const std::vector<Vec2> grid = evaluation_grid(cfg);
  GridEval ge;
  ge.nx = cfg.grid_nx;
  ge.ny = cfg.grid_ny;
  ge.repeats = repeats;
  ge.total = static_cast<int>(grid.size()) * repeats;
  ge.success.assign(static_cast<size_t>(ge.total), 0);
  RolloutOptions opt;
  opt.use_expert_exec = !policy;
  opt.want_masks = static_cast<bool>(policy);
  for (int rep = 0; rep < repeats; rep++)
    for (size_t c = 0; c < grid.size(); c++) {
      const uint64_t eseed =
          stream.derive(static_cast<uint64_t>(rep), static_cast<uint64_t>(c)).next_u64();
      bool ok = false;
      try {
        ok = run_episode(sim, pert, grid[c], eseed, policy, opt).success;
      } catch (const UnreachableTargetError&) {
        ok = false;
      }
      if (ok) {
        ge.success[static_cast<size_t>(rep) * grid.size() + c] = 1;
        ge.successes++;
      }
    }
  ge.rate = ge.total ? static_cast<double>(ge.successes) / ge.total : 0.0;
  return ge;
}

// ---------------------------------------------------------------------------
// the outer loop with per-iteration checkpointing

struct TrainReport {
  std::vector<std::vector<double>> loss;        // [iteration][epoch]
  std::vector<int64_t> pool_size;               // after each iteration's collect
  std::vector<std::pair<int, GridEval>> evals;  // (iteration, grid result)
  int iterations_done = 0;
  double wall_seconds = 0;  // informational; never in the deterministic outputs
};

namespace detail {

inline std::string iter_tag(int n) {
  std::string s = std::to_string(n);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

inline std::string weights_name(int n) { return "weights_" + iter_tag(n) + ".bin"; }

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("bad number '" + s + "' in " + where);
  return v;
}

inline void write_dagger_csvs(const std::filesystem::path& out, const TrainReport& rep) {
  CsvWriter loss((out / "loss_curve.csv").string());
  loss.row("iteration", "epoch", "loss");
  for (size_t i = 0; i < rep.loss.size(); i++)
    for (size_t e = 0; e < rep.loss[i].size(); e++)
      loss.row(static_cast<int64_t>(i + 1), static_cast<int64_t>(e), rep.loss[i][e]);
  loss.flush();

  CsvWriter succ((out / "success_curve.csv").string());
  succ.row("iteration", "pool_frames", "successes", "episodes", "success_rate");
  for (const auto& [it, ge] : rep.evals)
    succ.row(static_cast<int64_t>(it), rep.pool_size.empty() ? int64_t{0}
                                                             : rep.pool_size[static_cast<size_t>(it) - 1],
             static_cast<int64_t>(ge.successes), static_cast<int64_t>(ge.total), ge.rate);
  succ.flush();

  CsvWriter grid((out / "grid_evals.csv").string());
  grid.row("iteration", "rep", "ix", "iy", "success");
  for (const auto& [it, ge] : rep.evals)
    for (int rep_i = 0; rep_i < ge.repeats; rep_i++)
      for (int iy = 0; iy < ge.ny; iy++)
        for (int ix = 0; ix < ge.nx; ix++) {
          const size_t cell = static_cast<size_t>(iy) * ge.nx + ix;
          grid.row(static_cast<int64_t>(it), static_cast<int64_t>(rep_i),
                   static_cast<int64_t>(ix), static_cast<int64_t>(iy),
                   static_cast<int64_t>(ge.success[static_cast<size_t>(rep_i) * ge.nx * ge.ny + cell]));
        }
  grid.flush();
}

// resumable progress: seed stamp, completed-iteration count, and the report
// data needed to rewrite the CSVs, in round-trippable decimal
inline void save_dagger_state(const std::filesystem::path& path, const RunConfig& cfg,
                              const TrainReport& rep) {
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + tmp);
    f << "segrasp dagger state v1\n";
    f << "seed " << cfg.seed << "\n";
    f << "iterations_done " << rep.iterations_done << "\n";
    f << "wall_seconds " << csv_num(rep.wall_seconds) << "\n";
    f << "pool";
    for (int64_t p : rep.pool_size) f << ' ' << p;
    f << "\n";
    for (size_t i = 0; i < rep.loss.size(); i++) {
      f << "loss " << i + 1 << ' ' << rep.loss[i].size();
      for (double v : rep.loss[i]) f << ' ' << csv_num(v);
      f << "\n";
    }
    for (const auto& [it, ge] : rep.evals) {
      f << "eval " << it << ' ' << ge.nx << ' ' << ge.ny << ' ' << ge.repeats << ' '
        << ge.successes << ' ' << ge.total << ' ';
      for (uint8_t b : ge.success) f << (b ? '1' : '0');
      f << "\n";
    }
    if (!f) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline uint64_t load_dagger_state(const std::filesystem::path& path, TrainReport& rep) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "segrasp dagger state v1") throw IoError("not a state file: " + path.string());
  uint64_t seed = 0;
  rep = TrainReport{};
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "seed") {
      ss >> seed;
    } else if (key == "iterations_done") {
      ss >> rep.iterations_done;
    } else if (key == "wall_seconds") {
      std::string v;
      ss >> v;
      rep.wall_seconds = parse_double(v, path.string());
    } else if (key == "pool") {
      int64_t p;
      while (ss >> p) rep.pool_size.push_back(p);
    } else if (key == "loss") {
      size_t iter = 0, count = 0;
      ss >> iter >> count;
      std::vector<double> l;
      l.reserve(count);
      std::string v;
      while (ss >> v) l.push_back(parse_double(v, path.string()));
      if (l.size() != count || iter != rep.loss.size() + 1)
        throw IoError("inconsistent loss line in " + path.string());
      rep.loss.push_back(std::move(l));
    } else if (key == "eval") {
      int it = 0;
      GridEval ge;
      std::string bits;
      ss >> it >> ge.nx >> ge.ny >> ge.repeats >> ge.successes >> ge.total >> bits;
      if (static_cast<int>(bits.size()) != ge.total)
        throw IoError("inconsistent eval line in " + path.string());
      ge.success.resize(bits.size());
      for (size_t i = 0; i < bits.size(); i++) ge.success[i] = bits[i] == '1';
      ge.rate = ge.total ? static_cast<double>(ge.successes) / ge.total : 0.0;
      rep.evals.emplace_back(it, std::move(ge));
    } else if (!key.empty()) {
      throw IoError("unknown key '" + key + "' in " + path.string());
    }
  }
  return seed;
}

template <typename S>
void save_weights_atomic(std::vector<ParamRef<S>> params, const std::string& path) {
  save_weights(params, path + ".tmp");
  std::filesystem::rename(path + ".tmp", path);
}

}  // namespace detail

// Collect -> aggregate -> refit for cfg.iterations passes, evaluating every
// cfg.eval_every iterations and always at the end. Every iteration flushes a
// complete checkpoint (weights, pool, progress stamp) plus the CSVs, so an
// interrupted run resumes from the last finished iteration and — because
// every random stream is a pure function of (seed, iteration, ...) and the
// optimizer restarts fresh each iteration — reproduces the uninterrupted
// byte-for-byte. `net` must be freshly constructed with dagger_net_seed(cfg);
// on resume its weights are overwritten from the checkpoint.
template <typename S>
TrainReport run_dagger(ControllerNet<S>& net, const RunConfig& cfg,
                       const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  pin_blas_single_thread();
  const Sim sim(cfg);
  DaggerDataset<S> ds;
  TrainReport rep;
  FastControllerTrainer<S> trainer(net);
  int start = 1;

  if (fs::exists(out / "state.txt")) {
    const uint64_t st_seed = detail::load_dagger_state(out / "state.txt", rep);
    if (st_seed != cfg.seed)
      throw ConfigError("checkpoint seed " + std::to_string(st_seed) +
                        " does not match configured seed " + std::to_string(cfg.seed));
    load_dataset(ds, (out / "dataset.bin").string());
    const size_t want = rep.pool_size.empty() ? 0 : static_cast<size_t>(rep.pool_size.back());
    if (ds.size() < want) throw IoError("dataset file behind checkpoint state");
    ds.truncate(want);  // a crash after the pool write can leave extra frames
    if (rep.iterations_done > 0)
      load_weights(net.params(), (out / detail::weights_name(rep.iterations_done)).string());
    start = rep.iterations_done + 1;
    if (log)
      log("resuming after iteration " + std::to_string(rep.iterations_done) + " (pool " +
          std::to_string(ds.size()) + " frames)");
  }

  for (int n = start; n <= cfg.iterations; n++) {
    const auto t0 = std::chrono::steady_clock::now();
    collect_iteration(sim, ds, n == 1 ? nullptr : &net, n, cfg);
    rep.pool_size.push_back(static_cast<int64_t>(ds.size()));
    rep.loss.push_back(train_policy(trainer, ds.fast, cfg, n));
    if (n % cfg.eval_every == 0 || n == cfg.iterations) {
      GridEval ge = evaluate_grid(sim, {}, cfg.eval_repeats,
                                  Rng(cfg.seed).derive(kDaggerEvalTag, static_cast<uint64_t>(n)),
                                  make_policy_exec(net, cfg));
      rep.evals.emplace_back(n, std::move(ge));
    }
    rep.iterations_done = n;
    rep.wall_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    detail::save_weights_atomic(net.params(), (out / detail::weights_name(n)).string());
    save_dataset(ds, (out / "dataset.bin").string());
    detail::save_dagger_state(out / "state.txt", cfg, rep);
    detail::write_dagger_csvs(out, rep);
    if (log) {
      std::string msg = "iteration " + std::to_string(n) + ": pool " + std::to_string(ds.size()) +
                        ", loss " + csv_num(rep.loss.back().front()) + " -> " +
                        csv_num(rep.loss.back().back());
      if (!rep.evals.empty() && rep.evals.back().first == n)
        msg += ", success " + csv_num(rep.evals.back().second.rate);
      log(msg);
    }
  }

  detail::save_weights_atomic(net.params(), (out / "policy_final.bin").string());
  return rep;
}

// ---------------------------------------------------------------------------
// displacement-recovery probe

struct RecoveryStats {
  int episodes = 0;
  int triggered = 0;  // episodes where the sphere actually moved
  int displaced_success = 0, static_success = 0;
  double displaced_rate = 0, static_rate = 0;
  std::vector<uint8_t> static_ok, displaced_ok;  // per-episode outcomes
};

// Paired episodes from random workspace starts: a control run, and a run
// where the sphere teleports 3-6 cm sideways the first time the tool drops
// into its descent (clamped back into the workspace rectangle). An empty
// policy probes the supervisor.
inline RecoveryStats recovery_probe(const Sim& sim, const ExecFn& policy, Rng stream) {
  const RunConfig& cfg = sim.cfg();
  RecoveryStats st;
  st.episodes = cfg.probe_episodes;
  const double trigger_z = cfg.sphere_radius + 0.7 * cfg.hover_height;
  RolloutOptions base;
  base.use_expert_exec = !policy;
  base.want_masks = static_cast<bool>(policy);
  for (int e = 0; e < cfg.probe_episodes; e++) {
    Rng ep = stream.derive(static_cast<uint64_t>(e));
    const Vec2 sxy{ep.uniform(cfg.workspace[0], cfg.workspace[2]),
                   ep.uniform(cfg.workspace[1], cfg.workspace[3])};
    const uint64_t eseed = ep.next_u64();
    const double ang = ep.uniform(0.0, 2.0 * kPi);
    const double dist = ep.uniform(cfg.displace_min, cfg.displace_max);
    const Vec2 tgt{std::clamp(sxy.x + dist * std::cos(ang), cfg.workspace[0], cfg.workspace[2]),
                   std::clamp(sxy.y + dist * std::sin(ang), cfg.workspace[1], cfg.workspace[3])};

    auto run = [&](const RolloutOptions& opt) {
      try {
        return run_episode(sim, {}, sxy, eseed, policy, opt).success;
      } catch (const UnreachableTargetError&) {
        return false;
      }
    };

    const bool sok = run(base);
    st.static_ok.push_back(sok);
    if (sok) st.static_success++;

    RolloutOptions disp = base;
    bool fired = false;
    disp.intervene = [&](int, WorldState& w) {
      if (fired || w.sphere.attached) return;
      if (sim.ee_pose(w).p.z >= trigger_z) return;
      w.sphere.center.x = tgt.x;
      w.sphere.center.y = tgt.y;
      fired = true;
    };
    const bool dok = run(disp);
    st.displaced_ok.push_back(dok);
    if (dok) st.displaced_success++;
    if (fired) st.triggered++;
  }
  st.displaced_rate = st.episodes ? static_cast<double>(st.displaced_success) / st.episodes : 0.0;
  st.static_rate = st.episodes ? static_cast<double>(st.static_success) / st.episodes : 0.0;
  return st;
}

// ---------------------------------------------------------------------------
// dynamics-gap experiment

struct GapDraw {
  std::array<double, 7> gain{};
  std::array<double, 7> bias{};
  int delay = 0;
  double noise_std = 0;
  double open_err = 0, closed_err = 0;  // final tool-point distance to reference (m)
};

struct GapReport {
  Vec2 sphere_xy{};
  bool reference_success = false;
  Pose reference_final{};
  std::vector<GapDraw> draws;
  int closed_wins = 0;  // draws where the closed-loop error is strictly smaller
};

// per-joint gains within 5% of nominal, per-step command bias up to a
// milliradian, one step of latency, and 2 mrad of reported-angle noise
inline DynamicsPerturbation sample_perturbation(Rng& r) {
  DynamicsPerturbation p;
  for (int i = 0; i < 7; i++) p.gain[i] = r.uniform(0.95, 1.05);
  for (int i = 0; i < 7; i++) p.bias[i] = r.uniform(-0.001, 0.001);
  p.delay = 1;
  p.noise_std = 0.002;
  return p;
}

// Fixed episode, fixed command budget: record the command log of an
// unperturbed reference run, then for each dynamics draw execute that log
// open-loop and the policy closed-loop, comparing final tool positions
// against the reference. An empty policy uses the supervisor.
inline GapReport gap_experiment(const Sim& sim, const ExecFn& policy, const Vec2& sphere_xy,
                                uint64_t episode_seed, int draws, Rng stream) {
  const RunConfig& cfg = sim.cfg();
  GapReport rep;
  rep.sphere_xy = sphere_xy;

  std::vector<Action> log;
  log.reserve(static_cast<size_t>(cfg.step_cap));
  RolloutOptions ref_opt;
  ref_opt.use_expert_exec = !policy;
  ref_opt.want_masks = static_cast<bool>(policy);
  ref_opt.run_to_cap = true;
  ref_opt.sink = [&log](int, const WorldState&, const SegMask&, const Action& a, ExpertPhase) {
    log.push_back(a);
  };
  const EpisodeRecord ref = run_episode(sim, {}, sphere_xy, episode_seed, policy, ref_opt);
  rep.reference_success = ref.success;
  rep.reference_final = ref.final_ee;

  const ExecFn replay = [&log](int step, const WorldState&, const std::array<double, 8>&,
                               const SegMask&) { return log[static_cast<size_t>(step)]; };
  RolloutOptions open_opt;
  open_opt.want_masks = false;
  open_opt.run_to_cap = true;
  RolloutOptions closed_opt = ref_opt;
  closed_opt.sink = {};

  for (int d = 0; d < draws; d++) {
    Rng dr = stream.derive(static_cast<uint64_t>(d));
    const DynamicsPerturbation pert = sample_perturbation(dr);
    GapDraw g;
    g.gain = pert.gain;
    g.bias = pert.bias;
    g.delay = pert.delay;
    g.noise_std = pert.noise_std;
    const EpisodeRecord open_rec = run_episode(sim, pert, sphere_xy, episode_seed, replay, open_opt);
    const EpisodeRecord closed_rec =
        run_episode(sim, pert, sphere_xy, episode_seed, policy, closed_opt);
    g.open_err = norm(open_rec.final_ee.p - rep.reference_final.p);
    g.closed_err = norm(closed_rec.final_ee.p - rep.reference_final.p);
    if (g.closed_err < g.open_err) rep.closed_wins++;
    rep.draws.push_back(g);
  }
  return rep;
}

}  // namespace segrasp
