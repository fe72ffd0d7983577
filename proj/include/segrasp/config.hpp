#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace segrasp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every tunable of the simulator, expert, networks, and experiment harness.
// Files are plain "key = value" lines; '#' starts a comment; vector values
// are comma-separated. Unknown keys are rejected.
struct RunConfig {
  // --- arm: fixed 7-revolute chain, axes z,y,x,y,x,y,x in the local frames.
  // link_lengths = base lift, then offsets between consecutive joints, then
  // the tool offset (8 values, meters). Home pose documented in README.
  std::vector<double> link_lengths{0.30, 0.10, 0.25, 0.10, 0.25, 0.10, 0.08, 0.12};
  std::vector<double> joint_limits_lo{-2.8, -2.0, -2.8, -2.2, -2.8, -2.2, -2.8};
  std::vector<double> joint_limits_hi{2.8, 2.0, 2.8, 2.2, 2.8, 2.2, 2.8};
  std::vector<double> home_joints{0.0, -0.7970, 0.0, 1.3054, 0.0, 1.0624, 0.0};
  double home_jitter = 0.01;       // rad, uniform, applied at reset
  double delta_max = 0.02;         // rad per control step
  double control_rate_hz = 10.0;

  // --- gripper (two parallel fingers, capsule geometry)
  double finger_span_open = 0.05;    // center-to-center distance, open
  double finger_span_closed = 0.012; // and closed
  double finger_length = 0.05;
  double finger_radius = 0.004;
  double capture_radial = 0.01;  // sphere center within this of gripper center,
  double capture_axial = 0.02;   // radially / axially, for a close to capture
  double lift_height = 0.05;     // tool z that counts as "lifted"
  double push_gain = 1.5;

  // --- camera (eye-in-hand, optical axis along the approach axis)
  int cam_mask_size = 100;
  int cam_rgb_size = 400;
  double cam_fov_deg = 80.0;
  double cam_back_offset = 0.03;  // camera sits this far behind the tool point

  // --- sphere
  double sphere_radius = 0.00685;
  std::vector<double> sphere_color{0.9, 0.85, 0.1};

  // --- workspace rectangle for sphere starts (x0, y0, x1, y1)
  std::vector<double> workspace{0.45, -0.05, 0.65, 0.05};

  // --- lighting for the RGB renderer
  std::vector<double> light_dir{0.2, -0.1, 0.96};
  double light_ambient = 0.35;
  double light_diffuse = 0.65;
  std::vector<double> gripper_color{0.55, 0.55, 0.58};

  // --- expert
  double hover_height = 0.06;
  double close_trigger = 0.001;
  double path_step = 0.01;       // meters of end-effector travel per tick
  double approach_tol = 0.005;   // hover-point arrival tolerance
  double align_tol = 0.004;      // horizontal alignment required to descend
  double ik_damping = 0.01;
  int ik_iters = 50;
  double ik_tol_pos = 1e-4;
  double ik_tol_rot = 1e-3;

  // --- dynamics perturbation (identity by default)
  std::vector<double> pert_gain{1, 1, 1, 1, 1, 1, 1};
  std::vector<double> pert_bias{0, 0, 0, 0, 0, 0, 0};
  int pert_delay = 0;            // steps
  double pert_noise_std = 0.0;   // rad, on the reported joint angles only

  // --- dagger / controller training
  int iterations = 30;
  int frames_per_iteration = 1000;
  int epochs_per_iteration = 200;
  int batch_size = 64;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int step_cap = 150;
  int eval_every = 5;
  int eval_repeats = 3;
  int grid_nx = 10;
  int grid_ny = 5;
  double gripper_target = 0.9;   // tanh-space magnitude of gripper labels

  // --- recovery probe / gap experiment
  double displace_min = 0.03;
  double displace_max = 0.06;
  int probe_episodes = 50;
  int gap_draws = 20;

  // --- vision
  double hsv_h_lo = 45.0, hsv_h_hi = 75.0;
  double hsv_s_min = 0.4, hsv_v_min = 0.3;  // tight manual tuning: clean sphere floor is 0.315
  double jitter_h = 15.0, jitter_s = 0.15, jitter_v = 0.3;
  double shadow_v_lo = -0.40, shadow_v_hi = -0.30;  // held-out shadow split
  int vision_train_count = 2000;
  int vision_val_count = 300;
  int vision_test_count = 500;
  int vision_shadow_count = 150;
  int vision_batch = 16;
  int vision_max_epochs = 16;
  int vision_patience = 10;
  double vision_lr = 1e-3;
  double vision_lr_decay = 0.9;  // per-epoch multiplicative schedule
  double empty_frame_frac = 0.15;  // composites with the sphere out of view
  double attached_frac = 0.10;     // composites with the sphere held

  // --- run
  uint64_t seed = 1;
  std::string out_dir = "runs/out";

  void validate() const;
};

namespace detail {

struct FieldBinder {
  std::map<std::string, std::function<void(RunConfig&, const std::string&)>> parsers;
  std::vector<std::pair<std::string, std::function<std::string(const RunConfig&)>>> writers;

  static double to_double(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      double d = std::stod(v, &pos);
      while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) pos++;
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "': not a number: '" + v + "'");
    }
  }

  void bind(const std::string& key, double RunConfig::* f) {
    parsers[key] = [key, f](RunConfig& c, const std::string& v) { c.*f = to_double(key, v); };
    writers.emplace_back(key, [f](const RunConfig& c) {
      std::ostringstream s;
      s.precision(17);
      s << c.*f;
      return s.str();
    });
  }
  void bind(const std::string& key, int RunConfig::* f) {
    parsers[key] = [key, f](RunConfig& c, const std::string& v) {
      double d = to_double(key, v);
      if (d != std::floor(d)) throw ConfigError("config: key '" + key + "': expected integer");
      c.*f = static_cast<int>(d);
    };
    writers.emplace_back(key, [f](const RunConfig& c) { return std::to_string(c.*f); });
  }
  void bind(const std::string& key, uint64_t RunConfig::* f) {
    parsers[key] = [key, f](RunConfig& c, const std::string& v) {
      try {
        c.*f = std::stoull(v);
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': expected unsigned integer");
      }
    };
    writers.emplace_back(key, [f](const RunConfig& c) { return std::to_string(c.*f); });
  }
  void bind(const std::string& key, std::string RunConfig::* f) {
    parsers[key] = [f](RunConfig& c, const std::string& v) { c.*f = v; };
    writers.emplace_back(key, [f](const RunConfig& c) { return c.*f; });
  }
  void bind(const std::string& key, std::vector<double> RunConfig::* f, size_t expect) {
    parsers[key] = [key, f, expect](RunConfig& c, const std::string& v) {
      std::vector<double> out;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
      if (expect && out.size() != expect)
        throw ConfigError("config: key '" + key + "': expected " + std::to_string(expect) +
                          " comma-separated values, got " + std::to_string(out.size()));
      (c.*f) = std::move(out);
    };
    writers.emplace_back(key, [f](const RunConfig& c) {
      std::ostringstream s;
      s.precision(17);
      const auto& vec = c.*f;
      for (size_t i = 0; i < vec.size(); i++) s << (i ? "," : "") << vec[i];
      return s.str();
    });
  }
};

inline const FieldBinder& config_fields() {
  static const FieldBinder b = [] {
    FieldBinder b;
    b.bind("link_lengths", &RunConfig::link_lengths, 8);
    b.bind("joint_limits_lo", &RunConfig::joint_limits_lo, 7);
    b.bind("joint_limits_hi", &RunConfig::joint_limits_hi, 7);
    b.bind("home_joints", &RunConfig::home_joints, 7);
    b.bind("home_jitter", &RunConfig::home_jitter);
    b.bind("delta_max", &RunConfig::delta_max);
    b.bind("control_rate_hz", &RunConfig::control_rate_hz);
    b.bind("finger_span_open", &RunConfig::finger_span_open);
    b.bind("finger_span_closed", &RunConfig::finger_span_closed);
    b.bind("finger_length", &RunConfig::finger_length);
    b.bind("finger_radius", &RunConfig::finger_radius);
    b.bind("capture_radial", &RunConfig::capture_radial);
    b.bind("capture_axial", &RunConfig::capture_axial);
    b.bind("lift_height", &RunConfig::lift_height);
    b.bind("push_gain", &RunConfig::push_gain);
    b.bind("cam_mask_size", &RunConfig::cam_mask_size);
    b.bind("cam_rgb_size", &RunConfig::cam_rgb_size);
    b.bind("cam_fov_deg", &RunConfig::cam_fov_deg);
    b.bind("cam_back_offset", &RunConfig::cam_back_offset);
    b.bind("sphere_radius", &RunConfig::sphere_radius);
    b.bind("sphere_color", &RunConfig::sphere_color, 3);
    b.bind("workspace", &RunConfig::workspace, 4);
    b.bind("light_dir", &RunConfig::light_dir, 3);
    b.bind("light_ambient", &RunConfig::light_ambient);
    b.bind("light_diffuse", &RunConfig::light_diffuse);
    b.bind("gripper_color", &RunConfig::gripper_color, 3);
    b.bind("hover_height", &RunConfig::hover_height);
    b.bind("close_trigger", &RunConfig::close_trigger);
    b.bind("path_step", &RunConfig::path_step);
    b.bind("approach_tol", &RunConfig::approach_tol);
    b.bind("align_tol", &RunConfig::align_tol);
    b.bind("ik_damping", &RunConfig::ik_damping);
    b.bind("ik_iters", &RunConfig::ik_iters);
    b.bind("ik_tol_pos", &RunConfig::ik_tol_pos);
    b.bind("ik_tol_rot", &RunConfig::ik_tol_rot);
    b.bind("pert_gain", &RunConfig::pert_gain, 7);
    b.bind("pert_bias", &RunConfig::pert_bias, 7);
    b.bind("pert_delay", &RunConfig::pert_delay);
    b.bind("pert_noise_std", &RunConfig::pert_noise_std);
    b.bind("iterations", &RunConfig::iterations);
    b.bind("frames_per_iteration", &RunConfig::frames_per_iteration);
    b.bind("epochs_per_iteration", &RunConfig::epochs_per_iteration);
    b.bind("batch_size", &RunConfig::batch_size);
    b.bind("lr", &RunConfig::lr);
    b.bind("adam_beta1", &RunConfig::adam_beta1);
    b.bind("adam_beta2", &RunConfig::adam_beta2);
    b.bind("adam_eps", &RunConfig::adam_eps);
    b.bind("step_cap", &RunConfig::step_cap);
    b.bind("eval_every", &RunConfig::eval_every);
    b.bind("eval_repeats", &RunConfig::eval_repeats);
    b.bind("grid_nx", &RunConfig::grid_nx);
    b.bind("grid_ny", &RunConfig::grid_ny);
    b.bind("gripper_target", &RunConfig::gripper_target);
    b.bind("displace_min", &RunConfig::displace_min);
    b.bind("displace_max", &RunConfig::displace_max);
    b.bind("probe_episodes", &RunConfig::probe_episodes);
    b.bind("gap_draws", &RunConfig::gap_draws);
    b.bind("hsv_h_lo", &RunConfig::hsv_h_lo);
    b.bind("hsv_h_hi", &RunConfig::hsv_h_hi);
    b.bind("hsv_s_min", &RunConfig::hsv_s_min);
    b.bind("hsv_v_min", &RunConfig::hsv_v_min);
    b.bind("jitter_h", &RunConfig::jitter_h);
    b.bind("jitter_s", &RunConfig::jitter_s);
    b.bind("jitter_v", &RunConfig::jitter_v);
    b.bind("shadow_v_lo", &RunConfig::shadow_v_lo);
    b.bind("shadow_v_hi", &RunConfig::shadow_v_hi);
    b.bind("vision_train_count", &RunConfig::vision_train_count);
    b.bind("vision_val_count", &RunConfig::vision_val_count);
    b.bind("vision_test_count", &RunConfig::vision_test_count);
    b.bind("vision_shadow_count", &RunConfig::vision_shadow_count);
    b.bind("vision_batch", &RunConfig::vision_batch);
    b.bind("vision_max_epochs", &RunConfig::vision_max_epochs);
    b.bind("vision_patience", &RunConfig::vision_patience);
    b.bind("vision_lr", &RunConfig::vision_lr);
    b.bind("vision_lr_decay", &RunConfig::vision_lr_decay);
    b.bind("empty_frame_frac", &RunConfig::empty_frame_frac);
    b.bind("attached_frac", &RunConfig::attached_frac);
    b.bind("seed", &RunConfig::seed);
    b.bind("out_dir", &RunConfig::out_dir);
    return b;
  }();
  return b;
}

}  // namespace detail

inline void apply_config_kv(RunConfig& cfg, const std::string& key,
                            const std::string& value, const std::string& where) {
  const auto& fields = detail::config_fields();
  auto it = fields.parsers.find(key);
  if (it == fields.parsers.end())
    throw ConfigError("config: unknown key '" + key + "' (" + where + ")");
  it->second(cfg, value);
}

inline void parse_config_text(RunConfig& cfg, std::istream& in, const std::string& where) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' at " + where + ":" + std::to_string(lineno));
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    apply_config_kv(cfg, key, value, where + ":" + std::to_string(lineno));
  }
}

inline RunConfig load_config_file(const std::string& path) {
  RunConfig cfg;
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  parse_config_text(cfg, f, path);
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, writer] : detail::config_fields().writers)
    out << key << " = " << writer(cfg) << "\n";
  return out.str();
}

inline void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(link_lengths.size() == 8, "link_lengths needs 8 values");
  for (double l : link_lengths) require(l >= 0, "link lengths must be non-negative");
  for (int i = 0; i < 7; i++)
    require(joint_limits_lo[i] < joint_limits_hi[i], "joint limits must satisfy lo < hi");
  for (int i = 0; i < 7; i++)
    require(home_joints[i] >= joint_limits_lo[i] && home_joints[i] <= joint_limits_hi[i],
            "home_joints must lie within joint limits");
  require(delta_max > 0, "delta_max must be positive");
  require(sphere_radius > 0, "sphere_radius must be positive");
  require(hover_height > sphere_radius, "hover_height must exceed the sphere radius");
  require(close_trigger < capture_radial, "close_trigger must be below capture_radial");
  require(workspace[0] < workspace[2] && workspace[1] < workspace[3],
          "workspace must be x0,y0,x1,y1 with x0<x1, y0<y1");
  require(cam_mask_size > 0 && cam_rgb_size > 0, "camera sizes must be positive");
  require(cam_rgb_size % cam_mask_size == 0, "cam_rgb_size must be a multiple of cam_mask_size");
  require(cam_fov_deg > 1 && cam_fov_deg < 179, "cam_fov_deg out of range");
  require(iterations > 0, "iterations must be positive");
  require(frames_per_iteration > 0, "frames_per_iteration must be positive");
  require(epochs_per_iteration > 0, "epochs_per_iteration must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(lr > 0 && vision_lr > 0, "learning rates must be positive");
  require(vision_lr_decay > 0 && vision_lr_decay <= 1, "vision_lr_decay must be in (0,1]");
  require(step_cap > 0, "step_cap must be positive");
  require(eval_every > 0 && eval_repeats > 0, "eval cadence must be positive");
  require(grid_nx > 0 && grid_ny > 0, "grid shape must be positive");
  require(pert_delay >= 0 && pert_delay <= 8, "pert_delay must be in [0, 8]");
  require(pert_noise_std >= 0, "pert_noise_std must be non-negative");
  require(hsv_h_lo < hsv_h_hi, "hsv hue band must satisfy lo < hi");
  require(hsv_s_min >= 0 && hsv_s_min <= 1 && hsv_v_min >= 0 && hsv_v_min <= 1,
          "hsv thresholds must be in [0,1]");
  require(vision_patience > 0 && vision_max_epochs > 0, "vision training epochs must be positive");
  require(vision_train_count > 0 && vision_val_count > 0, "vision dataset counts must be positive");
  require(empty_frame_frac >= 0 && empty_frame_frac < 1, "empty_frame_frac in [0,1)");
  require(attached_frac >= 0 && attached_frac < 1, "attached_frac in [0,1)");
  require(displace_min > 0 && displace_min <= displace_max, "displacement range invalid");
  require(probe_episodes > 0 && gap_draws > 0, "probe episode counts must be positive");
}

}  // namespace segrasp
