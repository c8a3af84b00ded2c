#pragma once

#include <atomic>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "locolab/core.hpp"
#include "locolab/envs.hpp"
#include "locolab/td3.hpp"
#include "locolab/wrappers.hpp"

// Declarative experiment runner: flat key=value configs, multi-seed sweeps
// with independent per-seed workers, the bonus-stripped evaluation protocol,
// generalization matrices, and CSV/SVG emission.

namespace locolab {

// ---------------------------------------------------------------------------
// Config file format: one `key = value` per line, '#' starts a comment.
// Dotted keys, full registry below; unknown keys are rejected.

inline const std::set<std::string>& config_key_registry() {
  static const std::set<std::string> keys = {
      "env.id",
      "env.sim_rate",
      "env.control_rate",
      "env.time_limit",
      "env.fall_height",
      "env.pendulum.mass",
      "env.pendulum.length",
      "env.pendulum.gravity",
      "env.pendulum.tau_max",
      "env.slip.mass",
      "env.slip.rest_length",
      "env.slip.stiffness",
      "env.slip.max_thrust",
      "env.slip.max_swing_rate",
      "env.slip.gravity",
      "reward.survival_bonus",
      "reward.control_cost_weight",
      "reward.joint_limit_weight",
      "wrappers.kappa",
      "wrappers.kappa_schedule",
      "wrappers.pretrain_steps",
      "wrappers.pretrain_kappa",
      "wrappers.contacts",
      "wrappers.joint_positions",
      "wrappers.phase.period",
      "wrappers.phase.inject_every_layer",
      "wrappers.feature_extractor",
      "wrappers.action_repeat",
      "wrappers.action_space",
      "wrappers.pd.kp",
      "wrappers.pd.kd",
      "wrappers.pd.policy_rate",
      "wrappers.pd.pd_rate",
      "wrappers.pd.sim_rate",
      "wrappers.torque_limit.lambda",
      "wrappers.torque_limit.schedule",
      "td3.gamma",
      "td3.tau",
      "td3.batch",
      "td3.exploration_sigma",
      "td3.policy_delay",
      "td3.target_noise",
      "td3.target_noise_clip",
      "td3.warmup_steps",
      "td3.iterations_per_step",
      "td3.actor_lr",
      "td3.critic_lr",
      "td3.hidden",
      "td3.replay_capacity",
      "td3.bootstrap_mode",
      "train.total_steps",
      "train.eval_every",
      "train.eval_episodes",
      "train.seeds",
      "eval.strip_survival_bonus",
      "output.dir",
      "harness.workers",
  };
  return keys;
}

inline std::string valid_keys_message() {
  std::string msg = "valid keys:";
  for (const auto& k : config_key_registry()) msg += "\n  " + k;
  return msg;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

class ExperimentConfig {
 public:
  ExperimentConfig() = default;

  static ExperimentConfig from_string(const std::string& text,
                                      const std::string& name = "experiment") {
    ExperimentConfig cfg;
    cfg.name_ = name;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key=value, got '" + line + "'");
      cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static ExperimentConfig from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str(), path.stem().string());
  }

  const std::string& name() const { return name_; }

  void set(const std::string& key, const std::string& value) {
    if (!config_key_registry().count(key))
      throw ConfigError("unknown config key '" + key + "'\n" +
                        valid_keys_message());
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string raw(const std::string& key) const { return kv_.at(key); }

  // -- typed getters ---------------------------------------------------

  std::string get_string(const std::string& key, const std::string& dflt) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" +
                        it->second + "'");
    }
  }

  long get_long(const std::string& key, long dflt) const {
    const double v = get_double(key, static_cast<double>(dflt));
    const long r = static_cast<long>(std::llround(v));
    if (static_cast<double>(r) != v)
      throw ConfigError("config key '" + key + "': expected an integer");
    return r;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false");
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : detail::split(raw(key), ','))
      out.push_back(std::stod(detail::trim(part)));
    return out;
  }

  ScalarSchedule get_schedule(const std::string& key) const {
    ScalarSchedule sched;
    for (const auto& part : detail::split(raw(key), ',')) {
      const auto kvp = detail::split(detail::trim(part), ':');
      if (kvp.size() != 2)
        throw ConfigError("config key '" + key +
                          "': expected step:value,step:value,...");
      sched.knots.emplace_back(std::stol(detail::trim(kvp[0])),
                               std::stod(detail::trim(kvp[1])));
    }
    for (std::size_t i = 1; i < sched.knots.size(); ++i)
      if (sched.knots[i].first <= sched.knots[i - 1].first)
        throw ConfigError("config key '" + key + "': steps must increase");
    return sched;
  }

  // -- materialization -------------------------------------------------

  CharacterId character() const {
    const std::string id = get_string("env.id", "slip_hopper");
    if (id == "pendulum") return CharacterId::Pendulum;
    if (id == "slip_hopper") return CharacterId::SlipHopper;
    throw ConfigError("env.id must be 'pendulum' or 'slip_hopper', got '" + id +
                      "'");
  }

  ActionSpace action_space() const {
    const std::string s = get_string("wrappers.action_space", "torque");
    if (s == "torque") return ActionSpace::Torque;
    if (s == "pd") return ActionSpace::PdTargets;
    throw ConfigError("wrappers.action_space must be 'torque' or 'pd'");
  }

  BootstrapMode bootstrap_mode() const {
    const std::string s = get_string("td3.bootstrap_mode", "infinite");
    if (s == "infinite") return BootstrapMode::InfiniteBootstrap;
    if (s == "terminal") return BootstrapMode::TreatTimeoutAsTerminal;
    throw ConfigError("td3.bootstrap_mode must be 'infinite' or 'terminal'");
  }

  std::unique_ptr<Environment> make_env() const {
    SpecOverrides ov;
    const bool pd = action_space() == ActionSpace::PdTargets;
    // PD control fixes the simulation and policy rates unless overridden.
    if (has("env.sim_rate"))
      ov.sim_rate = get_double("env.sim_rate", 0);
    else if (pd)
      ov.sim_rate = get_double("wrappers.pd.sim_rate", 1200.0);
    if (has("env.control_rate"))
      ov.control_rate = get_double("env.control_rate", 0);
    else if (pd)
      ov.control_rate = get_double("wrappers.pd.policy_rate", 60.0);
    if (has("env.time_limit"))
      ov.time_limit = static_cast<int>(get_long("env.time_limit", 0));
    if (has("env.fall_height")) ov.fall_height = get_double("env.fall_height", 0);

    if (character() == CharacterId::Pendulum) {
      PendulumParams p;
      p.mass = get_double("env.pendulum.mass", p.mass);
      p.length = get_double("env.pendulum.length", p.length);
      p.gravity = get_double("env.pendulum.gravity", p.gravity);
      p.tau_max = get_double("env.pendulum.tau_max", p.tau_max);
      return make_pendulum(p, ov);
    }
    SlipParams p;
    p.mass = get_double("env.slip.mass", p.mass);
    p.rest_length = get_double("env.slip.rest_length", p.rest_length);
    p.stiffness = get_double("env.slip.stiffness", p.stiffness);
    p.max_thrust = get_double("env.slip.max_thrust", p.max_thrust);
    p.max_swing_rate = get_double("env.slip.max_swing_rate", p.max_swing_rate);
    p.gravity = get_double("env.slip.gravity", p.gravity);
    p.fall_height = 0.5 * p.rest_length;
    return make_slip_hopper(p, ov);
  }

  double survival_bonus() const {
    // PyBullet-style default of 1 for the locomotion character; the pendulum
    // task needs none.
    const double dflt = character() == CharacterId::SlipHopper ? 1.0 : 0.0;
    return get_double("reward.survival_bonus", dflt);
  }

  StackConfig make_stack_config() const {
    StackConfig cfg;
    cfg.isd.kappa = get_double("wrappers.kappa", 0.0);
    if (has("wrappers.kappa_schedule")) {
      cfg.kappa_schedule = get_schedule("wrappers.kappa_schedule");
    } else if (get_long("wrappers.pretrain_steps", 0) > 0) {
      // Appendix-B style recipe: a broader distribution for a fixed budget,
      // then the configured width.
      const long n = get_long("wrappers.pretrain_steps", 0);
      const double pre = get_double("wrappers.pretrain_kappa", 0.3);
      cfg.kappa_schedule =
          ScalarSchedule{{{n - 1, pre}, {n, cfg.isd.kappa}}};
    }
    cfg.pipeline.include_contacts = get_bool("wrappers.contacts", true);
    cfg.pipeline.joint_positions = get_bool("wrappers.joint_positions", false);
    const double period = get_double("wrappers.phase.period", 0.0);
    if (period > 0.0)
      cfg.pipeline.phase = PhaseConfig{
          period, get_bool("wrappers.phase.inject_every_layer", false)};
    const std::string fe = get_string("wrappers.feature_extractor", "");
    if (!fe.empty())
      cfg.pipeline.feature_extractor =
          std::make_shared<NetworkParams>(load_network(fe));
    cfg.action_repeat = static_cast<int>(get_long("wrappers.action_repeat", 1));
    cfg.action_space = action_space();
    if (has("wrappers.pd.kp")) {
      const auto kp = get_double_list("wrappers.pd.kp");
      cfg.pd.kp = Eigen::Map<const Eigen::VectorXd>(kp.data(), kp.size());
    }
    if (has("wrappers.pd.kd")) {
      const auto kd = get_double_list("wrappers.pd.kd");
      cfg.pd.kd = Eigen::Map<const Eigen::VectorXd>(kd.data(), kd.size());
    }
    cfg.pd.policy_rate = get_double("wrappers.pd.policy_rate", 60.0);
    cfg.pd.pd_rate = get_double("wrappers.pd.pd_rate", 300.0);
    cfg.pd.sim_rate = get_double("wrappers.pd.sim_rate", 1200.0);
    if (has("wrappers.torque_limit.schedule"))
      cfg.torque_limits.schedule = get_schedule("wrappers.torque_limit.schedule");
    else
      cfg.torque_limits.schedule =
          ScalarSchedule::constant(get_double("wrappers.torque_limit.lambda", 1.0));
    cfg.survival_bonus = survival_bonus();
    cfg.control_cost_weight = get_double("reward.control_cost_weight", 0.1);
    cfg.joint_limit_weight = get_double("reward.joint_limit_weight", 0.1);
    return cfg;
  }

  EnvStack make_stack() const { return EnvStack(make_env(), make_stack_config()); }

  Td3Hyper make_hyper() const {
    Td3Hyper hp;
    hp.gamma = get_double("td3.gamma", hp.gamma);
    hp.tau = get_double("td3.tau", hp.tau);
    hp.batch = static_cast<int>(get_long("td3.batch", hp.batch));
    const double sigma_dflt =
        action_space() == ActionSpace::PdTargets ? 0.2 : 0.1;
    hp.exploration_sigma = get_double("td3.exploration_sigma", sigma_dflt);
    hp.policy_delay = static_cast<int>(get_long("td3.policy_delay", hp.policy_delay));
    hp.target_noise = get_double("td3.target_noise", hp.target_noise);
    hp.target_noise_clip = get_double("td3.target_noise_clip", hp.target_noise_clip);
    hp.warmup_steps = static_cast<int>(get_long("td3.warmup_steps", hp.warmup_steps));
    hp.iterations_per_step =
        static_cast<int>(get_long("td3.iterations_per_step", hp.iterations_per_step));
    hp.actor_lr = get_double("td3.actor_lr", hp.actor_lr);
    hp.critic_lr = get_double("td3.critic_lr", hp.critic_lr);
    if (has("td3.hidden")) {
      hp.hidden.clear();
      for (double h : get_double_list("td3.hidden"))
        hp.hidden.push_back(static_cast<int>(h));
    }
    hp.replay_capacity = get_long("td3.replay_capacity", hp.replay_capacity);
    hp.validate();
    return hp;
  }

  /// The fixed seed set, shifted by LOCOLAB_SEED_OFFSET when present.
  std::vector<long> seeds() const {
    std::vector<long> out;
    if (has("train.seeds")) {
      for (double s : get_double_list("train.seeds"))
        out.push_back(static_cast<long>(s));
    } else {
      for (long s = 1; s <= 10; ++s) out.push_back(s);
    }
    if (const char* env = std::getenv("LOCOLAB_SEED_OFFSET")) {
      const long offset = std::strtol(env, nullptr, 10);
      for (long& s : out) s += offset;
    }
    return out;
  }

  long total_steps() const {
    if (!has("train.total_steps"))
      throw ConfigError("train.total_steps is required");
    return get_long("train.total_steps", 0);
  }
  long eval_every() const { return get_long("train.eval_every", 5000); }
  int eval_episodes() const {
    return static_cast<int>(get_long("train.eval_episodes", 10));
  }
  bool strip_survival_bonus() const {
    return get_bool("eval.strip_survival_bonus", false);
  }
  int workers() const {
    const long w = get_long("harness.workers", 0);
    if (w > 0) return static_cast<int>(w);
    return static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));
  }
  std::string output_dir() const {
    return get_string("output.dir", "runs/" + name_);
  }

  /// Full cross-field validation; builds one stack/agent pair to surface
  /// layout conflicts early.
  void validate() const {
    EnvStack stack = make_stack();
    make_hyper();
    bootstrap_mode();
    if (stack.config().kappa_schedule) {
      for (const auto& [step, v] : stack.config().kappa_schedule->knots)
        if (v < 0.0 || v > 1.0)
          throw ConfigError("wrappers.kappa_schedule: kappa outside [0, 1]");
    }
  }

  std::map<std::string, std::string> entries() const { return kv_; }

 private:
  std::string name_ = "experiment";
  std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------------------
// Evaluation protocol.

struct EpisodeEval {
  double return_full = 0.0;      // shaped return as trained
  double return_stripped = 0.0;  // survival bonus removed from the report
  double forward_displacement = 0.0;
};

/// Deterministic-policy rollouts. The trajectory does not depend on whether
/// the survival bonus is stripped: stripping only changes the report.
inline std::vector<EpisodeEval> rollout_policy(const NetworkParams& actor,
                                               EnvStack stack, int episodes,
                                               Rng& rng) {
  if (episodes < 1)
    throw std::invalid_argument("rollout_policy: episodes must be >= 1");
  std::vector<EpisodeEval> out;
  out.reserve(static_cast<std::size_t>(episodes));
  const Eigen::VectorXd lo = stack.action_lo(), hi = stack.action_hi();
  for (int ep = 0; ep < episodes; ++ep) {
    Eigen::VectorXd obs = stack.reset(rng);
    Eigen::VectorXd aux = stack.observe_aux();
    const double x0 = stack.env().state().root_position[0];
    EpisodeEval ev;
    while (true) {
      const Eigen::VectorXd a = select_action(actor, obs, aux, 0.0, rng, lo, hi);
      const StepOutcome step = stack.step(a);
      ev.return_full += step.reward.total;
      ev.return_stripped += step.reward.total - step.reward.survival;
      obs = step.obs;
      aux = step.aux;
      if (step.kind != TerminationKind::Running) break;
    }
    ev.forward_displacement = stack.env().state().root_position[0] - x0;
    out.push_back(ev);
  }
  return out;
}

/// Mean and population standard deviation of the evaluation returns.
inline std::pair<double, double> evaluate_policy(const NetworkParams& actor,
                                                 const EnvStack& stack,
                                                 int episodes,
                                                 bool strip_survival_bonus,
                                                 Rng& rng) {
  const auto evals =
      rollout_policy(actor, stack.clone_for_eval(stack.global_env_step()),
                     episodes, rng);
  double mean = 0.0;
  for (const auto& e : evals)
    mean += strip_survival_bonus ? e.return_stripped : e.return_full;
  mean /= static_cast<double>(evals.size());
  double var = 0.0;
  for (const auto& e : evals) {
    const double r = strip_survival_bonus ? e.return_stripped : e.return_full;
    var += (r - mean) * (r - mean);
  }
  return {mean, std::sqrt(var / static_cast<double>(evals.size()))};
}

// ---------------------------------------------------------------------------
// Learning curves: CSV and SVG emission.

struct CurveRow {
  long env_step = 0;
  long seed = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

using LearningCurve = std::vector<CurveRow>;

inline void validate_curve(const LearningCurve& curve) {
  if (curve.empty()) throw ConfigError("emit_outputs: empty curve set");
  std::map<long, long> last_step;
  for (const auto& row : curve) {
    const auto it = last_step.find(row.seed);
    if (it != last_step.end() && row.env_step <= it->second)
      throw ConfigError("curve: env_step must increase strictly per seed");
    last_step[row.seed] = row.env_step;
  }
}

inline void write_curve_csv(const std::filesystem::path& path,
                            const LearningCurve& curve) {
  validate_curve(curve);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "env_step,seed,eval_return_mean,eval_return_std\n";
  for (const auto& row : curve)
    os << row.env_step << ',' << row.seed << ','
       << detail::format_double(row.eval_return_mean) << ','
       << detail::format_double(row.eval_return_std) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline LearningCurve parse_curve_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) ||
      detail::trim(line) != "env_step,seed,eval_return_mean,eval_return_std")
    throw std::runtime_error("unexpected CSV header in " + path.string());
  LearningCurve curve;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto parts = detail::split(line, ',');
    if (parts.size() != 4)
      throw std::runtime_error("malformed CSV row: " + line);
    curve.push_back({std::stol(parts[0]), std::stol(parts[1]),
                     std::stod(parts[2]), std::stod(parts[3])});
  }
  return curve;
}

/// Learning-curve plot: one light polyline per seed plus a bold mean line.
inline void write_curve_svg(const std::filesystem::path& path,
                            const LearningCurve& curve,
                            const std::string& title = "") {
  validate_curve(curve);
  const double width = 900, height = 540;
  const double x0 = 70, x1 = width - 25, y0 = height - 45, y1 = 25;

  long min_step = curve.front().env_step, max_step = min_step;
  double min_v = curve.front().eval_return_mean, max_v = min_v;
  for (const auto& row : curve) {
    min_step = std::min(min_step, row.env_step);
    max_step = std::max(max_step, row.env_step);
    min_v = std::min(min_v, row.eval_return_mean);
    max_v = std::max(max_v, row.eval_return_mean);
  }
  if (max_step == min_step) max_step = min_step + 1;
  if (max_v == min_v) {
    max_v += 1.0;
    min_v -= 1.0;
  }
  auto sx = [&](double step) {
    return x0 + (step - static_cast<double>(min_step)) /
                    static_cast<double>(max_step - min_step) * (x1 - x0);
  };
  auto sy = [&](double v) {
    return y0 - (v - min_v) / (max_v - min_v) * (y0 - y1);
  };

  std::map<long, std::vector<const CurveRow*>> by_seed;
  std::map<long, std::pair<double, long>> mean_acc;  // step -> (sum, count)
  for (const auto& row : curve) {
    by_seed[row.seed].push_back(&row);
    auto& acc = mean_acc[row.env_step];
    acc.first += row.eval_return_mean;
    acc.second += 1;
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
     << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
     << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\" font-size=\"13\">environment steps</text>\n";
  os << "<text x=\"18\" y=\"" << (y0 + y1) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << (y0 + y1) / 2 << ")\">evaluation return</text>\n";
  os << "<text x=\"" << x0 << "\" y=\"" << y0 + 16 << "\" font-size=\"11\">"
     << min_step << "</text>\n";
  os << "<text x=\"" << x1 << "\" y=\"" << y0 + 16
     << "\" text-anchor=\"end\" font-size=\"11\">" << max_step << "</text>\n";
  os << "<text x=\"" << x0 - 6 << "\" y=\"" << sy(min_v)
     << "\" text-anchor=\"end\" font-size=\"11\">"
     << detail::format_double(min_v) << "</text>\n";
  os << "<text x=\"" << x0 - 6 << "\" y=\"" << sy(max_v)
     << "\" text-anchor=\"end\" font-size=\"11\">"
     << detail::format_double(max_v) << "</text>\n";
  if (!title.empty())
    os << "<text x=\"" << (x0 + x1) / 2
       << "\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">" << title
       << "</text>\n";

  for (const auto& [seed, rows] : by_seed) {
    os << "<polyline fill=\"none\" stroke=\"#7f96b4\" stroke-opacity=\"0.45\" "
          "stroke-width=\"1\" points=\"";
    for (const CurveRow* row : rows)
      os << sx(static_cast<double>(row->env_step)) << ","
         << sy(row->eval_return_mean) << " ";
    os << "\"/>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2.5\" "
        "points=\"";
  for (const auto& [step, acc] : mean_acc)
    os << sx(static_cast<double>(step)) << ","
       << sy(acc.first / static_cast<double>(acc.second)) << " ";
  os << "\"/>\n</svg>\n";
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

/// CSV plus SVG for a finished experiment.
inline void emit_outputs(const LearningCurve& curve,
                         const std::filesystem::path& dir,
                         const std::string& title = "") {
  validate_curve(curve);
  std::filesystem::create_directories(dir);
  write_curve_csv(dir / "curve.csv", curve);
  write_curve_svg(dir / "curve.svg", curve, title);
}

// ---------------------------------------------------------------------------
// Experiment runner.

struct SeedRun {
  long seed = 0;
  std::vector<EvalPoint> curve;
  std::filesystem::path actor_checkpoint;
  std::string error;  // empty on success
};

struct ExperimentResult {
  std::filesystem::path out_dir;
  std::vector<SeedRun> seeds;
  LearningCurve curve;
};

namespace detail {

inline SeedRun run_one_seed(const ExperimentConfig& cfg, long seed,
                            const std::filesystem::path& out_dir) {
  SeedRun result;
  result.seed = seed;
  const std::filesystem::path seed_dir =
      out_dir / ("seed_" + std::to_string(seed));
  std::filesystem::create_directories(seed_dir);

  Rng root(static_cast<std::uint64_t>(seed));
  Rng agent_rng = root.split();
  Rng train_rng = root.split();
  Rng eval_rng = root.split();

  EnvStack stack = cfg.make_stack();
  const Td3Hyper hp = cfg.make_hyper();
  Td3Agent agent(stack.obs_dim(), stack.aux_dim(), stack.action_dim(),
                 stack.action_lo(), stack.action_hi(), hp, cfg.bootstrap_mode(),
                 agent_rng);

  std::ofstream diag(seed_dir / "train_diag.csv", std::ios::binary);
  diag << "step,critic_loss,actor_loss,q_mean\n";
  auto diag_sink = [&](long step, const TrainDiag& d) {
    if (!d.updated) return;
    diag << step << ',' << format_double(d.critic_loss) << ','
         << (d.actor_updated ? format_double(d.actor_loss) : std::string(""))
         << ',' << format_double(d.q_mean) << '\n';
  };

  const int episodes = cfg.eval_episodes();
  const bool strip = cfg.strip_survival_bonus();
  auto eval_fn = [&](const NetworkParams& actor,
                     long at) -> std::pair<double, double> {
    EnvStack eval_stack = stack.clone_for_eval(at);
    const auto evals = rollout_policy(actor, std::move(eval_stack), episodes,
                                      eval_rng);
    double mean = 0.0;
    for (const auto& e : evals)
      mean += strip ? e.return_stripped : e.return_full;
    mean /= static_cast<double>(evals.size());
    double var = 0.0;
    for (const auto& e : evals) {
      const double r = strip ? e.return_stripped : e.return_full;
      var += (r - mean) * (r - mean);
    }
    return {mean, std::sqrt(var / static_cast<double>(evals.size()))};
  };

  result.curve = run_training(stack, agent, cfg.total_steps(), train_rng,
                              cfg.eval_every(), eval_fn, diag_sink);
  result.actor_checkpoint = seed_dir / "actor.nn";
  save_network(result.actor_checkpoint.string(), agent.actor());
  return result;
}

}  // namespace detail

/// One full multi-seed experiment. Seeds run as independent workers with no
/// shared mutable state; outputs are merged by a single writer in seed order,
/// so repeated invocations are byte-identical.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir,
                                       int workers_override = 0) {
#if defined(__GLIBC__)
  // The training step churns through ~MB-sized Eigen temporaries; keep them
  // on the heap instead of mmap round-trips (roughly halves the step cost).
  [[maybe_unused]] static const bool allocator_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
#endif
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const std::vector<long> seeds = cfg.seeds();
  const int workers = std::max(
      1, std::min<int>(workers_override > 0 ? workers_override : cfg.workers(),
                       static_cast<int>(seeds.size())));

  std::vector<SeedRun> runs(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        runs[i] = detail::run_one_seed(cfg, seeds[i], out_dir);
      } catch (const std::exception& e) {
        runs[i].seed = seeds[i];
        runs[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (const auto& run : runs)
    if (!run.error.empty())
      throw std::runtime_error("seed " + std::to_string(run.seed) +
                               " failed: " + run.error);

  ExperimentResult result;
  result.out_dir = out_dir;
  result.seeds = runs;
  for (const auto& run : runs)
    for (const auto& p : run.curve)
      result.curve.push_back({p.env_step, run.seed, p.mean, p.stdev});
  emit_outputs(result.curve, out_dir, cfg.name());
  return result;
}

/// One full experiment per axis value, in per-value subdirectories.
inline std::vector<ExperimentResult> run_sweep(
    const ExperimentConfig& cfg, const std::string& axis,
    const std::vector<std::string>& values,
    const std::filesystem::path& out_root, int workers_override = 0) {
  if (!config_key_registry().count(axis))
    throw ConfigError("sweep axis '" + axis + "' is not a config key\n" +
                      valid_keys_message());
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<ExperimentResult> results;
  for (const auto& value : values) {
    ExperimentConfig point = cfg;
    point.set(axis, value);
    std::string dir_name = axis + "=" + value;
    for (char& c : dir_name)
      if (c == '/' || c == ' ' || c == ':') c = '_';
    results.push_back(run_experiment(point, out_root / dir_name,
                                     workers_override));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Generalization matrix (matching vs fixed-width initial-state evaluation).

struct GenMatrixRow {
  double kappa = 0.0;
  double mean = 0.0;
  double stdev = 0.0;
};

inline std::vector<GenMatrixRow> generalization_matrix(
    const NetworkParams& actor, const ExperimentConfig& cfg,
    const std::vector<double>& kappas, int episodes = 100,
    std::uint64_t eval_seed = 1) {
  if (episodes < 1) throw std::invalid_argument("generalization_matrix: episodes");
  std::vector<GenMatrixRow> rows;
  Rng rng(eval_seed);
  for (double kappa : kappas) {
    EnvStack stack = cfg.make_stack();
    EnvStack eval_stack = stack.clone_for_eval(0, kappa);
    const auto evals = rollout_policy(actor, std::move(eval_stack), episodes, rng);
    double mean = 0.0;
    for (const auto& e : evals) mean += e.return_full;
    mean /= static_cast<double>(evals.size());
    double var = 0.0;
    for (const auto& e : evals)
      var += (e.return_full - mean) * (e.return_full - mean);
    rows.push_back({kappa, mean, std::sqrt(var / static_cast<double>(evals.size()))});
  }
  return rows;
}

inline void write_genmatrix_csv(const std::filesystem::path& path,
                                const std::vector<GenMatrixRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "kappa,eval_return_mean,eval_return_std\n";
  for (const auto& r : rows)
    os << detail::format_double(r.kappa) << ',' << detail::format_double(r.mean)
       << ',' << detail::format_double(r.stdev) << '\n';
}

}  // namespace locolab
