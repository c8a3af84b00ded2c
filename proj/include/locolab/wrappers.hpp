#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "locolab/core.hpp"
#include "locolab/envs.hpp"
#include "locolab/nn.hpp"

// Composable environment transformations: initial-state width, phase
// variable, Cartesian joint positions, contact toggles, pre-trained feature
// extraction, action repeat, PD-target action space, and torque-limit
// schedules. Wrappers are stateless or single-owner like the environments
// they wrap.

namespace locolab {

/// Piecewise-linear schedule over environment steps; constant outside the
/// knot range.
struct ScalarSchedule {
  std::vector<std::pair<long, double>> knots;  // sorted by step

  static ScalarSchedule constant(double v) { return {{{0, v}}}; }

  double value(long step) const {
    if (knots.empty()) throw ConfigError("ScalarSchedule: empty schedule");
    if (step <= knots.front().first) return knots.front().second;
    if (step >= knots.back().first) return knots.back().second;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (step <= knots[i].first) {
        const auto& [s0, v0] = knots[i - 1];
        const auto& [s1, v1] = knots[i];
        const double t = static_cast<double>(step - s0) / static_cast<double>(s1 - s0);
        return v0 + t * (v1 - v0);
      }
    }
    return knots.back().second;
  }

  bool non_increasing() const {
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (knots[i].second > knots[i - 1].second) return false;
    return true;
  }

  bool positive() const {
    for (const auto& [s, v] : knots)
      if (!(v > 0.0)) return false;
    return true;
  }
};

/// Torque-limit multiplier lambda, constant or decreasing over training
/// (the torque curriculum).
struct TorqueLimitSchedule {
  ScalarSchedule schedule = ScalarSchedule::constant(1.0);

  void validate() const {
    if (!schedule.positive())
      throw ConfigError("TorqueLimitSchedule: lambda must stay positive");
    if (!schedule.non_increasing())
      throw ConfigError("TorqueLimitSchedule: schedule must be non-increasing");
  }
  double lambda(long step) const { return schedule.value(step); }
};

/// Active actuator limits at a given step: lambda(step) * tau_max.
inline Eigen::VectorXd torque_limit(const TorqueLimitSchedule& sched, long step,
                                    const Eigen::VectorXd& tau_max) {
  if (step < 0) throw std::invalid_argument("torque_limit: step < 0");
  return sched.lambda(step) * tau_max;
}

/// Phase variable for nearly cyclic motions.
struct PhaseConfig {
  double period = 1.0;  // seconds
  bool inject_every_layer = false;

  void validate() const {
    if (!(period > 0.0)) throw ConfigError("PhaseConfig: period must be > 0");
  }
};

/// (sin(phi), cos(phi)) with phi = 2*pi*(t mod T)/T.
inline Eigen::Vector2d phase_of(double t, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("phase_of: period must be > 0");
  double m = std::fmod(t, T);
  if (m < 0.0) m += T;
  const double phi = 2.0 * M_PI * m / T;
  return {std::sin(phi), std::cos(phi)};
}

/// Observation augmented with root-frame Cartesian joint positions.
inline Eigen::VectorXd augment_with_joint_positions(const Eigen::VectorXd& obs,
                                                    const EnvState& state,
                                                    const EnvSpec& spec) {
  const auto points = forward_kinematics(state, spec);
  Eigen::VectorXd out(obs.size() + 2 * static_cast<long>(points.size()));
  out.head(obs.size()) = obs;
  long k = obs.size();
  for (const auto& p : points) {
    out[k++] = p[0];
    out[k++] = p[1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// PD-target action space.

/// Low-level PD law tau = -kp (q - qbar) - kd qdot, clamped to `limit`.
inline double pd_torque(double q, double q_dot, double q_bar, double kp,
                        double kd,
                        double limit = std::numeric_limits<double>::infinity()) {
  const double tau = -kp * (q - q_bar) - kd * q_dot;
  return std::clamp(tau, -limit, limit);
}

/// Rates and gains of the low-level PD controller. With the defaults one
/// policy step re-evaluates the PD law 5 times, each output held for 4 sim
/// steps (1200 = 4 * 300 = 20 * 60).
struct PdConfig {
  Eigen::VectorXd kp, kd;  // per joint; empty selects the default gains
  double policy_rate = 60.0;
  double pd_rate = 300.0;
  double sim_rate = 1200.0;

  int pd_evals_per_policy_step() const {
    return static_cast<int>(std::lround(pd_rate / policy_rate));
  }
  int sim_steps_per_pd_eval() const {
    return static_cast<int>(std::lround(sim_rate / pd_rate));
  }

  void validate(const EnvSpec& spec) const {
    auto divides = [](double inner, double outer) {
      const double ratio = outer / inner;
      return std::abs(ratio - std::lround(ratio)) < 1e-9 && ratio >= 1.0;
    };
    if (!divides(pd_rate, sim_rate) || !divides(policy_rate, pd_rate))
      throw ConfigError("PdConfig: each rate must divide the next");
    if (spec.sim_rate != sim_rate || spec.control_rate != policy_rate)
      throw ConfigError("PdConfig: environment rates must match the PD rates");
    if (kp.size() != spec.n_joints || kd.size() != spec.n_joints)
      throw ConfigError("PdConfig: gains must have one entry per joint");
    for (int i = 0; i < spec.n_joints; ++i)
      if (kp[i] < 0.0 || kd[i] < 0.0)
        throw ConfigError("PdConfig: gains must be non-negative");
  }
};

/// Order-of-magnitude default gains: kp spans half the joint range at half
/// the actuator limit, kd = 0.1 * kp * (1 s).
inline void fill_default_pd_gains(PdConfig& cfg, const EnvSpec& spec) {
  if (cfg.kp.size() == 0) {
    cfg.kp.resize(spec.n_joints);
    for (int i = 0; i < spec.n_joints; ++i)
      cfg.kp[i] = 0.5 * spec.tau_max[i] / (0.5 * (spec.theta_max[i] - spec.theta_min[i]));
  }
  if (cfg.kd.size() == 0) cfg.kd = 0.1 * cfg.kp;
}

struct ControlStepResult {
  RewardTerms terms;
  TerminationKind kind = TerminationKind::Running;
};

/// Per-policy-step PD diagnostics; the energy/limit costs of the reward are
/// exactly the sums of the recorded substep contributions.
struct PdStepDiagnostics {
  int pd_evaluations = 0;
  int sim_steps = 0;
  bool target_clamped = false;
  std::vector<double> substep_energy_costs;
  std::vector<double> substep_limit_costs;
};

/// One torque-mode control step: the normalized action is held across all
/// sim substeps, scaled by lambda * tau_max inside the environment.
inline ControlStepResult torque_control_step(Environment& env,
                                             const Eigen::VectorXd& action,
                                             double lambda, double bonus,
                                             double control_cost_weight,
                                             double joint_limit_weight) {
  const EnvState prev = env.state();
  Eigen::VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const int substeps = env.spec().substeps_per_control();
  for (int i = 0; i < substeps; ++i) env.sim_substep(a, lambda);
  env.advance_control_bookkeeping();
  ControlStepResult res;
  res.terms = env.shaped_reward(prev, a, bonus, control_cost_weight,
                                joint_limit_weight);
  res.kind = classify_termination(env.state().fallen, env.state().step_index,
                                  env.spec().time_limit);
  return res;
}

/// One policy step of PD-target control. Targets in [0, 1] per joint map
/// affinely onto the joint range; the PD law is re-evaluated pd_rate /
/// policy_rate times, each output held for sim_rate / pd_rate sim steps.
/// Energy and joint-limit costs are integrated over the PD substeps
/// (time-weighted so one policy step carries the same scale as torque mode);
/// progress and survival are computed once per policy step.
inline ControlStepResult pd_control_step(Environment& env,
                                         const Eigen::VectorXd& targets,
                                         const PdConfig& cfg, double lambda,
                                         double bonus,
                                         double control_cost_weight,
                                         double joint_limit_weight,
                                         PdStepDiagnostics* diag = nullptr) {
  const EnvSpec& spec = env.spec();
  cfg.validate(spec);
  if (targets.size() != spec.n_joints)
    throw ShapeError("pd_control_step: one target per joint required");

  bool clamped = false;
  Eigen::VectorXd u(targets.size());
  for (int i = 0; i < targets.size(); ++i) {
    u[i] = std::clamp(targets[i], 0.0, 1.0);
    clamped |= (u[i] != targets[i]);
  }
  Eigen::VectorXd q_bar =
      spec.theta_min.array() +
      u.array() * (spec.theta_max.array() - spec.theta_min.array());

  const EnvState prev = env.state();
  const int n_pd = cfg.pd_evals_per_policy_step();
  const int n_sim = cfg.sim_steps_per_pd_eval();
  if (diag) {
    *diag = PdStepDiagnostics{};
    diag->target_clamped = clamped;
  }

  double energy_cost = 0.0, limit_cost = 0.0;
  Eigen::VectorXd a_norm(spec.n_joints);
  for (int e = 0; e < n_pd; ++e) {
    const EnvState& s = env.state();
    for (int j = 0; j < spec.n_joints; ++j) {
      const double limit = lambda * spec.tau_max[j];
      const double tau = pd_torque(s.joint_angles[j], s.joint_velocities[j],
                                   q_bar[j], cfg.kp[j], cfg.kd[j], limit);
      a_norm[env.action_index_for_joint(j)] = tau / limit;
    }
    const double sub_energy =
        -(control_cost_weight / n_pd) * a_norm.squaredNorm();
    for (int k = 0; k < n_sim; ++k) env.sim_substep(a_norm, lambda);
    const double sub_limit = -(joint_limit_weight / n_pd) *
                             joints_near_limit(env.state(), spec);
    energy_cost += sub_energy;
    limit_cost += sub_limit;
    if (diag) {
      diag->pd_evaluations += 1;
      diag->sim_steps += n_sim;
      diag->substep_energy_costs.push_back(sub_energy);
      diag->substep_limit_costs.push_back(sub_limit);
    }
  }
  env.advance_control_bookkeeping();

  const EnvState& cur = env.state();
  const double survival = cur.fallen ? 0.0 : bonus;
  ControlStepResult res;
  res.terms = RewardTerms::make(env.progress_term(prev, cur), survival,
                                energy_cost, limit_cost);
  res.kind =
      classify_termination(cur.fallen, cur.step_index, spec.time_limit);
  return res;
}

// ---------------------------------------------------------------------------
// Observation pipeline.

/// Which transformations apply to the raw observation, in the fixed order
/// [base (with optional contacts) | joint positions | phase]. A pre-trained
/// feature extractor consumes the assembled vector and replaces it; phase
/// and feature extraction are mutually exclusive.
struct PipelineConfig {
  bool include_contacts = true;
  bool joint_positions = false;
  std::optional<PhaseConfig> phase;
  std::shared_ptr<const NetworkParams> feature_extractor;
};

inline int pre_feature_obs_dim(const EnvSpec& spec, const PipelineConfig& cfg) {
  int n = 5 + 2 * spec.n_joints + (cfg.include_contacts ? spec.n_feet : 0);
  if (cfg.joint_positions) n += 2;  // one end-effector per planar character
  if (cfg.phase && !cfg.phase->inject_every_layer) n += 2;
  return n;
}

inline void validate_pipeline(const PipelineConfig& cfg, const EnvSpec& spec) {
  if (cfg.phase) cfg.phase->validate();
  if (cfg.feature_extractor) {
    if (cfg.phase)
      throw ConfigError(
          "pipeline: phase input combined with a pre-trained feature extractor "
          "is unspecified and not allowed");
    if (cfg.feature_extractor->aux_width != 0)
      throw ConfigError("pipeline: feature extractor must not expect aux input");
    if (cfg.feature_extractor->input_dim() != pre_feature_obs_dim(spec, cfg))
      throw ConfigError(
          "pipeline: feature extractor input dim " +
          std::to_string(cfg.feature_extractor->input_dim()) +
          " does not match the observation layout (" +
          std::to_string(pre_feature_obs_dim(spec, cfg)) + ")");
  }
}

inline int pipeline_obs_dim(const EnvSpec& spec, const PipelineConfig& cfg) {
  if (cfg.feature_extractor) return 256;
  return pre_feature_obs_dim(spec, cfg);
}

inline int pipeline_aux_dim(const PipelineConfig& cfg) {
  return (cfg.phase && cfg.phase->inject_every_layer) ? 2 : 0;
}

/// Assembled policy observation for the current state.
inline Eigen::VectorXd pipeline_observe(const EnvState& state,
                                        const EnvSpec& spec,
                                        const PipelineConfig& cfg) {
  Eigen::VectorXd obs = build_observation(state, spec, cfg.include_contacts);
  if (cfg.joint_positions) obs = augment_with_joint_positions(obs, state, spec);
  if (cfg.phase && !cfg.phase->inject_every_layer) {
    const Eigen::Vector2d ph = phase_of(state.phase_time, cfg.phase->period);
    Eigen::VectorXd out(obs.size() + 2);
    out << obs, ph[0], ph[1];
    obs = std::move(out);
  }
  if (cfg.feature_extractor) obs = extract_features(*cfg.feature_extractor, obs);
  return obs;
}

/// Per-layer auxiliary input (the injected phase pair), empty when disabled.
inline Eigen::VectorXd pipeline_aux(const EnvState& state,
                                    const PipelineConfig& cfg) {
  if (cfg.phase && cfg.phase->inject_every_layer)
    return phase_of(state.phase_time, cfg.phase->period);
  return Eigen::VectorXd();
}

// ---------------------------------------------------------------------------
// The full wrapped environment the learner interacts with.

enum class ActionSpace { Torque, PdTargets };

struct StackConfig {
  InitialStateConfig isd;
  std::optional<ScalarSchedule> kappa_schedule;  // overrides isd.kappa
  PipelineConfig pipeline;
  int action_repeat = 1;
  ActionSpace action_space = ActionSpace::Torque;
  PdConfig pd;
  TorqueLimitSchedule torque_limits;
  double survival_bonus = 0.0;
  double control_cost_weight = 0.1;
  double joint_limit_weight = 0.1;
};

struct StepOutcome {
  Eigen::VectorXd obs;
  Eigen::VectorXd aux;
  RewardTerms reward;  // summed over the repeated control steps
  TerminationKind kind = TerminationKind::Running;
  int env_steps = 0;  // control steps consumed (<= action_repeat)
};

/// Environment plus wrapper stack. Owns the wrapped instance; schedules are
/// driven by a cumulative environment-step counter that persists across
/// episodes.
class EnvStack {
 public:
  EnvStack(std::unique_ptr<Environment> env, StackConfig cfg)
      : env_(std::move(env)), cfg_(std::move(cfg)) {
    if (cfg_.action_repeat < 1)
      throw std::invalid_argument("EnvStack: action_repeat must be >= 1");
    if (cfg_.isd.kappa < 0.0 || cfg_.isd.kappa > 1.0)
      throw std::invalid_argument("EnvStack: kappa outside [0, 1]");
    validate_pipeline(cfg_.pipeline, env_->spec());
    cfg_.torque_limits.validate();
    if (cfg_.action_space == ActionSpace::PdTargets) {
      fill_default_pd_gains(cfg_.pd, env_->spec());
      cfg_.pd.validate(env_->spec());
    }
  }

  const Environment& env() const { return *env_; }
  Environment& env() { return *env_; }
  const StackConfig& config() const { return cfg_; }
  long global_env_step() const { return global_step_; }

  int obs_dim() const { return pipeline_obs_dim(env_->spec(), cfg_.pipeline); }
  int aux_dim() const { return pipeline_aux_dim(cfg_.pipeline); }
  int action_dim() const { return env_->action_dim(); }

  Eigen::VectorXd action_lo() const {
    const double lo = cfg_.action_space == ActionSpace::Torque ? -1.0 : 0.0;
    return Eigen::VectorXd::Constant(action_dim(), lo);
  }
  Eigen::VectorXd action_hi() const {
    return Eigen::VectorXd::Constant(action_dim(), 1.0);
  }

  double current_kappa() const {
    return cfg_.kappa_schedule ? cfg_.kappa_schedule->value(global_step_)
                               : cfg_.isd.kappa;
  }

  Eigen::VectorXd reset(Rng& rng) {
    env_->reset(rng, InitialStateConfig{current_kappa()});
    return observe();
  }

  /// Apply one policy action for up to `action_repeat` control steps,
  /// stopping early on termination. The reward is the sum of the per-step
  /// shaped rewards under the held action.
  StepOutcome step(const Eigen::VectorXd& action) {
    StepOutcome out;
    for (int i = 0; i < cfg_.action_repeat; ++i) {
      const double lambda = cfg_.torque_limits.lambda(global_step_);
      ControlStepResult res;
      if (cfg_.action_space == ActionSpace::Torque) {
        res = torque_control_step(*env_, action, lambda, cfg_.survival_bonus,
                                  cfg_.control_cost_weight,
                                  cfg_.joint_limit_weight);
      } else {
        res = pd_control_step(*env_, action, cfg_.pd, lambda,
                              cfg_.survival_bonus, cfg_.control_cost_weight,
                              cfg_.joint_limit_weight);
      }
      ++global_step_;
      ++out.env_steps;
      out.reward += res.terms;
      out.kind = res.kind;
      if (out.kind != TerminationKind::Running) break;
    }
    out.obs = observe();
    out.aux = pipeline_aux(env_->state(), cfg_.pipeline);
    return out;
  }

  Eigen::VectorXd observe() const {
    return pipeline_observe(env_->state(), env_->spec(), cfg_.pipeline);
  }
  Eigen::VectorXd observe_aux() const {
    return pipeline_aux(env_->state(), cfg_.pipeline);
  }

  /// Copy with schedules frozen at `at_step` (evaluation never advances the
  /// training schedules) and an optional initial-state width override.
  EnvStack clone_for_eval(long at_step,
                          std::optional<double> kappa_override = {}) const {
    StackConfig cfg = cfg_;
    cfg.kappa_schedule.reset();
    cfg.isd.kappa = kappa_override.value_or(
        cfg_.kappa_schedule ? cfg_.kappa_schedule->value(at_step)
                            : cfg_.isd.kappa);
    cfg.torque_limits.schedule =
        ScalarSchedule::constant(cfg_.torque_limits.lambda(at_step));
    return EnvStack(env_->clone(), std::move(cfg));
  }

 private:
  std::unique_ptr<Environment> env_;
  StackConfig cfg_;
  long global_step_ = 0;
};

}  // namespace locolab
