#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "locolab/core.hpp"
#include "locolab/env_types.hpp"
#include "locolab/initial_state.hpp"

// Analytic-dynamics locomotion environments: a torque-driven pendulum
// swing-up (desk-scale trainer smoke task) and a planar SLIP hopper that
// provides the contact / fall / joint-limit structure of the larger
// locomotion benchmarks.

namespace locolab {

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.81;
  double tau_max = 2.0;
};

struct SlipParams {
  double mass = 1.0;
  double rest_length = 1.0;
  double stiffness = 40.0;      // N/m
  double max_thrust = 15.0;     // N
  double max_swing_rate = 4.0;  // rad/s
  double gravity = 9.81;
  double fall_height = 0.5;  // fallen when root z drops below this
};

inline double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;  // keep the representative in (-pi, pi]
  return w;
}

/// Semi-implicit Euler update of a rigid rod pivoting at the origin,
/// theta = 0 upright: theta'' = (3g / 2l) sin(theta) + 3 tau / (m l^2).
inline EnvState pendulum_step(const EnvState& state, double torque, double dt,
                              const PendulumParams& p = {}) {
  if (dt <= 0) throw std::invalid_argument("pendulum_step: dt <= 0");
  EnvState next = state;
  const double theta = state.joint_angles[0];
  const double omega = state.joint_velocities[0];
  const double acc = 1.5 * p.gravity / p.length * std::sin(theta) +
                     3.0 * torque / (p.mass * p.length * p.length);
  const double omega_next = omega + acc * dt;
  next.joint_velocities[0] = omega_next;
  next.joint_angles[0] = wrap_angle(theta + omega_next * dt);
  if (!std::isfinite(next.joint_angles[0]) || !std::isfinite(omega_next))
    throw NumericFault("pendulum_step: non-finite state");
  return next;
}

/// Mechanical energy of the pendulum (potential maximal upright); conserved
/// under zero torque, up to symplectic-integrator drift.
inline double pendulum_energy(const EnvState& state, const PendulumParams& p = {}) {
  const double inertia = p.mass * p.length * p.length / 3.0;
  return 0.5 * inertia * state.joint_velocities[0] * state.joint_velocities[0] +
         0.5 * p.mass * p.gravity * p.length * std::cos(state.joint_angles[0]);
}

/// One sim substep of the planar SLIP hopper. Joint coordinates are
/// q = [leg angle alpha, leg extension r - r0]; `action` is the normalized
/// [thrust fraction, swing-rate fraction] pair in [-1, 1]^2.
///
/// Flight: ballistic body, leg length latched, alpha driven at
/// action[1] * max_swing_rate; touchdown pins the foot where it crossed the
/// ground (foot velocity is discarded).
/// Stance: radial spring force k (r0 - r) plus thrust action[0] * max_thrust
/// along the leg, clamped so the ground never pulls; liftoff once the leg
/// passes rest length while extending. The spring itself arrests deep
/// compression; the leg-length joint limits enter through the reward and
/// observation normalization, not as a dynamic stop.
inline EnvState slip_hopper_step(const EnvState& state,
                                 const Eigen::Vector2d& action, double dt,
                                 const SlipParams& p = {}) {
  if (dt <= 0) throw std::invalid_argument("slip_hopper_step: dt <= 0");
  EnvState next = state;
  const double alpha_lo = -M_PI / 4.0, alpha_hi = M_PI / 4.0;
  const double r_max = 1.1 * p.rest_length;

  Eigen::Vector2d pos = state.root_position;
  Eigen::Vector2d vel = state.root_velocity;
  double alpha = state.joint_angles[0];
  double r = p.rest_length + state.joint_angles[1];

  if (!state.contacts[0]) {
    // Flight phase.
    const double rate_cmd = action[1] * p.max_swing_rate;
    const double alpha_new = std::clamp(alpha + rate_cmd * dt, alpha_lo, alpha_hi);
    next.joint_velocities[0] = (alpha_new - alpha) / dt;
    alpha = alpha_new;
    vel[1] -= p.gravity * dt;
    pos += vel * dt;
    next.joint_velocities[1] = 0.0;  // leg latched at its current length

    const double foot_x = pos[0] + r * std::sin(alpha);
    const double foot_z = pos[1] - r * std::cos(alpha);
    if (foot_z <= 0.0 && vel[1] < 0.0) {
      next.contacts[0] = 1;
      next.foot_pin = Eigen::Vector2d(foot_x, 0.0);
      const Eigen::Vector2d leg = pos - next.foot_pin;
      r = leg.norm();
      alpha = std::atan2(next.foot_pin[0] - pos[0], pos[1] - next.foot_pin[1]);
      const Eigen::Vector2d d = leg / r;
      next.joint_velocities[1] = d.dot(vel);
      next.joint_velocities[0] =
          (-vel[0] * pos[1] - (next.foot_pin[0] - pos[0]) * vel[1]) / (r * r);
    }
  } else {
    // Stance phase: foot pinned at next.foot_pin.
    const Eigen::Vector2d pin = state.foot_pin;
    Eigen::Vector2d leg = pos - pin;
    r = leg.norm();
    Eigen::Vector2d d = leg / r;
    const double force =
        std::max(0.0, p.stiffness * (p.rest_length - r) + action[0] * p.max_thrust);
    const Eigen::Vector2d acc =
        (force / p.mass) * d - Eigen::Vector2d(0.0, p.gravity);
    vel += acc * dt;
    pos += vel * dt;

    leg = pos - pin;
    r = leg.norm();
    const double r_floor = 0.02 * p.rest_length;
    if (r < r_floor) {
      // Numeric guard against leg inversion; unreachable for sane states.
      pos = pin + d * r_floor;
      leg = pos - pin;
      r = r_floor;
      const double v_radial = d.dot(vel);
      if (v_radial < 0.0) vel -= v_radial * d;
    }
    d = leg / r;
    const double r_dot = d.dot(vel);
    alpha = std::atan2(pin[0] - pos[0], pos[1] - pin[1]);
    next.joint_velocities[0] =
        (-vel[0] * pos[1] - (pin[0] - pos[0]) * vel[1]) / (r * r);
    next.joint_velocities[1] = r_dot;

    if (r >= p.rest_length && r_dot > 0.0) {
      next.contacts[0] = 0;
      r = std::min(r, r_max);
      next.joint_velocities[1] = 0.0;
    }
  }

  next.root_position = pos;
  next.root_velocity = vel;
  next.joint_angles[0] = alpha;
  next.joint_angles[1] = r - p.rest_length;
  if (pos[1] < p.fall_height) next.fallen = true;
  if (!pos.allFinite() || !vel.allFinite() || !next.joint_angles.allFinite())
    throw NumericFault("slip_hopper_step: non-finite state");
  return next;
}

/// Forward-velocity term of the shaped reward.
inline double progress_rate(const EnvState& prev, const EnvState& next,
                            const EnvSpec& spec) {
  return (next.root_position[0] - prev.root_position[0]) / spec.control_dt();
}

/// Number of joints within 1% of their range of either limit.
inline int joints_near_limit(const EnvState& state, const EnvSpec& spec,
                             double fraction = 0.01) {
  int count = 0;
  for (int i = 0; i < spec.n_joints; ++i) {
    const double margin = fraction * (spec.theta_max[i] - spec.theta_min[i]);
    const double q = state.joint_angles[i];
    if (q <= spec.theta_min[i] + margin || q >= spec.theta_max[i] - margin) ++count;
  }
  return count;
}

/// Shaped reward for one control step: forward progress, survival bonus while
/// standing, quadratic control cost and a flat penalty per joint near a limit.
inline RewardTerms reward(const EnvState& prev, const EnvState& next,
                          const Eigen::VectorXd& action, const EnvSpec& spec,
                          double bonus, double control_cost_weight = 0.1,
                          double joint_limit_weight = 0.1) {
  const double progress = progress_rate(prev, next, spec);
  const double survival = next.fallen ? 0.0 : bonus;
  const double control = -control_cost_weight * action.squaredNorm();
  const double joint = -joint_limit_weight * joints_near_limit(next, spec);
  return RewardTerms::make(progress, survival, control, joint);
}

/// Flattened, normalized observation:
/// [dz, sin(psi), cos(psi), vx, vz, {q_i normalized, qdot_i * 0.3}...,
///  contact flags (optional)].
/// The heading-to-target angle psi is identically 0 for these planar
/// characters and is emitted as the constant pair (0, 1) to preserve the
/// layout shape of the 3D benchmarks.
inline Eigen::VectorXd build_observation(const EnvState& state,
                                         const EnvSpec& spec,
                                         bool include_contacts) {
  const int n = 5 + 2 * spec.n_joints + (include_contacts ? spec.n_feet : 0);
  Eigen::VectorXd obs(n);
  obs[0] = state.root_position[1] - spec.launch_height;
  obs[1] = 0.0;
  obs[2] = 1.0;
  obs[3] = state.root_velocity[0];
  obs[4] = state.root_velocity[1];
  int k = 5;
  for (int i = 0; i < spec.n_joints; ++i) {
    const double mid = 0.5 * (spec.theta_min[i] + spec.theta_max[i]);
    const double half = 0.5 * (spec.theta_max[i] - spec.theta_min[i]);
    obs[k++] = (state.joint_angles[i] - mid) / half;
    obs[k++] = 0.3 * state.joint_velocities[i];
  }
  if (include_contacts)
    for (int i = 0; i < spec.n_feet; ++i)
      obs[k++] = state.contacts[i] ? 1.0 : 0.0;
  return obs;
}

/// End-effector positions in a frame centered at the character's root:
/// the SLIP foot, or the pendulum tip.
inline std::vector<Eigen::Vector2d> forward_kinematics(const EnvState& state,
                                                       const EnvSpec& spec) {
  std::vector<Eigen::Vector2d> points;
  if (spec.id == CharacterId::Pendulum) {
    const double theta = state.joint_angles[0];
    points.emplace_back(spec.link_length * std::sin(theta),
                        spec.link_length * std::cos(theta));
  } else {
    const double alpha = state.joint_angles[0];
    const double r = spec.link_length + state.joint_angles[1];
    points.emplace_back(r * std::sin(alpha), -r * std::cos(alpha));
  }
  return points;
}

struct SpecOverrides {
  std::optional<double> sim_rate;
  std::optional<double> control_rate;
  std::optional<int> time_limit;
  std::optional<double> fall_height;
};

/// Base environment. Instances are single-owner; dynamics are deterministic,
/// all randomness enters through reset().
class Environment {
 public:
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  void set_state(const EnvState& s) { state_ = s; }
  int action_dim() const { return spec_.n_joints; }

  /// Advance one sim substep (1/sim_rate). `action` is normalized to
  /// [-1, 1] per actuator; `lambda` scales the actuator limits.
  virtual void sim_substep(const Eigen::VectorXd& action, double lambda) = 0;

  /// Progress component of the reward for one control step.
  virtual double progress_term(const EnvState& prev, const EnvState& next) const {
    return progress_rate(prev, next, spec_);
  }

  /// Full shaped reward for one control step ending at the current state.
  virtual RewardTerms shaped_reward(const EnvState& prev,
                                    const Eigen::VectorXd& action, double bonus,
                                    double control_cost_weight,
                                    double joint_limit_weight) const {
    return reward(prev, state_, action, spec_, bonus, control_cost_weight,
                  joint_limit_weight);
  }

  /// Which normalized-action slot drives a given joint.
  virtual int action_index_for_joint(int joint) const { return joint; }

  /// Canonical launch pose with zero velocities.
  virtual EnvState launch_state() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Control-step bookkeeping, applied once after the sim substeps of a step.
  void advance_control_bookkeeping() {
    state_.step_index += 1;
    state_.phase_time += spec_.control_dt();
  }

  /// Sample a fresh episode start: joint angles from the kappa law, zero
  /// velocities, canonical root pose. Resamples (up to 100 times) if the
  /// sampled state is already below the fall height.
  const EnvState& reset(Rng& rng, const InitialStateConfig& isd) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      EnvState s = launch_state();
      s.joint_angles = sample_initial_joint_angles(rng, isd.kappa, spec_);
      s.joint_velocities.setZero(spec_.n_joints);
      if (s.root_position[1] >= spec_.fall_height) {
        state_ = s;
        return state_;
      }
    }
    throw NumericFault("Environment::reset: could not sample a standing state");
  }

 protected:
  EnvSpec spec_;
  EnvState state_;
};

class PendulumEnv final : public Environment {
 public:
  explicit PendulumEnv(const PendulumParams& params = {},
                       const SpecOverrides& ov = {})
      : params_(params) {
    spec_.id = CharacterId::Pendulum;
    spec_.n_joints = 1;
    spec_.n_feet = 0;
    spec_.theta_min = Eigen::VectorXd::Constant(1, -M_PI);
    spec_.theta_max = Eigen::VectorXd::Constant(1, M_PI);
    spec_.tau_max = Eigen::VectorXd::Constant(1, params.tau_max);
    spec_.sim_rate = ov.sim_rate.value_or(100.0);
    spec_.control_rate = ov.control_rate.value_or(50.0);
    spec_.time_limit = ov.time_limit.value_or(250);
    spec_.fall_height = ov.fall_height.value_or(-1.0);  // never falls
    spec_.target = Eigen::Vector2d(0.0, params.length);
    spec_.launch_height = 0.0;
    spec_.link_length = params.length;
    spec_.validate();
    state_ = launch_state();
  }

  void sim_substep(const Eigen::VectorXd& action, double lambda) override {
    const double a = std::clamp(action[0], -1.0, 1.0);
    state_ = pendulum_step(state_, a * lambda * spec_.tau_max[0],
                           spec_.sim_dt(), params_);
  }

  // Swing-up objective: the progress slot carries the tip height cos(theta),
  // so upright posture is what accumulates return. The wrapped angle
  // coordinate has no physical stop, hence no joint-limit cost.
  double progress_term(const EnvState&, const EnvState& next) const override {
    return std::cos(next.joint_angles[0]);
  }

  RewardTerms shaped_reward(const EnvState& prev, const Eigen::VectorXd& action,
                            double bonus, double control_cost_weight,
                            double) const override {
    const double survival = state_.fallen ? 0.0 : bonus;
    return RewardTerms::make(progress_term(prev, state_), survival,
                             -control_cost_weight * action.squaredNorm(), 0.0);
  }

  EnvState launch_state() const override {
    EnvState s;
    s.joint_angles = Eigen::VectorXd::Zero(1);
    s.joint_velocities = Eigen::VectorXd::Zero(1);
    return s;
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<PendulumEnv>(*this);
  }

  const PendulumParams& params() const { return params_; }

 private:
  PendulumParams params_;
};

class SlipHopperEnv final : public Environment {
 public:
  explicit SlipHopperEnv(const SlipParams& params = {},
                         const SpecOverrides& ov = {})
      : params_(params) {
    spec_.id = CharacterId::SlipHopper;
    spec_.n_joints = 2;
    spec_.n_feet = 1;
    spec_.theta_min = Eigen::VectorXd(2);
    spec_.theta_max = Eigen::VectorXd(2);
    spec_.theta_min << -M_PI / 4.0, -0.4 * params.rest_length;
    spec_.theta_max << M_PI / 4.0, 0.1 * params.rest_length;
    spec_.tau_max = Eigen::VectorXd(2);
    spec_.tau_max << params.max_swing_rate, params.max_thrust;
    spec_.sim_rate = ov.sim_rate.value_or(1200.0);
    spec_.control_rate = ov.control_rate.value_or(60.0);
    spec_.time_limit = ov.time_limit.value_or(300);
    spec_.fall_height = ov.fall_height.value_or(params.fall_height);
    spec_.target = Eigen::Vector2d(1000.0, 0.0);
    spec_.launch_height = 1.05 * params.rest_length;
    spec_.link_length = params.rest_length;
    spec_.validate();
    params_.fall_height = spec_.fall_height;
    state_ = launch_state();
  }

  void sim_substep(const Eigen::VectorXd& action, double lambda) override {
    Eigen::Vector2d a(std::clamp(action[0], -1.0, 1.0),
                      std::clamp(action[1], -1.0, 1.0));
    SlipParams p = params_;
    p.max_thrust *= lambda;
    p.max_swing_rate *= lambda;
    state_ = slip_hopper_step(state_, a, spec_.sim_dt(), p);
  }

  // action[0] is thrust (prismatic joint 1), action[1] the swing rate (joint 0)
  int action_index_for_joint(int joint) const override { return 1 - joint; }

  EnvState launch_state() const override {
    EnvState s;
    s.root_position = Eigen::Vector2d(0.0, spec_.launch_height);
    s.joint_angles = Eigen::VectorXd::Zero(2);
    s.joint_velocities = Eigen::VectorXd::Zero(2);
    s.contacts.assign(1, 0);
    return s;
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<SlipHopperEnv>(*this);
  }

  const SlipParams& params() const { return params_; }

 private:
  SlipParams params_;
};

inline std::unique_ptr<Environment> make_pendulum(const PendulumParams& p = {},
                                                  const SpecOverrides& ov = {}) {
  return std::make_unique<PendulumEnv>(p, ov);
}

inline std::unique_ptr<Environment> make_slip_hopper(const SlipParams& p = {},
                                                     const SpecOverrides& ov = {}) {
  return std::make_unique<SlipHopperEnv>(p, ov);
}

}  // namespace locolab
