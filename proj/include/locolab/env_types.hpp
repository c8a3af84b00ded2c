#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "locolab/core.hpp"

namespace locolab {

enum class CharacterId { Pendulum, SlipHopper };

/// Static description of a character: joint limits, actuator limits, rates.
/// `theta_min`/`theta_max` are radians for revolute joints and meters for
/// prismatic ones; every joint range must contain 0 so that the
/// initial-state scaling law U(kappa*theta_min, kappa*theta_max) nests.
struct EnvSpec {
  CharacterId id = CharacterId::Pendulum;
  int n_joints = 0;
  int n_feet = 0;
  Eigen::VectorXd theta_min, theta_max;
  Eigen::VectorXd tau_max;  // per-joint actuator limit (N*m, N, or rad/s)
  double sim_rate = 0.0;    // Hz
  double control_rate = 0.0;
  int time_limit = 0;  // control steps
  double fall_height = 0.0;
  Eigen::Vector2d target{0.0, 0.0};  // world-frame point the character runs toward
  double launch_height = 0.0;        // canonical root z at reset
  double link_length = 1.0;          // pendulum rod / SLIP rest leg length

  int substeps_per_control() const {
    return static_cast<int>(std::lround(sim_rate / control_rate));
  }
  double sim_dt() const { return 1.0 / sim_rate; }
  double control_dt() const { return 1.0 / control_rate; }

  void validate() const {
    if (n_joints < 1) throw ConfigError("EnvSpec: n_joints must be >= 1");
    if (theta_min.size() != n_joints || theta_max.size() != n_joints ||
        tau_max.size() != n_joints)
      throw ConfigError("EnvSpec: per-joint vectors must have n_joints entries");
    for (int i = 0; i < n_joints; ++i) {
      if (!(theta_min[i] < theta_max[i]))
        throw ConfigError("EnvSpec: theta_min must be < theta_max");
      if (!(theta_min[i] <= 0.0 && 0.0 <= theta_max[i]))
        throw ConfigError("EnvSpec: joint ranges must contain 0");
      if (!(tau_max[i] > 0.0)) throw ConfigError("EnvSpec: tau_max must be > 0");
    }
    if (!(sim_rate > 0.0) || !(control_rate > 0.0))
      throw ConfigError("EnvSpec: rates must be positive");
    const double ratio = sim_rate / control_rate;
    if (std::abs(ratio - std::lround(ratio)) > 1e-9)
      throw ConfigError("EnvSpec: sim_rate must be an integer multiple of control_rate");
    if (time_limit < 1) throw ConfigError("EnvSpec: time_limit must be >= 1");
  }
};

/// Physical state of an environment instance.
struct EnvState {
  Eigen::Vector2d root_position{0.0, 0.0};  // world-frame (x, z)
  Eigen::Vector2d root_velocity{0.0, 0.0};
  Eigen::VectorXd joint_angles;      // generalized coordinates q
  Eigen::VectorXd joint_velocities;  // q-dot
  std::vector<std::uint8_t> contacts;
  int step_index = 0;     // control steps since episode start
  bool fallen = false;    // monotone within an episode
  double phase_time = 0;  // seconds since episode start
  Eigen::Vector2d foot_pin{0.0, 0.0};  // SLIP stance anchor, valid while in contact
};

/// Shaped-reward decomposition. `total` is always the exact sum of the
/// four parts; there are no hidden terms.
struct RewardTerms {
  double progress = 0.0;
  double survival = 0.0;
  double control_cost = 0.0;     // <= 0
  double joint_limit_cost = 0.0;  // <= 0
  double total = 0.0;

  static RewardTerms make(double progress, double survival, double control_cost,
                          double joint_limit_cost) {
    RewardTerms t;
    t.progress = progress;
    t.survival = survival;
    t.control_cost = control_cost;
    t.joint_limit_cost = joint_limit_cost;
    t.total = progress + survival + control_cost + joint_limit_cost;
    return t;
  }

  RewardTerms& operator+=(const RewardTerms& o) {
    progress += o.progress;
    survival += o.survival;
    control_cost += o.control_cost;
    joint_limit_cost += o.joint_limit_cost;
    total += o.total;
    return *this;
  }
};

}  // namespace locolab
