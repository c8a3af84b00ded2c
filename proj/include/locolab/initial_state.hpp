#pragma once

#include "locolab/core.hpp"
#include "locolab/env_types.hpp"

namespace locolab {

/// Width of the initial-state distribution. kappa = 0 is the default narrow
/// distribution U(-0.1, 0.1) intersected with the joint limits; kappa in
/// (0, 1] scales the sampling interval toward the full joint range.
struct InitialStateConfig {
  double kappa = 0.0;
};

/// Per-joint initial angles under the kappa-parameterized law
/// U(kappa*theta_min, kappa*theta_max).
inline Eigen::VectorXd sample_initial_joint_angles(Rng& rng, double kappa,
                                                   const EnvSpec& spec) {
  if (kappa < 0.0 || kappa > 1.0)
    throw std::invalid_argument("sample_initial_joint_angles: kappa outside [0, 1]");
  Eigen::VectorXd q(spec.n_joints);
  for (int i = 0; i < spec.n_joints; ++i) {
    double lo, hi;
    if (kappa == 0.0) {
      lo = std::max(-0.1, spec.theta_min[i]);
      hi = std::min(0.1, spec.theta_max[i]);
    } else {
      lo = kappa * spec.theta_min[i];
      hi = kappa * spec.theta_max[i];
    }
    q[i] = rng.uniform(lo, hi);
  }
  return q;
}

}  // namespace locolab
