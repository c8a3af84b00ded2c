#include <catch2/catch_amalgamated.hpp>

#include "locolab/envs.hpp"

#include <cmath>

using namespace locolab;

namespace {

EnvState pendulum_state(double theta, double omega) {
  EnvState s;
  s.joint_angles = Eigen::VectorXd::Constant(1, theta);
  s.joint_velocities = Eigen::VectorXd::Constant(1, omega);
  return s;
}

EnvState hopper_flight_state(double x, double z, double vx, double vz,
                             double alpha, double ext) {
  EnvState s;
  s.root_position = {x, z};
  s.root_velocity = {vx, vz};
  s.joint_angles = Eigen::VectorXd(2);
  s.joint_angles << alpha, ext;
  s.joint_velocities = Eigen::VectorXd::Zero(2);
  s.contacts.assign(1, 0);
  return s;
}

}  // namespace

TEST_CASE("pendulum equilibria are fixed points") {
  const double dt = 0.01;
  EnvState up = pendulum_state(0.0, 0.0);
  EnvState next = pendulum_step(up, 0.0, dt);
  REQUIRE(next.joint_angles[0] == 0.0);
  REQUIRE(next.joint_velocities[0] == 0.0);

  EnvState down = pendulum_state(M_PI, 0.0);
  next = pendulum_step(down, 0.0, dt);
  REQUIRE(next.joint_angles[0] == Catch::Approx(M_PI).margin(1e-12));
  REQUIRE(next.joint_velocities[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("unforced pendulum conserves mechanical energy to within 1%") {
  // The first-order symplectic update has an O(dt) oscillating energy error;
  // 1% needs a finer step than the 0.01 s training default.
  const double dt = 0.001;
  for (auto [theta, omega] : {std::pair{2.5, 0.0}, {M_PI - 0.3, 1.0}, {1.0, -2.0}}) {
    EnvState s = pendulum_state(theta, omega);
    const double e0 = pendulum_energy(s);
    double max_drift = 0.0;
    for (int i = 0; i < 1000; ++i) {
      s = pendulum_step(s, 0.0, dt);
      max_drift = std::max(max_drift, std::abs(pendulum_energy(s) - e0));
    }
    REQUIRE(max_drift < 0.01 * std::abs(e0));
  }
}

TEST_CASE("pendulum angle stays wrapped to (-pi, pi]") {
  EnvState s = pendulum_state(3.0, 4.0);
  for (int i = 0; i < 500; ++i) {
    s = pendulum_step(s, 1.5, 0.01);
    REQUIRE(s.joint_angles[0] > -M_PI);
    REQUIRE(s.joint_angles[0] <= M_PI);
  }
}

TEST_CASE("flight phase is exactly ballistic") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.3, 1.4, 0.7, 0.2, 0.1, 0.0);
  EnvState next = slip_hopper_step(s, {0.0, 0.0}, dt, p);
  REQUIRE(next.root_velocity[0] == 0.7);
  REQUIRE(next.root_velocity[1] == 0.2 - p.gravity * dt);
  REQUIRE_FALSE(next.contacts[0]);
}

TEST_CASE("standing balance: thrust equal to weight gives zero acceleration") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, p.rest_length, 0.0, 0.0, 0.0, 0.0);
  s.contacts[0] = 1;
  s.foot_pin = {0.0, 0.0};
  const double thrust = p.mass * p.gravity / p.max_thrust;
  EnvState next = slip_hopper_step(s, {thrust, 0.0}, dt, p);
  REQUIRE(next.root_velocity.norm() == Catch::Approx(0.0).margin(1e-12));
  REQUIRE((next.root_position - s.root_position).norm() ==
          Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("vertical drop never gains horizontal velocity") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, 1.2, 0.0, 0.0, 0.0, 0.0);
  bool saw_stance = false, saw_second_flight = false;
  for (int i = 0; i < 4000; ++i) {
    s = slip_hopper_step(s, {0.0, 0.0}, dt, p);
    REQUIRE(s.root_velocity[0] == 0.0);
    REQUIRE(s.root_position[0] == 0.0);
    if (s.contacts[0]) saw_stance = true;
    if (saw_stance && !s.contacts[0]) saw_second_flight = true;
  }
  REQUIRE(saw_stance);
  REQUIRE(saw_second_flight);
}

TEST_CASE("touchdown pins the foot until liftoff") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, 1.3, 0.4, 0.0, 0.15, 0.0);
  double pin_x = 0.0;
  bool pinned = false;
  int stance_phases = 0;
  for (int i = 0; i < 6000; ++i) {
    s = slip_hopper_step(s, {0.0, 0.0}, dt, p);
    if (s.contacts[0]) {
      if (!pinned) {
        pinned = true;
        ++stance_phases;
        pin_x = s.foot_pin[0];
      }
      REQUIRE(s.foot_pin[0] == pin_x);  // no slipping within a stance phase
      const double r = p.rest_length + s.joint_angles[1];
      REQUIRE(std::abs((s.root_position - s.foot_pin).norm() - r) < 1e-9);
    } else {
      pinned = false;
    }
  }
  REQUIRE(stance_phases > 0);
}

TEST_CASE("passive bounce returns the body close to its drop energy") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, 1.2, 0.0, 0.0, 0.0, 0.0);
  double apex = 0.0;
  bool left_ground = false;
  for (int i = 0; i < 4000; ++i) {
    s = slip_hopper_step(s, {0.0, 0.0}, dt, p);
    if (s.contacts[0]) left_ground = false;
    else if (!s.contacts[0] && !left_ground) left_ground = true;
    if (!s.contacts[0] && left_ground)
      apex = std::max(apex, s.root_position[1]);
  }
  // elastic spring: second apex within a few percent of the drop height
  REQUIRE(apex > 1.1);
  REQUIRE(apex < 1.25);
}

TEST_CASE("fallen is monotone within an episode") {
  SlipParams p;
  p.fall_height = 1.1;  // artificially high so the drop falls immediately
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, 1.15, 0.0, 0.0, 0.0, 0.0);
  bool was_fallen = false;
  for (int i = 0; i < 2000; ++i) {
    s = slip_hopper_step(s, {0.6, 0.0}, dt, p);
    if (was_fallen) REQUIRE(s.fallen);
    was_fallen = s.fallen;
  }
  REQUIRE(was_fallen);
}

TEST_CASE("reward arithmetic follows the stated decomposition") {
  SlipHopperEnv env;
  const EnvSpec& spec = env.spec();
  EnvState prev = hopper_flight_state(0.0, 1.05, 0.0, 0.0, 0.0, 0.0);
  EnvState next = hopper_flight_state(0.05, 1.05, 0.0, 0.0, 0.0, 0.0);
  const Eigen::VectorXd zero_action = Eigen::VectorXd::Zero(2);

  RewardTerms t = reward(prev, next, zero_action, spec, 1.0);
  REQUIRE(t.progress == Catch::Approx(3.0));
  REQUIRE(t.survival == 1.0);
  REQUIRE(t.control_cost == 0.0);
  REQUIRE(t.joint_limit_cost == 0.0);
  REQUIRE(t.total == Catch::Approx(4.0));

  next.fallen = true;
  for (double bonus : {0.0, 1.0, 5.0})
    REQUIRE(reward(prev, next, zero_action, spec, bonus).survival == 0.0);

  // total is the exact sum of the parts for arbitrary inputs
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    EnvState a = hopper_flight_state(rng.uniform(-5, 5), rng.uniform(0.4, 2),
                                     rng.uniform(-3, 3), rng.uniform(-3, 3),
                                     rng.uniform(-0.8, 0.8), rng.uniform(-0.4, 0.1));
    EnvState b = a;
    b.root_position[0] += rng.uniform(-1, 1);
    b.fallen = rng.uniform01() < 0.3;
    Eigen::VectorXd act(2);
    act << rng.uniform(-1, 1), rng.uniform(-1, 1);
    const RewardTerms r = reward(a, b, act, spec, 5.0);
    REQUIRE(r.total ==
            r.progress + r.survival + r.control_cost + r.joint_limit_cost);
    REQUIRE(r.control_cost <= 0.0);
    REQUIRE(r.joint_limit_cost <= 0.0);
  }
}

TEST_CASE("standing still with a survival bonus pays the bonus each step") {
  SlipHopperEnv env;
  EnvState prev = hopper_flight_state(0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
  EnvState next = prev;  // x constant
  Eigen::VectorXd act(2);
  act << 0.654, 0.0;
  const RewardTerms t = reward(prev, next, act, env.spec(), 5.0);
  REQUIRE(t.progress == 0.0);
  REQUIRE(t.survival == 5.0);
  REQUIRE(t.total == Catch::Approx(5.0 + t.control_cost));
}

TEST_CASE("observation layout length and contents") {
  SlipHopperEnv env;
  const EnvSpec& spec = env.spec();
  EnvState s = hopper_flight_state(2.0, 1.3, 0.5, -0.2, 0.1, -0.05);

  const Eigen::VectorXd with = build_observation(s, spec, true);
  const Eigen::VectorXd without = build_observation(s, spec, false);
  REQUIRE(with.size() == 10);
  REQUIRE(without.size() == 9);
  REQUIRE((with.head(9) == without));

  REQUIRE(with[0] == Catch::Approx(1.3 - spec.launch_height));
  REQUIRE(with[1] == 0.0);
  REQUIRE(with[2] == 1.0);
  REQUIRE(with[3] == 0.5);
  REQUIRE(with[4] == -0.2);

  // joint at midpoint of its range, zero velocity -> (0, 0)
  EnvState mid = s;
  mid.joint_angles[0] = 0.5 * (spec.theta_min[0] + spec.theta_max[0]);
  mid.joint_velocities[0] = 0.0;
  const Eigen::VectorXd obs = build_observation(mid, spec, true);
  REQUIRE(obs[5] == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(obs[6] == 0.0);

  PendulumEnv pend;
  EnvState ps = pendulum_state(0.3, -0.5);
  REQUIRE(build_observation(ps, pend.spec(), true).size() == 7);
  REQUIRE(build_observation(ps, pend.spec(), false).size() == 7);
}

TEST_CASE("forward kinematics closed forms and frame invariance") {
  SlipHopperEnv env;
  EnvState s = hopper_flight_state(0.0, 1.2, 0.0, 0.0, 0.0, 0.0);
  auto feet = forward_kinematics(s, env.spec());
  REQUIRE(feet.size() == 1);
  REQUIRE(feet[0][0] == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(feet[0][1] == Catch::Approx(-1.0));

  s.joint_angles[0] = M_PI / 6.0;
  feet = forward_kinematics(s, env.spec());
  REQUIRE(feet[0][0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(feet[0][1] == Catch::Approx(-std::sqrt(3.0) / 2.0).margin(1e-12));

  EnvState translated = s;
  translated.root_position[0] += 10.0;
  const auto feet2 = forward_kinematics(translated, env.spec());
  REQUIRE((feet2[0] == feet[0]));

  PendulumEnv pend;
  EnvState ps = pendulum_state(M_PI / 6.0, 0.0);
  const auto tip = forward_kinematics(ps, pend.spec());
  REQUIRE(tip[0][0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(tip[0][1] == Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-12));
}

TEST_CASE("reset samples the kappa law with zero velocities") {
  SlipHopperEnv env;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const EnvState& s = env.reset(rng, InitialStateConfig{0.0});
    REQUIRE(s.joint_angles[0] >= -0.1);
    REQUIRE(s.joint_angles[0] <= 0.1);
    REQUIRE(s.joint_angles[1] >= -0.1);
    REQUIRE(s.joint_angles[1] <= 0.1);
    REQUIRE(s.joint_velocities.norm() == 0.0);
    REQUIRE(s.root_position[1] == Catch::Approx(1.05));
    REQUIRE(s.step_index == 0);
    REQUIRE_FALSE(s.fallen);
  }
  for (int i = 0; i < 200; ++i) {
    const EnvState& s = env.reset(rng, InitialStateConfig{1.0});
    for (int j = 0; j < 2; ++j) {
      REQUIRE(s.joint_angles[j] >= env.spec().theta_min[j]);
      REQUIRE(s.joint_angles[j] <= env.spec().theta_max[j]);
    }
  }
}

TEST_CASE("reset gives up after 100 fallen samples") {
  // fall height above the launch height: every sample is already fallen
  SlipHopperEnv env(SlipParams{}, SpecOverrides{.fall_height = 2.0});
  Rng rng(7);
  REQUIRE_THROWS_AS(env.reset(rng, InitialStateConfig{0.0}), NumericFault);
}

TEST_CASE("the ground never pulls: an over-long pinned leg is in free fall") {
  const SlipParams p;
  const double dt = 1.0 / 1200.0;
  EnvState s = hopper_flight_state(0.0, 1.05, 0.3, 0.0, 0.0, 0.05);
  s.contacts[0] = 1;
  s.foot_pin = {0.0, 0.0};  // r = 1.05 > rest length, spring would pull
  const EnvState next = slip_hopper_step(s, {0.0, 0.0}, dt, p);
  REQUIRE(next.root_velocity[0] == 0.3);
  REQUIRE(next.root_velocity[1] == -p.gravity * dt);
}

TEST_CASE("non-finite dynamics raise a numeric fault") {
  EnvState p = pendulum_state(0.5, 0.0);
  REQUIRE_THROWS_AS(
      pendulum_step(p, std::numeric_limits<double>::infinity(), 0.01),
      NumericFault);
  EnvState h = hopper_flight_state(0.0, 1.2, 0.0, 0.0, 0.0, 0.0);
  h.root_velocity[1] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(slip_hopper_step(h, {0.0, 0.0}, 1.0 / 1200.0), NumericFault);
}

TEST_CASE("spec validation rejects inconsistent descriptions") {
  SlipHopperEnv env;
  EnvSpec bad = env.spec();
  bad.theta_min[0] = bad.theta_max[0] + 1.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = env.spec();
  bad.sim_rate = 1000.0;  // not a multiple of 60
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = env.spec();
  bad.tau_max[0] = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  REQUIRE(env.spec().substeps_per_control() == 20);
  PendulumEnv pend;
  REQUIRE(pend.spec().substeps_per_control() == 2);
}
