#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "locolab/core.hpp"
#include "locolab/nn.hpp"
#include "locolab/wrappers.hpp"

// TD3 learner: replay buffer, twin critics with target smoothing, delayed
// actor updates, and the termination-aware TD target. The training loop is
// single-threaded and deterministic per seed.

namespace locolab {

struct Td3Hyper {
  double gamma = 0.99;
  double tau = 0.005;
  int batch = 100;
  double exploration_sigma = 0.1;  // 0.2 for the PD-action experiments
  int policy_delay = 2;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int warmup_steps = 1000;
  int iterations_per_step = 1;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  std::vector<int> hidden = {256, 256};
  long replay_capacity = 1000000;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("td3: gamma outside (0, 1]");
    if (batch < 1) throw ConfigError("td3: batch must be >= 1");
    if (policy_delay < 1) throw ConfigError("td3: policy_delay must be >= 1");
    if (exploration_sigma < 0 || target_noise < 0)
      throw ConfigError("td3: noise scales must be >= 0");
    if (replay_capacity < batch) throw ConfigError("td3: replay capacity < batch");
  }
};

/// TD target y = r + gamma * I_term * min(q1', q2'). I_term is 0 for natural
/// terminations always, and for timeouts only when they are treated as
/// terminal; a Running transition bootstraps normally.
inline double critic_target(double r, double gamma, TerminationKind kind,
                            BootstrapMode mode, double q1_next, double q2_next) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("critic_target: gamma outside (0, 1]");
  const bool terminal =
      kind == TerminationKind::Natural ||
      (kind == TerminationKind::TimeLimit &&
       mode == BootstrapMode::TreatTimeoutAsTerminal);
  if (terminal) return r;
  return r + gamma * std::min(q1_next, q2_next);
}

/// Noisy policy action clamped to bounds; sigma = 0 is the deterministic
/// evaluation policy (and draws nothing from the generator).
inline Eigen::VectorXd select_action(const NetworkParams& actor,
                                     const Eigen::VectorXd& obs,
                                     const Eigen::VectorXd& aux, double sigma,
                                     Rng& rng, const Eigen::VectorXd& lo,
                                     const Eigen::VectorXd& hi) {
  Eigen::VectorXd a = mlp_forward(actor, obs, aux);
  if (sigma > 0.0)
    for (Eigen::Index i = 0; i < a.size(); ++i)
      a[i] = std::clamp(a[i] + rng.gaussian(0.0, sigma), lo[i], hi[i]);
  return a;
}

/// Uniform-with-replacement FIFO replay of flattened transitions. The stored
/// state is the full observation (aux entries at the tail when enabled).
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int state_dim, int action_dim)
      : capacity_(capacity),
        states_(state_dim, capacity),
        next_states_(state_dim, capacity),
        actions_(action_dim, capacity),
        rewards_(capacity),
        kinds_(static_cast<std::size_t>(capacity), TerminationKind::Running) {
    if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity < 1");
  }

  long size() const { return size_; }
  long capacity() const { return capacity_; }

  void push(const TransitionRecord& rec) {
    if (rec.state.size() != states_.rows() ||
        rec.next_state.size() != states_.rows() ||
        rec.action.size() != actions_.rows())
      throw ShapeError("ReplayBuffer: record does not match the active layout");
    if (!std::isfinite(rec.reward))
      throw NumericFault("ReplayBuffer: non-finite reward");
    states_.col(head_) = rec.state;
    next_states_.col(head_) = rec.next_state;
    actions_.col(head_) = rec.action;
    rewards_[head_] = rec.reward;
    kinds_[static_cast<std::size_t>(head_)] = rec.termination;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  void sample(int batch, Rng& rng, Eigen::MatrixXd& S, Eigen::MatrixXd& A,
              Eigen::VectorXd& r, Eigen::MatrixXd& S2,
              std::vector<TerminationKind>& kinds) const {
    S.resize(states_.rows(), batch);
    S2.resize(states_.rows(), batch);
    A.resize(actions_.rows(), batch);
    r.resize(batch);
    kinds.resize(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      const long j = static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(size_)));
      S.col(i) = states_.col(j);
      S2.col(i) = next_states_.col(j);
      A.col(i) = actions_.col(j);
      r[i] = rewards_[j];
      kinds[static_cast<std::size_t>(i)] = kinds_[static_cast<std::size_t>(j)];
    }
  }

 private:
  long capacity_;
  long size_ = 0;
  long head_ = 0;
  Eigen::MatrixXd states_, next_states_, actions_;
  Eigen::VectorXd rewards_;
  std::vector<TerminationKind> kinds_;
};

struct TrainDiag {
  bool updated = false;
  bool actor_updated = false;
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double q_mean = std::numeric_limits<double>::quiet_NaN();
};

class Td3Agent {
 public:
  Td3Agent(int obs_dim, int aux_dim, int action_dim,
           const Eigen::VectorXd& action_lo, const Eigen::VectorXd& action_hi,
           const Td3Hyper& hp, BootstrapMode mode, Rng& init_rng)
      : hp_(hp), mode_(mode), obs_dim_(obs_dim), aux_dim_(aux_dim),
        action_lo_(action_lo), action_hi_(action_hi) {
    hp_.validate();
    actor_ = make_mlp(obs_dim, hp_.hidden, action_dim, aux_dim,
                      OutputActivation::TanhAffine, action_lo, action_hi,
                      init_rng);
    critic1_ = make_mlp(obs_dim + action_dim, hp_.hidden, 1, aux_dim,
                        OutputActivation::Linear, {}, {}, init_rng);
    critic2_ = make_mlp(obs_dim + action_dim, hp_.hidden, 1, aux_dim,
                        OutputActivation::Linear, {}, {}, init_rng);
    target_actor_ = actor_;
    target_critic1_ = critic1_;
    target_critic2_ = critic2_;
    opt_actor_ = AdamState::init(actor_, hp_.actor_lr);
    opt_critic1_ = AdamState::init(critic1_, hp_.critic_lr);
    opt_critic2_ = AdamState::init(critic2_, hp_.critic_lr);
  }

  const NetworkParams& actor() const { return actor_; }
  const NetworkParams& critic1() const { return critic1_; }
  const NetworkParams& critic2() const { return critic2_; }
  const Td3Hyper& hyper() const { return hp_; }
  BootstrapMode bootstrap_mode() const { return mode_; }
  long update_count() const { return update_count_; }
  long actor_update_count() const { return actor_update_count_; }

  Eigen::VectorXd act(const Eigen::VectorXd& obs, const Eigen::VectorXd& aux,
                      double sigma, Rng& rng) const {
    return select_action(actor_, obs, aux, sigma, rng, action_lo_, action_hi_);
  }

  /// One TD3 update: smoothed target action, clipped double-Q target, one
  /// Adam step on both critics, and every `policy_delay` calls one actor
  /// step plus soft target updates. No-op while the buffer is underfull.
  TrainDiag train_step(const ReplayBuffer& buffer, Rng& rng) {
    TrainDiag diag;
    if (buffer.size() < hp_.batch) return diag;
    diag.updated = true;

    buffer.sample(hp_.batch, rng, S_, A_, r_, S2_, kinds_);
    const auto S_core = S_.topRows(obs_dim_);
    const auto S_aux = S_.bottomRows(aux_dim_);
    const auto S2_core = S2_.topRows(obs_dim_);
    const auto S2_aux = S2_.bottomRows(aux_dim_);

    // Smoothed target action a~ = clamp(pi_target(s') + clipped noise).
    Eigen::MatrixXd A2 = mlp_forward_batch(target_actor_, S2_core, S2_aux);
    for (int c = 0; c < A2.cols(); ++c)
      for (int i = 0; i < A2.rows(); ++i) {
        const double noise =
            std::clamp(rng.gaussian(0.0, hp_.target_noise),
                       -hp_.target_noise_clip, hp_.target_noise_clip);
        A2(i, c) = std::clamp(A2(i, c) + noise, action_lo_[i], action_hi_[i]);
      }

    Eigen::MatrixXd SA2(S2_core.rows() + A2.rows(), hp_.batch);
    SA2.topRows(S2_core.rows()) = S2_core;
    SA2.bottomRows(A2.rows()) = A2;
    const Eigen::MatrixXd q1n = mlp_forward_batch(target_critic1_, SA2, S2_aux);
    const Eigen::MatrixXd q2n = mlp_forward_batch(target_critic2_, SA2, S2_aux);

    Eigen::RowVectorXd y(hp_.batch);
    for (int i = 0; i < hp_.batch; ++i)
      y[i] = critic_target(r_[i], hp_.gamma, kinds_[static_cast<std::size_t>(i)],
                           mode_, q1n(0, i), q2n(0, i));

    Eigen::MatrixXd SA(S_core.rows() + A_.rows(), hp_.batch);
    SA.topRows(S_core.rows()) = S_core;
    SA.bottomRows(A_.rows()) = A_;

    Eigen::RowVectorXd q_pred;
    Gradients g1 = Gradients::zeros_like(critic1_);
    Gradients g2 = Gradients::zeros_like(critic2_);
    const double loss1 =
        critic_mse_gradients(critic1_, SA, S_aux, y, &g1, nullptr, &q_pred);
    const double loss2 = critic_mse_gradients(critic2_, SA, S_aux, y, &g2);
    adam_update(critic1_, g1, opt_critic1_);
    adam_update(critic2_, g2, opt_critic2_);
    diag.critic_loss = 0.5 * (loss1 + loss2);
    diag.q_mean = q_pred.mean();

    ++update_count_;
    if (update_count_ % hp_.policy_delay == 0) {
      Gradients ga = Gradients::zeros_like(actor_);
      diag.actor_loss =
          actor_objective_gradients(actor_, critic1_, S_core, S_aux, &ga);
      adam_update(actor_, ga, opt_actor_);
      soft_update(target_actor_, actor_, hp_.tau);
      soft_update(target_critic1_, critic1_, hp_.tau);
      soft_update(target_critic2_, critic2_, hp_.tau);
      diag.actor_updated = true;
      ++actor_update_count_;
    }
    return diag;
  }

 private:
  Td3Hyper hp_;
  BootstrapMode mode_;
  int obs_dim_, aux_dim_;
  Eigen::VectorXd action_lo_, action_hi_;
  NetworkParams actor_, critic1_, critic2_;
  NetworkParams target_actor_, target_critic1_, target_critic2_;
  AdamState opt_actor_, opt_critic1_, opt_critic2_;
  long update_count_ = 0;
  long actor_update_count_ = 0;
  // batch workspaces
  Eigen::MatrixXd S_, S2_, A_;
  Eigen::VectorXd r_;
  std::vector<TerminationKind> kinds_;
};

struct EvalPoint {
  long env_step = 0;
  double mean = 0.0;
  double stdev = 0.0;
};

using EvalFn =
    std::function<std::pair<double, double>(const NetworkParams& actor, long env_step)>;
using DiagSink = std::function<void(long env_step, const TrainDiag&)>;

/// Full training loop: uniform-random warmup, then act-store-train on every
/// agent step. Episodes restart on any non-Running termination; the
/// evaluation callback fires at every multiple of `eval_every` environment
/// steps (plus step 0). Randomness is split into independent child streams
/// for the environment, the exploration noise, and the updates.
inline std::vector<EvalPoint> run_training(EnvStack& stack, Td3Agent& agent,
                                           long total_steps, Rng& root_rng,
                                           long eval_every, const EvalFn& eval_fn,
                                           const DiagSink& diag_sink = {}) {
  const Td3Hyper& hp = agent.hyper();
  Rng env_rng = root_rng.split();
  Rng action_rng = root_rng.split();
  Rng train_rng = root_rng.split();

  ReplayBuffer buffer(std::min<long>(hp.replay_capacity, std::max<long>(total_steps, 1)),
                      stack.obs_dim() + stack.aux_dim(), stack.action_dim());

  std::vector<EvalPoint> curve;
  auto eval_at = [&](long mark) {
    if (!eval_fn) return;
    auto [mean, stdev] = eval_fn(agent.actor(), mark);
    curve.push_back({mark, mean, stdev});
  };
  if (eval_every > 0 && total_steps > 0) eval_at(0);

  const Eigen::VectorXd lo = stack.action_lo(), hi = stack.action_hi();
  auto concat = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
  };

  Eigen::VectorXd obs = stack.reset(env_rng);
  Eigen::VectorXd aux = stack.observe_aux();
  long next_mark = eval_every;
  while (stack.global_env_step() < total_steps) {
    Eigen::VectorXd action(stack.action_dim());
    if (stack.global_env_step() < hp.warmup_steps) {
      for (int i = 0; i < action.size(); ++i)
        action[i] = action_rng.uniform(lo[i], hi[i]);
    } else {
      action = agent.act(obs, aux, hp.exploration_sigma, action_rng);
    }

    StepOutcome out = stack.step(action);
    if (!std::isfinite(out.reward.total))
      throw NumericFault("run_training: non-finite reward at step " +
                         std::to_string(stack.global_env_step()));
    buffer.push({concat(obs, aux), action, out.reward.total,
                 concat(out.obs, out.aux), out.kind});

    if (out.kind != TerminationKind::Running) {
      obs = stack.reset(env_rng);
      aux = stack.observe_aux();
    } else {
      obs = std::move(out.obs);
      aux = std::move(out.aux);
    }

    if (stack.global_env_step() > hp.warmup_steps) {
      for (int it = 0; it < hp.iterations_per_step; ++it) {
        const TrainDiag diag = agent.train_step(buffer, train_rng);
        if (diag_sink) diag_sink(stack.global_env_step(), diag);
      }
    }
    while (eval_every > 0 && next_mark <= stack.global_env_step() &&
           next_mark <= total_steps) {
      eval_at(next_mark);
      next_mark += eval_every;
    }
  }
  while (eval_every > 0 && next_mark <= total_steps) {
    eval_at(next_mark);
    next_mark += eval_every;
  }
  return curve;
}

}  // namespace locolab
