#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "locolab/core.hpp"

// Minimal dense-network stack: MLP forward with optional per-layer auxiliary
// input, exact reverse-mode gradients for the TD3 losses, Adam, and Polyak
// soft updates. All math is double precision; batches are stored
// column-major with one sample per column.

namespace locolab {

enum class OutputActivation : std::uint8_t { Linear = 0, TanhAffine = 1 };

/// Weights and biases of an MLP. Hidden layers are ReLU; when `aux_width` is
/// nonzero the auxiliary vector is concatenated to the input of every layer
/// except the output layer. A TanhAffine output maps tanh to [out_lo, out_hi]
/// per dimension.
struct NetworkParams {
  std::vector<Eigen::MatrixXd> W;  // W[l] is (out x in), in includes aux cols
  std::vector<Eigen::VectorXd> b;
  int aux_width = 0;
  OutputActivation out_act = OutputActivation::Linear;
  Eigen::VectorXd out_lo, out_hi;

  int layer_count() const { return static_cast<int>(W.size()); }
  bool layer_has_aux(int l) const {
    return aux_width > 0 && l < layer_count() - 1;
  }
  int input_dim() const {
    return static_cast<int>(W.front().cols()) - (layer_has_aux(0) ? aux_width : 0);
  }
  int output_dim() const { return static_cast<int>(W.back().rows()); }

  bool same_shape(const NetworkParams& o) const {
    if (W.size() != o.W.size() || aux_width != o.aux_width) return false;
    for (std::size_t l = 0; l < W.size(); ++l)
      if (W[l].rows() != o.W[l].rows() || W[l].cols() != o.W[l].cols())
        return false;
    return true;
  }
};

/// Fresh MLP with He-style uniform fan-in init on hidden layers and a small
/// uniform (+-3e-3) output layer.
inline NetworkParams make_mlp(int input_dim, const std::vector<int>& hidden,
                              int output_dim, int aux_width,
                              OutputActivation out_act,
                              const Eigen::VectorXd& out_lo,
                              const Eigen::VectorXd& out_hi, Rng& rng) {
  NetworkParams net;
  net.aux_width = aux_width;
  net.out_act = out_act;
  net.out_lo = out_lo;
  net.out_hi = out_hi;
  if (out_act == OutputActivation::TanhAffine &&
      (out_lo.size() != output_dim || out_hi.size() != output_dim))
    throw ShapeError("make_mlp: output bounds must match output_dim");

  std::vector<int> widths;
  widths.push_back(input_dim);
  for (int h : hidden) widths.push_back(h);
  widths.push_back(output_dim);
  const int layers = static_cast<int>(widths.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const bool has_aux = aux_width > 0 && l < layers - 1;
    const int fan_in = widths[l] + (has_aux ? aux_width : 0);
    const int fan_out = widths[l + 1];
    Eigen::MatrixXd w(fan_out, fan_in);
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(fan_out);
    const bool final_layer = (l == layers - 1);
    const double scale = final_layer ? 3e-3 : std::sqrt(6.0 / fan_in);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-scale, scale);
    if (final_layer)
      for (int i = 0; i < bias.size(); ++i) bias[i] = rng.uniform(-scale, scale);
    net.W.push_back(std::move(w));
    net.b.push_back(std::move(bias));
  }
  return net;
}

/// Intermediate values of a batched forward pass, kept for backprop.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // per-layer input, aux rows included
  std::vector<Eigen::MatrixXd> pre;     // per-layer pre-activation
  Eigen::MatrixXd tanh_out;             // output tanh, TanhAffine only
};

/// Batched forward pass; X is (input_dim x batch), Aux (aux_width x batch).
inline Eigen::MatrixXd mlp_forward_batch(const NetworkParams& net,
                                         const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& Aux,
                                         ForwardCache* cache = nullptr) {
  const int layers = net.layer_count();
  if (X.rows() != net.input_dim())
    throw ShapeError("mlp_forward: input has " + std::to_string(X.rows()) +
                     " rows, network expects " + std::to_string(net.input_dim()));
  if (net.aux_width > 0 && layers > 1 &&
      (Aux.rows() != net.aux_width || Aux.cols() != X.cols()))
    throw ShapeError("mlp_forward: aux dimensions do not match aux_width");

  if (cache) {
    cache->inputs.assign(layers, {});
    cache->pre.assign(layers, {});
  }
  Eigen::MatrixXd z = X;
  Eigen::MatrixXd pre;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd in;
    if (net.layer_has_aux(l)) {
      in.resize(z.rows() + net.aux_width, z.cols());
      in.topRows(z.rows()) = z;
      in.bottomRows(net.aux_width) = Aux;
    } else {
      in = std::move(z);
    }
    pre.noalias() = net.W[l] * in;
    pre.colwise() += net.b[l];
    if (cache) {
      cache->inputs[l] = std::move(in);
      cache->pre[l] = pre;
    }
    if (l < layers - 1)
      z = pre.array().max(0.0).matrix();  // ReLU
    else
      z = std::move(pre);
  }
  if (net.out_act == OutputActivation::TanhAffine) {
    Eigen::MatrixXd t = z.array().tanh().matrix();
    if (cache) cache->tanh_out = t;
    Eigen::MatrixXd y(t.rows(), t.cols());
    for (int i = 0; i < t.rows(); ++i)
      y.row(i) = net.out_lo[i] +
                 (t.row(i).array() + 1.0) * 0.5 * (net.out_hi[i] - net.out_lo[i]);
    return y;
  }
  return z;
}

/// Single-sample forward pass.
inline Eigen::VectorXd mlp_forward(const NetworkParams& net,
                                   const Eigen::VectorXd& input,
                                   const Eigen::VectorXd& aux = {}) {
  Eigen::MatrixXd X = input;
  Eigen::MatrixXd A = aux;
  return mlp_forward_batch(net, X, A);
}

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static Gradients zeros_like(const NetworkParams& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      g.dW.emplace_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      g.db.emplace_back(Eigen::VectorXd::Zero(net.b[l].size()));
    }
    return g;
  }
};

/// Exact reverse-mode pass. `dY` is dLoss/dOutput (post-activation). Fills
/// parameter gradients when `grads` is given; returns dLoss/dInput rows in
/// `dX` when requested.
inline void mlp_backward(const NetworkParams& net, const ForwardCache& cache,
                         const Eigen::MatrixXd& dY, Gradients* grads,
                         Eigen::MatrixXd* dX = nullptr) {
  const int layers = net.layer_count();
  Eigen::MatrixXd dP;
  if (net.out_act == OutputActivation::TanhAffine) {
    dP.resize(dY.rows(), dY.cols());
    for (int i = 0; i < dY.rows(); ++i)
      dP.row(i) = dY.row(i).array() * 0.5 * (net.out_hi[i] - net.out_lo[i]) *
                  (1.0 - cache.tanh_out.row(i).array().square());
  } else {
    dP = dY;
  }
  for (int l = layers - 1; l >= 0; --l) {
    if (grads) {
      grads->dW[l].noalias() = dP * cache.inputs[l].transpose();
      grads->db[l] = dP.rowwise().sum();
    }
    if (l == 0 && !dX) return;
    Eigen::MatrixXd dIn;
    dIn.noalias() = net.W[l].transpose() * dP;
    const int core_rows =
        static_cast<int>(dIn.rows()) - (net.layer_has_aux(l) ? net.aux_width : 0);
    if (l == 0) {
      *dX = dIn.topRows(core_rows);
      return;
    }
    // dLoss/d(post-activation of layer l-1), masked by the ReLU derivative.
    dP = dIn.topRows(core_rows).array() *
         (cache.pre[l - 1].array() > 0.0).cast<double>();
  }
}

/// Post-activation output of the last hidden layer, used as a frozen
/// pre-trained state representation. Requires the standard two 256-wide
/// hidden layers.
inline Eigen::VectorXd extract_features(const NetworkParams& actor,
                                        const Eigen::VectorXd& obs,
                                        const Eigen::VectorXd& aux = {}) {
  if (actor.layer_count() != 3 || actor.W[0].rows() != 256 ||
      actor.W[1].rows() != 256)
    throw ShapeError("extract_features: expected two hidden layers of 256");
  Eigen::MatrixXd z = obs;
  Eigen::MatrixXd a = aux;
  for (int l = 0; l < 2; ++l) {
    Eigen::MatrixXd in;
    if (actor.layer_has_aux(l)) {
      if (a.rows() != actor.aux_width)
        throw ShapeError("extract_features: aux width mismatch");
      in.resize(z.rows() + actor.aux_width, 1);
      in.topRows(z.rows()) = z;
      in.bottomRows(actor.aux_width) = a;
    } else {
      in = std::move(z);
    }
    z = (actor.W[l] * in + actor.b[l]).array().max(0.0).matrix();
  }
  return z.col(0);
}

/// Adam optimizer moments for one parameter set.
struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const NetworkParams& net, double lr = 1e-3) {
    AdamState s;
    s.lr = lr;
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      s.mW.emplace_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      s.vW.emplace_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      s.mb.emplace_back(Eigen::VectorXd::Zero(net.b[l].size()));
      s.vb.emplace_back(Eigen::VectorXd::Zero(net.b[l].size()));
    }
    return s;
  }
};

/// Standard Adam with bias correction.
inline void adam_update(NetworkParams& net, const Gradients& grads,
                        AdamState& state) {
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double rate = state.lr / c1;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    state.mW[l] = state.beta1 * state.mW[l] + (1.0 - state.beta1) * grads.dW[l];
    state.vW[l] = state.beta2 * state.vW[l].array().matrix() +
                  (1.0 - state.beta2) * grads.dW[l].array().square().matrix();
    net.W[l].array() -=
        rate * state.mW[l].array() /
        ((state.vW[l].array() / c2).sqrt() + state.eps);
    state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * grads.db[l];
    state.vb[l] = state.beta2 * state.vb[l].array().matrix() +
                  (1.0 - state.beta2) * grads.db[l].array().square().matrix();
    net.b[l].array() -=
        rate * state.mb[l].array() /
        ((state.vb[l].array() / c2).sqrt() + state.eps);
  }
}

/// Polyak averaging: target <- tau * online + (1 - tau) * target.
inline void soft_update(NetworkParams& target, const NetworkParams& online,
                        double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("soft_update: tau outside [0, 1]");
  if (!target.same_shape(online))
    throw ShapeError("soft_update: architecture mismatch");
  for (std::size_t l = 0; l < target.W.size(); ++l) {
    target.W[l] = tau * online.W[l] + (1.0 - tau) * target.W[l];
    target.b[l] = tau * online.b[l] + (1.0 - tau) * target.b[l];
  }
}

// ---------------------------------------------------------------------------
// TD3 loss gradients. These are the two loss families the learner uses; the
// finite-difference oracle certifies both.

/// Critic regression loss mean((Q - y)^2) over a batch. `SA` stacks
/// observation rows above action rows. Returns the loss; fills parameter
/// gradients and optionally the gradient w.r.t. the stacked input.
inline double critic_mse_gradients(const NetworkParams& critic,
                                   const Eigen::MatrixXd& SA,
                                   const Eigen::MatrixXd& Aux,
                                   const Eigen::RowVectorXd& y,
                                   Gradients* grads,
                                   Eigen::MatrixXd* dSA = nullptr,
                                   Eigen::RowVectorXd* q_pred = nullptr) {
  if (critic.output_dim() != 1)
    throw ShapeError("critic_mse_gradients: critic must have a scalar output");
  ForwardCache cache;
  const Eigen::MatrixXd Q = mlp_forward_batch(critic, SA, Aux, &cache);
  if (q_pred) *q_pred = Q.row(0);
  const Eigen::RowVectorXd diff = Q.row(0) - y;
  const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  if (!std::isfinite(loss)) throw NumericFault("critic loss is non-finite");
  const Eigen::MatrixXd dY = 2.0 * diff / static_cast<double>(diff.size());
  mlp_backward(critic, cache, dY, grads, dSA);
  return loss;
}

/// Deterministic-policy-gradient objective: minimizes -mean(Q(s, pi(s))),
/// i.e. ascends critic-1's value. Critic parameters stay fixed; gradients
/// flow through its action input into the actor.
inline double actor_objective_gradients(const NetworkParams& actor,
                                        const NetworkParams& critic,
                                        const Eigen::MatrixXd& S,
                                        const Eigen::MatrixXd& Aux,
                                        Gradients* actor_grads) {
  ForwardCache actor_cache;
  const Eigen::MatrixXd A = mlp_forward_batch(actor, S, Aux, &actor_cache);
  Eigen::MatrixXd SA(S.rows() + A.rows(), S.cols());
  SA.topRows(S.rows()) = S;
  SA.bottomRows(A.rows()) = A;
  ForwardCache critic_cache;
  const Eigen::MatrixXd Q = mlp_forward_batch(critic, SA, Aux, &critic_cache);
  const double batch = static_cast<double>(S.cols());
  const double loss = -Q.row(0).sum() / batch;
  if (!std::isfinite(loss)) throw NumericFault("actor loss is non-finite");
  const Eigen::MatrixXd dQ = Eigen::MatrixXd::Constant(1, S.cols(), -1.0 / batch);
  Eigen::MatrixXd dSA;
  mlp_backward(critic, critic_cache, dQ, nullptr, &dSA);
  mlp_backward(actor, actor_cache, dSA.bottomRows(A.rows()), actor_grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Flat parameter views (used by the finite-difference oracle and tests).

inline Eigen::VectorXd flatten(const NetworkParams& net) {
  long n = 0;
  for (std::size_t l = 0; l < net.W.size(); ++l)
    n += net.W[l].size() + net.b[l].size();
  Eigen::VectorXd flat(n);
  long k = 0;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    flat.segment(k, net.W[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(net.W[l].data(), net.W[l].size());
    k += net.W[l].size();
    flat.segment(k, net.b[l].size()) = net.b[l];
    k += net.b[l].size();
  }
  return flat;
}

inline void unflatten(const Eigen::VectorXd& flat, NetworkParams& net) {
  long k = 0;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    net.W[l] = Eigen::Map<const Eigen::MatrixXd>(flat.data() + k, net.W[l].rows(),
                                                 net.W[l].cols());
    k += net.W[l].size();
    net.b[l] = flat.segment(k, net.b[l].size());
    k += net.b[l].size();
  }
}

inline Eigen::VectorXd flatten(const Gradients& g) {
  long n = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) n += g.dW[l].size() + g.db[l].size();
  Eigen::VectorXd flat(n);
  long k = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    flat.segment(k, g.dW[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(g.dW[l].data(), g.dW[l].size());
    k += g.dW[l].size();
    flat.segment(k, g.db[l].size()) = g.db[l];
    k += g.db[l].size();
  }
  return flat;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "LOCONNET" magic, version, aux/activation metadata,
// layer shape table, then raw little-endian doubles. Round-trips bit-exactly.

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_doubles(std::ostream& os, const double* p, long n) {
  os.write(reinterpret_cast<const char*>(p), n * sizeof(double));
}

inline void read_doubles(std::istream& is, double* p, long n) {
  is.read(reinterpret_cast<char*>(p), n * sizeof(double));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace detail

inline void save_network(const std::string& path, const NetworkParams& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_network: cannot open " + path);
  os.write("LOCONNET", 8);
  detail::write_pod<std::uint32_t>(os, 1);  // version
  detail::write_pod<std::int32_t>(os, net.aux_width);
  detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(net.out_act));
  detail::write_pod<std::int32_t>(os, net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    detail::write_pod<std::int32_t>(os, static_cast<std::int32_t>(net.W[l].rows()));
    detail::write_pod<std::int32_t>(os, static_cast<std::int32_t>(net.W[l].cols()));
  }
  detail::write_pod<std::int32_t>(os, static_cast<std::int32_t>(net.out_lo.size()));
  detail::write_doubles(os, net.out_lo.data(), net.out_lo.size());
  detail::write_doubles(os, net.out_hi.data(), net.out_hi.size());
  for (int l = 0; l < net.layer_count(); ++l) {
    detail::write_doubles(os, net.W[l].data(), net.W[l].size());
    detail::write_doubles(os, net.b[l].data(), net.b[l].size());
  }
  if (!os) throw std::runtime_error("save_network: write failed for " + path);
}

inline NetworkParams load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_network: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "LOCONNET", 8) != 0)
    throw std::runtime_error("load_network: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("load_network: unknown version");
  NetworkParams net;
  net.aux_width = detail::read_pod<std::int32_t>(is);
  net.out_act = static_cast<OutputActivation>(detail::read_pod<std::uint8_t>(is));
  const int layers = detail::read_pod<std::int32_t>(is);
  std::vector<std::pair<int, int>> shapes;
  for (int l = 0; l < layers; ++l) {
    const int rows = detail::read_pod<std::int32_t>(is);
    const int cols = detail::read_pod<std::int32_t>(is);
    shapes.emplace_back(rows, cols);
  }
  const int bounds = detail::read_pod<std::int32_t>(is);
  net.out_lo.resize(bounds);
  net.out_hi.resize(bounds);
  detail::read_doubles(is, net.out_lo.data(), bounds);
  detail::read_doubles(is, net.out_hi.data(), bounds);
  for (auto [rows, cols] : shapes) {
    Eigen::MatrixXd w(rows, cols);
    Eigen::VectorXd bias(rows);
    detail::read_doubles(is, w.data(), w.size());
    detail::read_doubles(is, bias.data(), bias.size());
    net.W.push_back(std::move(w));
    net.b.push_back(std::move(bias));
  }
  return net;
}

}  // namespace locolab
