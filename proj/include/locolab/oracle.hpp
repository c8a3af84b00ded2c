#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "locolab/core.hpp"

// Independent verification tools. Everything here is closed-form or
// brute-force on purpose: these functions certify the learner and must not
// share code with it.

namespace locolab::oracle {

/// Deterministic single-action chain: reward r every step, episode ends only
/// by the time limit after `horizon` steps.
struct ChainMdp {
  int horizon = 10;
  double reward = 1.0;
  double gamma = 0.99;
};

/// Exact start-state value of the chain under either timeout semantics.
inline double chain_q_analytic(const ChainMdp& mdp, BootstrapMode mode) {
  if (mdp.gamma <= 0.0 || mdp.gamma >= 1.0) {
    if (mode == BootstrapMode::InfiniteBootstrap && mdp.gamma >= 1.0)
      throw std::domain_error("chain_q_analytic: series diverges for gamma >= 1");
    throw std::invalid_argument("chain_q_analytic: gamma must be in (0, 1)");
  }
  if (mode == BootstrapMode::InfiniteBootstrap)
    return mdp.reward / (1.0 - mdp.gamma);
  return mdp.reward * (1.0 - std::pow(mdp.gamma, mdp.horizon)) /
         (1.0 - mdp.gamma);
}

/// Central finite differences (f(p+eps e_i) - f(p-eps e_i)) / (2 eps).
inline Eigen::VectorXd finite_difference_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& params, double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_difference_grad: eps <= 0");
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double fp = f(p);
    p[i] = saved - eps;
    const double fm = f(p);
    p[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericFault("finite_difference_grad: non-finite loss");
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

struct KsResult {
  double statistic = 0.0;
  bool out_of_support = false;  // a sample fell outside [lo, hi]
};

/// Sup-norm distance between the empirical CDF and the U(lo, hi) CDF.
inline KsResult ks_uniform_statistic(std::vector<double> samples, double lo,
                                     double hi) {
  if (samples.empty())
    throw std::invalid_argument("ks_uniform_statistic: no samples");
  if (!(lo < hi))
    throw std::invalid_argument("ks_uniform_statistic: lo must be < hi");
  for (double s : samples)
    if (s < lo || s > hi) return {1.0, true};
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = (samples[i] - lo) / (hi - lo);
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - cdf);
    d = std::max(d, cdf - static_cast<double>(i) / n);
  }
  return {d, false};
}

/// One-percent critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) {
  return 1.63 / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Small-sample comparison tests for the directional acceptance claims.

inline double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

namespace detail {

inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double student_t_cdf(double t, double df) {
  const double x = df / (df + t * t);
  const double tail = 0.5 * detail::incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

/// One-sided Welch test p-value for H1: mean(a) > mean(b).
inline double welch_one_sided_p(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_one_sided_p: need at least 2 samples");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  const double diff = mean_of(a) - mean_of(b);
  if (va + vb == 0.0) return diff > 0.0 ? 0.0 : 1.0;
  const double t = diff / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) /
                    (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  return 1.0 - student_t_cdf(t, df);
}

/// Pooled standard error of the difference of two sample means.
inline double pooled_standard_error(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  return std::sqrt(sample_variance(a) / static_cast<double>(a.size()) +
                   sample_variance(b) / static_cast<double>(b.size()));
}

}  // namespace locolab::oracle
