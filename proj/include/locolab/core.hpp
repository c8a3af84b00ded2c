#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace locolab {

/// Raised when a simulation or optimization produced a non-finite value.
struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when tensor/network dimensions do not line up.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for malformed experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

// SplitMix64, used only to expand seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Deterministic xoshiro256++ generator. Streams are bit-identical across
/// runs for equal seeds; `split` derives an independent child stream so
/// experiment / seed / environment instances never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = detail::splitmix64(x);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result =
        detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  /// Uniform draw in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in [lo, hi). A degenerate interval returns lo.
  double uniform(double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("Rng::uniform: lo > hi");
    if (lo == hi) return lo;
    double x = lo + uniform01() * (hi - lo);
    if (x >= hi) x = std::nextafter(hi, lo);  // guard against rounding up
    return x;
  }

  /// Gaussian draw via Box-Muller; sigma = 0 returns mu exactly.
  double gaussian(double mu, double sigma) {
    if (sigma < 0) throw std::invalid_argument("Rng::gaussian: sigma < 0");
    if (sigma == 0) return mu;
    // u1 in (0, 1] keeps the log finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  /// Unbiased-to-within-2^-64 integer draw in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n == 0");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Child generator whose stream is independent of the parent's
  /// subsequent output (the parent advances once to derive the child seed).
  Rng split() {
    std::uint64_t s = next_u64() ^ 0x5851F42D4C957F2DULL;
    return Rng(detail::splitmix64(s));
  }

 private:
  std::uint64_t state_[4];
  std::uint64_t seed_;
};

/// How a transition ended. Natural (a fall) takes precedence over the time
/// limit when both happen on the same step: the fall is physically real,
/// the timeout is bookkeeping.
enum class TerminationKind { Running, Natural, TimeLimit };

inline const char* to_string(TerminationKind k) {
  switch (k) {
    case TerminationKind::Running: return "running";
    case TerminationKind::Natural: return "natural";
    case TerminationKind::TimeLimit: return "time_limit";
  }
  return "?";
}

inline TerminationKind classify_termination(bool fallen, int step_index,
                                            int time_limit) {
  if (step_index < 1 || time_limit < 1)
    throw std::invalid_argument(
        "classify_termination: step_index and time_limit must be >= 1");
  if (fallen) return TerminationKind::Natural;
  if (step_index >= time_limit) return TerminationKind::TimeLimit;
  return TerminationKind::Running;
}

/// Whether a timeout is bootstrapped through (I_term = 1) or treated like a
/// real terminal state in the TD target.
enum class BootstrapMode { TreatTimeoutAsTerminal, InfiniteBootstrap };

/// One replay-buffer entry. `state` / `next_state` hold the full observation
/// in the active layout (including phase entries when those are enabled).
struct TransitionRecord {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  TerminationKind termination = TerminationKind::Running;
};

}  // namespace locolab
