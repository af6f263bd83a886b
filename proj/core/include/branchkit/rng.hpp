#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace branchkit {

// Stream purposes. Each (seed, replicate, purpose, ...) tuple names an
// independent random stream, so extra draws for one purpose never shift
// the values seen by another. This is what makes population-level and
// individual-level simulation of the same replicate agree bit for bit,
// and makes results independent of the worker count.
enum class StreamPurpose : std::uint64_t {
  population = 1,
  assign = 2,
  w_draw = 3,
  pick = 4,
  y1 = 5,
  sup_moment = 6,
  probe = 7,
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t fold(std::uint64_t h, std::uint64_t w) {
  return mix64(h ^ (w + 0x9E3779B97F4A7C15ULL + (h << 12) + (h >> 4)));
}
}  // namespace detail

// Counter-based stream: a SplitMix64 sequence whose starting state is a
// hash of the key words. Cheap to construct, so callers make a fresh
// stream per (replicate, purpose, generation, ...) instead of sharing.
class RngStream {
 public:
  RngStream() : state_(0) {}

  static RngStream from_key(std::span<const std::uint64_t> words) {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (std::uint64_t w : words) h = detail::fold(h, w);
    RngStream s;
    s.state_ = h;
    return s;
  }

  static RngStream from_key(std::initializer_list<std::uint64_t> words) {
    return from_key(std::span<const std::uint64_t>(words.begin(), words.size()));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  long long poisson(double mean);
  long long binomial(long long trials, double success);
  long long geometric(double success);

  void set_state(std::uint64_t state) { state_ = state; }

 private:
  long long poisson_knuth(double mean);
  long long poisson_ptrs(double mean);

  std::uint64_t state_;
};

inline long long RngStream::poisson_knuth(double mean) {
  const double limit = std::exp(-mean);
  long long k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= next_double();
  } while (p > limit);
  return k - 1;
}

// Transformed rejection with squeeze (Hormann's PTRS), valid for mean >= 10.
inline long long RngStream::poisson_ptrs(double mean) {
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = next_double() - 0.5;
    const double v = next_double();
    const double us = 0.5 - std::fabs(u);
    const auto k = static_cast<long long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= v_r) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        static_cast<double>(k) * log_mean - mean - std::lgamma(static_cast<double>(k) + 1.0)) {
      return k;
    }
  }
}

inline long long RngStream::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("poisson: bad mean");
  if (mean == 0.0) return 0;
  if (mean < 30.0) return poisson_knuth(mean);
  return poisson_ptrs(mean);
}

inline long long RngStream::binomial(long long trials, double success) {
  if (trials < 0 || success < 0.0 || success > 1.0)
    throw std::invalid_argument("binomial: bad parameters");
  long long k = 0;
  for (long long i = 0; i < trials; ++i) {
    if (next_double() < success) ++k;
  }
  return k;
}

// Failures before the first success; support {0, 1, 2, ...}.
inline long long RngStream::geometric(double success) {
  if (!(success > 0.0) || success > 1.0)
    throw std::invalid_argument("geometric: bad success probability");
  if (success == 1.0) return 0;
  const double u = next_double();
  return static_cast<long long>(std::floor(std::log1p(-u) / std::log1p(-success)));
}

// Names the streams used for one replicate of a seeded computation. The
// (seed, replicate) prefix of the key hash is folded once at construction;
// at() continues the same fold, so the streams are identical to hashing the
// full six-word key.
class StreamFactory {
 public:
  StreamFactory(std::uint64_t seed, std::uint64_t replicate)
      : seed_(seed), replicate_(replicate) {
    prefix_ = detail::fold(detail::fold(0x6A09E667F3BCC909ULL, seed), replicate);
  }

  RngStream at(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0,
               std::uint64_t c = 0) const {
    std::uint64_t h = detail::fold(prefix_, static_cast<std::uint64_t>(purpose));
    h = detail::fold(h, a);
    h = detail::fold(h, b);
    h = detail::fold(h, c);
    RngStream s;
    s.set_state(h);
    return s;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replicate() const { return replicate_; }

 private:
  std::uint64_t seed_;
  std::uint64_t replicate_;
  std::uint64_t prefix_;
};

}  // namespace branchkit
