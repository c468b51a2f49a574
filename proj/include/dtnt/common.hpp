#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtnt {

// Deterministic PRNG facade. All sampling in the project goes through this
// wrapper so that results depend only on the mt19937_64 stream, not on
// implementation-defined std::*_distribution internals.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return state_(); }

  // uniform in [0, 1)
  double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform integer in [0, n)
  uint64_t index(uint64_t n) {
    // rejection sampling, unbiased
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // standard normal via Box-Muller (one value per call, pair cached)
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // normal truncated to [-2 sigma, 2 sigma], resampling
  double truncated_normal(double sigma) {
    double v;
    do {
      v = normal();
    } while (v < -2.0 || v > 2.0);
    return v * sigma;
  }

  template <typename V> void shuffle(std::vector<V>& v) {
    // Fisher-Yates with our own index draw
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // derive an independent stream, e.g. per epoch or per image
  static uint64_t mix(uint64_t seed, uint64_t salt) {
    // splitmix64 finalizer
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void fail_shape(const std::string& what) {
  throw std::invalid_argument("shape: " + what);
}

[[noreturn]] inline void fail_value(const std::string& what) {
  throw std::invalid_argument("value: " + what);
}

[[noreturn]] inline void fail_io(const std::string& what) {
  throw std::runtime_error("io: " + what);
}

[[noreturn]] inline void fail_numeric(const std::string& what) {
  throw std::runtime_error("numeric: " + what);
}

// Runtime switch for post-op finiteness assertions. Defaults on in debug
// builds; tests enable it explicitly.
bool debug_checks_enabled();
void set_debug_checks(bool on);

// format a double with fixed decimals (printf semantics, round-to-nearest)
std::string format_fixed(double v, int decimals);

}  // namespace dtnt
