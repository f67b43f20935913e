#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icevit {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto stable exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// A configuration value is out of its legal range.
struct ParamError : Error {
  using Error::Error;
};

// User-supplied input (files, labels, counts) is unusable.
struct InputError : Error {
  using Error::Error;
};

// A binary or text artifact violates its file format contract.
struct FormatError : Error {
  using Error::Error;
};

// A synthetic-scene spec is inconsistent (overlap, out of bounds).
struct SpecError : Error {
  using Error::Error;
};

// An API contract was violated (e.g. backward on a non-scalar loss).
struct ContractError : Error {
  using Error::Error;
};

struct StratificationError : Error {
  double achieved_divergence;
  StratificationError(const std::string& msg, double achieved)
      : Error(msg), achieved_divergence(achieved) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  long long step = -1;
  explicit NumericError(const std::string& msg, long long at_step = -1)
      : Error(msg), step(at_step) {}
};

// ---------------------------------------------------------------------------
// Checked mode: when on, every tensor op scans its output for NaN/Inf.
// Off by default; tests switch it on.
// ---------------------------------------------------------------------------

inline bool& checked_mode() {
  static bool on = false;
  return on;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. All sampling is built directly on mt19937_64 output so
// results do not depend on the standard library's distribution internals.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

  // N(0, sigma^2) truncated to |x| <= clip by rejection.
  double normal_truncated(double sigma, double clip) {
    for (;;) {
      double x = normal() * sigma;
      if (std::abs(x) <= clip) return x;
    }
  }

  // Uniform integer in [0, n), rejection-free of modulo bias.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw ParamError("Rng::uniform_int: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Hashing and seed derivation.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and stream tags.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = fnv1a64(tag);
  h = splitmix64(h ^ splitmix64(base));
  h = splitmix64(h ^ splitmix64(a + 0x9e3779b97f4a7c15ull));
  h = splitmix64(h ^ splitmix64(b + 0x7f4a7c15b97f4a7cull));
  return h;
}

// ---------------------------------------------------------------------------
// Shortest round-trip float formatting for text artifacts.
// ---------------------------------------------------------------------------

inline std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace icevit
