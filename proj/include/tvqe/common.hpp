#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvqe {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Wrong extents / rank fed to an op.
class DimensionError : public Error {
public:
  using Error::Error;
};

// API misuse: non-scalar loss, out-of-range frame index, bad argument combos.
class UsageError : public Error {
public:
  using Error::Error;
};

// Bad config file, unknown key, config/checkpoint mismatch.
class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// NaN/Inf escaped an op, or a numeric check failed.
class NumericError : public Error {
public:
  using Error::Error;
};

using Shape = std::vector<long>;

inline long numel_of(const Shape& s) {
  long n = 1;
  for (long e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << "]";
  return os.str();
}

template <class S>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() {
  return "f32";
}
template <>
constexpr const char* dtype_name<double>() {
  return "f64";
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distribution mappings are hand-rolled so streams never depend on the stdlib.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n). Modulo bias is irrelevant at the scales used here.
  long bounded(long n) {
    if (n <= 0) throw UsageError("Rng::bounded: n must be positive");
    return long(next() % std::uint64_t(n));
  }

  bool coin() { return (next() & 1) != 0; }

  // Box-Muller, cosine branch only: two draws per value, no cached state.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Rejection at +-2 sigma.
  double trunc_normal(double std_dev) {
    for (;;) {
      double z = normal();
      if (std::abs(z) <= 2.0) return z * std_dev;
    }
  }

private:
  std::mt19937_64 eng_;
};

}  // namespace tvqe
