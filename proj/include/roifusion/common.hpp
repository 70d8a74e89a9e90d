#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace roifusion {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};
struct CountExceedsInput : std::runtime_error {
  explicit CountExceedsInput(const std::string& msg) : std::runtime_error(msg) {}
};
struct NoVisibleCorners : std::runtime_error {
  explicit NoVisibleCorners(const std::string& msg) : std::runtime_error(msg) {}
};
struct EmptyGroup : std::runtime_error {
  explicit EmptyGroup(const std::string& msg) : std::runtime_error(msg) {}
};
struct NoForegroundPoints : std::runtime_error {
  explicit NoForegroundPoints(const std::string& msg) : std::runtime_error(msg) {}
};
struct BinOutOfRange : std::runtime_error {
  explicit BinOutOfRange(const std::string& msg) : std::runtime_error(msg) {}
};
struct MalformedFile : DataError {
  explicit MalformedFile(const std::string& msg) : DataError(msg) {}
};
struct MissingKey : DataError {
  explicit MissingKey(const std::string& key) : DataError("missing key: " + key) {}
};
struct PlacementFailure : std::runtime_error {
  explicit PlacementFailure(const std::string& msg) : std::runtime_error(msg) {}
};
struct IncompatibleCheckpoint : std::runtime_error {
  explicit IncompatibleCheckpoint(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kPi = 3.14159265358979323846;

// Normalize an angle into [-pi, pi).
inline double normalize_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

// Deterministic RNG. All draws are derived from raw mt19937_64 output so the
// stream does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {
    // splitmix warmup to decorrelate small seeds
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller; one draw discarded to keep the call stateless.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    return mean + stddev * z;
  }

  // Derive an independent stream (e.g. one per scene).
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (0xd1342543de82ef95ull * (stream + 1)));
    return r;
  }

 private:
  std::uint64_t state_;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace roifusion
