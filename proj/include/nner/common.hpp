#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nner {

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid static configuration (kernel sizes, head counts, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Invalid data (corpus records, group layouts, asymmetric targets, ...).
struct ValidationError : Error {
  using Error::Error;
};

// API misuse (e.g. backward from a non-scalar).
struct ContractError : Error {
  using Error::Error;
};

// File-level failures: open/read/write/truncation.
struct IoError : Error {
  using Error::Error;
};

// Checkpoint magic/version/config disagreement.
struct VersionError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------- strings

template <class... Args>
std::string str(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------- rng
//
// mt19937_64 plus hand-rolled transforms. The engine is pinned by the
// standard; the std:: distributions are not, so we avoid them to keep
// generated corpora and parameter draws identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second draw.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mean + stddev * mag * std::cos(ang);
  }

  // [0, n); n > 0
  int64_t below(int64_t n) { return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n)); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[below(i + 1)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nner
