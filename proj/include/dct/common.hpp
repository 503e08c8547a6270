#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dct {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

// Contract violations (bad spans, ratio mismatches, misuse of an API).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Dimension mismatches between tensors and configured sizes.
struct ShapeError : std::logic_error {
  using std::logic_error::logic_error;
};

// File and serialization problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename S>
inline bool all_finite(const Mat<S>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

// Deterministic, serializable random stream. All draws are derived from raw
// mt19937_64 output with fixed arithmetic so results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller; two uniforms per draw, no cached spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (is.fail()) throw IoError("bad rng state");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dct
