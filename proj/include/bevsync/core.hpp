#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bevsync {

using Real = double;

template <class S>
using Plane = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneD = Plane<Real>;
using VectorD = Eigen::VectorXd;
using MatrixD = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense C x H x W tensor stored as one Eigen plane per channel.
template <class S>
struct Tensor3 {
  std::vector<Plane<S>> planes;

  Tensor3() = default;
  Tensor3(int channels, int height, int width)
      : planes(channels, Plane<S>::Zero(height, width)) {}

  int channels() const { return static_cast<int>(planes.size()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }

  Plane<S>& operator[](int c) { return planes[c]; }
  const Plane<S>& operator[](int c) const { return planes[c]; }

  void setZero() {
    for (auto& p : planes) p.setZero();
  }

  bool allFinite() const {
    for (const auto& p : planes)
      if (!p.allFinite()) return false;
    return true;
  }

  bool sameShape(const Tensor3& o) const {
    return channels() == o.channels() && height() == o.height() && width() == o.width();
  }
};

using Tensor3d = Tensor3<Real>;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Deterministic RNG with a fixed bit stream. The std distributions are
// implementation-defined, so sampling is done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next() {
    // xorshift* variant, fixed algorithm for cross-platform reproducibility
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::int64_t uniformInt(std::int64_t lo, std::int64_t hi) {
    // inclusive range
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }

  double gaussian(double mu, double sigma) {
    if (has_spare_) {
      has_spare_ = false;
      return mu + sigma * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mu + sigma * r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bevsync
