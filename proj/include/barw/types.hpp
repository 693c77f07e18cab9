#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace barw {

/// Lattice points live in Z^d with d <= 3; unused trailing coordinates are 0.
template <typename Scalar>
using Point = Eigen::Matrix<Scalar, 3, 1>;

using Site = Point<std::int64_t>;
using RealPoint = Point<double>;

inline constexpr int kMaxDim = 3;

/// Uniform (sup) norm over the first `d` coordinates.
template <typename Derived>
auto sup_norm(const Eigen::MatrixBase<Derived>& v, int d) {
  return v.head(d).cwiseAbs().maxCoeff();
}

/// Side length V_r = 2r + 1 of the box B_r.
constexpr std::int64_t ball_side(std::int64_t r) { return 2 * r + 1; }

inline std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a ball of radius r would wrap onto itself (2r + 1 > side).
class BallTooLarge : public std::invalid_argument {
 public:
  BallTooLarge(std::int64_t r, std::int64_t side)
      : std::invalid_argument("ball radius " + std::to_string(r) +
                              " does not fit torus side " +
                              std::to_string(side)),
        radius(r),
        side(side) {}
  std::int64_t radius;
  std::int64_t side;
};

class TorusTooSmall : public std::invalid_argument {
 public:
  TorusTooSmall(std::int64_t needed, std::int64_t side)
      : std::invalid_argument("torus side " + std::to_string(side) +
                              " below required " + std::to_string(needed)),
        needed(needed),
        side(side) {}
  std::int64_t needed;
  std::int64_t side;
};

class EmptyNeighborhood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace barw
