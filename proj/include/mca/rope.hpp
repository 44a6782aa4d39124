#pragma once

// Rotary position encoding primitives.
//
// A rotation R(m) is block diagonal with dim/2 blocks
//   [ cos(m*theta_k)  -sin(m*theta_k) ]
//   [ sin(m*theta_k)   cos(m*theta_k) ]
// where theta_k = base^(-2k/dim), k = 0..dim/2-1. The fast path applies the
// blocks pairwise; rotation_matrix() materializes R(m) and exists for tests
// and reference checks.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "mca/errors.hpp"

namespace mca {

using Position = std::int64_t;

template <typename Scalar>
class BasicRotaryFrequencies {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicRotaryFrequencies(int dim, Scalar base) : dim_(dim), base_(base) {
    if (dim < 2 || dim % 2 != 0) {
      throw InvalidDimension("rotary dimension must be even and >= 2, got " + std::to_string(dim));
    }
    if (!(base > Scalar(1))) {
      throw InvalidBase("rotary base must be > 1");
    }
    thetas_.resize(dim / 2);
    for (int k = 0; k < dim / 2; ++k) {
      thetas_[k] = std::pow(base, -Scalar(2 * k) / Scalar(dim));
    }
  }

  int dim() const { return dim_; }
  int blocks() const { return dim_ / 2; }
  Scalar base() const { return base_; }
  const Vector& thetas() const { return thetas_; }
  Scalar theta(int k) const { return thetas_[k]; }

 private:
  int dim_;
  Scalar base_;
  Vector thetas_;
};

using RotaryFrequencies = BasicRotaryFrequencies<double>;

template <typename Scalar = double>
BasicRotaryFrequencies<Scalar> make_frequencies(int dim, Scalar base = Scalar(10000)) {
  return BasicRotaryFrequencies<Scalar>(dim, base);
}

// R(m) * vec, computed as dim/2 independent 2x2 rotations.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> rotate(
    const Eigen::MatrixBase<Derived>& vec, Position m,
    const BasicRotaryFrequencies<typename Derived::Scalar>& freq) {
  using Scalar = typename Derived::Scalar;
  if (vec.size() != freq.dim()) {
    throw ShapeError("rotate: vector length " + std::to_string(vec.size()) +
                     " does not match rotary dimension " + std::to_string(freq.dim()));
  }
  // Product expressions would be re-evaluated on every coefficient read.
  auto&& x = vec.eval();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(vec.size());
  for (int k = 0; k < freq.blocks(); ++k) {
    const Scalar angle = Scalar(m) * freq.theta(k);
    const Scalar c = std::cos(angle);
    const Scalar s = std::sin(angle);
    const Scalar x0 = x(2 * k);
    const Scalar x1 = x(2 * k + 1);
    out(2 * k) = c * x0 - s * x1;
    out(2 * k + 1) = s * x0 + c * x1;
  }
  return out;
}

// Rotates row i of `rows` by positions[i]. With sign = -1 applies R(p)^T,
// which is what the backward pass needs.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> rotate_rows(
    const Eigen::MatrixBase<Derived>& rows, std::span<const Position> positions,
    const BasicRotaryFrequencies<typename Derived::Scalar>& freq, int sign = 1) {
  using Scalar = typename Derived::Scalar;
  if (rows.cols() != freq.dim() || rows.rows() != static_cast<Eigen::Index>(positions.size())) {
    throw ShapeError("rotate_rows: expected " + std::to_string(positions.size()) + "x" +
                     std::to_string(freq.dim()) + " input");
  }
  auto&& x = rows.eval();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows.rows(), rows.cols());
  for (int k = 0; k < freq.blocks(); ++k) {
    const Scalar theta = freq.theta(k);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      const Scalar angle = Scalar(sign) * Scalar(positions[i]) * theta;
      const Scalar c = std::cos(angle);
      const Scalar s = std::sin(angle);
      const Scalar x0 = x(i, 2 * k);
      const Scalar x1 = x(i, 2 * k + 1);
      out(i, 2 * k) = c * x0 - s * x1;
      out(i, 2 * k + 1) = s * x0 + c * x1;
    }
  }
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rotation_matrix(
    Position m, const BasicRotaryFrequencies<Scalar>& freq) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> r =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(freq.dim(), freq.dim());
  for (int k = 0; k < freq.blocks(); ++k) {
    const Scalar angle = Scalar(m) * freq.theta(k);
    const Scalar c = std::cos(angle);
    const Scalar s = std::sin(angle);
    r(2 * k, 2 * k) = c;
    r(2 * k, 2 * k + 1) = -s;
    r(2 * k + 1, 2 * k) = s;
    r(2 * k + 1, 2 * k + 1) = c;
  }
  return r;
}

}  // namespace mca
