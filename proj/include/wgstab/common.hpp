#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace wgstab {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

// Failure of a linear solve or factorization.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iteration that did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int iterations, double estimate)
      : std::runtime_error(what), iterations_(iterations), estimate_(estimate) {}
  int iterations() const { return iterations_; }
  double estimate() const { return estimate_; }

 private:
  int iterations_;
  double estimate_;
};

}  // namespace wgstab
