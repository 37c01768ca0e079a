#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace spinshuffle {

using Index = Eigen::Index;
using cplx = std::complex<double>;

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Raised when an inverse problem has no unique answer (singular information,
// unobserved sparse support, rank-deficient bound).
class NonIdentifiable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Iterative solver failed to make progress (divergence, non-finite values).
class SolverFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace spinshuffle
