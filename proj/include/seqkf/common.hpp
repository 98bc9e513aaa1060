#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqkf {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad ids, inconsistent dimensions, unreadable files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition of the estimator does not hold (rank loss,
/// non-positive innovation variance, failed factorization, divergence).
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

enum class Precision { binary32, binary64 };

inline const char* to_string(Precision p) {
  return p == Precision::binary32 ? "binary32" : "binary64";
}

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

/// Largest |a_ij - a_ji| relative to the largest |a_ij|.
inline double relative_asymmetry(const Matrix& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

}  // namespace seqkf
