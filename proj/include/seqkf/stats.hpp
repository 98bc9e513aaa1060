#pragma once

#include "seqkf/common.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace seqkf {

/// Linear interpolation between order statistics (h = (n-1) q).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct Quantiles {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

inline Quantiles quantiles(std::vector<double> samples) {
  if (samples.empty()) throw ValidationError("quantiles of an empty sample");
  std::sort(samples.begin(), samples.end());
  return {samples.front(), quantile_sorted(samples, 0.25), quantile_sorted(samples, 0.5),
          quantile_sorted(samples, 0.75), samples.back()};
}

struct PolyFit {
  std::vector<double> coefficients;  // ascending powers of x
  double residual = 0.0;             // 2-norm of y - p(x)
  int degree = 0;

  double operator()(double x) const {
    double y = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) y = y * x + *it;
    return y;
  }
};

/// Least squares through the normal equations on t = (x - x_min) / (x_max - x_min),
/// with the coefficients expanded back to powers of x.
inline PolyFit fit_polynomial(std::span<const double> xs, std::span<const double> ys, int degree) {
  if (xs.size() != ys.size()) throw ValidationError("xs and ys differ in length");
  if (degree < 0) throw ValidationError("degree must be >= 0");
  const Index n = static_cast<Index>(xs.size()), m = degree + 1;
  if (n <= degree) throw ValidationError("need more points than the polynomial degree");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double x0 = *lo_it, width = *hi_it - *lo_it > 0 ? *hi_it - *lo_it : 1.0;

  Matrix a(n, m);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const double t = (xs[static_cast<std::size_t>(i)] - x0) / width;
    double pw = 1.0;
    for (Index j = 0; j < m; ++j, pw *= t) a(i, j) = pw;
    y(i) = ys[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < m) throw ValidationError("rank-deficient design matrix");
  const Matrix normal = a.transpose() * a;
  const Vector ct = normal.ldlt().solve(a.transpose() * y);

  PolyFit fit;
  fit.degree = degree;
  fit.residual = (a * ct - y).norm();
  // sum_j c_j ((x - x0) / w)^j  ->  sum_k b_k x^k
  fit.coefficients.assign(static_cast<std::size_t>(m), 0.0);
  for (Index j = 0; j < m; ++j) {
    const double cj = ct(j) / std::pow(width, static_cast<double>(j));
    double binom = 1.0;
    for (Index k = 0; k <= j; ++k) {
      fit.coefficients[static_cast<std::size_t>(k)] +=
          cj * binom * std::pow(-x0, static_cast<double>(j - k));
      binom = binom * static_cast<double>(j - k) / static_cast<double>(k + 1);
    }
  }
  return fit;
}

}  // namespace seqkf
