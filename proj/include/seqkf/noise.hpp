#pragma once

// Sensor uncertainty: polar -> rectangular variance transform, measurement
// perturbation for stimuli generation, and the Q / R covariance diagonals.

#include "seqkf/common.hpp"
#include "seqkf/grid.hpp"
#include "seqkf/rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace seqkf {

struct PolarUncertainty {
  double sigma_m = 0.0;  // magnitude, pu
  double sigma_p = 0.0;  // phase, rad

  /// Maximum errors are read as three standard deviations.
  static PolarUncertainty from_max_error(double e_rho, double e_phi) { return {e_rho / 3.0, e_phi / 3.0}; }
};

struct RectVariance {
  double var_r = 0.0;
  double var_i = 0.0;
  double sigma_r() const { return std::sqrt(var_r); }
  double sigma_i() const { return std::sqrt(var_i); }
};

/// Variances of the rectangular components of (|V| + dm) e^{j(delta + dp)}
/// with dm ~ N(0, sigma_m^2), dp ~ N(0, sigma_p^2) independent.
inline RectVariance polar_to_rect_variance(double magnitude, double delta, double sigma_m, double sigma_p) {
  if (magnitude < 0 || sigma_m < 0 || sigma_p < 0) throw ValidationError("magnitude and sigmas must be >= 0");
  const double s2 = sigma_p * sigma_p;
  const double e = std::exp(-s2);
  const double ch = std::cosh(s2), sh = std::sinh(s2);
  const double c2 = std::cos(delta) * std::cos(delta), n2 = std::sin(delta) * std::sin(delta);
  const double v2 = magnitude * magnitude, m2 = sigma_m * sigma_m;
  RectVariance out;
  // cosh(s2) - 1 is evaluated as 2 sinh^2(s2 / 2) to keep it accurate for tiny s2.
  const double ch_m1 = 2.0 * std::sinh(s2 / 2.0) * std::sinh(s2 / 2.0);
  out.var_r = v2 * e * (c2 * ch_m1 + n2 * sh) + m2 * e * (c2 * ch + n2 * sh);
  out.var_i = v2 * e * (n2 * ch_m1 + c2 * sh) + m2 * e * (n2 * ch + c2 * sh);
  return out;
}

/// Stream coordinates that keep stimuli noise independent per step and signal.
struct NoiseStream {
  std::uint64_t step = 0;
  std::uint64_t signal = 0;  // e.g. 0 for voltages, 1 for currents
};

/// Multiplicative polar perturbation of every element:
///   rho = (1 + N(0, e_rho/3)) |x|,  phi = (1 + N(0, e_phi/3)) arg x.
/// Element i draws from its own substream (seed, step, signal, i).
inline CVector add_polar_noise(const CVector& x, double e_rho, double e_phi, std::uint64_t seed,
                               NoiseStream where = {}) {
  if (e_rho < 0 || e_phi < 0) throw ValidationError("maximum errors must be >= 0");
  if (e_rho == 0.0 && e_phi == 0.0) return x;
  const double s_rho = e_rho / 3.0, s_phi = e_phi / 3.0;
  CVector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    RandomStream rng(seed, {where.step, where.signal, static_cast<std::uint64_t>(i)});
    const double g_rho = rng.gaussian();
    const double g_phi = rng.gaussian();
    const double rho = (1.0 + s_rho * g_rho) * std::abs(x(i));
    const double phi = (1.0 + s_phi * g_phi) * std::arg(x(i));
    out(i) = std::polar(rho, phi);
  }
  return out;
}

/// Diagonal of R in measurement order [Re V; Im V; Re I; Im I]. Voltage
/// channels use |V| = 1 and the phase's nominal angle, current channels the
/// same angle at `nominal_current`.
inline Vector build_measurement_covariance(const NetworkModel& net, const std::vector<int>& pmu_buses,
                                           const PolarUncertainty& polar, double nominal_current = 1.0) {
  const auto sel = build_selector(net, pmu_buses);
  const Index m = sel.gamma.rows();
  const int np = net.phases();
  Vector r(4 * m);
  for (Index row = 0; row < m; ++row) {
    const double delta = nominal_phase_angle(static_cast<int>(row % np), np);
    const auto v = polar_to_rect_variance(1.0, delta, polar.sigma_m, polar.sigma_p);
    const auto c = polar_to_rect_variance(nominal_current, delta, polar.sigma_m, polar.sigma_p);
    r(row) = v.var_r;
    r(m + row) = v.var_i;
    r(2 * m + row) = c.var_r;
    r(3 * m + row) = c.var_i;
  }
  for (Index i = 0; i < r.size(); ++i)
    if (!(r(i) > 0.0)) throw ValidationError("measurement variance is zero on channel " + std::to_string(i));
  return r;
}

inline Vector build_process_covariance(Index states, double q) {
  if (states < 1) throw ValidationError("state count must be >= 1");
  if (!(q > 0.0)) throw ValidationError("process noise variance must be > 0");
  return Vector::Constant(states, q);
}

}  // namespace seqkf
