#pragma once

// Linear Kalman filter core for the persistence process model
//   x_k = x_{k-1} + w,  z_k = H x_k + v,
// with batch updates (gain, information and Joseph forms), the sequential
// scalar-measurement update, and closed-form operation counts.

#include "seqkf/common.hpp"
#include "seqkf/grid.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqkf {

enum class EstimatePhase { a_priori, a_posteriori };

struct FilterState {
  Vector x;
  Matrix p;
  EstimatePhase phase = EstimatePhase::a_posteriori;
  long k = 0;

  Index size() const { return x.size(); }
};

/// One time step worth of measurements. `r` is dense; the sequential update
/// additionally requires it to be diagonal.
struct MeasurementFrame {
  Vector z;
  Matrix h;
  Matrix r;

  static MeasurementFrame with_diagonal(Vector z, Matrix h, const Vector& r_diag) {
    return {std::move(z), std::move(h), r_diag.asDiagonal().toDenseMatrix()};
  }

  bool r_is_diagonal() const {
    for (Index i = 0; i < r.rows(); ++i)
      for (Index j = 0; j < r.cols(); ++j)
        if (i != j && r(i, j) != 0.0) return false;
    return true;
  }
};

struct UpdateDiagnostics {
  Matrix gain;        // S x D
  Vector innovation;  // z - H x^-
  Matrix innovation_covariance;  // W = H P^- H^T + R
};

/// One scalar step of the sequential update.
struct SequentialStep {
  Vector gain;
  double innovation = 0.0;
  double innovation_variance = 0.0;
};

enum class Formulation { A, B };

namespace detail {

inline void check_frame(const FilterState& s, const MeasurementFrame& f) {
  const Index n = s.x.size();
  if (s.p.rows() != n || s.p.cols() != n) throw ValidationError("covariance does not match state size");
  if (f.h.cols() != n) throw ValidationError("measurement matrix column count must equal state size");
  if (f.z.size() != f.h.rows()) throw ValidationError("measurement vector length must equal H rows");
  if (f.r.rows() != f.z.size() || f.r.cols() != f.z.size()) throw ValidationError("R must be D x D");
  if (s.phase != EstimatePhase::a_priori) throw ValidationError("update requires an a-priori state");
}

inline Matrix symmetrized(const Matrix& p) { return 0.5 * (p + p.transpose()); }

inline FilterState posterior(const FilterState& prior, Vector x, Matrix p) {
  return {std::move(x), std::move(p), EstimatePhase::a_posteriori, prior.k};
}

/// Single scalar measurement of the sequential update, formulation A, on
/// row-major storage. Written as plain loops so a counting scalar type sees
/// exactly the operation mix of the detailed sequential complexity table.
template <typename T>
T sequential_scalar_update(std::span<T> x, std::span<T> p, std::span<const T> h, T z, T r, std::span<T> dtz,
                           std::span<T> gain, T* innovation = nullptr) {
  const std::size_t s = x.size();
  // dTz = h P
  for (std::size_t j = 0; j < s; ++j) {
    T acc = h[0] * p[j];
    for (std::size_t l = 1; l < s; ++l) acc = acc + h[l] * p[l * s + j];
    dtz[j] = acc;
  }
  // W = R + dTz h^T
  T dr = dtz[0] * h[0];
  for (std::size_t j = 1; j < s; ++j) dr = dr + dtz[j] * h[j];
  const T w = r + dr;
  if (!(w > T(0))) throw HypothesisViolation("non-positive innovation variance");
  const T w_inv = T(1) / w;
  for (std::size_t j = 0; j < s; ++j) gain[j] = dtz[j] * w_inv;
  // state
  T zhat = h[0] * x[0];
  for (std::size_t j = 1; j < s; ++j) zhat = zhat + h[j] * x[j];
  const T dz = z - zhat;
  for (std::size_t j = 0; j < s; ++j) x[j] = x[j] + gain[j] * dz;
  // covariance
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) p[i * s + j] = p[i * s + j] - gain[i] * dtz[j];
  if (innovation) *innovation = dz;
  return w;
}

template <typename T>
void prediction_loops(std::span<T> p, std::span<const T> q) {
  const std::size_t s = q.size();
  for (std::size_t i = 0; i < s; ++i) p[i * s + i] = p[i * s + i] + q[i];
}

}  // namespace detail

/// Flat-profile start: x = 1 at the nominal angle of each phase, P = diag(q).
inline FilterState init_state(Index states, const Vector& q, int phases = 1) {
  if (states < 2 || states % 2 != 0) throw ValidationError("state count must be even and >= 2");
  if ((states / 2) % phases != 0) throw ValidationError("state count incompatible with phase count");
  if (q.size() != states) throw ValidationError("Q diagonal must have S entries");
  for (Index i = 0; i < q.size(); ++i)
    if (!(q(i) > 0.0)) throw ValidationError("Q must be strictly positive");
  const Index nodes = states / 2;
  FilterState s;
  s.x = Vector::Zero(states);
  for (Index n = 0; n < nodes; ++n) {
    const double a = nominal_phase_angle(static_cast<int>(n % phases), phases);
    s.x(n) = std::cos(a);
    s.x(nodes + n) = std::sin(a);
  }
  if (phases == 1) s.x.head(nodes).setOnes();
  s.p = q.asDiagonal();
  s.phase = EstimatePhase::a_posteriori;
  s.k = 0;
  return s;
}

/// x^- = x^+, P^- = P^+ + Q.
inline FilterState predict(const FilterState& state, const Vector& q) {
  if (q.size() != state.x.size() || state.p.rows() != state.x.size())
    throw ValidationError("Q does not match state size");
  if (state.phase != EstimatePhase::a_posteriori) throw ValidationError("prediction requires an a-posteriori state");
  FilterState out = state;
  out.p.diagonal() += q;
  out.phase = EstimatePhase::a_priori;
  out.k = state.k + 1;
  return out;
}

inline Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw HypothesisViolation(std::string(what) + " is not positive definite");
  if (llt.rcond() < std::numeric_limits<double>::epsilon())
    throw HypothesisViolation(std::string(what) + " is numerically singular");
  return llt;
}

/// K = P H^T W^-1, x^+ = x^- + K (z - H x^-), P^+ = (I - K H) P^-.
inline FilterState dkf_update_gain_form(const FilterState& state, const MeasurementFrame& frame,
                                        UpdateDiagnostics* diag = nullptr) {
  detail::check_frame(state, frame);
  const Matrix dtz = frame.h * state.p;  // H P
  const Matrix w = dtz * frame.h.transpose() + frame.r;
  const auto llt = factor_spd(w, "innovation covariance");
  const Matrix gain = llt.solve(dtz).transpose();
  const Vector dz = frame.z - frame.h * state.x;
  Vector x = state.x + gain * dz;
  Matrix p = state.p - gain * dtz;
  if (diag) *diag = {gain, dz, w};
  return detail::posterior(state, std::move(x), detail::symmetrized(p));
}

/// (P^+)^-1 = (P^-)^-1 + H^T R^-1 H, K = P^+ H^T R^-1.
inline FilterState dkf_update_information_form(const FilterState& state, const MeasurementFrame& frame,
                                               UpdateDiagnostics* diag = nullptr) {
  detail::check_frame(state, frame);
  const Index n = state.x.size();
  const auto prior = factor_spd(state.p, "prior covariance");
  const auto r = factor_spd(frame.r, "measurement covariance");
  const Matrix r_inv_h = r.solve(frame.h);
  const Matrix info = prior.solve(Matrix::Identity(n, n)) + frame.h.transpose() * r_inv_h;
  const auto post = factor_spd(detail::symmetrized(info), "posterior information");
  const Matrix p = detail::symmetrized(post.solve(Matrix::Identity(n, n)));
  const Matrix gain = p * r_inv_h.transpose();
  const Vector dz = frame.z - frame.h * state.x;
  Vector x = state.x + gain * dz;
  if (diag) *diag = {gain, dz, frame.h * state.p * frame.h.transpose() + frame.r};
  return detail::posterior(state, std::move(x), p);
}

/// Joseph form with an explicit gain: P^+ = (I-KH) P^- (I-KH)^T + K R K^T.
inline FilterState joseph_update(const FilterState& state, const MeasurementFrame& frame, const Matrix& gain) {
  detail::check_frame(state, frame);
  if (gain.rows() != state.x.size() || gain.cols() != frame.z.size()) throw ValidationError("gain must be S x D");
  const Index n = state.x.size();
  const Matrix a = Matrix::Identity(n, n) - gain * frame.h;
  Matrix p = a * state.p * a.transpose() + gain * frame.r * gain.transpose();
  Vector x = state.x + gain * (frame.z - frame.h * state.x);
  return detail::posterior(state, std::move(x), detail::symmetrized(p));
}

/// Joseph form with the optimal gain.
inline FilterState joseph_update(const FilterState& state, const MeasurementFrame& frame,
                                 UpdateDiagnostics* diag = nullptr) {
  detail::check_frame(state, frame);
  const Matrix dtz = frame.h * state.p;
  const Matrix w = dtz * frame.h.transpose() + frame.r;
  const Matrix gain = factor_spd(w, "innovation covariance").solve(dtz).transpose();
  if (diag) *diag = {gain, frame.z - frame.h * state.x, w};
  return joseph_update(state, frame, gain);
}

/// Sequential update: measurements processed one scalar at a time; the only
/// division is by the scalar innovation variance. Requires diagonal R.
/// P is re-symmetrized once after the last measurement.
inline FilterState sdkf_update(const FilterState& state, const MeasurementFrame& frame,
                               Formulation form = Formulation::A, std::vector<SequentialStep>* steps = nullptr,
                               std::span<const Index> order = {}) {
  detail::check_frame(state, frame);
  if (!frame.r_is_diagonal()) throw ValidationError("sequential update requires a diagonal R");
  const Index n = state.x.size(), d = frame.z.size();
  if (!order.empty() && static_cast<Index>(order.size()) != d) throw ValidationError("order must list D rows");
  if (steps) steps->clear();

  if (form == Formulation::A) {
    std::vector<double> x(state.x.data(), state.x.data() + n);
    std::vector<double> p(static_cast<std::size_t>(n * n));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) p[static_cast<std::size_t>(i * n + j)] = state.p(i, j);
    std::vector<double> h(static_cast<std::size_t>(n)), dtz(h.size()), gain(h.size());
    for (Index step = 0; step < d; ++step) {
      const Index i = order.empty() ? step : order[static_cast<std::size_t>(step)];
      for (Index j = 0; j < n; ++j) h[static_cast<std::size_t>(j)] = frame.h(i, j);
      double dz = 0.0;
      const double w = detail::sequential_scalar_update<double>(x, p, h, frame.z(i), frame.r(i, i), dtz, gain, &dz);
      if (steps) steps->push_back({Eigen::Map<const Vector>(gain.data(), n), dz, w});
    }
    Matrix pm(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) pm(i, j) = p[static_cast<std::size_t>(i * n + j)];
    return detail::posterior(state, Eigen::Map<const Vector>(x.data(), n), detail::symmetrized(pm));
  }

  // Formulation B: information recursion per scalar measurement.
  Vector x = state.x;
  Matrix p = state.p;
  const Matrix eye = Matrix::Identity(n, n);
  for (Index step = 0; step < d; ++step) {
    const Index i = order.empty() ? step : order[static_cast<std::size_t>(step)];
    const auto h = frame.h.row(i);
    const double r = frame.r(i, i);
    const double w = (h * p * h.transpose())(0, 0) + r;
    if (!(w > 0.0) || !(r > 0.0)) throw HypothesisViolation("non-positive innovation variance");
    const Matrix info = factor_spd(detail::symmetrized(p), "covariance").solve(eye) + h.transpose() * h / r;
    p = factor_spd(detail::symmetrized(info), "posterior information").solve(eye);
    const Vector gain = p * h.transpose() / r;
    const double dz = frame.z(i) - h.dot(x);
    x += gain * dz;
    if (steps) steps->push_back({gain, dz, w});
  }
  return detail::posterior(state, std::move(x), detail::symmetrized(p));
}

// ---------------------------------------------------------------------------
// Operation counts

enum class Algorithm { DKF, SDKF };

struct OpRow {
  std::string name;
  long long add_sub = 0;
  long long mul_div = 0;
};

struct OpCount {
  long long add_sub = 0;
  long long mul_div = 0;
  // DKF matrix-inversion terms, already included in the totals above.
  long long inversion_add_sub = 0;
  long long inversion_mul_div = 0;
  std::vector<OpRow> rows;
};

struct InversionCounts {
  long long m = 0;  // additions / subtractions
  long long n = 0;  // multiplications / divisions
};

/// Stand-in for the unspecified O(D^3) inversion cost: m = n = D^3.
inline InversionCounts cubic_inversion(long long d) { return {d * d * d, d * d * d}; }

/// Row formulas of the overall complexity tables, prediction included.
inline OpCount closed_form_op_count(Algorithm alg, long long s, long long d,
                                    std::optional<InversionCounts> inversion = std::nullopt) {
  if (s < 1 || d < 1) throw ValidationError("S and D must be >= 1");
  OpCount c;
  c.rows.push_back({"x_prior", 0, 0});
  c.rows.push_back({"P_prior", s, 0});
  c.rows.push_back({"dTz", d * s * (s - 1), d * s * s});
  if (alg == Algorithm::DKF) {
    const InversionCounts inv = inversion.value_or(cubic_inversion(d));
    c.inversion_add_sub = inv.m;
    c.inversion_mul_div = inv.n;
    c.rows.push_back({"K", 2 * d * d * s + d * (1 - d - s) + inv.m, 2 * d * d * s + inv.n});
  } else {
    c.rows.push_back({"K", d * s, d * (2 * s + 1)});
  }
  c.rows.push_back({"x_post", 2 * d * s, 2 * d * s});
  c.rows.push_back({"P_post", d * s * s, d * s * s});
  for (const auto& r : c.rows) {
    c.add_sub += r.add_sub;
    c.mul_div += r.mul_div;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Instrumented scalar

struct OpCounters {
  long long add_sub = 0;
  long long mul_div = 0;
};

inline OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

/// Scalar wrapper that tallies every arithmetic operation in op_counters().
template <typename T>
struct Counted {
  T v{};
  Counted() = default;
  Counted(T value) : v(value) {}  // NOLINT(google-explicit-constructor)

  friend Counted operator+(Counted a, Counted b) { ++op_counters().add_sub; return a.v + b.v; }
  friend Counted operator-(Counted a, Counted b) { ++op_counters().add_sub; return a.v - b.v; }
  friend Counted operator*(Counted a, Counted b) { ++op_counters().mul_div; return a.v * b.v; }
  friend Counted operator/(Counted a, Counted b) { ++op_counters().mul_div; return a.v / b.v; }
  friend bool operator>(Counted a, Counted b) { return a.v > b.v; }
};

/// Shadow execution of one predict + sequential update (formulation A)
/// on counted scalars; returns the operations performed.
inline OpCounters count_sdkf_cycle(const FilterState& state, const MeasurementFrame& frame, const Vector& q) {
  using C = Counted<double>;
  const Index n = state.x.size(), d = frame.z.size();
  std::vector<C> x(state.x.data(), state.x.data() + n), qv(q.data(), q.data() + n);
  std::vector<C> p(static_cast<std::size_t>(n * n)), h(static_cast<std::size_t>(n)), dtz(h.size()), gain(h.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) p[static_cast<std::size_t>(i * n + j)] = state.p(i, j);
  op_counters() = {};
  detail::prediction_loops<C>(p, qv);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < n; ++j) h[static_cast<std::size_t>(j)] = frame.h(i, j);
    detail::sequential_scalar_update<C>(x, p, h, frame.z(i), frame.r(i, i), dtz, gain);
  }
  return op_counters();
}

}  // namespace seqkf
