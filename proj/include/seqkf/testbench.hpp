#pragma once

// Offline testbench: stimuli generation from load flow + sensor noise, the
// golden model (binary64 batch filter), the model under test (blocked
// sequential filter), error / mismatch statistics and the scalability sweep.

#include "seqkf/block.hpp"
#include "seqkf/common.hpp"
#include "seqkf/grid.hpp"
#include "seqkf/kalman.hpp"
#include "seqkf/loadflow.hpp"
#include "seqkf/noise.hpp"
#include "seqkf/rng.hpp"
#include "seqkf/stats.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace seqkf {

struct NoiseConfig {
  double e_rho = 1e-3;   // pu
  double e_phi = 1.5e-3; // rad
  double q = 1e-6;       // pu^2
  double nominal_current = 1.0;
  std::uint64_t seed = 1;
  // Sensor class assumed by R. Defaults to (e_rho, e_phi); noise-free stimuli
  // without an explicit class fall back to the default class.
  std::optional<double> model_e_rho, model_e_phi;

  PolarUncertainty model_uncertainty() const {
    const NoiseConfig defaults;
    const bool noiseless = e_rho == 0.0 && e_phi == 0.0;
    return PolarUncertainty::from_max_error(model_e_rho.value_or(noiseless ? defaults.e_rho : e_rho),
                                            model_e_phi.value_or(noiseless ? defaults.e_phi : e_phi));
  }
};

struct ScenarioConfig {
  NetworkModel network;
  std::vector<int> pmu_buses;
  std::optional<InjectionProfile> injections;  // synthetic profile when empty
  SyntheticProfileSpec synthetic;
  NoiseConfig noise;
  Index horizon = 2000;
  Index parallelism = 4;
  Precision precision = Precision::binary32;
  ArithConfig arith;
  LoadFlowOptions loadflow;
  // Whether H and the simulated currents include the slack source admittance.
  SlackTerm measurement_slack_term = SlackTerm::exclude;
};

struct StimuliSet {
  Index states = 0;        // S
  Index measurements = 0;  // D
  int phases = 1;
  std::vector<int> buses;  // canonical bus order
  Matrix h;
  Vector r;  // diagonal of R
  Vector q;  // diagonal of Q
  std::vector<CVector> truth;  // true nodal voltages per step
  std::vector<Vector> z;
  double max_power_residual = 0.0;  // worst load-flow power mismatch over all steps

  Index horizon() const { return static_cast<Index>(z.size()); }
};

struct ResponseSet {
  std::string producer;  // "GM" or "MUT"
  Index states = 0;
  std::vector<Vector> x;
  // model-under-test metadata, per filter cycle
  long long cycles_per_step = 0;
  long long add_sub_per_step = 0;
  long long mul_div_per_step = 0;

  Index horizon() const { return static_cast<Index>(x.size()); }
};

inline StimuliSet generate_stimuli(const ScenarioConfig& cfg, std::uint64_t seed) {
  if (cfg.horizon < 1) throw ValidationError("horizon must be >= 1");
  const NetworkModel& net = cfg.network;
  const CMatrix y = build_admittance(net, cfg.measurement_slack_term);
  const auto sel = build_selector(net, cfg.pmu_buses);
  const auto mm = build_measurement_matrix(sel.gamma, y);
  const auto obs = check_observability(mm.h);
  if (!obs.observable)
    throw HypothesisViolation("PMU placement is not observable (rank " + std::to_string(obs.rank) + " < " +
                              std::to_string(mm.states) + ")");

  StimuliSet st;
  st.states = mm.states;
  st.measurements = mm.measurements;
  st.phases = net.phases();
  st.buses = net.buses();
  st.h = mm.h;
  st.r = build_measurement_covariance(net, cfg.pmu_buses, cfg.noise.model_uncertainty(), cfg.noise.nominal_current);
  st.q = build_process_covariance(st.states, cfg.noise.q);

  InjectionProfile profile =
      cfg.injections ? *cfg.injections : synthetic_profile(net, cfg.horizon, cfg.synthetic, seed);
  if (profile.nodes != net.node_count()) throw ValidationError("injection profile does not match network");
  if (profile.horizon() < cfg.horizon) throw ValidationError("injection profile shorter than horizon");

  const auto solver = LoadFlowSolver::for_network(net, cfg.loadflow);
  const Index m = sel.gamma.rows();
  for (Index k = 0; k < cfg.horizon; ++k) {
    LoadFlowSolution lf;
    try {
      lf = solver.solve(profile.steps[static_cast<std::size_t>(k)]);
    } catch (const HypothesisViolation& e) {
      throw HypothesisViolation("step " + std::to_string(k) + ": " + e.what());
    }
    st.max_power_residual = std::max(st.max_power_residual, lf.power_residual);
    const CVector v_sel = sel.gamma * lf.v;
    const CVector i_sel = sel.gamma * nodal_currents(y, lf.v);
    const auto ku = static_cast<std::uint64_t>(k);
    const CVector v_meas = add_polar_noise(v_sel, cfg.noise.e_rho, cfg.noise.e_phi, seed, {ku, 0});
    const CVector i_meas = add_polar_noise(i_sel, cfg.noise.e_rho, cfg.noise.e_phi, seed, {ku, 1});
    Vector z(4 * m);
    z << v_meas.real(), v_meas.imag(), i_meas.real(), i_meas.imag();
    st.truth.push_back(lf.v);
    st.z.push_back(std::move(z));
  }
  return st;
}

namespace detail {
inline void check_stimuli(const StimuliSet& st) {
  if (st.horizon() == 0) throw ValidationError("stimuli contain no steps");
  if (st.h.rows() != st.measurements || st.h.cols() != st.states || st.r.size() != st.measurements ||
      st.q.size() != st.states)
    throw ValidationError("stimuli header dimensions are inconsistent");
  for (const auto& z : st.z)
    if (z.size() != st.measurements) throw ValidationError("stimuli measurement vector has wrong length");
}
}  // namespace detail

/// Golden model: binary64 batch filter, gain formulation.
inline ResponseSet run_golden(const StimuliSet& st) {
  detail::check_stimuli(st);
  ResponseSet out;
  out.producer = "GM";
  out.states = st.states;
  MeasurementFrame frame{Vector(), st.h, st.r.asDiagonal().toDenseMatrix()};
  FilterState state = init_state(st.states, st.q, st.phases);
  for (Index k = 0; k < st.horizon(); ++k) {
    frame.z = st.z[static_cast<std::size_t>(k)];
    try {
      state = dkf_update_gain_form(predict(state, st.q), frame);
    } catch (const HypothesisViolation& e) {
      throw HypothesisViolation("step " + std::to_string(k) + ": " + e.what());
    }
    out.x.push_back(state.x);
  }
  return out;
}

/// Model under test: blocked sequential filter in the requested precision.
inline ResponseSet run_mut(const StimuliSet& st, Index parallelism, Precision prec = Precision::binary32,
                           const ArithConfig& arith = {}) {
  detail::check_stimuli(st);
  ResponseSet out;
  out.producer = "MUT";
  out.states = st.states;
  auto run = [&](auto tag) {
    using T = decltype(tag);
    BlockedSdkf<T> filter(st.h, st.r, st.q, parallelism);
    filter.reset(init_state(st.states, st.q, st.phases));
    for (Index k = 0; k < st.horizon(); ++k) {
      try {
        filter.step(st.z[static_cast<std::size_t>(k)]);
      } catch (const HypothesisViolation& e) {
        throw HypothesisViolation("step " + std::to_string(k) + ": " + e.what());
      }
      out.x.push_back(filter.state().x);
    }
  };
  if (prec == Precision::binary32)
    run(float{});
  else
    run(double{});
  out.cycles_per_step = cycle_cost(st.states, st.measurements, parallelism, arith).total_cycles;
  const auto ops = closed_form_op_count(Algorithm::SDKF, st.states, st.measurements);
  out.add_sub_per_step = ops.add_sub;
  out.mul_div_per_step = ops.mul_div;
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct ChannelStats {
  int bus = 0;
  int phase = 0;  // 1-based
  Quantiles magnitude_error;  // |V_gm| - |V_true|, pu
  Quantiles phase_error;      // arg V_gm - arg V_true, rad
  Quantiles magnitude_mismatch;  // |V_mut| - |V_gm|, pu
  Quantiles phase_mismatch;      // arg V_mut - arg V_gm, rad
};

struct ErrorReport {
  std::vector<ChannelStats> channels;
  Quantiles abs_magnitude_mismatch;  // pooled over all channels and steps
  Quantiles abs_phase_mismatch;
  long long cycles_per_step = 0;
  long long add_sub_per_step = 0;
  long long mul_div_per_step = 0;
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

inline ErrorReport compare_responses(const StimuliSet& truth, const ResponseSet& gm, const ResponseSet& mut) {
  if (gm.horizon() != truth.horizon() || mut.horizon() != truth.horizon())
    throw ValidationError("responses and stimuli differ in horizon");
  if (gm.states != truth.states || mut.states != truth.states) throw ValidationError("responses differ in state size");
  if (truth.horizon() == 0) throw ValidationError("nothing to compare");
  const Index nodes = truth.states / 2;
  const auto steps = static_cast<std::size_t>(truth.horizon());
  ErrorReport rep;
  rep.cycles_per_step = mut.cycles_per_step;
  rep.add_sub_per_step = mut.add_sub_per_step;
  rep.mul_div_per_step = mut.mul_div_per_step;
  std::vector<double> all_mag, all_ph;
  for (Index n = 0; n < nodes; ++n) {
    std::vector<double> me(steps), pe(steps), mm(steps), pm(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const Complex t = truth.truth[k](n);
      const Complex g(gm.x[k](n), gm.x[k](nodes + n));
      const Complex u(mut.x[k](n), mut.x[k](nodes + n));
      me[k] = std::abs(g) - std::abs(t);
      pe[k] = wrap_angle(std::arg(g) - std::arg(t));
      mm[k] = std::abs(u) - std::abs(g);
      pm[k] = wrap_angle(std::arg(u) - std::arg(g));
      all_mag.push_back(std::abs(mm[k]));
      all_ph.push_back(std::abs(pm[k]));
    }
    ChannelStats c;
    c.bus = truth.buses.at(static_cast<std::size_t>(n / truth.phases));
    c.phase = static_cast<int>(n % truth.phases) + 1;
    c.magnitude_error = quantiles(std::move(me));
    c.phase_error = quantiles(std::move(pe));
    c.magnitude_mismatch = quantiles(std::move(mm));
    c.phase_mismatch = quantiles(std::move(pm));
    rep.channels.push_back(c);
  }
  rep.abs_magnitude_mismatch = quantiles(std::move(all_mag));
  rep.abs_phase_mismatch = quantiles(std::move(all_ph));
  return rep;
}

// ---------------------------------------------------------------------------
// Random instances and the scalability sweep

struct RandomInstance {
  FilterState prior;  // a priori
  MeasurementFrame frame;
};

/// P = M M^T + eps I with M ~ U(-1, 1); H ~ U(-1, 1) resampled until it has
/// full column rank (when D >= S); diagonal R ~ U(0.5, 1.5).
inline RandomInstance random_instance(Index s, Index d, std::uint64_t seed, double eps = 1e-3) {
  if (s < 1 || d < 1) throw ValidationError("S and D must be >= 1");
  RandomStream rng(seed, {0x696e7374ULL, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(d)});
  auto fill = [&rng](Matrix& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-1.0, 1.0);
  };
  Matrix m(s, s);
  fill(m);
  RandomInstance inst;
  inst.prior.p = m * m.transpose() + eps * Matrix::Identity(s, s);
  inst.prior.p = 0.5 * (inst.prior.p + inst.prior.p.transpose()).eval();
  inst.prior.x = Vector(s);
  for (Index i = 0; i < s; ++i) inst.prior.x(i) = rng.uniform(-1.0, 1.0);
  inst.prior.phase = EstimatePhase::a_priori;
  inst.prior.k = 1;

  Matrix h(d, s);
  for (int attempt = 0;; ++attempt) {
    fill(h);
    if (d < s || check_observability(h).observable) break;
    if (attempt == 16) throw HypothesisViolation("could not draw a full-rank H");
  }
  Vector r(d), z(d);
  for (Index i = 0; i < d; ++i) r(i) = rng.uniform(0.5, 1.5);
  for (Index i = 0; i < d; ++i) z(i) = rng.uniform(-2.0, 2.0);
  inst.frame = MeasurementFrame::with_diagonal(std::move(z), std::move(h), r);
  return inst;
}

struct SweepRow {
  Index size = 0;  // S = D
  long long cycles = 0;
  std::optional<double> wall_seconds;
  long long memory_words = 0;
  bool memory_feasible = false;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double restricted_limit = 80;
  PolyFit quadratic_restricted, cubic_restricted;
  PolyFit quadratic_full, cubic_full;
};

struct SweepOptions {
  bool wall_time = false;  // time the blocked step (non-deterministic output)
  int repetitions = 5;
  double restricted_limit = 80;
  ArithConfig arith;
};

/// Fits with the degree capped at points - 1, padded with zero coefficients.
inline PolyFit fit_capped(const std::vector<double>& xs, const std::vector<double>& ys, int degree) {
  if (xs.empty()) return {};
  const int used = std::min<int>(degree, static_cast<int>(xs.size()) - 1);
  PolyFit f = fit_polynomial(xs, ys, used);
  f.coefficients.resize(static_cast<std::size_t>(degree) + 1, 0.0);
  return f;
}

inline SweepReport scalability_sweep(const std::vector<Index>& sizes, Index parallelism, std::uint64_t seed,
                                     const SweepOptions& opts = {}) {
  if (sizes.empty()) throw ValidationError("no sizes given");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ValidationError("sizes must be strictly increasing");
  SweepReport rep;
  rep.restricted_limit = opts.restricted_limit;
  for (Index s : sizes) {
    SweepRow row;
    row.size = s;
    row.cycles = cycle_cost(s, s, parallelism, opts.arith).total_cycles;
    const auto mem = memory_footprint(s, s, parallelism, opts.arith.budget_words);
    row.memory_words = mem.words;
    row.memory_feasible = mem.feasible;
    if (opts.wall_time) {
      const auto inst = random_instance(s, s, seed);
      FilterState post = inst.prior;
      post.phase = EstimatePhase::a_posteriori;
      const Vector q = Vector::Constant(s, 1e-6);
      BlockedSdkf<float> filter(inst.frame.h, inst.frame.r.diagonal(), q, parallelism);
      std::vector<double> times;
      for (int rep_i = 0; rep_i <= opts.repetitions; ++rep_i) {
        filter.reset(post);
        const auto t0 = std::chrono::steady_clock::now();
        filter.step(inst.frame.z);
        const auto t1 = std::chrono::steady_clock::now();
        if (rep_i > 0) times.push_back(std::chrono::duration<double>(t1 - t0).count());  // first run is warm-up
      }
      row.wall_seconds = quantiles(times).median;
    }
    rep.rows.push_back(row);
  }
  std::vector<double> xs, ys, xr, yr;
  for (const auto& r : rep.rows) {
    xs.push_back(static_cast<double>(r.size));
    ys.push_back(static_cast<double>(r.cycles));
    if (static_cast<double>(r.size) <= rep.restricted_limit) {
      xr.push_back(xs.back());
      yr.push_back(ys.back());
    }
  }
  rep.quadratic_full = fit_capped(xs, ys, 2);
  rep.cubic_full = fit_capped(xs, ys, 3);
  rep.quadratic_restricted = fit_capped(xr, yr, 2);
  rep.cubic_restricted = fit_capped(xr, yr, 3);
  return rep;
}

}  // namespace seqkf
