#pragma once

// File formats: JSON network / scenario configs and the CSV stimuli,
// response, report and sweep files exchanged by the CLI subcommands.
//
// Every number is written with "%.17g" so a read-back is bit-exact.

#include "seqkf/common.hpp"
#include "seqkf/grid.hpp"
#include "seqkf/kalman.hpp"
#include "seqkf/loadflow.hpp"
#include "seqkf/testbench.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace seqkf {

inline constexpr int kLayoutVersion = 1;

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON configs

namespace detail {

using Json = nlohmann::json;

inline Json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

/// Scalar, per-phase list or phases x phases matrix; scalars and lists fill
/// the diagonal and `mutual` fills the rest.
inline Matrix phase_matrix(const Json& j, int phases, double mutual, const char* what) {
  Matrix m = Matrix::Constant(phases, phases, mutual);
  if (j.is_number()) {
    m.diagonal().setConstant(j.get<double>());
  } else if (j.is_array() && !j.empty() && j[0].is_number()) {
    if (static_cast<int>(j.size()) != phases) throw ValidationError(std::string(what) + ": one value per phase expected");
    for (int i = 0; i < phases; ++i) m(i, i) = j[static_cast<std::size_t>(i)].get<double>();
  } else if (j.is_array() && static_cast<int>(j.size()) == phases) {
    for (int i = 0; i < phases; ++i) {
      const Json& row = j[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<int>(row.size()) != phases)
        throw ValidationError(std::string(what) + ": matrix must be phases x phases");
      for (int c = 0; c < phases; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  } else {
    throw ValidationError(std::string(what) + ": expected a number, a list or a matrix");
  }
  return m;
}

inline Complex complex_pair(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(std::string(what) + ": expected [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<int> pmu_list(const Json& j, const NetworkModel& net) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "all") return net.buses();
    if (s == "auto") return place_pmus(net);
    throw ValidationError("pmus: expected a list, \"all\" or \"auto\"");
  }
  return j.get<std::vector<int>>();
}

}  // namespace detail

struct NetworkFile {
  NetworkModel network;
  std::vector<int> pmu_buses;  // empty when the file lists none
};

/// Network schema:
///   { "phases": 3, "buses": [800, 802, ...],
///     "lines": [ { "from": 800, "to": 802, "r": ..., "x": ..., "b": ...,
///                  "r_mutual": ..., "x_mutual": ... } ],
///     "slack": { "bus": 800, "v": 1.0 | [[mag, angle_rad], ...], "s_sc": 300, "r_over_x": 0.1 },
///     "pmus": [800, ...] }
/// r, x: number, per-phase list or matrix; b: number or per-phase list.
inline NetworkFile parse_network(const nlohmann::json& j) {
  using detail::get_or;
  try {
    const int phases = get_or(j, "phases", 1);
    if (phases != 1 && phases != 3) throw ValidationError("phase count must be 1 or 3");
    const auto buses = j.at("buses").get<std::vector<int>>();
    std::vector<LineSpec> lines;
    for (const auto& jl : j.at("lines")) {
      LineSpec l;
      l.from_bus = jl.at("from").get<int>();
      l.to_bus = jl.at("to").get<int>();
      const Matrix r = detail::phase_matrix(jl.at("r"), phases, get_or(jl, "r_mutual", 0.0), "line r");
      const Matrix x = detail::phase_matrix(jl.at("x"), phases, get_or(jl, "x_mutual", 0.0), "line x");
      l.series_impedance = r.cast<Complex>() + Complex(0, 1) * x.cast<Complex>();
      l.shunt_susceptance = detail::phase_matrix(jl.contains("b") ? jl.at("b") : nlohmann::json(0.0), phases, 0.0,
                                                 "line b")
                                .diagonal();
      lines.push_back(std::move(l));
    }
    const auto& js = j.at("slack");
    SlackSpec slack;
    slack.bus = js.at("bus").get<int>();
    slack.voltage = flat_phasors(phases);
    if (js.contains("v")) {
      const auto& v = js.at("v");
      if (v.is_number()) {
        for (auto& ph : slack.voltage) ph = Phasor::from(ph.value() * v.get<double>());
      } else {
        if (!v.is_array() || static_cast<int>(v.size()) != phases)
          throw ValidationError("slack v: one [magnitude, angle] pair per phase expected");
        for (int p = 0; p < phases; ++p) {
          const Complex c = detail::complex_pair(v[static_cast<std::size_t>(p)], "slack v");
          slack.voltage[static_cast<std::size_t>(p)] = Phasor::polar(c.real(), c.imag());
        }
      }
    }
    slack.short_circuit_power = get_or(js, "s_sc", slack.short_circuit_power);
    slack.r_over_x = get_or(js, "r_over_x", slack.r_over_x);
    NetworkFile out{build_network(buses, phases, lines, slack), {}};
    if (j.contains("pmus")) out.pmu_buses = detail::pmu_list(j.at("pmus"), out.network);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network: ") + e.what());
  }
}

inline NetworkFile read_network(const std::filesystem::path& path) {
  try {
    return parse_network(detail::parse_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline FeederSpec parse_feeder(const nlohmann::json& j) {
  using detail::get_or;
  FeederSpec f;
  f.buses = get_or(j, "buses", f.buses);
  f.phases = get_or(j, "phases", f.phases);
  f.branching = get_or(j, "branching", f.branching);
  if (j.contains("z_self")) f.z_self = detail::complex_pair(j.at("z_self"), "z_self");
  if (j.contains("z_mutual")) f.z_mutual = detail::complex_pair(j.at("z_mutual"), "z_mutual");
  f.shunt_susceptance = get_or(j, "shunt", f.shunt_susceptance);
  f.short_circuit_power = get_or(j, "s_sc", f.short_circuit_power);
  f.r_over_x = get_or(j, "r_over_x", f.r_over_x);
  return f;
}

inline ArithConfig parse_arith(const nlohmann::json& j) {
  ArithConfig a;
  auto block = [&j](const char* key, ArithBlock& b) {
    if (!j.contains(key)) return;
    const auto& jb = j.at(key);
    b.throughput = detail::get_or(jb, "throughput", b.throughput);
    b.latency = detail::get_or(jb, "latency", b.latency);
    b.dsp = detail::get_or(jb, "dsp", b.dsp);
  };
  block("add", a.add);
  block("mul", a.mul);
  block("sum", a.sum);
  block("div", a.div);
  a.budget_words = detail::get_or(j, "budget_words", a.budget_words);
  a.validate();
  return a;
}

inline Precision parse_precision(int bits) {
  if (bits == 32) return Precision::binary32;
  if (bits == 64) return Precision::binary64;
  throw ValidationError("precision must be 32 or 64");
}

/// Scenario schema (file paths relative to the config file):
///   { "network": "net.json" | "feeder": { buses, phases, branching, z_self, z_mutual, shunt, s_sc, r_over_x },
///     "pmus": [..] | "all" | "auto",
///     "injections": "profile.csv" | "synthetic_profile": { initial_spread, step, bound, reactive_ratio },
///     "noise": { e_rho, e_phi, q, nominal_current, seed, model_e_rho, model_e_phi },
///     "horizon": 2000, "parallelism": 4, "precision": 32,
///     "arith": { "add": { throughput, latency, dsp }, "mul", "sum", "div", "budget_words" },
///     "loadflow": { tolerance, max_iterations },
///     "slack_term_in_measurements": false }
inline ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_or;
  try {
    ScenarioConfig cfg;
    std::vector<int> file_pmus;
    if (j.contains("network")) {
      auto nf = read_network(base_dir / j.at("network").get<std::string>());
      cfg.network = std::move(nf.network);
      file_pmus = std::move(nf.pmu_buses);
    } else if (j.contains("feeder")) {
      cfg.network = generate_feeder(parse_feeder(j.at("feeder")));
    } else {
      throw ValidationError("scenario needs \"network\" or \"feeder\"");
    }
    if (j.contains("pmus"))
      cfg.pmu_buses = detail::pmu_list(j.at("pmus"), cfg.network);
    else
      cfg.pmu_buses = file_pmus.empty() ? place_pmus(cfg.network) : file_pmus;

    if (j.contains("synthetic_profile")) {
      const auto& js = j.at("synthetic_profile");
      auto& s = cfg.synthetic;
      s.initial_spread = get_or(js, "initial_spread", s.initial_spread);
      s.step = get_or(js, "step", s.step);
      s.bound = get_or(js, "bound", s.bound);
      s.reactive_ratio = get_or(js, "reactive_ratio", s.reactive_ratio);
    }
    if (j.contains("injections"))
      cfg.injections = read_injection_csv((base_dir / j.at("injections").get<std::string>()).string(), cfg.network);
    if (j.contains("noise")) {
      const auto& jn = j.at("noise");
      auto& n = cfg.noise;
      n.e_rho = get_or(jn, "e_rho", n.e_rho);
      n.e_phi = get_or(jn, "e_phi", n.e_phi);
      n.q = get_or(jn, "q", n.q);
      n.nominal_current = get_or(jn, "nominal_current", n.nominal_current);
      n.seed = get_or(jn, "seed", n.seed);
      if (jn.contains("model_e_rho")) n.model_e_rho = jn.at("model_e_rho").get<double>();
      if (jn.contains("model_e_phi")) n.model_e_phi = jn.at("model_e_phi").get<double>();
    }
    cfg.horizon = get_or<Index>(j, "horizon", cfg.horizon);
    cfg.parallelism = get_or<Index>(j, "parallelism", cfg.parallelism);
    cfg.precision = parse_precision(get_or(j, "precision", 32));
    if (j.contains("arith")) cfg.arith = parse_arith(j.at("arith"));
    if (j.contains("loadflow")) {
      const auto& jl = j.at("loadflow");
      cfg.loadflow.tolerance = get_or(jl, "tolerance", cfg.loadflow.tolerance);
      cfg.loadflow.max_iterations = get_or(jl, "max_iterations", cfg.loadflow.max_iterations);
    }
    cfg.measurement_slack_term =
        get_or(j, "slack_term_in_measurements", false) ? SlackTerm::include : SlackTerm::exclude;
    if (cfg.horizon < 1) throw ValidationError("horizon must be >= 1");
    if (cfg.parallelism < 1) throw ValidationError("parallelism must be >= 1");
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

inline ScenarioConfig read_scenario(const std::filesystem::path& path) {
  const auto j = detail::parse_json_file(path);
  try {
    return parse_scenario(j, path.parent_path());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV helpers

namespace detail {

inline void write_row(std::ostream& out, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_number(v(i));
  out << '\n';
}

inline void write_step(std::ostream& out, Index k, const Vector& v) {
  out << k;
  for (Index i = 0; i < v.size(); ++i) out << ',' << format_number(v(i));
  out << '\n';
}

class CsvReader {
 public:
  CsvReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  std::vector<std::string> row() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cells;
      std::istringstream ss(line);
      std::string c;
      while (std::getline(ss, c, ',')) cells.push_back(c);
      return cells;
    }
    fail("unexpected end of file");
  }

  /// `key,value...`; returns the values.
  std::vector<std::string> field(const std::string& key) {
    auto r = row();
    if (r.empty() || r[0] != key) fail("expected field '" + key + "'");
    r.erase(r.begin());
    return r;
  }

  long long integer(const std::string& key) {
    const auto v = field(key);
    if (v.size() != 1) fail("field '" + key + "' takes one value");
    return to_integer(v[0]);
  }

  void section(const std::string& name) {
    const auto r = row();
    if (r.size() != 1 || r[0] != "[" + name + "]") fail("expected section [" + name + "]");
  }

  Vector numbers(const std::vector<std::string>& cells, std::size_t first, Index expected) {
    if (static_cast<Index>(cells.size() - first) != expected) fail("wrong number of columns");
    Vector v(expected);
    for (Index i = 0; i < expected; ++i) v(i) = to_double(cells[first + static_cast<std::size_t>(i)]);
    return v;
  }

  Vector step(Index k, Index expected) {
    const auto r = row();
    if (r.empty() || to_integer(r[0]) != k) fail("expected step " + std::to_string(k));
    return numbers(r, 1, expected);
  }

  double to_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail("bad number '" + s + "'");
    }
    if (used != s.size()) fail("bad number '" + s + "'");
    return v;
  }

  long long to_integer(const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      fail("bad integer '" + s + "'");
    }
    if (used != s.size()) fail("bad integer '" + s + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(what_ + " line " + std::to_string(line_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::string what_;
  int line_ = 0;
};

inline void check_layout(CsvReader& rd) {
  if (rd.integer("layout") != kLayoutVersion) rd.fail("unsupported layout version");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stimuli file
//
//   layout,1 / S,<S> / D,<D> / K,<K> / phases,<n> / buses,<id>,... / max_power_residual,<r>
//   [H]      D rows of S values
//   [R]      one row, diagonal of R
//   [Q]      one row, diagonal of Q
//   [truth]  K rows: k, Re V (S/2 values), Im V (S/2 values)
//   [z]      K rows: k, z_k (D values)

inline void write_stimuli(std::ostream& out, const StimuliSet& st) {
  out << "layout," << kLayoutVersion << "\nS," << st.states << "\nD," << st.measurements << "\nK," << st.horizon()
      << "\nphases," << st.phases << "\nbuses";
  for (int b : st.buses) out << ',' << b;
  out << "\nmax_power_residual," << format_number(st.max_power_residual) << "\n[H]\n";
  for (Index i = 0; i < st.h.rows(); ++i) detail::write_row(out, st.h.row(i).transpose());
  out << "[R]\n";
  detail::write_row(out, st.r);
  out << "[Q]\n";
  detail::write_row(out, st.q);
  out << "[truth]\n";
  for (Index k = 0; k < st.horizon(); ++k) {
    const CVector& v = st.truth[static_cast<std::size_t>(k)];
    Vector flat(2 * v.size());
    flat << v.real(), v.imag();
    detail::write_step(out, k, flat);
  }
  out << "[z]\n";
  for (Index k = 0; k < st.horizon(); ++k) detail::write_step(out, k, st.z[static_cast<std::size_t>(k)]);
}

inline StimuliSet read_stimuli(std::istream& in, const std::string& what = "stimuli") {
  detail::CsvReader rd(in, what);
  detail::check_layout(rd);
  StimuliSet st;
  st.states = rd.integer("S");
  st.measurements = rd.integer("D");
  const long long horizon = rd.integer("K");
  st.phases = static_cast<int>(rd.integer("phases"));
  if (st.states < 2 || st.states % 2 || st.measurements < 1 || horizon < 1 || st.phases < 1)
    rd.fail("invalid dimensions");
  for (const auto& b : rd.field("buses")) st.buses.push_back(static_cast<int>(rd.to_integer(b)));
  if (static_cast<Index>(st.buses.size()) * st.phases * 2 != st.states) rd.fail("bus list does not match S");
  const auto res = rd.field("max_power_residual");
  if (res.size() != 1) rd.fail("field 'max_power_residual' takes one value");
  st.max_power_residual = rd.to_double(res[0]);
  rd.section("H");
  st.h.resize(st.measurements, st.states);
  for (Index i = 0; i < st.measurements; ++i) st.h.row(i) = rd.numbers(rd.row(), 0, st.states).transpose();
  rd.section("R");
  st.r = rd.numbers(rd.row(), 0, st.measurements);
  rd.section("Q");
  st.q = rd.numbers(rd.row(), 0, st.states);
  rd.section("truth");
  const Index nodes = st.states / 2;
  for (Index k = 0; k < horizon; ++k) {
    const Vector flat = rd.step(k, st.states);
    CVector v(nodes);
    for (Index n = 0; n < nodes; ++n) v(n) = {flat(n), flat(nodes + n)};
    st.truth.push_back(std::move(v));
  }
  rd.section("z");
  for (Index k = 0; k < horizon; ++k) st.z.push_back(rd.step(k, st.measurements));
  return st;
}

// ---------------------------------------------------------------------------
// Response file
//
//   layout,1 / producer,<GM|MUT> / S,<S> / K,<K> / cycles_per_step,<n> /
//   add_sub_per_step,<n> / mul_div_per_step,<n>
//   [x]  K rows: k, x_k (S values)

inline void write_responses(std::ostream& out, const ResponseSet& rs) {
  out << "layout," << kLayoutVersion << "\nproducer," << rs.producer << "\nS," << rs.states << "\nK," << rs.horizon()
      << "\ncycles_per_step," << rs.cycles_per_step << "\nadd_sub_per_step," << rs.add_sub_per_step
      << "\nmul_div_per_step," << rs.mul_div_per_step << "\n[x]\n";
  for (Index k = 0; k < rs.horizon(); ++k) detail::write_step(out, k, rs.x[static_cast<std::size_t>(k)]);
}

inline ResponseSet read_responses(std::istream& in, const std::string& what = "responses") {
  detail::CsvReader rd(in, what);
  detail::check_layout(rd);
  ResponseSet rs;
  const auto prod = rd.field("producer");
  if (prod.size() != 1) rd.fail("field 'producer' takes one value");
  rs.producer = prod[0];
  rs.states = rd.integer("S");
  const long long horizon = rd.integer("K");
  if (rs.states < 1 || horizon < 1) rd.fail("invalid dimensions");
  rs.cycles_per_step = rd.integer("cycles_per_step");
  rs.add_sub_per_step = rd.integer("add_sub_per_step");
  rs.mul_div_per_step = rd.integer("mul_div_per_step");
  rd.section("x");
  for (Index k = 0; k < horizon; ++k) rs.x.push_back(rd.step(k, rs.states));
  return rs;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_report(std::ostream& out, const ErrorReport& rep) {
  out << "# cycles_per_step," << rep.cycles_per_step << "\n# add_sub_per_step," << rep.add_sub_per_step
      << "\n# mul_div_per_step," << rep.mul_div_per_step << "\nbus,phase,metric,min,q25,median,q75,max\n";
  auto line = [&out](const std::string& bus, const std::string& phase, const char* metric, const Quantiles& q) {
    out << bus << ',' << phase << ',' << metric << ',' << format_number(q.min) << ',' << format_number(q.q25) << ','
        << format_number(q.median) << ',' << format_number(q.q75) << ',' << format_number(q.max) << '\n';
  };
  for (const auto& c : rep.channels) {
    const auto b = std::to_string(c.bus), p = std::to_string(c.phase);
    line(b, p, "magnitude_error", c.magnitude_error);
    line(b, p, "phase_error", c.phase_error);
    line(b, p, "magnitude_mismatch", c.magnitude_mismatch);
    line(b, p, "phase_mismatch", c.phase_mismatch);
  }
  line("all", "all", "abs_magnitude_mismatch", rep.abs_magnitude_mismatch);
  line("all", "all", "abs_phase_mismatch", rep.abs_phase_mismatch);
}

inline void write_sweep(std::ostream& out, const SweepReport& rep) {
  const bool timed = !rep.rows.empty() && rep.rows.front().wall_seconds.has_value();
  out << "S,cycles,memory_words,memory_feasible" << (timed ? ",wall_seconds" : "") << '\n';
  for (const auto& r : rep.rows) {
    out << r.size << ',' << r.cycles << ',' << r.memory_words << ',' << (r.memory_feasible ? 1 : 0);
    if (timed) out << ',' << format_number(r.wall_seconds.value_or(0.0));
    out << '\n';
  }
  out << "\nrange,degree,c0,c1,c2,c3,residual\n";
  auto fit = [&out](const std::string& range, const PolyFit& f, int degree) {
    out << range << ',' << degree;
    for (int i = 0; i <= 3; ++i)
      out << ',' << format_number(i < static_cast<int>(f.coefficients.size()) ? f.coefficients[static_cast<std::size_t>(i)] : 0.0);
    out << ',' << format_number(f.residual) << '\n';
  };
  const auto lim = "S<=" + format_number(rep.restricted_limit);
  fit(lim, rep.quadratic_restricted, 2);
  fit(lim, rep.cubic_restricted, 3);
  fit("all", rep.quadratic_full, 2);
  fit("all", rep.cubic_full, 3);
}

// ---------------------------------------------------------------------------
// File wrappers

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  writer(out);
  if (!out) throw ValidationError("error while writing " + path.string());
}

inline StimuliSet read_stimuli_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_stimuli(in, path.string());
}

inline ResponseSet read_responses_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_responses(in, path.string());
}

}  // namespace seqkf
