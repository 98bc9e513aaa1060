#pragma once

// Multi-phase network model, compound admittance matrix, PMU selector and
// the linear measurement matrix that links the rectangular state to the
// synchrophasor measurements.
//
// Layout convention used throughout the library:
//   node index  n = bus_position * phases + phase        (bus-major)
//   state       x = [Re V_0 .. Re V_{N-1}, Im V_0 .. Im V_{N-1}]
//   measurement z = [Re ~V; Im ~V; Re ~I; Im ~I]         (selected nodes)

#include "seqkf/common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <utility>
#include <vector>

namespace seqkf {

struct Phasor {
  double re = 0.0;
  double im = 0.0;

  static Phasor polar(double magnitude, double angle) {
    return {magnitude * std::cos(angle), magnitude * std::sin(angle)};
  }
  static Phasor from(Complex c) { return {c.real(), c.imag()}; }

  double magnitude() const { return std::hypot(re, im); }
  double angle() const { return std::atan2(im, re); }
  Complex value() const { return {re, im}; }
};

/// Nominal balanced angles: 0, -2pi/3, +2pi/3.
inline double nominal_phase_angle(int phase, int phases) {
  if (phases == 1) return 0.0;
  static constexpr double kAngles[3] = {0.0, -2.0 * kPi / 3.0, 2.0 * kPi / 3.0};
  return kAngles[phase % 3];
}

inline std::vector<Phasor> flat_phasors(int phases) {
  std::vector<Phasor> out;
  for (int p = 0; p < phases; ++p) out.push_back(Phasor::polar(1.0, nominal_phase_angle(p, phases)));
  return out;
}

struct LineSpec {
  int from_bus = 0;
  int to_bus = 0;
  CMatrix series_impedance;   // phases x phases, pu
  Vector shunt_susceptance;   // per phase, total line charging, pu

  /// Uncoupled line with the same impedance and susceptance on every phase.
  static LineSpec uniform(int from, int to, Complex z, double b = 0.0, int phases = 1) {
    LineSpec l;
    l.from_bus = from;
    l.to_bus = to;
    l.series_impedance = CMatrix::Identity(phases, phases) * z;
    l.shunt_susceptance = Vector::Constant(phases, b);
    return l;
  }

  /// Symmetric coupled line: z_self on the diagonal, z_mutual elsewhere.
  static LineSpec coupled(int from, int to, Complex z_self, Complex z_mutual, double b, int phases) {
    LineSpec l = uniform(from, to, z_self, b, phases);
    for (int i = 0; i < phases; ++i)
      for (int j = 0; j < phases; ++j)
        if (i != j) l.series_impedance(i, j) = z_mutual;
    return l;
  }
};

struct SlackSpec {
  int bus = 0;
  std::vector<Phasor> voltage;       // one per phase
  double short_circuit_power = 300;  // pu
  double r_over_x = 0.1;
};

class NetworkModel {
 public:
  const std::vector<int>& buses() const { return buses_; }
  int phases() const { return phases_; }
  const std::vector<LineSpec>& lines() const { return lines_; }
  const SlackSpec& slack() const { return slack_; }

  Index bus_count() const { return static_cast<Index>(buses_.size()); }
  Index node_count() const { return bus_count() * phases_; }
  Index state_size() const { return 2 * node_count(); }

  std::optional<Index> position(int bus) const {
    auto it = index_.find(bus);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  Index node(Index bus_position, int phase) const { return bus_position * phases_ + phase; }
  Index slack_position() const { return *position(slack_.bus); }

  /// Adjacency in bus positions.
  std::vector<std::vector<Index>> adjacency() const {
    std::vector<std::vector<Index>> adj(buses_.size());
    for (const auto& l : lines_) {
      const Index a = *position(l.from_bus), b = *position(l.to_bus);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    return adj;
  }

 private:
  friend NetworkModel build_network(std::vector<int>, int, std::vector<LineSpec>, SlackSpec);

  std::vector<int> buses_;
  int phases_ = 1;
  std::vector<LineSpec> lines_;
  SlackSpec slack_;
  std::map<int, Index> index_;
};

/// Validates and assembles a network. Buses keep the order given; that order
/// is the canonical bus order for every vector layout.
inline NetworkModel build_network(std::vector<int> buses, int phases, std::vector<LineSpec> lines,
                                  SlackSpec slack) {
  if (phases != 1 && phases != 3) throw ValidationError("phase count must be 1 or 3");
  if (buses.empty()) throw ValidationError("network has no buses");

  NetworkModel net;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!net.index_.emplace(buses[i], static_cast<Index>(i)).second)
      throw ValidationError("duplicate bus id " + std::to_string(buses[i]));
  }
  for (const auto& l : lines) {
    for (int end : {l.from_bus, l.to_bus})
      if (!net.index_.count(end))
        throw ValidationError("line references unknown bus " + std::to_string(end));
    if (l.from_bus == l.to_bus)
      throw ValidationError("line from bus " + std::to_string(l.from_bus) + " to itself");
    if (l.series_impedance.rows() != phases || l.series_impedance.cols() != phases)
      throw ValidationError("series impedance must be phases x phases");
    if (l.shunt_susceptance.size() != phases)
      throw ValidationError("shunt susceptance must have one entry per phase");
  }
  if (!net.index_.count(slack.bus))
    throw ValidationError("slack bus " + std::to_string(slack.bus) + " does not exist");
  if (!(slack.short_circuit_power > 0)) throw ValidationError("short-circuit power must be > 0");
  if (!(slack.r_over_x >= 0)) throw ValidationError("R/X ratio must be >= 0");
  if (slack.voltage.empty()) slack.voltage = flat_phasors(phases);
  if (static_cast<int>(slack.voltage.size()) != phases)
    throw ValidationError("slack voltage needs one phasor per phase");

  net.buses_ = std::move(buses);
  net.phases_ = phases;
  net.lines_ = std::move(lines);
  net.slack_ = std::move(slack);

  // connectivity
  const auto adj = net.adjacency();
  std::vector<bool> seen(adj.size(), false);
  std::queue<Index> todo;
  todo.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!todo.empty()) {
    const Index u = todo.front();
    todo.pop();
    for (Index v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        todo.push(v);
      }
  }
  if (reached != adj.size()) throw ValidationError("network graph is disconnected");
  return net;
}

/// Source admittance 1/Z_sc of the slack Norton equivalent, with
/// |Z_sc| = 1/S_sc and arg(Z_sc) = atan2(1, R/X), so arg(y) = -atan2(1, R/X).
inline Complex slack_source_admittance(const SlackSpec& slack) {
  const double zmag = 1.0 / slack.short_circuit_power;
  const double angle = std::atan2(1.0, slack.r_over_x);
  return 1.0 / std::polar(zmag, angle);
}

enum class SlackTerm { include, exclude };

/// Compound admittance matrix by pi-model superposition.
inline CMatrix build_admittance(const NetworkModel& net, SlackTerm slack_term = SlackTerm::include) {
  const int np = net.phases();
  CMatrix y = CMatrix::Zero(net.node_count(), net.node_count());
  for (const auto& line : net.lines()) {
    Eigen::FullPivLU<CMatrix> lu(line.series_impedance);
    if (!lu.isInvertible())
      throw ValidationError("singular series impedance on line " + std::to_string(line.from_bus) +
                            "-" + std::to_string(line.to_bus));
    const CMatrix ys = lu.inverse();
    const Index a = *net.position(line.from_bus) * np;
    const Index b = *net.position(line.to_bus) * np;
    y.block(a, a, np, np) += ys;
    y.block(b, b, np, np) += ys;
    y.block(a, b, np, np) -= ys;
    y.block(b, a, np, np) -= ys;
    for (int p = 0; p < np; ++p) {
      const Complex half_shunt(0.0, line.shunt_susceptance(p) / 2.0);
      y(a + p, a + p) += half_shunt;
      y(b + p, b + p) += half_shunt;
    }
  }
  if (slack_term == SlackTerm::include) {
    const Complex ysc = slack_source_admittance(net.slack());
    const Index s = net.slack_position() * np;
    for (int p = 0; p < np; ++p) y(s + p, s + p) += ysc;
  }
  return y;
}

struct SelectorMatrix {
  Matrix gamma;             // (|M||P|) x (|B||P|)
  std::vector<int> pmu_buses;  // canonical order
};

inline SelectorMatrix build_selector(const NetworkModel& net, const std::vector<int>& pmu_buses) {
  if (pmu_buses.empty()) throw ValidationError("empty PMU set");
  std::vector<Index> positions;
  for (int b : pmu_buses) {
    auto pos = net.position(b);
    if (!pos) throw ValidationError("PMU at unknown bus " + std::to_string(b));
    positions.push_back(*pos);
  }
  std::sort(positions.begin(), positions.end());
  if (std::adjacent_find(positions.begin(), positions.end()) != positions.end())
    throw ValidationError("duplicate PMU bus");

  SelectorMatrix sel;
  const int np = net.phases();
  sel.gamma = Matrix::Zero(static_cast<Index>(positions.size()) * np, net.node_count());
  Index row = 0;
  for (Index pos : positions) {
    sel.pmu_buses.push_back(net.buses()[pos]);
    for (int p = 0; p < np; ++p) sel.gamma(row++, net.node(pos, p)) = 1.0;
  }
  return sel;
}

struct MeasurementMatrix {
  Matrix h;
  Index states = 0;        // S
  Index measurements = 0;  // D
};

/// H = [[G, 0], [0, G], [G*Re Y, -G*Im Y], [G*Im Y, G*Re Y]] with G the selector.
inline MeasurementMatrix build_measurement_matrix(const Matrix& gamma, const CMatrix& y) {
  if (y.rows() != y.cols() || gamma.cols() != y.rows())
    throw ValidationError("selector column count must equal admittance dimension");
  const Index m = gamma.rows(), n = gamma.cols();
  const Matrix g = gamma * y.real();
  const Matrix b = gamma * y.imag();
  MeasurementMatrix mm;
  mm.states = 2 * n;
  mm.measurements = 4 * m;
  mm.h = Matrix::Zero(mm.measurements, mm.states);
  mm.h.block(0, 0, m, n) = gamma;
  mm.h.block(m, n, m, n) = gamma;
  mm.h.block(2 * m, 0, m, n) = g;
  mm.h.block(2 * m, n, m, n) = -b;
  mm.h.block(3 * m, 0, m, n) = b;
  mm.h.block(3 * m, n, m, n) = g;
  return mm;
}

struct Observability {
  bool observable = false;
  Index rank = 0;
};

inline constexpr double kRankTolerance = 1e-10;

/// Numerical rank from singular values above kRankTolerance * sigma_max.
inline Observability check_observability(const Matrix& h) {
  if (h.size() == 0) throw ValidationError("empty measurement matrix");
  Eigen::JacobiSVD<Matrix> svd(h);
  const Vector& s = svd.singularValues();
  Observability out;
  const double smax = s.size() ? s(0) : 0.0;
  if (smax > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > kRankTolerance * smax) ++out.rank;
  out.observable = out.rank == h.cols();
  return out;
}

struct Dims {
  Index states = 0;
  Index measurements = 0;
  bool operator==(const Dims&) const = default;
};

inline Dims dims(Index buses, Index phases, Index pmus) { return {2 * buses * phases, 4 * pmus * phases}; }

inline Dims dims(const NetworkModel& net, const std::vector<int>& pmu_buses) {
  return dims(net.bus_count(), net.phases(), static_cast<Index>(pmu_buses.size()));
}

// ---------------------------------------------------------------------------
// Synthetic feeders

struct FeederSpec {
  int buses = 8;
  int phases = 3;
  int branching = 1;  // 1: chain; k: bus i hangs off bus (i-1)/k + 1
  Complex z_self{0.02, 0.04};
  Complex z_mutual{0.005, 0.015};
  double shunt_susceptance = 1e-3;
  double short_circuit_power = 300;
  double r_over_x = 0.1;
};

/// Radial feeder with uniform cables; bus ids 1..N, slack at bus 1.
inline NetworkModel generate_feeder(const FeederSpec& spec) {
  if (spec.buses < 2) throw ValidationError("feeder needs at least two buses");
  if (spec.branching < 1) throw ValidationError("branching factor must be >= 1");
  std::vector<int> ids;
  for (int b = 1; b <= spec.buses; ++b) ids.push_back(b);
  std::vector<LineSpec> lines;
  for (int b = 2; b <= spec.buses; ++b) {
    const int parent = (b - 2) / spec.branching + 1;
    lines.push_back(LineSpec::coupled(parent, b, spec.z_self, spec.phases == 1 ? Complex{} : spec.z_mutual,
                                      spec.shunt_susceptance, spec.phases));
  }
  SlackSpec slack{1, flat_phasors(spec.phases), spec.short_circuit_power, spec.r_over_x};
  return build_network(ids, spec.phases, lines, slack);
}

/// Greedy observable PMU placement: every other bus in breadth-first order
/// from the slack, then extra buses until H has full column rank.
inline std::vector<int> place_pmus(const NetworkModel& net) {
  const CMatrix y = build_admittance(net);
  const auto adj = net.adjacency();
  std::vector<int> depth(adj.size(), -1);
  std::vector<Index> order;
  std::queue<Index> todo;
  todo.push(net.slack_position());
  depth[net.slack_position()] = 0;
  while (!todo.empty()) {
    const Index u = todo.front();
    todo.pop();
    order.push_back(u);
    for (Index v : adj[u])
      if (depth[v] < 0) {
        depth[v] = depth[u] + 1;
        todo.push(v);
      }
  }
  std::vector<int> chosen;
  for (Index u : order)
    if (depth[u] % 2 == 1) chosen.push_back(net.buses()[u]);
  if (chosen.empty()) chosen.push_back(net.buses()[order.front()]);
  auto observable = [&](const std::vector<int>& pmus) {
    const auto sel = build_selector(net, pmus);
    return check_observability(build_measurement_matrix(sel.gamma, y).h).observable;
  };
  for (Index u : order) {
    if (observable(chosen)) break;
    const int bus = net.buses()[u];
    if (std::find(chosen.begin(), chosen.end(), bus) == chosen.end()) chosen.push_back(bus);
  }
  return chosen;
}

}  // namespace seqkf
