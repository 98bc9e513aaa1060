#pragma once

// Ground-truth nodal voltages from nodal power injections.
//
// Fixed-point current-injection iteration with the slack voltage held
// fixed. Non-slack rows solve
//     Y_nn V_n = conj(S_n / V_n) - Y_ns V_s
// with Y_nn factorized once and reused for every time step.

#include "seqkf/common.hpp"
#include "seqkf/grid.hpp"
#include "seqkf/rng.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace seqkf {

/// Per-node complex injections (generation positive), one vector per step.
struct InjectionProfile {
  Index nodes = 0;
  std::vector<CVector> steps;

  Index horizon() const { return static_cast<Index>(steps.size()); }
};

struct LoadFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
};

struct LoadFlowSolution {
  CVector v;
  int iterations = 0;
  double residual = 0.0;        // max |(Y V)_n - conj(S_n / V_n)| over non-slack nodes
  double power_residual = 0.0;  // max |V_n conj((Y V)_n) - S_n| over non-slack nodes
};

inline CVector nodal_currents(const CMatrix& y, const CVector& v) {
  if (y.cols() != v.size()) throw ValidationError("admittance / voltage dimension mismatch");
  return y * v;
}

class LoadFlowSolver {
 public:
  /// `y` must not contain the slack Norton term.
  LoadFlowSolver(const CMatrix& y, std::vector<Index> slack_nodes, CVector slack_voltage,
                 LoadFlowOptions opts = {})
      : y_(y), slack_nodes_(std::move(slack_nodes)), slack_v_(std::move(slack_voltage)), opts_(opts) {
    if (!(opts_.tolerance > 0)) throw ValidationError("load-flow tolerance must be > 0");
    if (opts_.max_iterations < 1) throw ValidationError("load-flow max_iterations must be >= 1");
    if (static_cast<Index>(slack_nodes_.size()) != slack_v_.size())
      throw ValidationError("one slack voltage per slack node required");
    std::vector<bool> is_slack(y_.rows(), false);
    for (Index s : slack_nodes_) is_slack.at(s) = true;
    for (Index i = 0; i < y_.rows(); ++i)
      if (!is_slack[i]) free_nodes_.push_back(i);

    const Index nf = static_cast<Index>(free_nodes_.size()), ns = slack_v_.size();
    CMatrix ynn(nf, nf);
    ys_term_ = CVector::Zero(nf);
    for (Index r = 0; r < nf; ++r) {
      for (Index c = 0; c < nf; ++c) ynn(r, c) = y_(free_nodes_[r], free_nodes_[c]);
      for (Index c = 0; c < ns; ++c) ys_term_(r) += y_(free_nodes_[r], slack_nodes_[c]) * slack_v_(c);
    }
    if (nf > 0) {
      lu_.compute(ynn);
      if (!(lu_.rcond() > std::numeric_limits<double>::epsilon())) throw HypothesisViolation("reduced admittance matrix is singular");
    }
  }

  static LoadFlowSolver for_network(const NetworkModel& net, LoadFlowOptions opts = {}) {
    std::vector<Index> slack_nodes;
    CVector vs(net.phases());
    for (int p = 0; p < net.phases(); ++p) {
      slack_nodes.push_back(net.node(net.slack_position(), p));
      vs(p) = net.slack().voltage[p].value();
    }
    return LoadFlowSolver(build_admittance(net, SlackTerm::exclude), slack_nodes, vs, opts);
  }

  Index nodes() const { return y_.rows(); }

  LoadFlowSolution solve(const CVector& injections) const {
    if (injections.size() != y_.rows()) throw ValidationError("injection vector has wrong length");
    const Index nf = static_cast<Index>(free_nodes_.size());
    CVector v(y_.rows());
    for (std::size_t i = 0; i < slack_nodes_.size(); ++i) v(slack_nodes_[i]) = slack_v_(static_cast<Index>(i));
    // flat start: each node at the slack voltage of its phase
    const Index np = slack_v_.size();
    for (Index i : free_nodes_) v(i) = slack_v_(i % np);

    LoadFlowSolution sol;
    if (nf == 0) {
      sol.v = v;
      return sol;
    }
    CVector rhs(nf);
    for (int it = 1; it <= opts_.max_iterations; ++it) {
      for (Index r = 0; r < nf; ++r) rhs(r) = injected_current(injections(free_nodes_[r]), v(free_nodes_[r])) - ys_term_(r);
      const CVector next = lu_.solve(rhs);
      double step = 0.0;
      for (Index r = 0; r < nf; ++r) {
        if (!std::isfinite(next(r).real()) || !std::isfinite(next(r).imag()))
          throw HypothesisViolation("load flow diverged");
        step = std::max(step, std::abs(next(r) - v(free_nodes_[r])));
        v(free_nodes_[r]) = next(r);
      }
      sol.iterations = it;
      if (step <= opts_.tolerance) {
        residuals(injections, v, sol);
        if (sol.residual <= opts_.tolerance) {
          sol.v = v;
          return sol;
        }
      }
    }
    throw HypothesisViolation("load flow did not converge within " + std::to_string(opts_.max_iterations) +
                              " iterations");
  }

 private:
  static Complex injected_current(Complex s, Complex v) {
    if (s == Complex{}) return {};
    if (std::abs(v) == 0.0) throw HypothesisViolation("zero voltage during load flow");
    return std::conj(s / v);
  }

  void residuals(const CVector& s, const CVector& v, LoadFlowSolution& sol) const {
    const CVector i = y_ * v;
    sol.residual = 0.0;
    sol.power_residual = 0.0;
    for (Index n : free_nodes_) {
      sol.residual = std::max(sol.residual, std::abs(i(n) - injected_current(s(n), v(n))));
      sol.power_residual = std::max(sol.power_residual, std::abs(v(n) * std::conj(i(n)) - s(n)));
    }
  }

  CMatrix y_;
  std::vector<Index> slack_nodes_;
  std::vector<Index> free_nodes_;
  CVector slack_v_;
  CVector ys_term_;
  LoadFlowOptions opts_;
  Eigen::PartialPivLU<CMatrix> lu_;
};

inline LoadFlowSolution solve_loadflow(const NetworkModel& net, const CVector& injections,
                                       LoadFlowOptions opts = {}) {
  return LoadFlowSolver::for_network(net, opts).solve(injections);
}

// ---------------------------------------------------------------------------
// Injection profiles

/// Reads `k,bus,phase,P_pu,Q_pu` rows (header line required, phase 1-based,
/// k 0-based). Missing rows mean zero injection; slack rows are ignored.
inline InjectionProfile read_injection_csv(std::istream& in, const NetworkModel& net) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty injection profile");
  struct Row {
    long k;
    Index node;
    Complex s;
  };
  std::vector<Row> rows;
  long horizon = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string cell[5];
    for (auto& c : cell)
      if (!std::getline(ss, c, ',')) throw ValidationError("injection row " + std::to_string(lineno) + ": 5 columns expected");
    try {
      const long k = std::stol(cell[0]);
      const int bus = std::stoi(cell[1]);
      const int phase = std::stoi(cell[2]);
      auto pos = net.position(bus);
      if (k < 0 || !pos || phase < 1 || phase > net.phases()) throw ValidationError("");
      rows.push_back({k, net.node(*pos, phase - 1), {std::stod(cell[3]), std::stod(cell[4])}});
      horizon = std::max(horizon, k + 1);
    } catch (const std::exception&) {
      throw ValidationError("injection row " + std::to_string(lineno) + " is invalid");
    }
  }
  if (horizon == 0) throw ValidationError("injection profile has no rows");
  InjectionProfile prof;
  prof.nodes = net.node_count();
  prof.steps.assign(static_cast<std::size_t>(horizon), CVector::Zero(prof.nodes));
  const Index slack = net.slack_position();
  for (const auto& r : rows)
    if (r.node / net.phases() != slack) prof.steps[static_cast<std::size_t>(r.k)](r.node) += r.s;
  for (const auto& s : prof.steps)
    if (!s.allFinite()) throw ValidationError("non-finite injection");
  return prof;
}

inline InjectionProfile read_injection_csv(const std::string& path, const NetworkModel& net) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open injection profile " + path);
  return read_injection_csv(in, net);
}

struct SyntheticProfileSpec {
  double initial_spread = 0.05;  // |P|, |Q| at k = 0 drawn from U(-spread, spread)
  double step = 1e-3;            // random-walk increment std dev per step
  double bound = 0.5;            // clamp on P and Q
  double reactive_ratio = 0.3;   // Q walk scaled relative to P
};

/// Bounded random-walk P/Q per non-slack node.
inline InjectionProfile synthetic_profile(const NetworkModel& net, Index horizon, const SyntheticProfileSpec& spec,
                                          std::uint64_t seed) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  InjectionProfile prof;
  prof.nodes = net.node_count();
  prof.steps.assign(static_cast<std::size_t>(horizon), CVector::Zero(prof.nodes));
  const Index slack = net.slack_position();
  const double qr = spec.reactive_ratio;
  for (Index n = 0; n < prof.nodes; ++n) {
    if (n / net.phases() == slack) continue;
    RandomStream rng(seed, {0x70726f66ULL, static_cast<std::uint64_t>(n)});
    double p = rng.uniform(-spec.initial_spread, spec.initial_spread);
    double q = qr * rng.uniform(-spec.initial_spread, spec.initial_spread);
    for (Index k = 0; k < horizon; ++k) {
      if (k > 0) {
        p = std::clamp(p + spec.step * rng.gaussian(), -spec.bound, spec.bound);
        q = std::clamp(q + qr * spec.step * rng.gaussian(), -spec.bound, spec.bound);
      }
      prof.steps[static_cast<std::size_t>(k)](n) = {p, q};
    }
  }
  return prof;
}

}  // namespace seqkf
