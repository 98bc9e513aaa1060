#include "seqkf/loadflow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace seqkf;

namespace {

// Pure-resistive line r = 0.1 pu between the slack (bus 1) and bus 2.
NetworkModel resistive_pair() {
  return build_network({1, 2}, 1, {LineSpec::uniform(1, 2, {0.1, 0.0})}, {1, {}, 300, 0.1});
}

CVector load_at_bus2(double p) {
  CVector s = CVector::Zero(2);
  s(1) = {-p, 0.0};
  return s;
}

}  // namespace

TEST(LoadFlow, ZeroInjectionKeepsSlackVoltage) {
  FeederSpec spec;
  spec.buses = 5;
  spec.shunt_susceptance = 0.0;
  const auto net = generate_feeder(spec);
  const auto sol = solve_loadflow(net, CVector::Zero(net.node_count()));
  for (Index n = 0; n < net.node_count(); ++n)
    EXPECT_NEAR(std::abs(sol.v(n) - net.slack().voltage[n % 3].value()), 0.0, 1e-12);
  EXPECT_LE(sol.residual, 1e-12);
  EXPECT_LE(sol.power_residual, 1e-12);
}

TEST(LoadFlow, TwoBusClosedForm) {
  const auto sol = solve_loadflow(resistive_pair(), load_at_bus2(0.1));
  const double v2 = (1.0 + std::sqrt(1.0 - 4.0 * 0.1 * 0.1)) / 2.0;
  EXPECT_NEAR(v2, 0.989898, 1e-6);
  EXPECT_NEAR(std::abs(sol.v(1)), v2, 1e-8);
  EXPECT_NEAR(sol.v(1).imag(), 0.0, 1e-12);
  EXPECT_EQ(sol.v(0), Complex(1.0, 0.0));
}

TEST(LoadFlow, PowerBalanceAtSolvedPoint) {
  const auto net = resistive_pair();
  const auto sol = solve_loadflow(net, load_at_bus2(0.1));
  const CVector i = nodal_currents(build_admittance(net, SlackTerm::exclude), sol.v);
  const Complex s2 = sol.v(1) * std::conj(i(1));
  EXPECT_NEAR(s2.real(), -0.1, 1e-8);
  EXPECT_NEAR(s2.imag(), 0.0, 1e-8);
  EXPECT_LE(sol.power_residual, 1e-7);
}

TEST(LoadFlow, NoRealSolutionIsReported) {
  EXPECT_THROW(solve_loadflow(resistive_pair(), load_at_bus2(3.0)), HypothesisViolation);
}

TEST(LoadFlow, BadOptionsRejected) {
  EXPECT_THROW(solve_loadflow(resistive_pair(), load_at_bus2(0.1), {0.0, 10}), ValidationError);
  EXPECT_THROW(solve_loadflow(resistive_pair(), load_at_bus2(0.1), {1e-8, 0}), ValidationError);
  EXPECT_THROW(solve_loadflow(resistive_pair(), CVector::Zero(3)), ValidationError);
}

TEST(NodalCurrents, IdentityAndEqualVoltages) {
  CVector v(2);
  v << Complex(0.3, 0.1), Complex(-1, 2);
  EXPECT_EQ(nodal_currents(CMatrix::Identity(2, 2), v), v);
  const Complex z = 1.0 / Complex(1.0, -2.0);
  const auto net = build_network({1, 2}, 1, {LineSpec::uniform(1, 2, z)}, {1, {}, 300, 0.1});
  const CVector i = nodal_currents(build_admittance(net, SlackTerm::exclude), CVector::Ones(2));
  EXPECT_LT(i.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LoadFlow, ThreePhaseFeederConverges) {
  FeederSpec spec;
  spec.buses = 10;
  spec.branching = 2;
  const auto net = generate_feeder(spec);
  const auto prof = synthetic_profile(net, 20, {}, 5);
  const auto solver = LoadFlowSolver::for_network(net);
  for (const auto& s : prof.steps) {
    const auto sol = solver.solve(s);
    EXPECT_LE(sol.power_residual, 1e-7);
  }
}

TEST(InjectionCsv, ParsesRowsAndFillsGaps) {
  FeederSpec spec;
  spec.buses = 3;
  spec.phases = 1;
  const auto net = generate_feeder(spec);
  std::istringstream in("k,bus,phase,P_pu,Q_pu\n0,2,1,-0.1,-0.02\n2,3,1,0.05,0\n1,1,1,9,9\n");
  const auto prof = read_injection_csv(in, net);
  EXPECT_EQ(prof.horizon(), 3);
  EXPECT_EQ(prof.steps[0](1), Complex(-0.1, -0.02));
  EXPECT_EQ(prof.steps[1], CVector::Zero(3));  // slack row dropped
  EXPECT_EQ(prof.steps[2](2), Complex(0.05, 0.0));
}

TEST(InjectionCsv, RejectsBadRows) {
  FeederSpec spec;
  spec.buses = 3;
  spec.phases = 1;
  const auto net = generate_feeder(spec);
  for (const char* body : {"k,bus,phase,P,Q\n0,7,1,0,0\n", "k,bus,phase,P,Q\n0,2,2,0,0\n", "k,bus,phase,P,Q\n0,2,1\n",
                           "k,bus,phase,P,Q\n-1,2,1,0,0\n", "k,bus,phase,P,Q\n", ""}) {
    std::istringstream in(body);
    EXPECT_THROW(read_injection_csv(in, net), ValidationError) << body;
  }
}

TEST(SyntheticProfile, BoundedAndReproducible) {
  const auto net = generate_feeder({});
  SyntheticProfileSpec spec;
  spec.step = 0.05;
  spec.bound = 0.2;
  const auto a = synthetic_profile(net, 300, spec, 9);
  const auto b = synthetic_profile(net, 300, spec, 9);
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    ASSERT_EQ(a.steps[k], b.steps[k]);
    EXPECT_LE(a.steps[k].real().cwiseAbs().maxCoeff(), 0.2);
    EXPECT_LE(a.steps[k].imag().cwiseAbs().maxCoeff(), 0.2);
    EXPECT_EQ(a.steps[k].head(3), CVector::Zero(3));  // slack bus
  }
  EXPECT_NE(a.steps[5], synthetic_profile(net, 300, spec, 10).steps[5]);
}
