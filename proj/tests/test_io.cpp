#include "seqkf/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace seqkf;

namespace {

StimuliSet sample_stimuli() {
  ScenarioConfig cfg;
  FeederSpec spec;
  spec.buses = 3;
  cfg.network = generate_feeder(spec);
  cfg.pmu_buses = {1, 2, 3};
  cfg.horizon = 4;
  return generate_stimuli(cfg, 3);
}

}  // namespace

TEST(Format, RoundTripsDoubles) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) EXPECT_EQ(std::stod(format_number(v)), v);
}

TEST(StimuliFile, RoundTripIsExact) {
  const auto st = sample_stimuli();
  std::stringstream buf;
  write_stimuli(buf, st);
  const std::string text = buf.str();
  const auto back = read_stimuli(buf);
  EXPECT_EQ(back.states, st.states);
  EXPECT_EQ(back.measurements, st.measurements);
  EXPECT_EQ(back.buses, st.buses);
  EXPECT_EQ(back.h, st.h);
  EXPECT_EQ(back.r, st.r);
  EXPECT_EQ(back.q, st.q);
  EXPECT_EQ(back.max_power_residual, st.max_power_residual);
  for (std::size_t k = 0; k < st.z.size(); ++k) {
    EXPECT_EQ(back.z[k], st.z[k]);
    EXPECT_EQ(back.truth[k], st.truth[k]);
  }
  std::stringstream again;
  write_stimuli(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(StimuliFile, RejectsCorruption) {
  const auto st = sample_stimuli();
  std::stringstream buf;
  write_stimuli(buf, st);
  const std::string text = buf.str();
  auto fails = [](const std::string& s) {
    std::istringstream in(s);
    EXPECT_THROW(read_stimuli(in), ValidationError) << s.substr(0, 40);
  };
  fails("layout,2\n" + text.substr(text.find('\n') + 1));
  fails(text.substr(0, text.size() / 2));
  std::string bad = text;
  bad.replace(bad.find("[z]\n0,") + 6, 1, "x");
  fails(bad);
  fails("");
}

TEST(ResponseFile, RoundTrip) {
  const auto st = sample_stimuli();
  const auto rs = run_mut(st, 2);
  std::stringstream buf;
  write_responses(buf, rs);
  const auto back = read_responses(buf);
  EXPECT_EQ(back.producer, "MUT");
  EXPECT_EQ(back.cycles_per_step, rs.cycles_per_step);
  EXPECT_EQ(back.add_sub_per_step, rs.add_sub_per_step);
  ASSERT_EQ(back.horizon(), rs.horizon());
  for (std::size_t k = 0; k < rs.x.size(); ++k) EXPECT_EQ(back.x[k], rs.x[k]);
}

TEST(Report, HasOneRowPerChannelAndMetric) {
  const auto st = sample_stimuli();
  const auto gm = run_golden(st);
  std::stringstream buf;
  write_report(buf, compare_responses(st, gm, run_mut(st, 4)));
  int rows = 0;
  std::string line;
  while (std::getline(buf, line))
    if (!line.empty() && line[0] != '#') ++rows;
  EXPECT_EQ(rows, 1 + 9 * 4 + 2);
}

TEST(NetworkJson, MatrixListAndScalarImpedances) {
  const auto j = nlohmann::json::parse(R"({
    "phases": 3, "buses": [10, 20, 30],
    "lines": [
      {"from": 10, "to": 20, "r": 0.02, "x": 0.04, "r_mutual": 0.005, "x_mutual": 0.01, "b": 0.001},
      {"from": 20, "to": 30, "r": [0.01, 0.02, 0.03], "x": [[0.1, 0.01, 0.01], [0.01, 0.1, 0.01], [0.01, 0.01, 0.1]],
       "b": [0, 0, 0.002]}
    ],
    "slack": {"bus": 10, "v": 1.02, "s_sc": 250, "r_over_x": 0.2},
    "pmus": [10, 30]
  })");
  const auto nf = parse_network(j);
  const auto& net = nf.network;
  EXPECT_EQ(net.phases(), 3);
  EXPECT_EQ(nf.pmu_buses, (std::vector<int>{10, 30}));
  const auto& l0 = net.lines()[0];
  EXPECT_EQ(l0.series_impedance(0, 0), Complex(0.02, 0.04));
  EXPECT_EQ(l0.series_impedance(0, 1), Complex(0.005, 0.01));
  const auto& l1 = net.lines()[1];
  EXPECT_EQ(l1.series_impedance(2, 2), Complex(0.03, 0.1));
  EXPECT_EQ(l1.series_impedance(1, 2), Complex(0.0, 0.01));
  EXPECT_EQ(l1.shunt_susceptance(2), 0.002);
  EXPECT_NEAR(net.slack().voltage[1].magnitude(), 1.02, 1e-15);
  EXPECT_EQ(net.slack().short_circuit_power, 250);
}

TEST(NetworkJson, Errors) {
  EXPECT_THROW(parse_network(nlohmann::json::parse(R"({"buses": [1]})")), ValidationError);
  EXPECT_THROW(parse_network(nlohmann::json::parse(
                   R"({"phases": 3, "buses": [1, 2], "lines": [{"from": 1, "to": 2, "r": [1, 2], "x": 1}],
                       "slack": {"bus": 1}})")),
               ValidationError);
  EXPECT_THROW(parse_network(nlohmann::json::parse(
                   R"({"buses": [1, 2], "lines": [{"from": 1, "to": 2, "r": "a", "x": 1}], "slack": {"bus": 1}})")),
               ValidationError);
  EXPECT_THROW(read_network("/nonexistent/net.json"), ValidationError);
}

TEST(ScenarioJson, SampleConfigs) {
  const auto big = read_scenario(std::string(SEQKF_DATA_DIR) + "/scenario_feeder8.json");
  EXPECT_EQ(big.network.bus_count(), 8);
  EXPECT_EQ(big.pmu_buses.size(), 8u);
  EXPECT_EQ(big.horizon, 2000);
  EXPECT_EQ(big.noise.seed, 42u);
  EXPECT_EQ(big.precision, Precision::binary32);
  EXPECT_EQ(big.measurement_slack_term, SlackTerm::exclude);

  const auto small = read_scenario(std::string(SEQKF_DATA_DIR) + "/scenario_small.json");
  EXPECT_EQ(small.network.bus_count(), 4);
  ASSERT_TRUE(small.injections.has_value());
  EXPECT_EQ(small.injections->horizon(), 50);
  EXPECT_EQ(small.parallelism, 2);
  EXPECT_EQ(small.loadflow.max_iterations, 100);
  const auto st = generate_stimuli(small, small.noise.seed);
  EXPECT_EQ(st.horizon(), 50);
}

TEST(ScenarioJson, Errors) {
  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"horizon": 3})")), ValidationError);
  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"feeder": {}, "precision": 16})")), ValidationError);
  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"feeder": {}, "horizon": 0})")), ValidationError);
  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"feeder": {}, "pmus": "some"})")), ValidationError);
  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"feeder": {}, "arith": {"div": {"latency": 0}}})")),
               ValidationError);
  const auto cfg = parse_scenario(nlohmann::json::parse(R"({"feeder": {"buses": 5}, "arith": {"budget_words": 99}})"));
  EXPECT_EQ(cfg.arith.budget_words, 99);
  EXPECT_FALSE(cfg.pmu_buses.empty());
}
