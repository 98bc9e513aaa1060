// seqkf: command-line front end for the state-estimation testbench.
//
//   seqkf gen      --config scenario.json [--seed N] --out stimuli.csv
//   seqkf run-gm   --stimuli stimuli.csv --out gm.csv
//   seqkf run-mut  --stimuli stimuli.csv [--parallelism P] [--precision 32|64] [--config scenario.json] --out mut.csv
//   seqkf compare  --stimuli stimuli.csv --gm gm.csv --mut mut.csv --out report.csv
//   seqkf sweep    [--sizes 16,32,...] [--parallelism P] [--seed N] [--wall-time] [--config scenario.json] --out sweep.csv
//   seqkf table-a  [--out table.csv]
//   seqkf counts   [--sizes 1,2,4,...] [--out counts.csv]
//
// Exit status: 0 success, 2 invalid input, 3 numerical hypothesis violated.

#include "seqkf/io.hpp"
#include "seqkf/noise.hpp"
#include "seqkf/testbench.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace seqkf;

template <typename Writer>
void emit(const std::string& out_path, Writer&& writer) {
  if (out_path.empty() || out_path == "-") {
    writer(std::cout);
    std::cout.flush();
  } else {
    write_file(out_path, writer);
  }
}

void table_a(std::ostream& out) {
  const auto u = PolarUncertainty::from_max_error(1e-3, 1.5e-3);
  const std::pair<const char*, double> rows[] = {{"0", 0.0},           {"pi/6", kPi / 6},
                                                 {"pi/3", kPi / 3},    {"pi/2", kPi / 2},
                                                 {"2pi/3", 2 * kPi / 3}, {"5pi/6", 5 * kPi / 6},
                                                 {"pi", kPi}};
  out << "delta,delta_rad,sigma_r,sigma_i\n";
  char buf[96];
  for (const auto& [name, d] : rows) {
    const auto v = polar_to_rect_variance(1.0, d, u.sigma_m, u.sigma_p);
    std::snprintf(buf, sizeof buf, "%s,%s,%.3e,%.3e\n", d == 0.0 || d == kPi ? name : (std::string("+-") + name).c_str(),
                  format_number(d).c_str(), v.sigma_r(), v.sigma_i());
    out << buf;
  }
}

void counts(std::ostream& out, const std::vector<long long>& sizes) {
  out << "algorithm,S,D,add_sub,mul_div,inversion_add_sub,inversion_mul_div\n";
  for (Algorithm alg : {Algorithm::DKF, Algorithm::SDKF})
    for (long long s : sizes)
      for (long long d : sizes) {
        const auto c = closed_form_op_count(alg, s, d);
        out << (alg == Algorithm::DKF ? "DKF" : "SDKF") << ',' << s << ',' << d << ',' << c.add_sub << ','
            << c.mul_div << ',' << c.inversion_add_sub << ',' << c.inversion_mul_div << '\n';
      }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Kalman filter state-estimation testbench"};
  app.require_subcommand(1);

  std::string config, out, stimuli, gm, mut;
  std::optional<std::uint64_t> seed;
  std::optional<Index> parallelism;
  std::optional<int> precision;
  std::vector<long long> sizes;
  bool wall_time = false;

  auto* gen = app.add_subcommand("gen", "generate stimuli from a scenario config");
  gen->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "noise / profile seed (default: the config's noise.seed)");
  gen->add_option("--out", out, "stimuli CSV (default stdout)");

  auto* gm_cmd = app.add_subcommand("run-gm", "run the binary64 batch filter on stimuli");
  gm_cmd->add_option("--stimuli", stimuli)->required()->check(CLI::ExistingFile);
  gm_cmd->add_option("--out", out, "responses CSV (default stdout)");

  auto* mut_cmd = app.add_subcommand("run-mut", "run the blocked sequential filter on stimuli");
  mut_cmd->add_option("--stimuli", stimuli)->required()->check(CLI::ExistingFile);
  mut_cmd->add_option("--parallelism,-P", parallelism, "block size P (default 4 or the config's)");
  mut_cmd->add_option("--precision", precision, "32 or 64 (default 32 or the config's)");
  mut_cmd->add_option("--config", config, "scenario JSON for parallelism, precision and arith")
      ->check(CLI::ExistingFile);
  mut_cmd->add_option("--out", out, "responses CSV (default stdout)");

  auto* compare = app.add_subcommand("compare", "error and mismatch quantiles");
  compare->add_option("--stimuli", stimuli)->required()->check(CLI::ExistingFile);
  compare->add_option("--gm", gm)->required()->check(CLI::ExistingFile);
  compare->add_option("--mut", mut)->required()->check(CLI::ExistingFile);
  compare->add_option("--out", out, "report CSV (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "cycle-cost scalability sweep with S = D");
  sweep->add_option("--sizes", sizes, "strictly increasing S values (default 16..256 step 16)")->delimiter(',');
  sweep->add_option("--parallelism,-P", parallelism, "block size P (default 4)");
  sweep->add_option("--seed", seed, "instance seed for --wall-time (default 1)");
  sweep->add_flag("--wall-time", wall_time, "also time the blocked step (output is then not reproducible)");
  sweep->add_option("--config", config, "scenario JSON for arith")->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "sweep CSV (default stdout)");

  auto* table = app.add_subcommand("table-a", "rectangular sigmas of a 1 pu phasor with class-0.1 PMU errors");
  table->add_option("--out", out, "CSV (default stdout)");

  auto* cnt = app.add_subcommand("counts", "closed-form operation counts per filter cycle");
  cnt->add_option("--sizes", sizes, "S and D values (default 1,2,4,8,12,16,24,48)")->delimiter(',');
  cnt->add_option("--out", out, "CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::optional<ScenarioConfig> cfg;
    if (!config.empty()) cfg = read_scenario(config);

    if (gen->parsed()) {
      const auto st = generate_stimuli(*cfg, seed.value_or(cfg->noise.seed));
      emit(out, [&](std::ostream& o) { write_stimuli(o, st); });
    } else if (gm_cmd->parsed()) {
      const auto rs = run_golden(read_stimuli_file(stimuli));
      emit(out, [&](std::ostream& o) { write_responses(o, rs); });
    } else if (mut_cmd->parsed()) {
      const Index p = parallelism.value_or(cfg ? cfg->parallelism : 4);
      if (p < 1) throw ValidationError("parallelism must be >= 1");
      const Precision prec = precision ? parse_precision(*precision) : (cfg ? cfg->precision : Precision::binary32);
      const auto rs = run_mut(read_stimuli_file(stimuli), p, prec, cfg ? cfg->arith : ArithConfig{});
      emit(out, [&](std::ostream& o) { write_responses(o, rs); });
    } else if (compare->parsed()) {
      const auto rep = compare_responses(read_stimuli_file(stimuli), read_responses_file(gm), read_responses_file(mut));
      emit(out, [&](std::ostream& o) { write_report(o, rep); });
    } else if (sweep->parsed()) {
      std::vector<Index> s(sizes.begin(), sizes.end());
      if (s.empty())
        for (Index v = 16; v <= 256; v += 16) s.push_back(v);
      const Index p = parallelism.value_or(4);
      if (p < 1) throw ValidationError("parallelism must be >= 1");
      SweepOptions opts;
      opts.wall_time = wall_time;
      if (cfg) opts.arith = cfg->arith;
      const auto rep = scalability_sweep(s, p, seed.value_or(1), opts);
      emit(out, [&](std::ostream& o) { write_sweep(o, rep); });
    } else if (table->parsed()) {
      emit(out, table_a);
    } else if (cnt->parsed()) {
      if (sizes.empty()) sizes = {1, 2, 4, 8, 12, 16, 24, 48};
      emit(out, [&](std::ostream& o) { counts(o, sizes); });
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const HypothesisViolation& e) {
    std::cerr << "hypothesis violated: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
