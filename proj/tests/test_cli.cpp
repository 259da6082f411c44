// SPDX-License-Identifier: MIT
//
// Harness tests:
//  - config schema: defaults on a minimal file, strict unknown-key
//    rejection at every nesting level, required dims, range validation,
//    scheme and init-mode name checking
//  - row formatting: exact byte layout including nan columns
//  - aggregation: hand-computed means and 95% half-widths, infeasible
//    rows counted but not averaged, cell order follows first appearance
//  - end-to-end runs: rerunning the same config reproduces both CSVs
//    byte-for-byte (also across worker counts), the aggregate file is
//    recomputable from the raw file, trace files appear on request, the
//    exit code reflects per-cell feasibility, and an unwritable output
//    prefix fails before any solve starts

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "irsbeam/cli.hpp"

using namespace irsbeam;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("irsbeam_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

cli::ExperimentConfig tiny_config(const std::string& prefix) {
  cli::ExperimentConfig cfg;
  cfg.dims = Dims{3, 4, 2};
  cfg.trials = 2;
  cfg.xi_list = {0.02};
  cfg.schemes = {Scheme::ao};
  cfg.seed = 1;
  cfg.oracle_samples = 400;
  cfg.out_prefix = prefix;
  return cfg;
}

}  // namespace

TEST_CASE("minimal config fills documented defaults") {
  const nlohmann::json j = {{"dims", {{"nt", 3}, {"m", 4}, {"ne", 2}}}};
  const cli::ExperimentConfig cfg = cli::config_from_json(j);
  REQUIRE(cfg.dims.nt == 3);
  REQUIRE(cfg.dims.m == 4);
  REQUIRE(cfg.dims.ne == 2);
  REQUIRE(cfg.delta == 0.1);
  REQUIRE(cfg.trials == 100);
  REQUIRE(cfg.seed == 1);
  REQUIRE(cfg.r_q == 1.0);
  REQUIRE(cfg.r_m == 1.0);
  REQUIRE(cfg.xi_list == std::vector<double>{0.01, 0.02, 0.05, 0.1});
  REQUIRE(cfg.schemes == std::vector<Scheme>{Scheme::ao});
  REQUIRE(cfg.init_theta_mode == ThetaInit::random_phase);
  REQUIRE(cfg.max_outer_iters == 30);
  REQUIRE(cfg.out_prefix == "results");
}

TEST_CASE("config rejects unknown keys, missing dims, bad ranges") {
  using nlohmann::json;
  const json dims = {{"nt", 3}, {"m", 4}, {"ne", 2}};

  REQUIRE_THROWS_WITH(cli::config_from_json(json{{"dims", dims},
                                                 {"bogus", 1}}),
                      Catch::Matchers::ContainsSubstring("bogus"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{
          {"dims", dims}, {"geometry", {{"d_bi", 50.0}, {"oops", 1}}}}),
      Catch::Matchers::ContainsSubstring("geometry.oops"));
  REQUIRE_THROWS_WITH(cli::config_from_json(json{{"trials", 3}}),
                      Catch::Matchers::ContainsSubstring("dims"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{{"dims", {{"nt", 3}, {"m", 4}}}}),
      Catch::Matchers::ContainsSubstring("dims.ne"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{{"dims", dims}, {"r_q", -0.5}}),
      Catch::Matchers::ContainsSubstring("r_q"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{{"dims", dims}, {"trials", 0}}),
      Catch::Matchers::ContainsSubstring("trials"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(
          json{{"dims", dims}, {"xi_list", json::array()}}),
      Catch::Matchers::ContainsSubstring("xi_list"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{{"dims", dims},
                                 {"schemes", {"warp_drive"}}}),
      Catch::Matchers::ContainsSubstring("warp_drive"));
  REQUIRE_THROWS_WITH(
      cli::config_from_json(json{{"dims", dims}, {"init_theta", "spiral"}}),
      Catch::Matchers::ContainsSubstring("spiral"));
}

TEST_CASE("full config round-trips every field") {
  const nlohmann::json j = {
      {"dims", {{"nt", 8}, {"m", 10}, {"ne", 3}}},
      {"geometry", {{"d_bi", 40.0}, {"r_b", 1.5}, {"r_i", 3.0}}},
      {"fading", {{"alpha_irs", 2.2}, {"alpha_bs", 3.6}}},
      {"r_q", 2.0},
      {"r_m", 0.5},
      {"delta", 0.05},
      {"max_outer_iters", 12},
      {"xi_list", {0.05, 0.1}},
      {"m_list", {5, 10}},
      {"schemes", {"ao", "epa", "random_phase"}},
      {"trials", 7},
      {"seed", 99},
      {"init_theta", "all_ones"},
      {"oracle_samples", 0},
      {"workers", 2},
      {"out_prefix", "runout"}};
  const cli::ExperimentConfig cfg = cli::config_from_json(j);
  REQUIRE(cfg.dims.nt == 8);
  REQUIRE(cfg.d_bi == 40.0);
  REQUIRE(cfg.r_b == 1.5);
  REQUIRE(cfg.r_i == 3.0);
  REQUIRE(cfg.fading.alpha_irs == 2.2);
  REQUIRE(cfg.fading.alpha_bs == 3.6);
  REQUIRE(cfg.r_q == 2.0);
  REQUIRE(cfg.r_m == 0.5);
  REQUIRE(cfg.delta == 0.05);
  REQUIRE(cfg.max_outer_iters == 12);
  REQUIRE(cfg.m_list == std::vector<int>{5, 10});
  REQUIRE(cfg.schemes == std::vector<Scheme>{Scheme::ao, Scheme::epa,
                                             Scheme::random_phase});
  REQUIRE(cfg.trials == 7);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.init_theta_mode == ThetaInit::all_ones);
  REQUIRE(cfg.oracle_samples == 0);
  REQUIRE(cfg.workers == 2);
  REQUIRE(cfg.out_prefix == "runout");
}

TEST_CASE("row formatting is exact, including infeasible rows") {
  cli::TrialRow r;
  r.xi = 0.05;
  r.m = 5;
  r.scheme = Scheme::epa;
  r.trial = 3;
  r.seed = 42;
  r.feasible = true;
  r.converged = true;
  r.outer_iters = 4;
  r.power = 12.5;
  r.power_db = 10.0 * std::log10(12.5);
  r.signal_power = 10.0;
  r.an_power = 2.5;
  r.secrecy_margin = 0.25;
  REQUIRE(cli::format_row(r) ==
          "0.05,5,epa,3,42,1,1,4,12.5,10.96910013,10,2.5,0.25");

  cli::TrialRow bad;
  bad.xi = 0.1;
  bad.m = 4;
  bad.trial = 0;
  bad.seed = 7;
  bad.outer_iters = 1;
  REQUIRE(cli::format_row(bad) ==
          "0.1,4,ao,0,7,0,0,1,nan,nan,nan,nan,nan");
}

TEST_CASE("aggregation matches hand arithmetic") {
  std::vector<cli::TrialRow> rows;
  for (int t = 0; t < 3; ++t) {
    cli::TrialRow r;
    r.xi = 0.02;
    r.m = 4;
    r.scheme = Scheme::ao;
    r.trial = t;
    r.feasible = true;
    r.converged = (t != 1);
    r.power = 1.0 + t;           // {1, 2, 3}
    r.power_db = 10.0 * std::log10(r.power);
    r.signal_power = 0.5;
    r.an_power = 0.25;
    r.secrecy_margin = 0.1 * t;  // {0, 0.1, 0.2}
    rows.push_back(r);
  }
  cli::TrialRow dead;
  dead.xi = 0.02;
  dead.m = 4;
  dead.scheme = Scheme::ao;
  dead.trial = 3;
  rows.push_back(dead);
  cli::TrialRow other;
  other.xi = 0.05;
  other.m = 4;
  other.scheme = Scheme::ao;
  other.trial = 0;
  other.feasible = true;
  other.power = 7.0;
  other.power_db = 10.0 * std::log10(7.0);
  other.signal_power = 6.0;
  other.an_power = 1.0;
  other.secrecy_margin = 0.3;
  rows.push_back(other);

  const std::vector<cli::Aggregate> cells = cli::aggregate_rows(rows);
  REQUIRE(cells.size() == 2);
  const cli::Aggregate& a = cells[0];
  REQUIRE(a.xi == 0.02);
  REQUIRE(a.trials == 4);
  REQUIRE(a.feasible == 3);
  REQUIRE(a.converged == 2);
  REQUIRE(a.mean_power == Catch::Approx(2.0).margin(1e-12));
  // Sample sd of {1,2,3} is 1; half-width 1.96/sqrt(3).
  REQUIRE(a.ci95_power ==
          Catch::Approx(1.96 / std::sqrt(3.0)).margin(1e-12));
  REQUIRE(a.mean_an == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(a.ci95_an == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(a.mean_margin == Catch::Approx(0.1).margin(1e-12));
  const cli::Aggregate& b = cells[1];
  REQUIRE(b.xi == 0.05);
  REQUIRE(b.feasible == 1);
  REQUIRE(b.ci95_power == 0.0);
  REQUIRE(b.mean_power == Catch::Approx(7.0).margin(1e-12));
}

TEST_CASE("experiment reruns are byte-identical and self-consistent") {
  const fs::path dir = fresh_dir("cli_e2e");
  const std::string p1 = (dir / "a").string();
  const std::string p2 = (dir / "b").string();
  const std::string p3 = (dir / "c").string();

  cli::ExperimentConfig cfg = tiny_config(p1);
  cfg.write_trace = true;
  const int rc1 = cli::run_experiment(cfg);

  cli::ExperimentConfig cfg2 = tiny_config(p2);
  const int rc2 = cli::run_experiment(cfg2);

  cli::ExperimentConfig cfg3 = tiny_config(p3);
  cfg3.workers = 3;  // scheduling must not leak into the files
  const int rc3 = cli::run_experiment(cfg3);

  REQUIRE(rc1 == rc2);
  REQUIRE(rc1 == rc3);
  const std::string raw = slurp(p1 + "_raw.csv");
  REQUIRE(raw == slurp(p2 + "_raw.csv"));
  REQUIRE(raw == slurp(p3 + "_raw.csv"));
  const std::string agg = slurp(p1 + "_agg.csv");
  REQUIRE(agg == slurp(p2 + "_agg.csv"));
  REQUIRE(agg == slurp(p3 + "_agg.csv"));

  // Raw file shape: header + trials rows, constant column count.
  const std::vector<std::string> lines = split(raw, '\n');
  REQUIRE(lines.front() == cli::kRawHeader);
  REQUIRE(lines.size() == 1 + 2 + 1);  // header + 2 rows + trailing empty
  const std::size_t ncols = split(lines[0], ',').size();
  int feasible = 0;
  double power_sum = 0.0;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const std::vector<std::string> cols = split(lines[i], ',');
    REQUIRE(cols.size() == ncols);
    if (cols[5] == "1") {
      ++feasible;
      power_sum += std::stod(cols[8]);
    }
  }

  // Aggregate file recomputable from the raw file.
  const std::vector<std::string> agg_lines = split(agg, '\n');
  REQUIRE(agg_lines.front() == cli::kAggHeader);
  REQUIRE(agg_lines.size() == 3);  // header + 1 cell + trailing empty
  const std::vector<std::string> cell = split(agg_lines[1], ',');
  REQUIRE(std::stoi(cell[4]) == feasible);
  if (feasible > 0) {
    REQUIRE(std::stod(cell[7]) ==
            Catch::Approx(power_sum / feasible).epsilon(1e-9));
  }

  // Exit code mirrors per-cell feasibility.
  REQUIRE(rc1 == (feasible > 0 ? 0 : 1));

  // Trace files only for the run that asked for them.
  REQUIRE(fs::exists(p1 + "_trace_ao_xi0.02_m4_t0.csv"));
  REQUIRE_FALSE(fs::exists(p2 + "_trace_ao_xi0.02_m4_t0.csv"));
  const std::string trace = slurp(p1 + "_trace_ao_xi0.02_m4_t0.csv");
  REQUIRE(trace.rfind("outer_iter,stage,objective,feasible", 0) == 0);

  fs::remove_all(dir);
}

TEST_CASE("unwritable output prefix fails before any solve") {
  cli::ExperimentConfig cfg = tiny_config("/nonexistent_dir_xyz/run");
  cfg.trials = 1000000;  // would take forever if it actually ran
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE_THROWS_AS(cli::run_experiment(cfg), std::runtime_error);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE(secs < 1.0);
}
