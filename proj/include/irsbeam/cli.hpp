// SPDX-License-Identifier: MIT
//
// Experiment harness support: strict JSON config parsing, the Monte-Carlo
// sweep runner with a deterministic worker pool, and CSV emission. Kept
// out of the simulator binary so the schema, the trial runner, and the
// aggregation arithmetic stay unit-testable.
//
// Reproducibility contract: every trial index derives its own seed from
// the experiment seed, and that seed feeds both the channel draw and the
// phase-initialization stream. Rows are written in task order (sweep
// point, then scheme, then trial), never in completion order, so reruns
// produce byte-identical CSVs regardless of the worker count. Wall-clock
// times are deliberately absent from all output files for the same
// reason.
//
// The aggregate file reports, per (xi_n, M, scheme) cell, means over the
// feasible trials and 95% normal-approximation half-widths
// 1.96 * s / sqrt(n) (sample standard deviation, zero when n < 2);
// infeasible trials are counted, not averaged.

#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "irsbeam/ao.hpp"
#include "irsbeam/rates.hpp"

namespace irsbeam {
namespace cli {

struct ExperimentConfig {
  Dims dims{0, 0, 0};  // required in every config
  double d_bi = 50.0;  // base station to surface distance, meters
  double r_b = 2.0;    // user-1/eavesdropper disc radius at the BS end
  double r_i = 2.0;    // user-2 disc radius at the surface end
  FadingParams fading;
  double r_q = 1.0;
  double r_m = 1.0;
  double delta = 0.1;
  int max_outer_iters = 30;
  std::vector<double> xi_list = {0.01, 0.02, 0.05, 0.1};
  std::vector<int> m_list;  // empty means: use dims.m only
  std::vector<Scheme> schemes = {Scheme::ao};
  int trials = 100;
  std::uint64_t seed = 1;
  ThetaInit init_theta_mode = ThetaInit::random_phase;
  int oracle_samples = 2000;  // secrecy-margin column; 0 disables it
  int workers = 0;            // 0 means: hardware concurrency
  std::string out_prefix = "results";
  bool write_trace = false;   // per-trial outer-trace CSVs
};

inline void validate(const ExperimentConfig& cfg) {
  const auto fail = [](const std::string& what) {
    throw std::runtime_error("invalid config: " + what);
  };
  if (cfg.dims.nt < 1 || cfg.dims.m < 1 || cfg.dims.ne < 1) {
    fail("dims must all be >= 1");
  }
  if (cfg.trials < 1) fail("trials must be >= 1");
  if (cfg.xi_list.empty()) fail("xi_list must be non-empty");
  if (cfg.schemes.empty()) fail("schemes must be non-empty");
  for (double xi : cfg.xi_list) {
    if (xi < 0.0) fail("xi_list entries must be >= 0");
  }
  for (int m : cfg.m_list) {
    if (m < 1) fail("m_list entries must be >= 1");
  }
  if (cfg.r_q < 0.0) fail("r_q must be >= 0");
  if (cfg.r_m < 0.0) fail("r_m must be >= 0");
  if (cfg.delta <= 0.0) fail("delta must be > 0");
  if (cfg.max_outer_iters < 1) fail("max_outer_iters must be >= 1");
  if (cfg.oracle_samples < 0) fail("oracle_samples must be >= 0");
  if (cfg.d_bi <= 0.0) fail("geometry.d_bi must be > 0");
  if (cfg.r_b < 0.0 || cfg.r_i < 0.0) fail("geometry radii must be >= 0");
}

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::string& scope,
                        std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("unknown config key: " + scope + it.key());
    }
  }
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::expect_keys(
      j, "",
      {"dims", "geometry", "fading", "r_q", "r_m", "delta",
       "max_outer_iters", "xi_list", "m_list", "schemes", "trials", "seed",
       "init_theta", "oracle_samples", "workers", "out_prefix"});

  if (!j.contains("dims")) {
    throw std::runtime_error("missing config key: dims");
  }
  const nlohmann::json& dims = j.at("dims");
  detail::expect_keys(dims, "dims.", {"nt", "m", "ne"});
  for (const char* k : {"nt", "m", "ne"}) {
    if (!dims.contains(k)) {
      throw std::runtime_error(std::string("missing config key: dims.") +
                               k);
    }
  }
  cfg.dims.nt = dims.at("nt").get<int>();
  cfg.dims.m = dims.at("m").get<int>();
  cfg.dims.ne = dims.at("ne").get<int>();

  if (j.contains("geometry")) {
    const nlohmann::json& g = j.at("geometry");
    detail::expect_keys(g, "geometry.", {"d_bi", "r_b", "r_i"});
    detail::read_into(g, "d_bi", cfg.d_bi);
    detail::read_into(g, "r_b", cfg.r_b);
    detail::read_into(g, "r_i", cfg.r_i);
  }
  if (j.contains("fading")) {
    const nlohmann::json& f = j.at("fading");
    detail::expect_keys(f, "fading.", {"alpha_irs", "alpha_bs"});
    detail::read_into(f, "alpha_irs", cfg.fading.alpha_irs);
    detail::read_into(f, "alpha_bs", cfg.fading.alpha_bs);
  }
  detail::read_into(j, "r_q", cfg.r_q);
  detail::read_into(j, "r_m", cfg.r_m);
  detail::read_into(j, "delta", cfg.delta);
  detail::read_into(j, "max_outer_iters", cfg.max_outer_iters);
  detail::read_into(j, "xi_list", cfg.xi_list);
  detail::read_into(j, "m_list", cfg.m_list);
  detail::read_into(j, "trials", cfg.trials);
  detail::read_into(j, "seed", cfg.seed);
  detail::read_into(j, "oracle_samples", cfg.oracle_samples);
  detail::read_into(j, "workers", cfg.workers);
  detail::read_into(j, "out_prefix", cfg.out_prefix);

  if (j.contains("schemes")) {
    cfg.schemes.clear();
    for (const nlohmann::json& s : j.at("schemes")) {
      Scheme sch;
      const std::string name = s.get<std::string>();
      if (!parse_scheme(name, sch)) {
        throw std::runtime_error("unknown scheme in config: " + name);
      }
      cfg.schemes.push_back(sch);
    }
  }
  if (j.contains("init_theta")) {
    const std::string mode = j.at("init_theta").get<std::string>();
    if (mode == "random_phase") {
      cfg.init_theta_mode = ThetaInit::random_phase;
    } else if (mode == "all_ones") {
      cfg.init_theta_mode = ThetaInit::all_ones;
    } else {
      throw std::runtime_error("unknown init_theta mode: " + mode);
    }
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

// One raw-CSV row. Power columns are NaN (printed as "nan") for
// infeasible trials.
struct TrialRow {
  double xi = 0.0;
  int m = 0;
  Scheme scheme = Scheme::ao;
  int trial = 0;
  std::uint64_t seed = 0;
  bool feasible = false;
  bool converged = false;
  int outer_iters = 0;
  double power = std::numeric_limits<double>::quiet_NaN();
  double power_db = std::numeric_limits<double>::quiet_NaN();
  double signal_power = std::numeric_limits<double>::quiet_NaN();
  double an_power = std::numeric_limits<double>::quiet_NaN();
  double secrecy_margin = std::numeric_limits<double>::quiet_NaN();
  OuterTrace trace;  // kept in memory for optional trace emission
};

inline TrialRow run_trial(const ExperimentConfig& cfg, double xi, int m,
                          Scheme scheme, int trial) {
  TrialRow row;
  row.xi = xi;
  row.m = m;
  row.scheme = scheme;
  row.trial = trial;
  row.seed = derive_seed(cfg.seed, 0x7121u,
                         static_cast<std::uint64_t>(trial));

  Dims dims = cfg.dims;
  dims.m = m;
  const ChannelSet cs = sample_trial(row.seed, dims, xi, cfg.d_bi, cfg.r_b,
                                     cfg.r_i, cfg.fading);
  AoConfig ao_cfg;
  ao_cfg.delta = cfg.delta;
  ao_cfg.max_outer_iters = cfg.max_outer_iters;
  ao_cfg.init_theta_mode = cfg.init_theta_mode;
  ao_cfg.scheme = scheme;
  ao_cfg.dims = dims;
  ao_cfg.r_q = cfg.r_q;
  ao_cfg.r_m = cfg.r_m;
  ao_cfg.xi_n = xi;

  Rng rng = trial_rng(row.seed);
  const AoResult res = run_ao(cs, ao_cfg, rng);
  row.trace = res.trace;
  row.feasible = res.feasible;
  row.converged = res.converged;
  row.outer_iters = res.outer_iters;
  if (!res.feasible) return row;

  row.power = res.objective;
  row.power_db = 10.0 * std::log10(res.objective);
  row.signal_power =
      res.sol.w1_cov.trace().real() + res.sol.w2_cov.trace().real();
  row.an_power =
      res.sol.an_cov.size() > 0 ? res.sol.an_cov.trace().real() : 0.0;
  if (cfg.oracle_samples > 0) {
    OracleParams op;
    op.n_samples = cfg.oracle_samples;
    op.seed = derive_seed(row.seed, 0x0bacu, 0);
    const double re1 =
        worst_case_eaves_rate(cs, res.sol, 1, op.n_samples,
                              op.n_ascent_steps, op.seed,
                              op.n_refine_starts);
    const double re2 =
        worst_case_eaves_rate(cs, res.sol, 2, op.n_samples,
                              op.n_ascent_steps, op.seed,
                              op.n_refine_starts);
    row.secrecy_margin = cfg.r_m - std::max(re1, re2);
  }
  return row;
}

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline const char* kRawHeader =
    "xi,m,scheme,trial,seed,feasible,converged,outer_iters,power,power_db,"
    "signal_power,an_power,secrecy_margin";

inline std::string format_row(const TrialRow& r) {
  std::string s;
  s += fmt(r.xi);
  s += ',' + std::to_string(r.m);
  s += ',';
  s += to_string(r.scheme);
  s += ',' + std::to_string(r.trial);
  s += ',' + std::to_string(r.seed);
  s += ',' + std::to_string(r.feasible ? 1 : 0);
  s += ',' + std::to_string(r.converged ? 1 : 0);
  s += ',' + std::to_string(r.outer_iters);
  s += ',' + fmt(r.power);
  s += ',' + fmt(r.power_db);
  s += ',' + fmt(r.signal_power);
  s += ',' + fmt(r.an_power);
  s += ',' + fmt(r.secrecy_margin);
  return s;
}

// Per-cell aggregate over the feasible trials of one (xi, M, scheme).
struct Aggregate {
  double xi = 0.0;
  int m = 0;
  Scheme scheme = Scheme::ao;
  int trials = 0;
  int feasible = 0;
  int converged = 0;
  double mean_power = std::numeric_limits<double>::quiet_NaN();
  double ci95_power = 0.0;
  double mean_power_db = std::numeric_limits<double>::quiet_NaN();
  double ci95_power_db = 0.0;
  double mean_signal = std::numeric_limits<double>::quiet_NaN();
  double ci95_signal = 0.0;
  double mean_an = std::numeric_limits<double>::quiet_NaN();
  double ci95_an = 0.0;
  double mean_margin = std::numeric_limits<double>::quiet_NaN();
};

inline const char* kAggHeader =
    "xi,m,scheme,trials,feasible_trials,infeasible_trials,"
    "converged_trials,mean_power,ci95_power,mean_power_db,ci95_power_db,"
    "mean_signal_power,ci95_signal_power,mean_an_power,ci95_an_power,"
    "mean_secrecy_margin";

namespace detail {

struct Welford {
  int n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double half_width() const {
    if (n < 2) return 0.0;
    return 1.96 * std::sqrt(m2 / (n - 1) / n);
  }
  double value() const {
    return n > 0 ? mean : std::numeric_limits<double>::quiet_NaN();
  }
};

}  // namespace detail

// Groups rows by (xi, M, scheme) preserving first-appearance order; rows
// arrive in canonical task order, so the output order is the sweep order.
inline std::vector<Aggregate> aggregate_rows(
    const std::vector<TrialRow>& rows) {
  std::vector<Aggregate> cells;
  std::vector<std::array<detail::Welford, 5>> stats;
  for (const TrialRow& r : rows) {
    int idx = -1;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].xi == r.xi && cells[i].m == r.m &&
          cells[i].scheme == r.scheme) {
        idx = static_cast<int>(i);
        break;
      }
    }
    if (idx < 0) {
      Aggregate a;
      a.xi = r.xi;
      a.m = r.m;
      a.scheme = r.scheme;
      cells.push_back(a);
      stats.emplace_back();
      idx = static_cast<int>(cells.size()) - 1;
    }
    Aggregate& a = cells[static_cast<std::size_t>(idx)];
    auto& w = stats[static_cast<std::size_t>(idx)];
    ++a.trials;
    if (!r.feasible) continue;
    ++a.feasible;
    if (r.converged) ++a.converged;
    w[0].add(r.power);
    w[1].add(r.power_db);
    w[2].add(r.signal_power);
    w[3].add(r.an_power);
    if (!std::isnan(r.secrecy_margin)) w[4].add(r.secrecy_margin);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    Aggregate& a = cells[i];
    const auto& w = stats[i];
    a.mean_power = w[0].value();
    a.ci95_power = w[0].half_width();
    a.mean_power_db = w[1].value();
    a.ci95_power_db = w[1].half_width();
    a.mean_signal = w[2].value();
    a.ci95_signal = w[2].half_width();
    a.mean_an = w[3].value();
    a.ci95_an = w[3].half_width();
    a.mean_margin = w[4].value();
  }
  return cells;
}

inline std::string format_aggregate(const Aggregate& a) {
  std::string s;
  s += fmt(a.xi);
  s += ',' + std::to_string(a.m);
  s += ',';
  s += to_string(a.scheme);
  s += ',' + std::to_string(a.trials);
  s += ',' + std::to_string(a.feasible);
  s += ',' + std::to_string(a.trials - a.feasible);
  s += ',' + std::to_string(a.converged);
  s += ',' + fmt(a.mean_power);
  s += ',' + fmt(a.ci95_power);
  s += ',' + fmt(a.mean_power_db);
  s += ',' + fmt(a.ci95_power_db);
  s += ',' + fmt(a.mean_signal);
  s += ',' + fmt(a.ci95_signal);
  s += ',' + fmt(a.mean_an);
  s += ',' + fmt(a.ci95_an);
  s += ',' + fmt(a.mean_margin);
  return s;
}

// Runs the full sweep. Returns 0 only if every (sweep point, scheme) cell
// produced at least one feasible trial.
inline int run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<int> ms =
      cfg.m_list.empty() ? std::vector<int>{cfg.dims.m} : cfg.m_list;

  // Open outputs before any solve so an unwritable path fails fast.
  const std::string raw_path = cfg.out_prefix + "_raw.csv";
  const std::string agg_path = cfg.out_prefix + "_agg.csv";
  std::ofstream raw(raw_path);
  std::ofstream agg(agg_path);
  if (!raw || !agg) {
    throw std::runtime_error("cannot open output files under prefix: " +
                             cfg.out_prefix);
  }

  struct Task {
    double xi;
    int m;
    Scheme scheme;
    int trial;
  };
  std::vector<Task> tasks;
  for (double xi : cfg.xi_list) {
    for (int m : ms) {
      for (Scheme scheme : cfg.schemes) {
        for (int t = 0; t < cfg.trials; ++t) {
          tasks.push_back({xi, m, scheme, t});
        }
      }
    }
  }

  std::vector<TrialRow> rows(tasks.size());
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers =
      cfg.workers > 0 ? cfg.workers : static_cast<int>(hw > 0 ? hw : 1);
  std::atomic<std::size_t> next{0};
  const auto drain = [&] {
    for (std::size_t i = next.fetch_add(1); i < tasks.size();
         i = next.fetch_add(1)) {
      const Task& t = tasks[i];
      rows[i] = run_trial(cfg, t.xi, t.m, t.scheme, t.trial);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
  drain();
  for (std::thread& th : pool) th.join();

  raw << kRawHeader << '\n';
  for (const TrialRow& r : rows) raw << format_row(r) << '\n';

  const std::vector<Aggregate> cells = aggregate_rows(rows);
  agg << kAggHeader << '\n';
  for (const Aggregate& a : cells) agg << format_aggregate(a) << '\n';

  if (cfg.write_trace) {
    for (const TrialRow& r : rows) {
      const std::string path = cfg.out_prefix + "_trace_" +
                               to_string(r.scheme) + "_xi" + fmt(r.xi) +
                               "_m" + std::to_string(r.m) + "_t" +
                               std::to_string(r.trial) + ".csv";
      std::ofstream tf(path);
      if (!tf) {
        throw std::runtime_error("cannot open trace file: " + path);
      }
      tf << "outer_iter,stage,objective,feasible,rank_ratio_a,"
            "rank_ratio_b\n";
      for (const OuterRow& row : r.trace) {
        tf << row.outer_iter << ',' << row.stage << ','
           << fmt(row.objective) << ',' << (row.feasible ? 1 : 0) << ','
           << fmt(row.rank_ratio_a) << ',' << fmt(row.rank_ratio_b)
           << '\n';
      }
    }
  }

  for (const Aggregate& a : cells) {
    if (a.feasible == 0) return 1;
  }
  return 0;
}

}  // namespace cli
}  // namespace irsbeam
