// SPDX-License-Identifier: MIT
//
// Outer alternating-optimization driver. Each outer round fixes the
// reflection phases and solves the transmit-power program (active stage),
// then fixes the covariances and re-optimizes the phases through the
// lifted feasibility program (passive stage, slack-maximizing by
// default). The loop stops when the power gap between consecutive rounds
// falls below `delta` or the round budget runs out; the best feasible
// iterate seen is returned either way.
//
// Scheme variants share the driver: `random_phase` freezes the initial
// phases and runs the power stage once; `epa` runs the full alternation
// with the equal-allocation constraint Tr(W1) = Tr(W2) added to every
// power stage.
//
// Stall handling: descent is guarded. A phase stage that cannot move
// (infeasible program, non-extractable iterate) and a power stage whose
// result fails validation or climbs by more than `delta` are both
// rejected, the previous design is retained, and the run is declared
// converged in place: the alternation is deterministic, so replaying it
// from the retained design would reproduce the rejected move and the
// outer power gap at that design is exactly zero. The message records
// which stage stalled; the trace row for a rejected stage keeps the
// previous power and is flagged infeasible.

#pragma once

#include <string>
#include <vector>

#include "irsbeam/active.hpp"
#include "irsbeam/passive.hpp"

namespace irsbeam {

enum class Scheme { ao, random_phase, epa };
enum class ThetaInit { random_phase, all_ones };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::ao: return "ao";
    case Scheme::random_phase: return "random_phase";
    case Scheme::epa: return "epa";
  }
  return "?";
}

inline bool parse_scheme(const std::string& text, Scheme& out) {
  if (text == "ao") out = Scheme::ao;
  else if (text == "random_phase") out = Scheme::random_phase;
  else if (text == "epa") out = Scheme::epa;
  else return false;
  return true;
}

struct AoConfig {
  double delta = 0.1;  // outer convergence accuracy on total power
  int max_outer_iters = 30;
  ThetaInit init_theta_mode = ThetaInit::random_phase;
  Scheme scheme = Scheme::ao;
  std::vector<std::uint64_t> seeds = {1};  // Monte-Carlo trial seeds
  Dims dims{4, 6, 2};
  double r_q = 1.0;   // per-user QoS rate, bps/Hz
  double r_m = 1.0;   // leakage cap per stream, bps/Hz
  double xi_n = 0.02;  // normalized eavesdropper CSI error
  conic::SolverOptions solver;
};

// One outer-stage record. `objective` is the accepted total power after
// the stage (phase stages leave it unchanged); `feasible` means the stage
// produced an accepted iterate. Ratios are lmax/trace of the stage's
// lifted variables: (W1, W2) for active rows, (U, U) for passive rows.
struct OuterRow {
  int outer_iter = 0;
  std::string stage;  // "active" or "passive"
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  double rank_ratio_a = 0.0;
  double rank_ratio_b = 0.0;
  double wall_ms = 0.0;
};

using OuterTrace = std::vector<OuterRow>;

struct AoResult {
  BeamformerSolution sol;  // best feasible design, phases included
  OuterTrace trace;
  bool feasible = false;   // the initial power stage succeeded
  bool converged = false;  // outer power gap reached delta
  double objective = std::numeric_limits<double>::quiet_NaN();
  int outer_iters = 0;
  std::string message;
};

namespace detail {

inline CVec make_theta(ThetaInit mode, int m, Rng& rng) {
  CVec t = CVec::Ones(m);
  if (mode == ThetaInit::random_phase) {
    for (int i = 0; i < m; ++i) {
      t(i) = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
    }
  }
  return t;
}

// Rate-level SIC echo. A power schedule that degrades to its relaxation
// fallback can hand back covariances violating the decoding order even
// though every restricted solve it completed was sound; such an iterate
// must not be accepted as a design.
inline bool sic_consistent(const ChannelSet& cs, const CVec& theta,
                           const BeamformerSolution& sol) {
  const EffectiveChannels ec = effective_channels(cs, theta);
  return rate_u1_s2(ec.h1, sol) + 1e-6 >= rate_u2_s2(ec.h2, sol);
}

}  // namespace detail

// Initial reflection phases: unit-modulus random (default) or all-ones.
inline CVec init_theta(const AoConfig& config, Rng& rng) {
  return detail::make_theta(config.init_theta_mode, config.dims.m, rng);
}

// Deterministic per-seed channel draw. Every scheme run at the same seed
// sees the identical instance, so scheme comparisons are paired; the
// geometry and fading streams do not depend on xi_n, so sweeps over the
// uncertainty radius are paired too.
inline ChannelSet sample_trial(std::uint64_t seed, const Dims& dims,
                               double xi_n, double d_bi, double r_b,
                               double r_i, const FadingParams& fading) {
  Rng geo_rng(derive_seed(seed, 0xa11u, 0));
  Rng fade_rng(derive_seed(seed, 0xa11u, 1));
  const Geometry g = sample_geometry(d_bi, r_b, r_i, geo_rng);
  ChannelSet cs = sample_channels(g, fading, dims, fade_rng);
  set_uncertainty(cs, xi_n);
  return cs;
}

inline ChannelSet sample_trial(std::uint64_t seed, const Dims& dims,
                               double xi_n) {
  return sample_trial(seed, dims, xi_n, 50.0, 2.0, 2.0, FadingParams{});
}

// The phase stream for a trial, separate from the channel stream so a
// scheme cannot perturb another's instance.
inline Rng trial_rng(std::uint64_t seed) {
  return Rng(derive_seed(seed, 0x7e57u, 0));
}

inline AoResult run_ao(const ChannelSet& cs, const AoConfig& config,
                       Rng& rng) {
  using clock = std::chrono::steady_clock;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0)
        .count();
  };

  AoResult out;
  ActiveParams ap;
  ap.r_q = config.r_q;
  ap.r_m = config.r_m;
  ap.delta = config.delta;
  ap.equal_power = (config.scheme == Scheme::epa);
  ap.solver = config.solver;
  PassiveParams pp;
  pp.r_q = config.r_q;
  pp.r_m = config.r_m;
  pp.solver = config.solver;

  CVec theta = detail::make_theta(config.init_theta_mode, cs.m(), rng);

  auto t0 = clock::now();
  const ActiveResult act = run_algorithm1(cs, theta, ap);
  const bool act_ok = act.feasible && act.rank_one_ok &&
                      detail::sic_consistent(cs, theta, act.sol);
  out.trace.push_back({1, "active", act.objective, act_ok,
                       rank_one_ratio(act.sol.w1_cov),
                       rank_one_ratio(act.sol.w2_cov), ms_since(t0)});
  out.outer_iters = 1;
  if (!act_ok) {
    out.message = "initial power stage failed" +
                  (act.message.empty() ? "" : ": " + act.message);
    return out;
  }
  out.feasible = true;
  out.sol = act.sol;
  out.sol.theta = theta;
  out.objective = act.objective;
  if (config.scheme == Scheme::random_phase) {
    out.converged = act.converged;
    return out;
  }

  double p_prev = act.objective;
  BeamformerSolution cur = out.sol;
  for (int k = 2; k <= config.max_outer_iters && !out.converged; ++k) {
    t0 = clock::now();
    const AgmTaylorState st = passive_references(cs, cur.theta, cur.w1_cov,
                                                 cur.w2_cov, cur.an_cov);
    const PassiveResult pr = solve_icfp(cs, cur.w1_cov, cur.w2_cov,
                                        cur.an_cov, st, cur.theta, pp);
    CVec theta_next = cur.theta;
    bool moved = false;
    double u_ratio = 0.0;
    if (pr.feasible) {
      u_ratio = pr.lifted.u_ratio;
      const ThetaExtraction ex = extract_theta(pr.lifted.u, pp.rank_tol);
      if (ex.ok) {
        theta_next = ex.theta;
        moved = true;
      }
    }
    out.trace.push_back({k, "passive", p_prev, pr.feasible && moved,
                         u_ratio, u_ratio, ms_since(t0)});
    if (!moved) {
      out.converged = true;
      out.message = pr.feasible
                        ? "phase stage returned a non-extractable iterate"
                        : "phase stage reported no feasible move";
      break;
    }

    t0 = clock::now();
    const ActiveResult a2 = run_algorithm1(cs, theta_next, ap);
    const bool ok2 = a2.feasible && a2.rank_one_ok &&
                     detail::sic_consistent(cs, theta_next, a2.sol);
    const bool accept = ok2 && a2.objective <= p_prev + config.delta;
    out.trace.push_back({k, "active", accept ? a2.objective : p_prev,
                         accept, rank_one_ratio(a2.sol.w1_cov),
                         rank_one_ratio(a2.sol.w2_cov), ms_since(t0)});
    out.outer_iters = k;
    if (!accept) {
      out.converged = true;
      out.message = ok2 ? "power stage climbed beyond delta; move rejected"
                        : "power stage move failed validation; rejected";
      break;
    }
    cur = a2.sol;
    cur.theta = theta_next;
    if (a2.objective < out.objective) {
      out.objective = a2.objective;
      out.sol = cur;
    }
    if (std::abs(a2.objective - p_prev) <= config.delta) {
      out.converged = true;
    }
    p_prev = a2.objective;
  }
  return out;
}

// Fixed random phases, power stage only.
inline AoResult baseline_random_phase(const ChannelSet& cs,
                                      const AoConfig& config, Rng& rng) {
  AoConfig c = config;
  c.scheme = Scheme::random_phase;
  c.init_theta_mode = ThetaInit::random_phase;
  return run_ao(cs, c, rng);
}

// Full alternation with Tr(W1) = Tr(W2) in every power stage.
inline AoResult baseline_epa(const ChannelSet& cs, const AoConfig& config,
                             Rng& rng) {
  AoConfig c = config;
  c.scheme = Scheme::epa;
  return run_ao(cs, c, rng);
}

}  // namespace irsbeam
