// SPDX-License-Identifier: MIT
//
// Active-beamforming stage: minimize transmit power over (W_1, W_2, W_AN)
// at fixed reflection coefficients.
//
// The nonconvexities are handled as follows, with gamma_Q = 2^R_Q - 1 and
// an auxiliary SIC threshold gamma_t sandwiched between the two users'
// SINRs for user 2's symbol:
//
//   QoS        Tr(H_1 W_1) >= gamma_Q (Tr(H_1 W_AN) + 1)
//              Tr(H_2 W_2) >= gamma_Q (Tr(H_2 W_1) + Tr(H_2 W_AN) + 1)
//   SIC lower  Tr(H_1 W_2) >= gamma_t * b_1,  b_1 = Tr(H_1(W_1+W_AN)) + 1
//     via AM-GM: 2 Tr(H_1 W_2) >= varpi^2 b_1^2 + gamma_t^2 / varpi^2,
//     tight at varpi = sqrt(gamma_t / b_1); emitted as the arrow LMI
//       [ 2 Tr(H_1 W_2)   varpi b_1   gamma_t/varpi ]
//       [ varpi b_1            1            0       ]  >= 0.
//       [ gamma_t/varpi        0            1       ]
//   SIC upper  Tr(H_2 W_2) <= gamma_t * b_2,  b_2 = Tr(H_2(W_1+W_AN)) + 1
//     via nu^2 <= gamma_t b_2 (a 2x2 Schur block) and the linearization
//     Tr(H_2 W_2) <= 2 nu_ref nu - nu_ref^2 of the concave side.
//   Rank-one   eig^H W_i eig >= w_ratio Tr(W_i), with the trace ratio
//     driven from 0 to 1 across iterations and an additive step that is
//     halved whenever the program turns infeasible.
//
// Both restrictions are inner approximations, so every iterate is feasible
// for the original design problem. The first iteration drops the SIC and
// rank-ratio constraints entirely (plain rank relaxation) to obtain the
// reference points; how those references are seeded is not prescribed by
// the update rules, so they are taken from that solution's actual SINRs.
//
// Conditioning: path loss makes channel entries ~1e-2..1e-3, which would
// put ~1e6 spreads in the constraint data. Channels are rescaled by s with
// s^2 (||h1||^2+||h2||^2) = 2 before assembly (H_BI untouched; the scale
// rides on the surface/direct links and the stacked estimate), covariances
// map back as W = s^2 W~, and every SINR-like quantity (gamma_t, nu, tau)
// is scale-invariant.

#pragma once

#include <chrono>
#include <utility>

#include "irsbeam/conic/solver.hpp"
#include "irsbeam/rates.hpp"
#include "irsbeam/robustify.hpp"

namespace irsbeam {

struct ActiveParams {
  double r_q = 1.0;        // per-user QoS rate, bps/Hz
  double r_m = 1.0;        // leakage cap per stream, bps/Hz
  double delta = 0.1;      // convergence accuracy on total power
  double eps0 = 0.1;       // initial rank-ratio step
  int max_iters = 30;
  double rank_tol = 1e-3;  // accept extraction when 1 - lmax/Tr <= rank_tol
  bool equal_power = false;  // adds Tr(W_1) = Tr(W_2)
  conic::SolverOptions solver;
};

struct SrocrState {
  double w1_ratio = 0.0;
  double w2_ratio = 0.0;
  CVec eigvec1;
  CVec eigvec2;
  double eps_step = 0.1;
  int iter = 0;
};

struct AgmTaylorState {
  double varpi = 1.0;
  double nu_tilde = 1.0;
  double gamma_t_prev = 0.0;
};

struct IcpResult {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  std::string message;
  CMat w1, w2, w_an;  // true scale
  double tau1 = 0.0;
  double tau2 = 0.0;
  double gamma_t = 0.0;
  double nu = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  double psd_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

struct IterationRow {
  int iter = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double w1_ratio = 0.0;
  double w2_ratio = 0.0;
  double eps_step = 0.0;
  bool feasible = false;
  double wall_ms = 0.0;
};

using IterationTrace = std::vector<IterationRow>;

struct ActiveResult {
  BeamformerSolution sol;
  IterationTrace trace;
  bool feasible = false;    // some iterate solved
  bool converged = false;   // ratio = 1 and |dP| <= delta reached
  bool rank_one_ok = false;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

// --- constraint emitters (shared with the passive stage's tests) -------

// (QoS) Tr(H1 W1) - gamma_Q Tr(H1 W_AN) - gamma_Q >= 0 and
//       Tr(H2 W2) - gamma_Q (Tr(H2 W1) + Tr(H2 W_AN)) - gamma_Q >= 0.
inline void emit_qos_constraints(conic::Problem& p, const CMat& h1_outer,
                                 const CMat& h2_outer, int var_w1,
                                 int var_w2, int var_w_an, double gamma_q) {
  conic::Block& b1 = p.add_block("qos_u1", 1);
  b1.constant = -gamma_q * CMat::Identity(1, 1);
  b1.add_trace_term(var_w1, h1_outer, 0, 0, cplx(1.0, 0.0));
  if (gamma_q != 0.0) {
    b1.add_trace_term(var_w_an, h1_outer, 0, 0, cplx(-gamma_q, 0.0));
  }
  conic::Block& b2 = p.add_block("qos_u2", 1);
  b2.constant = -gamma_q * CMat::Identity(1, 1);
  b2.add_trace_term(var_w2, h2_outer, 0, 0, cplx(1.0, 0.0));
  if (gamma_q != 0.0) {
    b2.add_trace_term(var_w1, h2_outer, 0, 0, cplx(-gamma_q, 0.0));
    b2.add_trace_term(var_w_an, h2_outer, 0, 0, cplx(-gamma_q, 0.0));
  }
}

// (SIC lower, AM-GM arrow form) 2 Tr(H1 W2) >= varpi^2 b1^2 + gt^2/varpi^2.
inline conic::Block& emit_agm_block(conic::Problem& p, const CMat& h1_outer,
                                    int var_w1, int var_w2, int var_w_an,
                                    int var_gamma_t, double varpi) {
  conic::Block& b = p.add_block("sic_agm", 3);
  b.constant = CMat::Zero(3, 3);
  b.constant(1, 1) = 1.0;
  b.constant(2, 2) = 1.0;
  b.constant(0, 1) = varpi;  // the "+1" inside b1
  b.constant(1, 0) = varpi;
  b.add_trace_term(var_w2, h1_outer, 0, 0, cplx(2.0, 0.0));
  b.add_trace_term(var_w1, h1_outer, 0, 1, cplx(varpi, 0.0));
  b.add_trace_term(var_w_an, h1_outer, 0, 1, cplx(varpi, 0.0));
  b.add_scalar_entry(var_gamma_t, 0, 2, cplx(1.0 / varpi, 0.0));
  return b;
}

// (SIC upper, linearized) 2 nu_ref nu - nu_ref^2 - Tr(H2 W2) >= 0.
inline conic::Block& emit_taylor_block(conic::Problem& p,
                                       const CMat& h2_outer, int var_w2,
                                       int var_nu, double nu_tilde) {
  conic::Block& b = p.add_block("sic_taylor", 1);
  b.constant = -nu_tilde * nu_tilde * CMat::Identity(1, 1);
  b.add_scalar_entry(var_nu, 0, 0, cplx(2.0 * nu_tilde, 0.0));
  b.add_trace_term(var_w2, h2_outer, 0, 0, cplx(-1.0, 0.0));
  return b;
}

// (SIC upper, product side) [[gamma_t, nu], [nu, b2]] >= 0.
inline conic::Block& emit_sic_schur_block(conic::Problem& p,
                                          const CMat& h2_outer, int var_w1,
                                          int var_w_an, int var_gamma_t,
                                          int var_nu) {
  conic::Block& b = p.add_block("sic_schur", 2);
  b.constant = CMat::Zero(2, 2);
  b.constant(1, 1) = 1.0;
  b.add_scalar_entry(var_gamma_t, 0, 0, cplx(1.0, 0.0));
  b.add_scalar_entry(var_nu, 0, 1, cplx(1.0, 0.0));
  b.add_trace_term(var_w1, h2_outer, 1, 1, cplx(1.0, 0.0));
  b.add_trace_term(var_w_an, h2_outer, 1, 1, cplx(1.0, 0.0));
  return b;
}

// (rank ratio) eig^H W eig - ratio Tr(W) >= 0.
inline conic::Block& emit_srocr_block(conic::Problem& p, int var_w,
                                      const CVec& eigvec, double ratio,
                                      const std::string& name) {
  const int n = static_cast<int>(eigvec.size());
  conic::Block& b = p.add_block(name, 1);
  b.constant = CMat::Zero(1, 1);
  const CMat h = hermitize(eigvec * eigvec.adjoint() -
                           ratio * CMat::Identity(n, n));
  b.add_trace_term(var_w, h, 0, 0, cplx(1.0, 0.0));
  return b;
}

inline ChannelSet scale_channels(const ChannelSet& cs, double s) {
  ChannelSet out = cs;
  out.h_i1 *= s;
  out.h_i2 *= s;
  out.h_b1 *= s;
  out.g_ie_hat *= s;
  out.g_be_hat *= s;
  out.eps_ie *= s;
  out.eps_be *= s;
  out.eps_e *= s;
  return out;
}

namespace detail {

inline double clamp_varpi(double v) {
  return std::min(1e4, std::max(1e-4, v));
}

inline double quad(const CVec& h, const CMat& w) {
  if (w.size() == 0) return 0.0;
  return std::max(0.0, (h.adjoint() * w * h).value().real());
}

}  // namespace detail

// Linear surrogate of the decoding-order constraint with denominators
// frozen at a previous iterate: Tr(H1 W2)/b1 >= kappa Tr(H2 W2)/b2. Used
// to steer the bootstrap relaxation when its optimizer violates SIC; the
// margin kappa absorbs the denominator drift the frozen form ignores.
struct SicProxy {
  double b1 = 1.0;
  double b2 = 1.0;
  double kappa = 1.0;
};

// One iterative-convex-program solve at fixed theta. Passing null states
// drops the SIC restriction / rank-ratio constraints (the bootstrap
// relaxation). Outputs are mapped back to the true channel scale.
inline IcpResult solve_icp(const ChannelSet& cs, const CVec& theta,
                           const SrocrState* srocr,
                           const AgmTaylorState* agm,
                           const ActiveParams& params,
                           const SicProxy* sic = nullptr) {
  const int nt = cs.nt();
  IcpResult out;

  const EffectiveChannels ec_true = effective_channels(cs, theta);
  const double hn2 = ec_true.h1.squaredNorm() + ec_true.h2.squaredNorm();
  const double s = hn2 > 0.0 ? std::sqrt(2.0 / hn2) : 1.0;
  const ChannelSet scs = scale_channels(cs, s);
  const EffectiveChannels ec = effective_channels(scs, theta);
  const CMat h1_outer = ec.h1 * ec.h1.adjoint();
  const CMat h2_outer = ec.h2 * ec.h2.adjoint();

  conic::Problem p;
  const int w1v = p.add_matrix_var("w1", nt);
  const int w2v = p.add_matrix_var("w2", nt);
  const int wanv = p.add_matrix_var("w_an", nt);
  p.add_psd_block(w1v, "w1_psd");
  p.add_psd_block(w2v, "w2_psd");
  p.add_psd_block(wanv, "w_an_psd");
  const CMat id = CMat::Identity(nt, nt);
  p.set_matrix_objective(w1v, id);
  p.set_matrix_objective(w2v, id);
  p.set_matrix_objective(wanv, id);

  const double gamma_q = gamma_from_rate(params.r_q);
  const double gamma_m = gamma_from_rate(params.r_m);
  const StackedChannel sc = stack_channels(scs);
  int tau1v = -1, tau2v = -1;
  if (sc.eps_e > 0.0) {
    tau1v = p.add_scalar_var("tau1");
    tau2v = p.add_scalar_var("tau2");
    emit_secrecy_lmi_active(p, sc, gamma_m, theta, cs.h_bi, wanv, w1v,
                            tau1v, "secrecy1");
    emit_secrecy_lmi_active(p, sc, gamma_m, theta, cs.h_bi, wanv, w2v,
                            tau2v, "secrecy2");
  } else {
    emit_secrecy_nonrobust_active(p, sc, gamma_m, theta, cs.h_bi, wanv, w1v,
                                  "secrecy1");
    emit_secrecy_nonrobust_active(p, sc, gamma_m, theta, cs.h_bi, wanv, w2v,
                                  "secrecy2");
  }

  emit_qos_constraints(p, h1_outer, h2_outer, w1v, w2v, wanv, gamma_q);

  int gtv = -1, nuv = -1;
  if (agm != nullptr) {
    gtv = p.add_scalar_var("gamma_t");
    nuv = p.add_scalar_var("nu");
    const double varpi = detail::clamp_varpi(agm->varpi);
    emit_agm_block(p, h1_outer, w1v, w2v, wanv, gtv, varpi);
    emit_taylor_block(p, h2_outer, w2v, nuv, std::max(agm->nu_tilde, 1e-8));
    emit_sic_schur_block(p, h2_outer, w1v, wanv, gtv, nuv);
    p.add_scalar_lower_bound(nuv, 0.0, "nu_nn");
  }
  if (sic != nullptr) {
    conic::Block& b = p.add_block("sic_proxy", 1);
    b.constant = CMat::Zero(1, 1);
    b.add_trace_term(
        w2v,
        hermitize(h1_outer / sic->b1 - sic->kappa * h2_outer / sic->b2), 0,
        0, cplx(1.0, 0.0));
  }
  // A full-ratio request pins the covariance to an exact rank-one face of
  // the cone, which has no interior. Emitting the constraint a sliver
  // below 1 restores strict feasibility while staying far inside the
  // extraction tolerance.
  constexpr double kRatioMargin = 1e-7;
  if (srocr != nullptr && srocr->w1_ratio > 0.0) {
    emit_srocr_block(p, w1v, srocr->eigvec1,
                     std::min(srocr->w1_ratio, 1.0 - kRatioMargin),
                     "rank_w1");
  }
  if (srocr != nullptr && srocr->w2_ratio > 0.0) {
    emit_srocr_block(p, w2v, srocr->eigvec2,
                     std::min(srocr->w2_ratio, 1.0 - kRatioMargin),
                     "rank_w2");
  }
  if (params.equal_power) {
    conic::EqualityRow row;
    row.mat_coeffs.emplace_back(w1v, id);
    row.mat_coeffs.emplace_back(w2v, -id);
    row.rhs = 0.0;
    p.equalities.push_back(std::move(row));
  }

  conic::Solver solver(p, params.solver);
  const conic::ConicSolution csol = solver.solve();
  out.status = csol.status;
  out.message = csol.message;
  out.iterations = csol.iterations;
  out.duality_gap = csol.duality_gap;
  out.psd_residual = csol.psd_residual;
  if (csol.status != conic::SolveStatus::optimal) return out;

  const double s2 = s * s;
  out.duality_gap = s2 * csol.duality_gap;
  out.w1 = hermitize(s2 * csol.matrices[static_cast<std::size_t>(w1v)]);
  out.w2 = hermitize(s2 * csol.matrices[static_cast<std::size_t>(w2v)]);
  out.w_an = hermitize(s2 * csol.matrices[static_cast<std::size_t>(wanv)]);
  out.objective = s2 * csol.objective;
  if (tau1v >= 0) out.tau1 = csol.scalars[static_cast<std::size_t>(tau1v)];
  if (tau2v >= 0) out.tau2 = csol.scalars[static_cast<std::size_t>(tau2v)];
  if (gtv >= 0) out.gamma_t = csol.scalars[static_cast<std::size_t>(gtv)];
  if (nuv >= 0) out.nu = csol.scalars[static_cast<std::size_t>(nuv)];
  return out;
}

// Reference-point update: varpi at the AM-GM equality, nu_ref at the
// solved nu (the Taylor touch point). Keeps the previous iterate feasible
// for the next program.
inline AgmTaylorState update_agm_taylor(const CVec& h1,
                                        const IcpResult& r) {
  AgmTaylorState st;
  const double b1 = detail::quad(h1, r.w1) + detail::quad(h1, r.w_an) + 1.0;
  st.varpi = detail::clamp_varpi(std::sqrt(std::max(r.gamma_t, 1e-12) / b1));
  st.nu_tilde = std::max(r.nu, 1e-8);
  st.gamma_t_prev = r.gamma_t;
  return st;
}

// Seeds both reference states from the bootstrap solution's actual SINRs.
inline std::pair<SrocrState, AgmTaylorState> init_states(
    const CVec& h1, const CVec& h2, const IcpResult& sdr, double eps0) {
  const double b1 = detail::quad(h1, sdr.w1) + detail::quad(h1, sdr.w_an) +
                    1.0;
  const double b2 = detail::quad(h2, sdr.w1) + detail::quad(h2, sdr.w_an) +
                    1.0;
  const double gamma_t0 =
      std::max(detail::quad(h2, sdr.w2) / b2, 1e-8);
  AgmTaylorState agm;
  agm.varpi = detail::clamp_varpi(std::sqrt(gamma_t0 / b1));
  agm.nu_tilde = std::max(std::sqrt(gamma_t0 * b2), 1e-8);
  agm.gamma_t_prev = gamma_t0;
  SrocrState sr;
  sr.eps_step = eps0;
  sr.eigvec1 = principal_eigpair(sdr.w1).second;
  sr.eigvec2 = principal_eigpair(sdr.w2).second;
  sr.w1_ratio = std::min(1.0, rank_one_ratio(sdr.w1) + eps0);
  sr.w2_ratio = std::min(1.0, rank_one_ratio(sdr.w2) + eps0);
  sr.iter = 0;
  return {sr, agm};
}

namespace detail {

inline void extract_rank_one(const IcpResult& r, double rank_tol,
                             BeamformerSolution& sol, bool& rank_one_ok) {
  sol.w1_cov = r.w1;
  sol.w2_cov = r.w2;
  sol.an_cov = r.w_an;
  sol.tau1 = r.tau1;
  sol.tau2 = r.tau2;
  const double ratio1 = rank_one_ratio(r.w1);
  const double ratio2 = rank_one_ratio(r.w2);
  rank_one_ok = (1.0 - ratio1 <= rank_tol) && (1.0 - ratio2 <= rank_tol);
  if (rank_one_ok) {
    auto [l1, v1] = principal_eigpair(r.w1);
    auto [l2, v2] = principal_eigpair(r.w2);
    sol.w1 = std::sqrt(std::max(l1, 0.0)) * v1;
    sol.w2 = std::sqrt(std::max(l2, 0.0)) * v2;
  }
}

}  // namespace detail

// Full rank-constrained power minimization at fixed theta: bootstrap
// relaxation, then iterate the restricted program with the trace-ratio
// schedule; on infeasibility the additive step is halved and the ratios
// recomputed from the last feasible iterate. Terminates when both ratios
// reached 1 and the power moved by at most delta.
inline ActiveResult run_algorithm1(const ChannelSet& cs, const CVec& theta,
                                   const ActiveParams& params) {
  using clock = std::chrono::steady_clock;
  ActiveResult out;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0)
        .count();
  };

  auto t0 = clock::now();
  const IcpResult sdr = solve_icp(cs, theta, nullptr, nullptr, params);
  out.trace.push_back({0, sdr.objective, 0.0, 0.0, params.eps0,
                       sdr.status == conic::SolveStatus::optimal,
                       ms_since(t0)});
  if (sdr.status != conic::SolveStatus::optimal) {
    out.message = "bootstrap relaxation " +
                  std::string(conic::to_string(sdr.status)) +
                  (sdr.message.empty() ? "" : ": " + sdr.message);
    return out;
  }
  out.feasible = true;

  const EffectiveChannels ec = effective_channels(cs, theta);

  // The relaxation knows nothing about decoding order, and when its
  // optimizer is already rank-one the ratio schedule cannot rotate the
  // beam direction afterwards. If the relaxed covariances violate SIC,
  // re-seed from a relaxation steered by the frozen-denominator order
  // surrogate before entering the schedule.
  struct OrderGap {
    double b1, b2, sinr12, sinr22;
  };
  const auto order_gap = [&ec](const IcpResult& r) {
    OrderGap g;
    g.b1 = detail::quad(ec.h1, r.w1) + detail::quad(ec.h1, r.w_an) + 1.0;
    g.b2 = detail::quad(ec.h2, r.w1) + detail::quad(ec.h2, r.w_an) + 1.0;
    g.sinr12 = detail::quad(ec.h1, r.w2) / g.b1;
    g.sinr22 = detail::quad(ec.h2, r.w2) / g.b2;
    return g;
  };

  IcpResult boot = sdr;
  OrderGap og = order_gap(boot);
  double kappa = 1.0;
  for (int k = 0; k < 4 && og.sinr12 < og.sinr22 * (1.0 - 1e-9); ++k) {
    kappa *= 1.05 * og.sinr22 / std::max(og.sinr12, 1e-9);
    const SicProxy proxy{og.b1, og.b2, kappa};
    t0 = clock::now();
    const IcpResult steered =
        solve_icp(cs, theta, nullptr, nullptr, params, &proxy);
    out.trace.push_back({0, steered.objective, 0.0, 0.0, params.eps0,
                         steered.status == conic::SolveStatus::optimal,
                         ms_since(t0)});
    if (steered.status != conic::SolveStatus::optimal) break;
    const OrderGap ng = order_gap(steered);
    if (ng.sinr12 - ng.sinr22 <= og.sinr12 - og.sinr22) break;
    boot = steered;
    og = ng;
  }

  auto [srocr, agm] = init_states(ec.h1, ec.h2, boot, params.eps0);

  double p_prev = boot.objective;
  IcpResult last_feasible = boot;
  IcpResult chosen = boot;
  bool chosen_full = false;
  double chosen_obj = std::numeric_limits<double>::infinity();

  for (int n = 1; n <= params.max_iters && !out.converged; ++n) {
    t0 = clock::now();
    const double used_w1 = srocr.w1_ratio;
    const double used_w2 = srocr.w2_ratio;
    const IcpResult r = solve_icp(cs, theta, &srocr, &agm, params);
    const bool ok = r.status == conic::SolveStatus::optimal;
    out.trace.push_back({n, r.objective, used_w1, used_w2, srocr.eps_step,
                         ok, ms_since(t0)});
    if (ok) {
      last_feasible = r;
      const bool full = used_w1 >= 1.0 && used_w2 >= 1.0;
      if ((full && !chosen_full) ||
          (full == chosen_full && r.objective < chosen_obj)) {
        chosen = r;
        chosen_full = full;
        chosen_obj = r.objective;
      }
      if (full && std::abs(r.objective - p_prev) <= params.delta) {
        out.converged = true;
        chosen = r;  // the converged iterate is the returned one
      }
      p_prev = r.objective;
      agm = update_agm_taylor(ec.h1, r);
      srocr.eigvec1 = principal_eigpair(r.w1).second;
      srocr.eigvec2 = principal_eigpair(r.w2).second;
      srocr.w1_ratio = std::min(1.0, rank_one_ratio(r.w1) + srocr.eps_step);
      srocr.w2_ratio = std::min(1.0, rank_one_ratio(r.w2) + srocr.eps_step);
      srocr.iter = n;
    } else {
      srocr.eps_step *= 0.5;
      srocr.w1_ratio =
          std::min(1.0, rank_one_ratio(last_feasible.w1) + srocr.eps_step);
      srocr.w2_ratio =
          std::min(1.0, rank_one_ratio(last_feasible.w2) + srocr.eps_step);
    }
  }

  detail::extract_rank_one(chosen, params.rank_tol, out.sol,
                           out.rank_one_ok);
  out.sol.theta = theta;
  out.objective = chosen.objective;
  if (!out.converged) {
    out.message = "stopped after max_iters; returning best iterate";
  }
  return out;
}

}  // namespace irsbeam
