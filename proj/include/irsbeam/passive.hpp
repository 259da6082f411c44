// SPDX-License-Identifier: MIT
//
// Passive-beamforming stage: at fixed transmit covariances, move the
// reflection coefficients through the lifted variable U = u u^H with
// u = [conj(theta); 1].
//
// Lifting: with the stacked per-user channels
//   H_U1 = [diag(h_I1^H) H_BI; h_B1^H],   H_U2 = [diag(h_I2^H) H_BI; 0],
// every received power is linear in U:
//   h_i^H W h_i = u^H H_Ui W H_Ui^H u = Tr(A U),   A = H_Ui W H_Ui^H.
// The QoS/SIC restrictions therefore reuse the active stage's convex forms
// with these A-matrices in place of the channel outer products (same AM-GM
// and Taylor reference points); the leakage cap enters through the U-affine
// joint beamforming matrix (robustify.hpp); and the decoding order becomes
// the single affine row
//   Tr(J1 U) + ||h_B1||^2 >= Tr(J2 U),
//   J1 = [[Q1 Q1^H, Q1 h_B1], [h_B1^H Q1^H, 0]],  J2 = [[Q2 Q2^H, 0], [0, 0]],
// with Q_i = diag(h_Ii^H) H_BI. Unit modulus relaxes to the diagonal box
// U_mm <= 1 with U_{M+1,M+1} pinned at 1, and rank one is driven by the
// same trace-ratio schedule as the active stage.
//
// The program is a pure feasibility search with no natural objective, and
// accepting any feasible point tends to stall the outer descent at the
// previous iterate. By default a nonnegative slack is subtracted from the
// surface-served user's QoS row and maximized; every returned U stays
// feasible for the original program while the extra margin hands the next
// active stage room to cut power. The slack sits on that row alone: the
// direct-link user's row cannot be widened by the reflection (its cascade
// path is orders of magnitude below the direct one), so a common margin
// pins at essentially zero there, and carrying both slacks mixes a
// hair-thin interval with a wide one on the central path and stalls the
// interior-point method. Pure feasibility remains available.
//
// Warm start: seeding the ratio schedule's eigen-direction with the
// previous iterate's lift keeps that lift feasible at every ratio level
// (its own trace ratio along that direction is exactly one), so the first
// restricted solve cannot lose a feasible instance.

#pragma once

#include "irsbeam/active.hpp"

namespace irsbeam {

struct PassiveParams {
  double r_q = 1.0;        // per-user QoS rate, bps/Hz
  double r_m = 1.0;        // leakage cap per stream, bps/Hz
  double eps0 = 0.1;       // initial rank-ratio step
  int max_iters = 30;
  double rank_tol = 1e-3;  // accept extraction when 1 - lmax/Tr <= rank_tol
  bool margin_objective = true;  // maximize user 2's QoS slack
  conic::SolverOptions solver;
};

struct LiftedChannels {
  CMat h_u1;  // (M+1) x N_t
  CMat h_u2;  // (M+1) x N_t
  CMat j1;    // (M+1) x (M+1) Hermitian
  CMat j2;    // (M+1) x (M+1) Hermitian
  double h_b1_norm2 = 0.0;  // constant term of the ordering row
};

struct LiftedVariable {
  CMat u;                // (M+1) x (M+1) Hermitian PSD
  double u_ratio = 0.0;  // lmax / trace
  CVec eigvec;           // unit principal eigenvector
};

// u = [conj(theta); 1], the direction whose outer product represents theta.
inline CVec lift_theta(const CVec& theta) {
  const int m = static_cast<int>(theta.size());
  CVec u(m + 1);
  u.head(m) = theta.conjugate();
  u(m) = cplx(1.0, 0.0);
  return u;
}

inline LiftedChannels lift_channels(const ChannelSet& cs) {
  const int m = cs.m();
  const int nt = cs.nt();
  LiftedChannels lc;
  const CMat q1 = cs.h_i1.conjugate().asDiagonal() * cs.h_bi;
  const CMat q2 = cs.h_i2.conjugate().asDiagonal() * cs.h_bi;
  lc.h_u1.resize(m + 1, nt);
  lc.h_u1.topRows(m) = q1;
  lc.h_u1.row(m) = cs.h_b1.adjoint();
  lc.h_u2 = CMat::Zero(m + 1, nt);
  lc.h_u2.topRows(m) = q2;
  lc.j1 = CMat::Zero(m + 1, m + 1);
  lc.j1.topLeftCorner(m, m) = q1 * q1.adjoint();
  lc.j1.block(0, m, m, 1) = q1 * cs.h_b1;
  lc.j1.block(m, 0, 1, m) = (q1 * cs.h_b1).adjoint();
  lc.j1 = hermitize(lc.j1);
  lc.j2 = CMat::Zero(m + 1, m + 1);
  lc.j2.topLeftCorner(m, m) = hermitize(q2 * q2.adjoint());
  lc.h_b1_norm2 = cs.h_b1.squaredNorm();
  return lc;
}

// A = H_U W H_U^H: Tr(A U) is the power of covariance W seen through the
// lifted channel.
inline CMat lifted_outer(const CMat& h_u, const CMat& w) {
  return hermitize(h_u * w * h_u.adjoint());
}

// The six trace coefficients the QoS/SIC rows need: covariance rho seen by
// user i is Tr(<rho>_u<i> U).
struct LiftedOuters {
  CMat w1_u1, w1_u2;
  CMat w2_u1, w2_u2;
  CMat an_u1, an_u2;
};

inline LiftedOuters lifted_outers(const LiftedChannels& lc, const CMat& w1,
                                  const CMat& w2, const CMat& w_an) {
  LiftedOuters lo;
  lo.w1_u1 = lifted_outer(lc.h_u1, w1);
  lo.w1_u2 = lifted_outer(lc.h_u2, w1);
  lo.w2_u1 = lifted_outer(lc.h_u1, w2);
  lo.w2_u2 = lifted_outer(lc.h_u2, w2);
  lo.an_u1 = lifted_outer(lc.h_u1, w_an);
  lo.an_u2 = lifted_outer(lc.h_u2, w_an);
  return lo;
}

// --- constraint emitters ----------------------------------------------

// (QoS, lifted) Tr(A_{1,1} U) - gamma_Q Tr(A_{AN,1} U) - gamma_Q >= t_1 and
//               Tr(A_{2,2} U) - gamma_Q (Tr(A_{1,2} U) + Tr(A_{AN,2} U))
//                 - gamma_Q >= t_2; negative slack ids drop the slacks.
inline void emit_lifted_qos(conic::Problem& p, const LiftedOuters& lo,
                            int var_u, double gamma_q, int var_slack1 = -1,
                            int var_slack2 = -1) {
  conic::Block& b1 = p.add_block("qos_u1", 1);
  b1.constant = -gamma_q * CMat::Identity(1, 1);
  b1.add_trace_term(var_u, hermitize(lo.w1_u1 - gamma_q * lo.an_u1), 0, 0,
                    cplx(1.0, 0.0));
  conic::Block& b2 = p.add_block("qos_u2", 1);
  b2.constant = -gamma_q * CMat::Identity(1, 1);
  b2.add_trace_term(var_u,
                    hermitize(lo.w2_u2 - gamma_q * (lo.w1_u2 + lo.an_u2)),
                    0, 0, cplx(1.0, 0.0));
  if (var_slack1 >= 0) b1.add_scalar_entry(var_slack1, 0, 0, cplx(-1.0, 0.0));
  if (var_slack2 >= 0) b2.add_scalar_entry(var_slack2, 0, 0, cplx(-1.0, 0.0));
}

// (SIC lower, AM-GM arrow form) 2 Tr(A_{2,1} U) >= varpi^2 b1^2 +
// gt^2/varpi^2 with b1 = Tr((A_{1,1}+A_{AN,1}) U) + 1 affine in U.
inline conic::Block& emit_lifted_agm(conic::Problem& p,
                                     const LiftedOuters& lo, int var_u,
                                     int var_gamma_t, double varpi) {
  conic::Block& b = p.add_block("sic_agm", 3);
  b.constant = CMat::Zero(3, 3);
  b.constant(1, 1) = 1.0;
  b.constant(2, 2) = 1.0;
  b.constant(0, 1) = varpi;  // the "+1" inside b1
  b.constant(1, 0) = varpi;
  b.add_trace_term(var_u, hermitize(2.0 * lo.w2_u1), 0, 0, cplx(1.0, 0.0));
  b.add_trace_term(var_u, hermitize(lo.w1_u1 + lo.an_u1), 0, 1,
                   cplx(varpi, 0.0));
  b.add_scalar_entry(var_gamma_t, 0, 2, cplx(1.0 / varpi, 0.0));
  return b;
}

// (SIC upper, linearized) 2 nu_ref nu - nu_ref^2 - Tr(A_{2,2} U) >= 0.
inline conic::Block& emit_lifted_taylor(conic::Problem& p,
                                        const LiftedOuters& lo, int var_u,
                                        int var_nu, double nu_tilde) {
  conic::Block& b = p.add_block("sic_taylor", 1);
  b.constant = -nu_tilde * nu_tilde * CMat::Identity(1, 1);
  b.add_scalar_entry(var_nu, 0, 0, cplx(2.0 * nu_tilde, 0.0));
  b.add_trace_term(var_u, hermitize(-lo.w2_u2), 0, 0, cplx(1.0, 0.0));
  return b;
}

// (SIC upper, product side) [[gamma_t, nu], [nu, b2]] >= 0 with
// b2 = Tr((A_{1,2}+A_{AN,2}) U) + 1.
inline conic::Block& emit_lifted_sic_schur(conic::Problem& p,
                                           const LiftedOuters& lo, int var_u,
                                           int var_gamma_t, int var_nu) {
  conic::Block& b = p.add_block("sic_schur", 2);
  b.constant = CMat::Zero(2, 2);
  b.constant(1, 1) = 1.0;
  b.add_scalar_entry(var_gamma_t, 0, 0, cplx(1.0, 0.0));
  b.add_scalar_entry(var_nu, 0, 1, cplx(1.0, 0.0));
  b.add_trace_term(var_u, hermitize(lo.w1_u2 + lo.an_u2), 1, 1,
                   cplx(1.0, 0.0));
  return b;
}

// QoS rows plus the full SIC restriction at the given reference points.
inline void emit_lifted_qos_sic(conic::Problem& p, const LiftedOuters& lo,
                                int var_u, int var_gamma_t, int var_nu,
                                const AgmTaylorState& state, double gamma_q,
                                int var_slack1 = -1, int var_slack2 = -1) {
  emit_lifted_qos(p, lo, var_u, gamma_q, var_slack1, var_slack2);
  emit_lifted_agm(p, lo, var_u, var_gamma_t,
                  detail::clamp_varpi(state.varpi));
  emit_lifted_taylor(p, lo, var_u, var_nu, std::max(state.nu_tilde, 1e-8));
  emit_lifted_sic_schur(p, lo, var_u, var_gamma_t, var_nu);
}

// (order) Tr(J1 U) + ||h_B1||^2 - Tr(J2 U) >= 0; on rank-one lifts this is
// exactly ||h1||^2 >= ||h2||^2.
inline conic::Block& emit_ordering_constraint(conic::Problem& p,
                                              const LiftedChannels& lc,
                                              int var_u) {
  conic::Block& b = p.add_block("order", 1);
  b.constant = lc.h_b1_norm2 * CMat::Identity(1, 1);
  b.add_trace_term(var_u, hermitize(lc.j1 - lc.j2), 0, 0, cplx(1.0, 0.0));
  return b;
}

// (amplitude box) 1 - U_mm >= 0 for the M reflection entries; the phase
// reference U_{M+1,M+1} is pinned, not emitted.
inline void emit_diag_box(conic::Problem& p, int var_u, int m) {
  for (int mi = 0; mi < m; ++mi) {
    conic::Block& b = p.add_block("u_box_" + std::to_string(mi), 1);
    b.constant = CMat::Identity(1, 1);
    conic::MatrixTerm& t = b.add_matrix_term(var_u);
    t.deps.push_back(conic::EntryDep{0, 0, cplx(-1.0, 0.0), mi, mi});
  }
}

// Reference points at which a given feasible design stays inside the
// lifted SIC restriction: gamma_t at user 2's own-symbol SINR, the AM-GM
// and Taylor expansion points at their equality values.
inline AgmTaylorState passive_references(const ChannelSet& cs,
                                         const CVec& theta, const CMat& w1,
                                         const CMat& w2, const CMat& w_an) {
  const EffectiveChannels ec = effective_channels(cs, theta);
  const double b1 =
      detail::quad(ec.h1, w1) + detail::quad(ec.h1, w_an) + 1.0;
  const double b2 =
      detail::quad(ec.h2, w1) + detail::quad(ec.h2, w_an) + 1.0;
  const double gamma_t = std::max(detail::quad(ec.h2, w2) / b2, 1e-8);
  AgmTaylorState st;
  st.varpi = detail::clamp_varpi(std::sqrt(gamma_t / b1));
  st.nu_tilde = std::max(std::sqrt(gamma_t * b2), 1e-8);
  st.gamma_t_prev = gamma_t;
  return st;
}

struct IcfpResult {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  std::string message;
  CMat u;  // (M+1) x (M+1)
  double margin = 0.0;  // achieved QoS slack (0 in pure-find mode)
  double gamma_t = 0.0;
  double nu = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  double psd_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

// One lifted feasibility solve at fixed covariances. A null lift drops the
// rank-ratio constraint (the bootstrap relaxation).
inline IcfpResult solve_icfp_step(const ChannelSet& cs, const CMat& w1,
                                  const CMat& w2, const CMat& w_an,
                                  const AgmTaylorState& state,
                                  const LiftedVariable* lift,
                                  const PassiveParams& params) {
  const int m = cs.m();
  IcfpResult out;
  const LiftedChannels lc = lift_channels(cs);
  const LiftedOuters lo = lifted_outers(lc, w1, w2, w_an);

  conic::Problem p;
  const int uv = p.add_matrix_var("u", m + 1);
  p.pin_diagonal(uv, m, 1.0);
  p.add_psd_block(uv, "u_psd");
  emit_diag_box(p, uv, m);

  int slackv = -1;
  if (params.margin_objective) {
    slackv = p.add_scalar_var("slack");
    p.set_scalar_objective(slackv, -1.0);
    p.add_scalar_lower_bound(slackv, 0.0, "slack_nn");
  }
  const double gamma_q = gamma_from_rate(params.r_q);
  const int gtv = p.add_scalar_var("gamma_t");
  const int nuv = p.add_scalar_var("nu");
  emit_lifted_qos_sic(p, lo, uv, gtv, nuv, state, gamma_q, -1, slackv);
  p.add_scalar_lower_bound(nuv, 0.0, "nu_nn");

  emit_ordering_constraint(p, lc, uv);

  const double gamma_m = gamma_from_rate(params.r_m);
  const StackedChannel sc = stack_channels(cs);
  const CMat wp1 = build_w_prime(w_an, w1, params.r_m);
  const CMat wp2 = build_w_prime(w_an, w2, params.r_m);
  int tau1v = -1, tau2v = -1;
  if (sc.eps_e > 0.0) {
    tau1v = p.add_scalar_var("tau1");
    tau2v = p.add_scalar_var("tau2");
    emit_secrecy_lmi_passive(p, sc, gamma_m, cs.h_bi, wp1, uv, tau1v,
                             "secrecy1");
    emit_secrecy_lmi_passive(p, sc, gamma_m, cs.h_bi, wp2, uv, tau2v,
                             "secrecy2");
  } else {
    emit_secrecy_nonrobust_passive(p, sc, gamma_m, cs.h_bi, wp1, uv,
                                   "secrecy1");
    emit_secrecy_nonrobust_passive(p, sc, gamma_m, cs.h_bi, wp2, uv,
                                   "secrecy2");
  }

  // Same interior cap as the active stage: the exact rank-one face has no
  // strictly feasible point.
  constexpr double kRatioMargin = 1e-7;
  if (lift != nullptr && lift->u_ratio > 0.0) {
    emit_srocr_block(p, uv, lift->eigvec,
                     std::min(lift->u_ratio, 1.0 - kRatioMargin), "rank_u");
  }

  conic::Solver solver(p, params.solver);
  const conic::ConicSolution csol = solver.solve();
  out.status = csol.status;
  out.message = csol.message;
  out.iterations = csol.iterations;
  out.duality_gap = csol.duality_gap;
  out.psd_residual = csol.psd_residual;
  if (csol.status != conic::SolveStatus::optimal) return out;

  out.u = hermitize(csol.matrices[static_cast<std::size_t>(uv)]);
  if (slackv >= 0) {
    out.margin = csol.scalars[static_cast<std::size_t>(slackv)];
  }
  out.gamma_t = csol.scalars[static_cast<std::size_t>(gtv)];
  out.nu = csol.scalars[static_cast<std::size_t>(nuv)];
  if (tau1v >= 0) out.tau1 = csol.scalars[static_cast<std::size_t>(tau1v)];
  if (tau2v >= 0) out.tau2 = csol.scalars[static_cast<std::size_t>(tau2v)];
  return out;
}

// Reference-point refresh from a solved lifted iterate: AM-GM equality and
// Taylor touch point, so that iterate stays feasible for the next
// restricted program.
inline AgmTaylorState update_lifted_references(const LiftedOuters& lo,
                                               const IcfpResult& r) {
  AgmTaylorState st;
  const double b1 = ((lo.w1_u1 + lo.an_u1) * r.u).trace().real() + 1.0;
  st.varpi =
      detail::clamp_varpi(std::sqrt(std::max(r.gamma_t, 1e-12) / b1));
  st.nu_tilde = std::max(r.nu, 1e-8);
  st.gamma_t_prev = r.gamma_t;
  return st;
}

struct PassiveResult {
  LiftedVariable lifted;
  IterationTrace trace;
  bool feasible = false;   // some iterate solved
  bool converged = false;  // ratio schedule completed
  double margin = 0.0;     // QoS slack of the returned iterate
  std::string message;
};

// Full rank-constrained feasibility search: bootstrap relaxation, then the
// trace-ratio schedule with the eigen-direction warm-started from the
// previous iterate's lift. Terminates at the first feasible full-ratio
// solve, or as soon as an iterate is rank-one to working precision: the
// slack objective tends to land exactly on the rank-one face, where a
// requested ratio of 1 leaves no interior to solve in. On infeasibility
// the additive step is halved and the ratio recomputed from the last
// feasible iterate.
inline PassiveResult solve_icfp(const ChannelSet& cs, const CMat& w1,
                                const CMat& w2, const CMat& w_an,
                                const AgmTaylorState& state,
                                const CVec& theta_prev,
                                const PassiveParams& params) {
  using clock = std::chrono::steady_clock;
  PassiveResult out;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0)
        .count();
  };

  auto t0 = clock::now();
  const IcfpResult boot =
      solve_icfp_step(cs, w1, w2, w_an, state, nullptr, params);
  out.trace.push_back({0, boot.margin, 0.0, 0.0, params.eps0,
                       boot.status == conic::SolveStatus::optimal,
                       ms_since(t0)});
  if (boot.status != conic::SolveStatus::optimal) {
    out.message = "bootstrap relaxation " +
                  std::string(conic::to_string(boot.status)) +
                  (boot.message.empty() ? "" : ": " + boot.message);
    return out;
  }
  out.feasible = true;

  // Rank-one to working precision: no restricted solves needed (or even
  // possible; the face has no interior).
  constexpr double kSpectralTol = 1e-6;
  const LiftedOuters lo =
      lifted_outers(lift_channels(cs), w1, w2, w_an);
  AgmTaylorState st = update_lifted_references(lo, boot);
  double eps_step = params.eps0;
  LiftedVariable lift;
  if (theta_prev.size() == cs.m()) {
    lift.eigvec = lift_theta(theta_prev).normalized();
  } else {
    lift.eigvec = principal_eigpair(boot.u).second;
  }
  out.converged = rank_one_ratio(boot.u) >= 1.0 - kSpectralTol;
  lift.u_ratio = std::min(1.0, rank_one_ratio(boot.u) + eps_step);

  IcfpResult last_feasible = boot;
  for (int n = 1; n <= params.max_iters && !out.converged; ++n) {
    t0 = clock::now();
    const double used = lift.u_ratio;
    const IcfpResult r =
        solve_icfp_step(cs, w1, w2, w_an, st, &lift, params);
    const bool ok = r.status == conic::SolveStatus::optimal;
    out.trace.push_back({n, r.margin, used, used, eps_step, ok,
                         ms_since(t0)});
    if (ok) {
      last_feasible = r;
      const double achieved = rank_one_ratio(r.u);
      if (used >= 1.0 || achieved >= 1.0 - kSpectralTol) {
        out.converged = true;
        break;
      }
      st = update_lifted_references(lo, r);
      lift.eigvec = principal_eigpair(r.u).second;
      lift.u_ratio = std::min(1.0, achieved + eps_step);
    } else {
      eps_step *= 0.5;
      if (eps_step < 1e-9) break;  // no usable refinement left
      lift.u_ratio =
          std::min(1.0, rank_one_ratio(last_feasible.u) + eps_step);
    }
  }

  out.lifted.u = last_feasible.u;
  out.lifted.u_ratio = rank_one_ratio(last_feasible.u);
  out.lifted.eigvec = principal_eigpair(last_feasible.u).second;
  out.margin = last_feasible.margin;
  if (!out.converged) {
    out.message = "stopped after max_iters; returning best iterate";
  }
  return out;
}

struct ThetaExtraction {
  bool ok = false;
  CVec theta;
  double rank_ratio = 0.0;
  double max_clip = 0.0;  // largest modulus excess removed by clipping
  double path_gap = 0.0;  // eigen path vs last-row path disagreement
};

// Recovers theta from a (near) rank-one U. Primary path: scale the
// principal eigenvector to sqrt(lmax), rotate so its last entry is 1, and
// conjugate the head. Independent path: row M+1 of U is u_{M+1} u^H, so at
// U_{M+1,M+1} = 1 its first M entries are theta directly; the disagreement
// between the two reads is reported. Amplitudes are clipped into the
// passive range |theta_m| <= 1 and the excess logged.
inline ThetaExtraction extract_theta(const CMat& u, double rank_tol) {
  ThetaExtraction out;
  const int m = static_cast<int>(u.rows()) - 1;
  if (m < 1) return out;
  out.rank_ratio = rank_one_ratio(u);
  if (out.rank_ratio < 1.0 - rank_tol) return out;
  const auto [lmax, v] = principal_eigpair(u);
  CVec uvec = std::sqrt(std::max(lmax, 0.0)) * v;
  const cplx anchor = uvec(m);
  if (std::abs(anchor) < 1e-9) return out;  // no usable phase reference
  uvec /= anchor;
  out.theta = uvec.head(m).conjugate();
  double gap = 0.0;
  for (int mi = 0; mi < m; ++mi) {
    gap = std::max(gap, std::abs(out.theta(mi) - u(m, mi)));
  }
  out.path_gap = gap;
  for (int mi = 0; mi < m; ++mi) {
    const double a = std::abs(out.theta(mi));
    if (a > 1.0) {
      out.max_clip = std::max(out.max_clip, a - 1.0);
      out.theta(mi) /= a;
    }
  }
  out.ok = true;
  return out;
}

}  // namespace irsbeam
