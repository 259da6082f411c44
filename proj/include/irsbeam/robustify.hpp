// SPDX-License-Identifier: MIT
//
// Finite LMI reformulation of the semi-infinite secrecy constraint.
//
// The eavesdropper's true stacked channel is X = X_hat + Delta with
// ||Delta||_F <= eps_e, where X_hat = [G_Ie_hat; G_Be_hat] is
// (M+N_t) x N_e. With B(theta) = [diag(theta) H_BI; I_Nt] the effective
// eavesdropper channel is G_e = B^H X ... more precisely G_e^H = X^H B.
// Capping the per-stream leakage SINR at gamma_M = 2^R_M - 1 for every
// Delta in the ball is the semi-infinite constraint
//
//   X^H V_i X + gamma_M I_Ne >= 0  for all ||Delta|| <= eps_e,        (*)
//
// where V_i = B W'_i B^H and W'_i = gamma_M W_AN - W_i. Applying the
// S-procedure to (*) yields the finite LMI
//
//   [ X_hat^H V X_hat + (gamma_M - tau) I_Ne    X_hat^H V            ]
//   [ V X_hat                                   V + tau eps^-2 I_{M+Nt}]
//     >= 0,  tau >= 0.
//
// The identity in the lower-right block has dimension M+N_t (the row
// dimension of Delta); a common typo prints it as I_M, which is not
// dimensionally consistent.
//
// Both stages consume this LMI with different variables:
//  - active stage: theta fixed, W_AN/W_i matrix variables. The LMI is the
//    congruence C W' C^H with C = [X_hat^H B; B] plus the tau terms, so it
//    is affine in (W_AN, W_i, tau).
//  - passive stage: W' fixed, the lifted reflection variable
//    U = u u^H with u = [conj(theta); 1]. V is affine in U:
//      top-left  (H W' H^H) o U^T            (Hadamard, via Eq-style
//                                             sum_p S_p U^T D_p terms)
//      top-right row m: U_{M+1,m} (H W')_{m,:}
//      bottom-right: W' (constant),
//    and the LMI is D V(U) D^H + tau terms with D = [X_hat^H; I_{M+Nt}].
//
// With eps_e = 0 the S-procedure degenerates; callers must emit the
// non-robust constraint at the estimate instead (also provided here).

#pragma once

#include "irsbeam/channel.hpp"
#include "irsbeam/common.hpp"
#include "irsbeam/conic/problem.hpp"

namespace irsbeam {

struct StackedChannel {
  CMat x_hat;    // (M+N_t) x N_e, surface block on top
  double eps_e = 0.0;
};

inline StackedChannel stack_channels(const ChannelSet& cs) {
  StackedChannel sc;
  sc.x_hat.resize(cs.m() + cs.nt(), cs.ne());
  sc.x_hat.topRows(cs.m()) = cs.g_ie_hat;
  sc.x_hat.bottomRows(cs.nt()) = cs.g_be_hat;
  sc.eps_e = cs.eps_e;
  return sc;
}

inline double gamma_from_rate(double rate) { return std::exp2(rate) - 1.0; }

// W'_i = gamma_M W_AN - W_i.
inline CMat build_w_prime(const CMat& w_an, const CMat& w_i, double r_m) {
  if (w_an.rows() != w_an.cols() || w_i.rows() != w_i.cols() ||
      w_an.rows() != w_i.rows()) {
    throw std::invalid_argument("build_w_prime: dimension mismatch");
  }
  return hermitize(gamma_from_rate(r_m) * w_an - w_i);
}

// B(theta) = [diag(theta) H_BI; I], (M+N_t) x N_t.
inline CMat joint_factor(const CVec& theta, const CMat& h_bi) {
  const int m = static_cast<int>(h_bi.rows());
  const int nt = static_cast<int>(h_bi.cols());
  if (theta.size() != m) {
    throw std::invalid_argument("joint_factor: theta length mismatch");
  }
  CMat b(m + nt, nt);
  b.topRows(m) = theta.asDiagonal() * h_bi;
  b.bottomRows(nt) = CMat::Identity(nt, nt);
  return b;
}

// V_i = B W' B^H, the joint beamforming matrix.
inline CMat build_joint_v(const CVec& theta, const CMat& h_bi,
                          const CMat& w_prime) {
  if (w_prime.rows() != h_bi.cols() || w_prime.cols() != h_bi.cols()) {
    throw std::invalid_argument("build_joint_v: W' dimension mismatch");
  }
  const CMat b = joint_factor(theta, h_bi);
  return hermitize(b * w_prime * b.adjoint());
}

// Rank-revealing factorization H W' H^H = sum_p s_p d_p^H of the Hermitian
// M x M product, truncated at relative magnitude 1e-12.
struct SvdTerms {
  std::vector<std::pair<CVec, CVec>> terms;  // (s_p, d_p), each length M
};

inline SvdTerms svd_outer_terms(const CMat& h_bi, const CMat& w_prime) {
  SvdTerms out;
  const CMat a = hermitize(h_bi * w_prime * h_bi.adjoint());
  if (a.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<CMat> es(a);
  const double cutoff =
      1e-12 * es.eigenvalues().cwiseAbs().maxCoeff();
  for (int k = 0; k < a.rows(); ++k) {
    const double lam = es.eigenvalues()(k);
    if (std::abs(lam) <= cutoff) continue;
    out.terms.emplace_back(lam * es.eigenvectors().col(k),
                           es.eigenvectors().col(k));
  }
  return out;
}

// V_i as an affine function of the lifted reflection variable
// U = u u^H, u = [conj(theta); 1]. Entries of U enter as
//   V(m,n) += A(m,n) U(n,m)              m,n < M   (A = H W' H^H)
//   V(m, M+c) += (H W')(m,c) U(M,m)      m < M, c < N_t
// plus the Hermitian mirrors and the constant bottom-right block W'.
struct VAffine {
  int m = 0;
  int nt = 0;
  CMat v_const;                        // (M+N_t) x (M+N_t)
  std::vector<conic::EntryDep> deps;   // in V coordinates, vs U entries
};

inline VAffine build_v_affine_in_u(const CMat& h_bi, const CMat& w_prime,
                                   const SvdTerms& terms) {
  VAffine va;
  va.m = static_cast<int>(h_bi.rows());
  va.nt = static_cast<int>(h_bi.cols());
  const int mn = va.m + va.nt;
  va.v_const = CMat::Zero(mn, mn);
  va.v_const.bottomRightCorner(va.nt, va.nt) = hermitize(w_prime);
  // Top-left: sum_p diag(s_p) U^T diag(d_p)^H; the (m,n) weight is
  // sum_p s_p(m) conj(d_p(n)), i.e. A(m,n) reassembled from the terms.
  CMat a = CMat::Zero(va.m, va.m);
  for (const auto& [s, d] : terms.terms) {
    a += s * d.adjoint();
  }
  for (int mi = 0; mi < va.m; ++mi) {
    for (int n = mi; n < va.m; ++n) {
      // Diagonal weights are real in exact arithmetic (A is Hermitian);
      // drop the rounding residue so the real-diagonal rule holds.
      const cplx w = (mi == n) ? cplx(a(mi, n).real(), 0.0) : a(mi, n);
      if (w == cplx(0.0, 0.0)) continue;
      va.deps.push_back({mi, n, w, n, mi});
    }
  }
  const CMat hw = h_bi * w_prime;  // M x N_t
  for (int mi = 0; mi < va.m; ++mi) {
    for (int c = 0; c < va.nt; ++c) {
      const cplx w = hw(mi, c);
      if (w == cplx(0.0, 0.0)) continue;
      va.deps.push_back({mi, va.m + c, w, va.m, mi});
    }
  }
  return va;
}

// Dense evaluation of the affine form at a concrete U (reference path for
// tests and extraction checks).
inline CMat eval_v_affine(const VAffine& va, const CMat& u) {
  if (u.rows() != va.m + 1 || u.cols() != va.m + 1) {
    throw std::invalid_argument("eval_v_affine: U dimension mismatch");
  }
  CMat v = va.v_const;
  for (const conic::EntryDep& d : va.deps) {
    const cplx val = d.w * u(d.vr, d.vc);
    if (d.r == d.c) {
      v(d.r, d.c) += cplx(val.real(), 0.0);
    } else {
      v(d.r, d.c) += val;
      v(d.c, d.r) += std::conj(val);
    }
  }
  return v;
}

// --- emission into conic problems ------------------------------------

// Active stage, eps_e > 0: LMI in (W_AN, W_i, tau_i) at fixed theta.
inline conic::Block& emit_secrecy_lmi_active(
    conic::Problem& p, const StackedChannel& sc, double gamma_m,
    const CVec& theta, const CMat& h_bi, int var_w_an, int var_w_i,
    int var_tau, const std::string& name) {
  if (sc.eps_e <= 0.0) {
    throw std::invalid_argument(
        "emit_secrecy_lmi_active: eps_e must be > 0 (use the non-robust "
        "constraint)");
  }
  const int ne = static_cast<int>(sc.x_hat.cols());
  const int mn = static_cast<int>(sc.x_hat.rows());
  const CMat b = joint_factor(theta, h_bi);
  CMat c(ne + mn, b.cols());
  c.topRows(ne) = sc.x_hat.adjoint() * b;
  c.bottomRows(mn) = b;
  const int nt = static_cast<int>(b.cols());
  conic::Block& blk = p.add_block(name, ne + mn);
  blk.constant = CMat::Zero(ne + mn, ne + mn);
  blk.constant.topLeftCorner(ne, ne) = gamma_m * CMat::Identity(ne, ne);
  if (gamma_m != 0.0) {
    blk.add_congruence(var_w_an, c, gamma_m, nt);
  }
  blk.add_congruence(var_w_i, c, -1.0, nt);
  const double inv_eps2 = 1.0 / (sc.eps_e * sc.eps_e);
  for (int i = 0; i < ne; ++i) {
    blk.add_scalar_entry(var_tau, i, i, cplx(-1.0, 0.0));
  }
  for (int i = 0; i < mn; ++i) {
    blk.add_scalar_entry(var_tau, ne + i, ne + i, cplx(inv_eps2, 0.0));
  }
  p.add_scalar_lower_bound(var_tau, 0.0, name + "/tau_nn");
  return blk;
}

// Active stage, eps_e = 0: gamma_M (G^H W_AN G + I) - G^H W_i G >= 0 at
// the channel estimate.
inline conic::Block& emit_secrecy_nonrobust_active(
    conic::Problem& p, const StackedChannel& sc, double gamma_m,
    const CVec& theta, const CMat& h_bi, int var_w_an, int var_w_i,
    const std::string& name) {
  const int ne = static_cast<int>(sc.x_hat.cols());
  const CMat g_eh = sc.x_hat.adjoint() * joint_factor(theta, h_bi);  // Ne x Nt
  const int nt = static_cast<int>(g_eh.cols());
  conic::Block& blk = p.add_block(name, ne);
  blk.constant = gamma_m * CMat::Identity(ne, ne);
  if (gamma_m != 0.0) {
    blk.add_congruence(var_w_an, g_eh, gamma_m, nt);
  }
  blk.add_congruence(var_w_i, g_eh, -1.0, nt);
  return blk;
}

namespace detail {

// Adds the (outer o V-affine) terms for variable U to a block, with the V
// coordinates embedded through `outer` (pass empty for identity).
inline void add_v_affine_term(conic::Block& blk, int var_u,
                              const VAffine& va, const CMat& outer) {
  conic::MatrixTerm& t = blk.add_matrix_term(var_u, outer);
  t.deps = va.deps;
}

}  // namespace detail

// Passive stage, eps_e > 0: LMI in (U, tau_i) at fixed W'_i.
inline conic::Block& emit_secrecy_lmi_passive(
    conic::Problem& p, const StackedChannel& sc, double gamma_m,
    const CMat& h_bi, const CMat& w_prime, int var_u, int var_tau,
    const std::string& name) {
  if (sc.eps_e <= 0.0) {
    throw std::invalid_argument(
        "emit_secrecy_lmi_passive: eps_e must be > 0 (use the non-robust "
        "constraint)");
  }
  const int ne = static_cast<int>(sc.x_hat.cols());
  const int mn = static_cast<int>(sc.x_hat.rows());
  const VAffine va = build_v_affine_in_u(h_bi, w_prime,
                                         svd_outer_terms(h_bi, w_prime));
  CMat d(ne + mn, mn);
  d.topRows(ne) = sc.x_hat.adjoint();
  d.bottomRows(mn) = CMat::Identity(mn, mn);
  conic::Block& blk = p.add_block(name, ne + mn);
  blk.constant = CMat::Zero(ne + mn, ne + mn);
  blk.constant.topLeftCorner(ne, ne) = gamma_m * CMat::Identity(ne, ne);
  blk.constant += hermitize(d * va.v_const * d.adjoint());
  detail::add_v_affine_term(blk, var_u, va, d);
  const double inv_eps2 = 1.0 / (sc.eps_e * sc.eps_e);
  for (int i = 0; i < ne; ++i) {
    blk.add_scalar_entry(var_tau, i, i, cplx(-1.0, 0.0));
  }
  for (int i = 0; i < mn; ++i) {
    blk.add_scalar_entry(var_tau, ne + i, ne + i, cplx(inv_eps2, 0.0));
  }
  p.add_scalar_lower_bound(var_tau, 0.0, name + "/tau_nn");
  return blk;
}

// Passive stage, eps_e = 0: X_hat^H V(U) X_hat + gamma_M I >= 0.
inline conic::Block& emit_secrecy_nonrobust_passive(
    conic::Problem& p, const StackedChannel& sc, double gamma_m,
    const CMat& h_bi, const CMat& w_prime, int var_u,
    const std::string& name) {
  const int ne = static_cast<int>(sc.x_hat.cols());
  const VAffine va = build_v_affine_in_u(h_bi, w_prime,
                                         svd_outer_terms(h_bi, w_prime));
  const CMat d = sc.x_hat.adjoint();  // Ne x (M+N_t)
  conic::Block& blk = p.add_block(name, ne);
  blk.constant = gamma_m * CMat::Identity(ne, ne) +
                 hermitize(d * va.v_const * d.adjoint());
  detail::add_v_affine_term(blk, var_u, va, d);
  return blk;
}

// Dense reference for the robust LMI at concrete (V, tau); used by tests
// and by post-solve certificate checks.
inline CMat dense_sprocedure_lmi(const StackedChannel& sc, const CMat& v,
                                 double gamma_m, double tau) {
  const int ne = static_cast<int>(sc.x_hat.cols());
  const int mn = static_cast<int>(sc.x_hat.rows());
  CMat l(ne + mn, ne + mn);
  l.topLeftCorner(ne, ne) = sc.x_hat.adjoint() * v * sc.x_hat +
                            (gamma_m - tau) * CMat::Identity(ne, ne);
  l.topRightCorner(ne, mn) = sc.x_hat.adjoint() * v;
  l.bottomLeftCorner(mn, ne) = v * sc.x_hat;
  l.bottomRightCorner(mn, mn) =
      v + (tau / (sc.eps_e * sc.eps_e)) * CMat::Identity(mn, mn);
  return hermitize(l);
}

}  // namespace irsbeam
