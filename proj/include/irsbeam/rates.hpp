// SPDX-License-Identifier: MIT
//
// Achievable-rate evaluation and solution checking.
//
// Noise is normalized to 1 throughout, so transmit powers are expressed
// relative to the noise floor. With effective channels h1, h2 (length N_t)
// and G_e (N_t x N_e), precoders w1, w2 (covariances W_i = w_i w_i^H) and
// artificial-noise covariance W_AN:
//
//   user 1 decoding user 2's symbol:  SINR = |h1^H w2|^2
//                                            / (|h1^H w1|^2 + h1^H W_AN h1 + 1)
//   user 1 decoding its own symbol:   SINR = |h1^H w1|^2 / (h1^H W_AN h1 + 1)
//   user 2 decoding its own symbol:   SINR = |h2^H w2|^2
//                                            / (|h2^H w1|^2 + h2^H W_AN h2 + 1)
//
// The eavesdropper applies MMSE combining across its N_e antennas, giving
//   R_e,i = log2 det(I + (G^H W_AN G + I)^(-1) G^H W_i G),
// which reduces to log2(1 + w_i^H G Q^(-1) G^H w_i) for rank-one W_i.
//
// The worst-case eavesdropping rate over the channel-error balls
// ||DG_Ie||_F <= eps_ie, ||DG_Be||_F <= eps_be is estimated from below by
// boundary sampling followed by projected-gradient ascent. Refinement
// starts are the zero perturbation plus a fixed prefix of the sample
// stream, so enlarging n_samples never removes a candidate and the
// estimate is monotone in n_samples for a shared seed.

#pragma once

#include <algorithm>
#include <sstream>
#include <string>

#include "irsbeam/channel.hpp"
#include "irsbeam/common.hpp"

namespace irsbeam {

struct BeamformerSolution {
  CMat w1_cov;   // W_1, N_t x N_t Hermitian PSD
  CMat w2_cov;   // W_2
  CMat an_cov;   // W_AN (size 0 means no artificial noise)
  CVec w1;       // rank-one factor of W_1 when extracted (size 0 otherwise)
  CVec w2;       // rank-one factor of W_2
  CVec theta;    // reflection coefficients, |theta_m| <= 1
  double tau1 = 0.0;  // auxiliary secrecy slacks from the design stage
  double tau2 = 0.0;
};

struct OracleParams {
  int n_samples = 2000;
  int n_ascent_steps = 25;
  int n_refine_starts = 16;
  std::uint64_t seed = 1;
  double secrecy_slack = 1e-6;  // allowance when comparing against R_M
};

struct FeasibilityReport {
  double r11 = 0.0;
  double r12 = 0.0;
  double r22 = 0.0;
  double re1_wc = 0.0;
  double re2_wc = 0.0;
  bool qos_ok = false;
  bool sic_ok = false;
  bool order_ok = false;
  bool secrecy_ok = false;
  double total_power = 0.0;
  bool reflect_ok = false;

  bool all_ok() const {
    return qos_ok && sic_ok && order_ok && secrecy_ok && reflect_ok;
  }

  static std::string csv_header() {
    return "r11,r12,r22,re1_wc,re2_wc,qos_ok,sic_ok,order_ok,secrecy_ok,"
           "total_power,reflect_ok";
  }

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << r11 << ',' << r12 << ',' << r22 << ',' << re1_wc << ',' << re2_wc
       << ',' << int(qos_ok) << ',' << int(sic_ok) << ',' << int(order_ok)
       << ',' << int(secrecy_ok) << ',' << total_power << ','
       << int(reflect_ok);
    return os.str();
  }
};

namespace detail {

inline double quad_form(const CVec& h, const CMat& w) {
  if (w.size() == 0) return 0.0;
  return std::max(0.0, (h.adjoint() * w * h).value().real());
}

// Received power of stream i at channel h: |h^H w|^2 from the rank-one
// factor when available, h^H W h from the covariance otherwise.
inline double signal_power(const CVec& h, const CMat& cov, const CVec& w) {
  if (w.size() != 0) return std::norm(h.dot(w));
  return quad_form(h, cov);
}

inline double log2det_pd(const CMat& a) {
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("log2det_pd: matrix not positive definite");
  }
  double acc = 0.0;
  const auto& l = llt.matrixL();
  for (int i = 0; i < a.rows(); ++i) {
    acc += std::log2(std::abs(cplx(l(i, i))));
  }
  return 2.0 * acc;
}

}  // namespace detail

// Rate of user 1 decoding user 2's symbol (first SIC stage).
inline double rate_u1_s2(const CVec& h1, const BeamformerSolution& sol) {
  const double s2 = detail::signal_power(h1, sol.w2_cov, sol.w2);
  const double s1 = detail::signal_power(h1, sol.w1_cov, sol.w1);
  const double an = detail::quad_form(h1, sol.an_cov);
  return std::log2(1.0 + s2 / (s1 + an + 1.0));
}

// Rate of user 1 decoding its own symbol after cancelling user 2.
inline double rate_u1_s1(const CVec& h1, const BeamformerSolution& sol) {
  const double s1 = detail::signal_power(h1, sol.w1_cov, sol.w1);
  const double an = detail::quad_form(h1, sol.an_cov);
  return std::log2(1.0 + s1 / (an + 1.0));
}

// Rate of user 2 decoding its own symbol (treats user 1's as noise).
inline double rate_u2_s2(const CVec& h2, const BeamformerSolution& sol) {
  const double s2 = detail::signal_power(h2, sol.w2_cov, sol.w2);
  const double s1 = detail::signal_power(h2, sol.w1_cov, sol.w1);
  const double an = detail::quad_form(h2, sol.an_cov);
  return std::log2(1.0 + s2 / (s1 + an + 1.0));
}

// Eavesdropping rate on stream i (1 or 2) at effective channel G_e,
// assuming MMSE combining. Uses the rank-one reduction when the factor is
// available, the log-det form otherwise.
inline double eaves_rate(const CMat& g_e, const BeamformerSolution& sol,
                         int stream) {
  if (stream != 1 && stream != 2) {
    throw std::invalid_argument("eaves_rate: stream must be 1 or 2");
  }
  const int ne = static_cast<int>(g_e.cols());
  CMat q = CMat::Identity(ne, ne);
  if (sol.an_cov.size() != 0) {
    q += g_e.adjoint() * sol.an_cov * g_e;
  }
  const CVec& w = (stream == 1) ? sol.w1 : sol.w2;
  if (w.size() != 0) {
    const CVec a = g_e.adjoint() * w;
    const double s =
        std::max(0.0, (a.adjoint() * q.llt().solve(a)).value().real());
    return std::log2(1.0 + s);
  }
  const CMat& cov = (stream == 1) ? sol.w1_cov : sol.w2_cov;
  const CMat sig = g_e.adjoint() * cov * g_e;
  return detail::log2det_pd(hermitize(q + sig)) -
         detail::log2det_pd(hermitize(q));
}

inline double total_power(const BeamformerSolution& sol) {
  const auto tr = [](const CMat& w, const CVec& v) {
    if (w.size() != 0) return w.trace().real();
    if (v.size() != 0) return v.squaredNorm();
    return 0.0;
  };
  return tr(sol.w1_cov, sol.w1) + tr(sol.w2_cov, sol.w2) +
         tr(sol.an_cov, CVec());
}

namespace detail {

inline void project_ball(CMat& d, double eps) {
  const double n = d.norm();
  if (n > eps) d *= (eps / std::max(n, 1e-300));
}

}  // namespace detail

// Lower bound on max R_e,i over the error balls, via boundary sampling and
// projected-gradient ascent (central differences, step 1e-6 * eps_e).
inline double worst_case_eaves_rate(const ChannelSet& cs,
                                    const BeamformerSolution& sol,
                                    int stream, int n_samples,
                                    int n_ascent_steps,
                                    std::uint64_t seed = 1,
                                    int n_refine_starts = 16) {
  if (sol.theta.size() != cs.m()) {
    throw std::invalid_argument("worst_case_eaves_rate: theta mismatch");
  }
  const auto eval = [&](const UncertaintySample& d) {
    return eaves_rate(effective_channels(cs, sol.theta, d).g_e, sol, stream);
  };
  UncertaintySample zero;
  zero.dg_ie = CMat::Zero(cs.m(), cs.ne());
  zero.dg_be = CMat::Zero(cs.nt(), cs.ne());
  if (cs.eps_e <= 0.0) return eval(zero);

  const Dims dims{cs.nt(), cs.m(), cs.ne()};
  double best = eval(zero);
  std::vector<UncertaintySample> starts;
  starts.push_back(zero);
  for (int k = 0; k < n_samples; ++k) {
    // Per-sample rng keyed by index keeps sample k identical no matter how
    // many samples are requested (nested-set monotonicity).
    Rng rng(derive_seed(seed, 0x77c5u, static_cast<std::uint64_t>(k)));
    const UncertaintySample s =
        sample_uncertainty(cs.eps_ie, cs.eps_be, dims, rng,
                           /*boundary=*/true);
    best = std::max(best, eval(s));
    if (static_cast<int>(starts.size()) <= n_refine_starts) {
      starts.push_back(s);
    }
  }

  const double fd_step = 1e-6 * cs.eps_e;
  for (auto& x : starts) {
    double fx = eval(x);
    double alpha = 0.15 * cs.eps_e;
    for (int it = 0; it < n_ascent_steps; ++it) {
      // Central-difference gradient over the real parameterization.
      UncertaintySample g = x;
      g.dg_ie.setZero();
      g.dg_be.setZero();
      const auto grad_block = [&](CMat UncertaintySample::* blk) {
        CMat& gm = g.*blk;
        UncertaintySample probe = x;
        CMat& pm = probe.*blk;
        for (int j = 0; j < gm.cols(); ++j) {
          for (int i = 0; i < gm.rows(); ++i) {
            const cplx saved = pm(i, j);
            pm(i, j) = saved + fd_step;
            const double fpr = eval(probe);
            pm(i, j) = saved - fd_step;
            const double fmr = eval(probe);
            pm(i, j) = saved + cplx(0.0, fd_step);
            const double fpi = eval(probe);
            pm(i, j) = saved - cplx(0.0, fd_step);
            const double fmi = eval(probe);
            pm(i, j) = saved;
            gm(i, j) = cplx(fpr - fmr, fpi - fmi) / (2.0 * fd_step);
          }
        }
      };
      grad_block(&UncertaintySample::dg_ie);
      grad_block(&UncertaintySample::dg_be);
      const double gnorm = std::sqrt(g.dg_ie.squaredNorm() +
                                     g.dg_be.squaredNorm());
      if (gnorm < 1e-14) break;
      bool improved = false;
      for (int bt = 0; bt < 4 && !improved; ++bt) {
        UncertaintySample trial = x;
        trial.dg_ie += (alpha / gnorm) * g.dg_ie;
        trial.dg_be += (alpha / gnorm) * g.dg_be;
        detail::project_ball(trial.dg_ie, cs.eps_ie);
        detail::project_ball(trial.dg_be, cs.eps_be);
        const double ft = eval(trial);
        if (ft > fx) {
          x = trial;
          fx = ft;
          improved = true;
          alpha *= 1.2;
        } else {
          alpha *= 0.5;
        }
      }
      if (!improved && alpha < 1e-9 * cs.eps_e) break;
    }
    best = std::max(best, fx);
  }
  return best;
}

// Full check of a candidate solution against the design targets: QoS rate
// R_Q for both users, SIC decodability, NOMA ordering, reflection-magnitude
// bounds, and worst-case secrecy against the leakage cap R_M.
inline FeasibilityReport check_feasibility(const ChannelSet& cs,
                                           const BeamformerSolution& sol,
                                           double r_q, double r_m,
                                           double tol,
                                           const OracleParams& oracle) {
  FeasibilityReport rep;
  const EffectiveChannels ec = effective_channels(cs, sol.theta);
  rep.r11 = rate_u1_s1(ec.h1, sol);
  rep.r12 = rate_u1_s2(ec.h1, sol);
  rep.r22 = rate_u2_s2(ec.h2, sol);
  rep.re1_wc = worst_case_eaves_rate(cs, sol, 1, oracle.n_samples,
                                     oracle.n_ascent_steps, oracle.seed,
                                     oracle.n_refine_starts);
  rep.re2_wc = worst_case_eaves_rate(cs, sol, 2, oracle.n_samples,
                                     oracle.n_ascent_steps, oracle.seed,
                                     oracle.n_refine_starts);
  rep.total_power = total_power(sol);
  rep.qos_ok = rep.r11 >= r_q - tol && rep.r22 >= r_q - tol;
  rep.sic_ok = rep.r12 >= rep.r22 - tol;
  rep.order_ok = check_ordering(cs, sol.theta);
  rep.secrecy_ok = std::max(rep.re1_wc, rep.re2_wc) <=
                   r_m + oracle.secrecy_slack;
  rep.reflect_ok = true;
  for (int m = 0; m < sol.theta.size(); ++m) {
    if (std::abs(sol.theta(m)) > 1.0 + tol) rep.reflect_ok = false;
  }
  return rep;
}

}  // namespace irsbeam
