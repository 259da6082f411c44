// SPDX-License-Identifier: MIT
//
// Geometry, fading, and channel-uncertainty model for a reflecting-surface
// assisted two-user downlink with a multi-antenna eavesdropper.
//
// Node layout: the base station (N_t antennas) sits at the origin, the
// surface (M elements) at distance d_BI on the x-axis. User 1 and the
// eavesdropper fall uniformly in a disk of radius r_B around the base
// station; user 2 falls uniformly in a disk of radius r_I around the
// surface (its direct path is blocked). Each link draws i.i.d. CN(0,1)
// small-scale fading scaled by d^(-alpha/2); surface-involved links use
// alpha_irs, direct base-station links alpha_bs.
//
// The eavesdropper's channels are known only as estimates G_hat with
// Frobenius-ball errors ||Delta_Ie||_F <= eps_Ie, ||Delta_Be||_F <= eps_Be.
// The combined radius eps_e = eps_Ie + eps_Be is what the robust secrecy
// constraint consumes; the normalized error is xi_n = eps_e / ||X_hat||_F
// with X_hat = [G_Ie_hat; G_Be_hat].

#pragma once

#include <optional>
#include <stdexcept>

#include "irsbeam/common.hpp"

namespace irsbeam {

struct Dims {
  int nt = 0;  // base-station antennas
  int m = 0;   // reflecting elements
  int ne = 0;  // eavesdropper antennas
};

struct Geometry {
  Eigen::Vector2d bs_pos{0.0, 0.0};
  Eigen::Vector2d irs_pos{50.0, 0.0};
  Eigen::Vector2d u1_pos{0.0, 0.0};
  Eigen::Vector2d u2_pos{0.0, 0.0};
  Eigen::Vector2d e_pos{0.0, 0.0};
  double d_bi = 50.0;
  double r_b = 2.0;
  double r_i = 2.0;
};

struct FadingParams {
  double alpha_irs = 2.0;  // exponent for surface-involved links
  double alpha_bs = 4.0;   // exponent for direct base-station links
  std::uint64_t rng_seed = 1;
};

struct ChannelSet {
  CVec h_i1;      // surface -> user 1, length M
  CVec h_i2;      // surface -> user 2, length M
  CVec h_b1;      // base station -> user 1, length N_t
  CMat h_bi;      // base station -> surface, M x N_t
  CMat g_be_hat;  // base station -> eavesdropper estimate, N_t x N_e
  CMat g_ie_hat;  // surface -> eavesdropper estimate, M x N_e
  double eps_ie = 0.0;
  double eps_be = 0.0;
  double eps_e = 0.0;

  int m() const { return static_cast<int>(h_i1.size()); }
  int nt() const { return static_cast<int>(h_b1.size()); }
  int ne() const { return static_cast<int>(g_be_hat.cols()); }
};

struct EffectiveChannels {
  CVec h1;   // length N_t
  CVec h2;   // length N_t
  CMat g_e;  // N_t x N_e
};

struct UncertaintySample {
  CMat dg_ie;  // M x N_e
  CMat dg_be;  // N_t x N_e
};

inline Eigen::Vector2d sample_disk(const Eigen::Vector2d& center,
                                   double radius, Rng& rng) {
  const double r = radius * std::sqrt(rng.uniform());
  const double a = rng.uniform(0.0, 2.0 * kPi);
  return center + r * Eigen::Vector2d(std::cos(a), std::sin(a));
}

inline Geometry sample_geometry(double d_bi, double r_b, double r_i,
                                Rng& rng) {
  if (d_bi <= 0.0 || r_b < 0.0 || r_i < 0.0) {
    throw std::invalid_argument("sample_geometry: invalid distances");
  }
  Geometry g;
  g.d_bi = d_bi;
  g.r_b = r_b;
  g.r_i = r_i;
  g.bs_pos = {0.0, 0.0};
  g.irs_pos = {d_bi, 0.0};
  g.u1_pos = sample_disk(g.bs_pos, r_b, rng);
  g.u2_pos = sample_disk(g.irs_pos, r_i, rng);
  g.e_pos = sample_disk(g.bs_pos, r_b, rng);
  return g;
}

namespace detail {

inline CMat rayleigh(int r, int c, double dist, double alpha, Rng& rng) {
  const double gain = std::pow(dist, -0.5 * alpha);
  CMat h(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) {
      h(i, j) = gain * rng.complex_gaussian();
    }
  }
  return h;
}

}  // namespace detail

// Draws all links for one trial. Deterministic given the rng state.
inline ChannelSet sample_channels(const Geometry& geom,
                                  const FadingParams& fading,
                                  const Dims& dims, Rng& rng) {
  if (dims.nt <= 0 || dims.m <= 0 || dims.ne <= 0) {
    throw std::invalid_argument("sample_channels: dimensions must be > 0");
  }
  const auto dist = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const double d = (a - b).norm();
    if (d <= 0.0) {
      throw std::invalid_argument("sample_channels: coincident nodes");
    }
    return d;
  };
  ChannelSet cs;
  cs.h_bi = detail::rayleigh(dims.m, dims.nt, dist(geom.bs_pos, geom.irs_pos),
                             fading.alpha_irs, rng);
  cs.h_i1 = detail::rayleigh(dims.m, 1, dist(geom.irs_pos, geom.u1_pos),
                             fading.alpha_irs, rng);
  cs.h_i2 = detail::rayleigh(dims.m, 1, dist(geom.irs_pos, geom.u2_pos),
                             fading.alpha_irs, rng);
  cs.h_b1 = detail::rayleigh(dims.nt, 1, dist(geom.bs_pos, geom.u1_pos),
                             fading.alpha_bs, rng);
  cs.g_ie_hat = detail::rayleigh(dims.m, dims.ne,
                                 dist(geom.irs_pos, geom.e_pos),
                                 fading.alpha_irs, rng);
  cs.g_be_hat = detail::rayleigh(dims.nt, dims.ne,
                                 dist(geom.bs_pos, geom.e_pos),
                                 fading.alpha_bs, rng);
  return cs;
}

// eps_e = xi_n * ||X_hat||_F for the stacked estimate X_hat = [G_Ie; G_Be].
inline double radius_from_normalized_error(double xi_n, const CMat& x_hat) {
  if (xi_n < 0.0) {
    throw std::invalid_argument("radius_from_normalized_error: xi_n < 0");
  }
  return xi_n * x_hat.norm();
}

// Sets (eps_ie, eps_be, eps_e) from the normalized error xi_n, splitting
// the combined radius across the two sub-blocks in proportion to their
// Frobenius norms.
inline void set_uncertainty(ChannelSet& cs, double xi_n) {
  CMat x_hat(cs.m() + cs.nt(), cs.ne());
  x_hat.topRows(cs.m()) = cs.g_ie_hat;
  x_hat.bottomRows(cs.nt()) = cs.g_be_hat;
  cs.eps_e = radius_from_normalized_error(xi_n, x_hat);
  const double ni = cs.g_ie_hat.norm();
  const double nb = cs.g_be_hat.norm();
  const double total = ni + nb;
  if (total <= 0.0) {
    cs.eps_ie = 0.5 * cs.eps_e;
    cs.eps_be = 0.5 * cs.eps_e;
  } else {
    cs.eps_ie = cs.eps_e * ni / total;
    cs.eps_be = cs.eps_e * nb / total;
  }
}

namespace detail {

// Uniform draw in (or on) a Frobenius ball: gaussian direction scaled by
// radius * u^(1/(2 r c)) -- the 2rc exponent accounts for the real
// dimension of a complex r x c matrix.
inline CMat ball_sample(int r, int c, double radius, bool boundary,
                        Rng& rng) {
  if (radius <= 0.0) return CMat::Zero(r, c);
  CMat d(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) d(i, j) = rng.complex_gaussian();
  const double norm = d.norm();
  if (norm == 0.0) return CMat::Zero(r, c);
  const double target =
      boundary ? radius
               : radius * std::pow(rng.uniform(),
                                   1.0 / (2.0 * static_cast<double>(r) * c));
  return d * (target / norm);
}

}  // namespace detail

inline UncertaintySample sample_uncertainty(double eps_ie, double eps_be,
                                            const Dims& dims, Rng& rng,
                                            bool boundary = false) {
  if (eps_ie < 0.0 || eps_be < 0.0) {
    throw std::invalid_argument("sample_uncertainty: negative radius");
  }
  UncertaintySample s;
  s.dg_ie = detail::ball_sample(dims.m, dims.ne, eps_ie, boundary, rng);
  s.dg_be = detail::ball_sample(dims.nt, dims.ne, eps_be, boundary, rng);
  return s;
}

// Effective channels at reflection coefficients theta (the diagonal of the
// reflection matrix, |theta_m| <= 1):
//   h1^H  = h_I1^H diag(theta) H_BI + h_B1^H
//   h2^H  = h_I2^H diag(theta) H_BI
//   G_e^H = G_Ie^H diag(theta) H_BI + G_Be^H
// When a perturbation is supplied the eavesdropper estimate becomes
// G_hat + Delta.
inline EffectiveChannels effective_channels(
    const ChannelSet& cs, const CVec& theta,
    const std::optional<UncertaintySample>& delta = std::nullopt) {
  if (theta.size() != cs.m()) {
    throw std::invalid_argument("effective_channels: theta length mismatch");
  }
  if (delta && (delta->dg_ie.rows() != cs.m() ||
                delta->dg_ie.cols() != cs.ne() ||
                delta->dg_be.rows() != cs.nt() ||
                delta->dg_be.cols() != cs.ne())) {
    throw std::invalid_argument("effective_channels: perturbation mismatch");
  }
  EffectiveChannels ec;
  const CVec tc = theta.conjugate();
  // h = (x^H diag(theta) H)^H = H^H diag(conj(theta)) x
  ec.h1 = cs.h_bi.adjoint() * tc.cwiseProduct(cs.h_i1).matrix() + cs.h_b1;
  ec.h2 = cs.h_bi.adjoint() * tc.cwiseProduct(cs.h_i2).matrix();
  CMat g_ie = cs.g_ie_hat;
  CMat g_be = cs.g_be_hat;
  if (delta) {
    g_ie += delta->dg_ie;
    g_be += delta->dg_be;
  }
  ec.g_e = cs.h_bi.adjoint() * (tc.asDiagonal() * g_ie) + g_be;
  return ec;
}

// NOMA decoding order: user 1 must have the stronger effective channel.
inline bool check_ordering(const ChannelSet& cs, const CVec& theta) {
  const EffectiveChannels ec = effective_channels(cs, theta);
  return ec.h1.squaredNorm() >= ec.h2.squaredNorm();
}

}  // namespace irsbeam
