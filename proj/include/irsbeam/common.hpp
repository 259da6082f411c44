// SPDX-License-Identifier: MIT
//
// Shared scalar/matrix aliases, deterministic RNG streams, and small
// linear-algebra helpers used across the library.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace irsbeam {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// --- deterministic RNG -------------------------------------------------

// splitmix64: fast integer mixer, used both as a stream deriver and as the
// core generator. Sequences depend only on the 64-bit state, which keeps
// every sampled quantity reproducible across platforms.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d9b94c94f5d95fULL;
  return z ^ (z >> 31);
}

// Derives an independent substream seed from (master, tag, index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t index) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ULL * (tag + 1);
  std::uint64_t b = splitmix64(s);
  s ^= 0xd1b54a32d192ed03ULL * (index + 1);
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ (c >> 1) ^ (tag * 0x2545f4914f6cdd1dULL)
         ^ (index + 0x632be59bd9b4e019ULL);
}

// Self-contained generator: xorshift-free splitmix64 stream plus an explicit
// Box-Muller transform, so gaussian draws do not depend on any C++ standard
// library distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on (0, 1]: never returns 0 so log() below is safe.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the paired deviate.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // CN(0, 1): unit-variance circularly symmetric complex gaussian.
  cplx complex_gaussian() {
    const double re = gaussian();
    const double im = gaussian();
    return cplx(re * M_SQRT1_2, im * M_SQRT1_2);
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// --- dB helpers ---------------------------------------------------------

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

// --- Hermitian helpers --------------------------------------------------

inline CMat hermitize(const CMat& a) { return 0.5 * (a + a.adjoint()); }

inline bool is_hermitian(const CMat& a, double tol = 1e-12) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <=
         tol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

// Largest eigenpair of a Hermitian matrix. The eigenvector phase is fixed so
// that its largest-magnitude entry is real and positive, which makes
// extraction deterministic.
inline std::pair<double, CVec> principal_eigpair(const CMat& w) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(w));
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("principal_eigpair: eigensolver failed");
  }
  const Eigen::Index n = w.rows();
  const double lam = es.eigenvalues()(n - 1);
  CVec v = es.eigenvectors().col(n - 1);
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      imax = i;
    }
  }
  if (best > 0.0) {
    v *= std::conj(v(imax)) / std::abs(v(imax));
  }
  return {lam, v};
}

// lambda_max / trace for a PSD matrix; by convention 1 for a (near-)zero
// matrix, whose rank is already <= 1.
inline double rank_one_ratio(const CMat& w, double zero_tol = 1e-12) {
  const double tr = w.real().trace();
  if (tr <= zero_tol) return 1.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(w));
  return es.eigenvalues()(w.rows() - 1) / tr;
}

}  // namespace irsbeam
