// SPDX-License-Identifier: MIT
//
// Real embedding of complex Hermitian matrices and the real parameter basis
// used to expose Hermitian matrix variables to a real symmetric-cone solver.
//
// A complex matrix A maps to
//   R(A) = [ Re A  -Im A ]
//          [ Im A   Re A ]
// which is a *-homomorphism: R(AB) = R(A)R(B), R(A^H) = R(A)^T, and A >= 0
// iff R(A) >= 0 (each eigenvalue of A appears twice in R(A)).

#pragma once

#include <cassert>
#include <vector>

#include "irsbeam/common.hpp"

namespace irsbeam::conic {

inline RMat realify(const CMat& a) {
  const Eigen::Index m = a.rows(), n = a.cols();
  RMat r(2 * m, 2 * n);
  r.topLeftCorner(m, n) = a.real();
  r.bottomRightCorner(m, n) = a.real();
  r.topRightCorner(m, n) = -a.imag();
  r.bottomLeftCorner(m, n) = a.imag();
  return r;
}

// Inverse of realify for matrices in the embedded subalgebra; averages the
// redundant blocks so it is well behaved on nearly-embedded inputs.
inline CMat derealify(const RMat& r) {
  assert(r.rows() % 2 == 0 && r.cols() % 2 == 0);
  const Eigen::Index m = r.rows() / 2, n = r.cols() / 2;
  CMat a(m, n);
  a.real() = 0.5 * (r.topLeftCorner(m, n) + r.bottomRightCorner(m, n));
  a.imag() = 0.5 * (r.bottomLeftCorner(m, n) - r.topRightCorner(m, n));
  return a;
}

// One real entry of a realified coefficient matrix.
struct RealTriplet {
  int r;
  int c;
  double v;
};

// Parameterization of an n x n Hermitian matrix by n^2 real numbers:
//   params [0, n)            -> X(a, a)
//   then for each a < b      -> Re X(a, b), Im X(a, b)  (row-major pairs)
// Provides packing, unpacking, trace gradients, and the realified basis
// matrix of each parameter as a sparse triplet list.
class HermBasis {
 public:
  explicit HermBasis(int n) : n_(n) {}

  int n() const { return n_; }
  int num_params() const { return n_ * n_; }

  int diag_index(int a) const { return a; }

  int re_index(int a, int b) const { return n_ + 2 * pair_rank(a, b); }
  int im_index(int a, int b) const { return n_ + 2 * pair_rank(a, b) + 1; }

  CMat unpack(const Eigen::Ref<const RVec>& x) const {
    assert(x.size() == num_params());
    CMat m = CMat::Zero(n_, n_);
    for (int a = 0; a < n_; ++a) m(a, a) = x(a);
    for (int a = 0; a < n_; ++a) {
      for (int b = a + 1; b < n_; ++b) {
        const cplx v(x(re_index(a, b)), x(im_index(a, b)));
        m(a, b) = v;
        m(b, a) = std::conj(v);
      }
    }
    return m;
  }

  RVec pack(const CMat& m) const {
    assert(m.rows() == n_ && m.cols() == n_);
    RVec x(num_params());
    for (int a = 0; a < n_; ++a) x(a) = m(a, a).real();
    for (int a = 0; a < n_; ++a) {
      for (int b = a + 1; b < n_; ++b) {
        x(re_index(a, b)) = m(a, b).real();
        x(im_index(a, b)) = m(a, b).imag();
      }
    }
    return x;
  }

  // Gradient of x -> Tr(H unpack(x)) for Hermitian H (the value is real).
  RVec trace_gradient(const CMat& h) const {
    assert(h.rows() == n_ && h.cols() == n_);
    RVec g(num_params());
    for (int a = 0; a < n_; ++a) g(a) = h(a, a).real();
    for (int a = 0; a < n_; ++a) {
      for (int b = a + 1; b < n_; ++b) {
        g(re_index(a, b)) = 2.0 * h(a, b).real();
        g(im_index(a, b)) = 2.0 * h(a, b).imag();
      }
    }
    return g;
  }

  // Realified basis matrix R(E_p) of parameter p, as triplets in the
  // 2n x 2n real coordinates. Every entry (including symmetric partners)
  // is listed explicitly.
  std::vector<RealTriplet> realified_basis(int p) const {
    std::vector<RealTriplet> t;
    if (p < n_) {
      t.push_back({p, p, 1.0});
      t.push_back({n_ + p, n_ + p, 1.0});
      return t;
    }
    const auto [a, b] = pair_from_rank((p - n_) / 2);
    if (((p - n_) & 1) == 0) {
      // Re(a, b): E = e_a e_b^H + e_b e_a^H (real symmetric).
      t.push_back({a, b, 1.0});
      t.push_back({b, a, 1.0});
      t.push_back({n_ + a, n_ + b, 1.0});
      t.push_back({n_ + b, n_ + a, 1.0});
    } else {
      // Im(a, b): E = i (e_a e_b^H - e_b e_a^H); Re E = 0,
      // Im E = e_a e_b^T - e_b e_a^T.
      t.push_back({n_ + a, b, 1.0});
      t.push_back({n_ + b, a, -1.0});
      t.push_back({a, n_ + b, -1.0});
      t.push_back({b, n_ + a, 1.0});
    }
    return t;
  }

 private:
  int pair_rank(int a, int b) const {
    assert(0 <= a && a < b && b < n_);
    // Lexicographic rank of (a, b) with a < b.
    return a * n_ - a * (a + 1) / 2 + (b - a - 1);
  }

  std::pair<int, int> pair_from_rank(int rank) const {
    int a = 0;
    int row = n_ - 1;  // pairs with first index a
    while (rank >= row) {
      rank -= row;
      --row;
      ++a;
    }
    return {a, a + 1 + rank};
  }

  int n_;
};

}  // namespace irsbeam::conic
