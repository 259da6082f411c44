// SPDX-License-Identifier: MIT
//
// Primal-dual interior-point solver for the Hermitian LMI problems described
// in problem.hpp. The method is an infeasible-start HKM predictor-corrector
// (Mehrotra) scheme on the inequality form
//
//   min c^T x   s.t.   S_k(x) = F0_k + sum_j x_j F_jk >= 0,   A x = b,
//
// where x collects the real parameters of all Hermitian matrix variables
// (see HermBasis) plus the free scalar variables. Slack blocks X_k track
// S_k(x), dual blocks Z_k >= 0, and y are equality multipliers. The KKT
// conditions are
//
//   sum_k <F_jk, Z_k> + (A^T y)_j = c_j,   A x = b,   X_k = S_k(x),
//   X_k Z_k = 0,
//
// with <A, B> = Re Tr(A B). All linear algebra stays complex Hermitian;
// this is numerically identical to solving the realified real SDP (the
// embedding R(.) of realify.hpp is a *-homomorphism, so interior-point
// iterates of the realified problem remain inside the embedded subalgebra
// and project back to exactly these complex iterates, with every inner
// product doubled).
//
// The Schur complement M_jl = sum_k Re Tr(F_jk X_k^-1 F_lk Z_k) is assembled
// from the structured terms: for F_j = D T_j D^H with sparse T_j,
//   Re Tr(F_j X^-1 F_l Z) = Re Tr(T_j [D^H X^-1 D'] T_l [D'^H Z D]),
// so each block contributes small projected matrices and O(nnz^2) entry
// products instead of dense n^2 x n^2 work. M is symmetric positive
// definite whenever the combined family {F_jk} is linearly independent,
// which holds for every problem built in this library (each matrix variable
// carries its own PSD block and each scalar its own bound or constraint
// entry).
//
// Primal infeasibility is reported only with a certificate: a dual ray
// (Z, y) with adj(Z) + A^T y ~ 0 and sum_k <F0_k, Z_k> - b^T y < 0 proves
// that no feasible x exists. When the main iteration ends ambiguously the
// solver falls back to an explicit margin problem
//   min t  s.t.  S_k(x) + t I >= 0, t >= -1, A x = b
// whose sign at the optimum separates "feasible but numerically hard"
// (status numerical_failure) from genuinely infeasible constraints.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "irsbeam/common.hpp"
#include "irsbeam/conic/problem.hpp"
#include "irsbeam/conic/realify.hpp"

namespace irsbeam::conic {

enum class SolveStatus { optimal, infeasible, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    default: return "numerical_failure";
  }
}

struct SolverOptions {
  double tol_gap = 1e-8;        // relative duality gap
  double tol_feas = 1e-8;       // relative primal/dual residuals
  int max_iters = 100;
  double step_fraction = 0.95;  // fraction-to-boundary
  double init_scale = 0.0;      // 0 => derive from data
  bool allow_phase1_fallback = true;
  bool verbose = false;
  // Reduced-accuracy acceptance. When progress stalls before the strict
  // tolerances are met, the best iterate seen so far is still returned as
  // optimal if it clears these looser thresholds (ill-conditioned instances
  // routinely floor the dual residual around 1e-6 in double precision).
  double accept_gap = 1e-6;
  double accept_feas = 1e-6;
  double accept_dual = 1e-4;
  int stall_iters = 12;  // stop after this many iters without improvement
};

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<CMat> matrices;   // aligned with Problem::mvars
  std::vector<double> scalars;  // aligned with Problem::svars
  int iterations = 0;
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  double psd_residual = std::numeric_limits<double>::quiet_NaN();
  double eq_residual = 0.0;
  std::string message;
};

namespace detail {

struct LoweredEntry {
  int r, c;
  cplx w;
};

// All real parameters of one variable appearing in one term, as sparse
// Hermitian coefficient matrices in the term's inner coordinates. Entries
// include both mirror halves, so T_j is the full matrix.
struct LoweredParam {
  int col;
  std::vector<LoweredEntry> tri;
};

struct LoweredTerm {
  CMat outer;  // empty => identity
  int outer_id = -1;
  std::vector<LoweredParam> params;
};

struct LoweredBlock {
  int n = 0;
  double scale = 1.0;
  CMat constant;  // scaled F0 including pin contributions
  std::vector<LoweredTerm> terms;
  const Block* src = nullptr;
};

// Live-parameter bookkeeping for one Hermitian variable.
struct VarMap {
  HermBasis basis{1};
  int first_col = 0;
  int pin_param = -1;  // basis parameter index that is pinned, or -1
  int live_count = 0;

  int col_of(int basis_param) const {
    if (basis_param == pin_param) return -1;
    int c = basis_param;
    if (pin_param >= 0 && basis_param > pin_param) --c;
    return first_col + c;
  }
};

struct Lowered {
  std::vector<VarMap> vmaps;
  int num_cols = 0;
  int num_scalar_offset = 0;  // first scalar column
  RVec c;
  double obj_const = 0.0;
  std::vector<LoweredBlock> blocks;
  RMat eq_a;  // neq x num_cols
  RVec eq_b;
};

inline void push_entry(std::vector<LoweredEntry>& tri, int r, int c, cplx w) {
  if (r == c) {
    if (w.real() != 0.0) tri.push_back({r, c, cplx(w.real(), 0.0)});
  } else {
    if (w != cplx(0.0, 0.0)) {
      tri.push_back({r, c, w});
      tri.push_back({c, r, std::conj(w)});
    }
  }
}

// Merges duplicate positions; keeps Schur-assembly inner loops minimal.
inline void coalesce(std::vector<LoweredEntry>& tri) {
  std::sort(tri.begin(), tri.end(), [](const auto& a, const auto& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });
  std::size_t out = 0;
  for (std::size_t i = 0; i < tri.size();) {
    LoweredEntry e = tri[i];
    std::size_t j = i + 1;
    while (j < tri.size() && tri[j].r == e.r && tri[j].c == e.c) {
      e.w += tri[j].w;
      ++j;
    }
    if (std::abs(e.w) > 0.0) tri[out++] = e;
    i = j;
  }
  tri.resize(out);
}

// Expands one entry dependence into per-real-parameter coefficients.
// kappa(param) is the complex coefficient of the parameter in
// w * X(vr, vc); placement handles diagonal (real part) semantics.
inline void lower_dep(const EntryDep& d, const VarMap& vm,
                      std::vector<std::vector<LoweredEntry>>& per_param,
                      const MatrixVar& var, CMat& inner_const) {
  const auto place = [&](int basis_param, cplx kappa) {
    const int live = vm.col_of(basis_param);
    if (live < 0) return;  // pinned handled separately
    std::vector<LoweredEntry>& tri = per_param[basis_param];
    if (d.r == d.c) {
      push_entry(tri, d.r, d.c, cplx(kappa.real(), 0.0));
    } else {
      push_entry(tri, d.r, d.c, kappa);
    }
  };
  if (d.vr == d.vc) {
    if (vm.pin_param == d.vr) {
      const cplx v = d.w * var.pin_value;
      if (d.r == d.c) {
        inner_const(d.r, d.c) += cplx(v.real(), 0.0);
      } else {
        inner_const(d.r, d.c) += v;
        inner_const(d.c, d.r) += std::conj(v);
      }
      return;
    }
    place(vm.basis.diag_index(d.vr), d.w);
  } else if (d.vr < d.vc) {
    place(vm.basis.re_index(d.vr, d.vc), d.w);
    place(vm.basis.im_index(d.vr, d.vc), d.w * cplx(0.0, 1.0));
  } else {
    place(vm.basis.re_index(d.vc, d.vr), d.w);
    place(vm.basis.im_index(d.vc, d.vr), d.w * cplx(0.0, -1.0));
  }
}

inline Lowered lower(const Problem& p) {
  p.validate();
  Lowered lo;
  lo.vmaps.resize(p.mvars.size());
  int col = 0;
  for (std::size_t v = 0; v < p.mvars.size(); ++v) {
    VarMap& vm = lo.vmaps[v];
    vm.basis = HermBasis(p.mvars[v].n);
    vm.first_col = col;
    vm.pin_param = p.mvars[v].pin_index >= 0
                       ? vm.basis.diag_index(p.mvars[v].pin_index)
                       : -1;
    vm.live_count = vm.basis.num_params() - (vm.pin_param >= 0 ? 1 : 0);
    col += vm.live_count;
  }
  lo.num_scalar_offset = col;
  lo.num_cols = col + static_cast<int>(p.svars.size());

  // Objective.
  lo.c = RVec::Zero(lo.num_cols);
  for (std::size_t v = 0; v < p.mvars.size(); ++v) {
    if (p.obj_mat[v].size() == 0) continue;
    const VarMap& vm = lo.vmaps[v];
    const RVec g = vm.basis.trace_gradient(p.obj_mat[v]);
    for (int bp = 0; bp < vm.basis.num_params(); ++bp) {
      const int cc = vm.col_of(bp);
      if (cc >= 0) {
        lo.c(cc) += g(bp);
      } else {
        lo.obj_const += g(bp) * p.mvars[v].pin_value;
      }
    }
  }
  for (std::size_t s = 0; s < p.svars.size(); ++s) {
    lo.c(lo.num_scalar_offset + static_cast<int>(s)) += p.obj_scalar[s];
  }

  // Blocks.
  int next_outer_id = 0;
  std::vector<CMat> outer_pool;
  const auto outer_id_of = [&](const CMat& o) {
    if (o.size() == 0) return -1;
    for (std::size_t i = 0; i < outer_pool.size(); ++i) {
      if (outer_pool[i].rows() == o.rows() && outer_pool[i].cols() == o.cols()
          && outer_pool[i] == o) {
        return static_cast<int>(i);
      }
    }
    outer_pool.push_back(o);
    return next_outer_id++;
  };

  lo.blocks.reserve(p.blocks.size());
  for (const Block& blk : p.blocks) {
    LoweredBlock lb;
    lb.n = blk.n;
    lb.src = &blk;
    CMat constant = blk.constant;

    std::vector<LoweredTerm> terms;
    for (const MatrixTerm& mt : blk.mterms) {
      const VarMap& vm = lo.vmaps[mt.var];
      const int inner_n =
          mt.outer.size() == 0 ? blk.n : static_cast<int>(mt.outer.cols());
      CMat inner_const = CMat::Zero(inner_n, inner_n);
      std::vector<std::vector<LoweredEntry>> per_param(
          vm.basis.num_params());
      for (const EntryDep& d : mt.deps) {
        lower_dep(d, vm, per_param, p.mvars[mt.var], inner_const);
      }
      if (inner_const.cwiseAbs().maxCoeff() > 0.0) {
        if (mt.outer.size() == 0) {
          constant += hermitize(inner_const);
        } else {
          constant += hermitize(mt.outer * inner_const * mt.outer.adjoint());
        }
      }
      LoweredTerm lt;
      lt.outer = mt.outer;
      lt.outer_id = outer_id_of(mt.outer);
      for (int bp = 0; bp < vm.basis.num_params(); ++bp) {
        if (per_param[bp].empty()) continue;
        const int cc = vm.col_of(bp);
        if (cc < 0) continue;
        coalesce(per_param[bp]);
        if (per_param[bp].empty()) continue;
        lt.params.push_back(LoweredParam{cc, std::move(per_param[bp])});
      }
      if (!lt.params.empty()) terms.push_back(std::move(lt));
    }
    for (const ScalarTerm& st : blk.sterms) {
      LoweredTerm lt;
      lt.outer_id = -1;
      LoweredParam lp;
      lp.col = lo.num_scalar_offset + st.var;
      for (const ScalarEntry& e : st.entries) {
        push_entry(lp.tri, e.r, e.c, e.w);
      }
      coalesce(lp.tri);
      if (!lp.tri.empty()) {
        lt.params.push_back(std::move(lp));
        terms.push_back(std::move(lt));
      }
    }

    // Block scaling: normalize by the largest coefficient magnitude.
    double mx = constant.cwiseAbs().maxCoeff();
    for (const auto& t : terms) {
      const double onorm =
          t.outer.size() == 0 ? 1.0 : t.outer.cwiseAbs().maxCoeff();
      for (const auto& pr : t.params) {
        for (const auto& e : pr.tri) {
          mx = std::max(mx, std::abs(e.w) * onorm * onorm);
        }
      }
    }
    lb.scale = mx > 0.0 ? 1.0 / mx : 1.0;
    lb.constant = hermitize(constant) * lb.scale;
    lb.terms = std::move(terms);
    lo.blocks.push_back(std::move(lb));
  }

  // Equalities.
  const int neq = static_cast<int>(p.equalities.size());
  lo.eq_a = RMat::Zero(neq, lo.num_cols);
  lo.eq_b = RVec::Zero(neq);
  for (int r = 0; r < neq; ++r) {
    const EqualityRow& eq = p.equalities[r];
    double rhs = eq.rhs;
    for (const auto& [v, h] : eq.mat_coeffs) {
      const VarMap& vm = lo.vmaps[v];
      const RVec g = vm.basis.trace_gradient(h);
      for (int bp = 0; bp < vm.basis.num_params(); ++bp) {
        const int cc = vm.col_of(bp);
        if (cc >= 0) {
          lo.eq_a(r, cc) += g(bp);
        } else {
          rhs -= g(bp) * p.mvars[v].pin_value;
        }
      }
    }
    for (const auto& [s, coef] : eq.scalar_coeffs) {
      lo.eq_a(r, lo.num_scalar_offset + s) += coef;
    }
    lo.eq_b(r) = rhs;
  }
  return lo;
}

// Dense coefficient matrix F_j of one column within one block (scaled).
// Reference implementation used by tests and small utilities; the solver
// itself never materializes these.
inline CMat materialize_column(const LoweredBlock& lb, int col) {
  CMat f = CMat::Zero(lb.n, lb.n);
  for (const LoweredTerm& t : lb.terms) {
    for (const LoweredParam& pr : t.params) {
      if (pr.col != col) continue;
      CMat inner = CMat::Zero(
          t.outer.size() == 0 ? lb.n : static_cast<int>(t.outer.cols()),
          t.outer.size() == 0 ? lb.n : static_cast<int>(t.outer.cols()));
      for (const LoweredEntry& e : pr.tri) inner(e.r, e.c) += e.w;
      if (t.outer.size() == 0) {
        f += inner;
      } else {
        f += t.outer * inner * t.outer.adjoint();
      }
    }
  }
  return hermitize(f) * lb.scale;
}

// S_k(x) = F0 + sum_j x_j F_j for one block (scaled).
inline CMat eval_block(const LoweredBlock& lb, const RVec& x) {
  CMat s = lb.constant / lb.scale;  // fold scale once at the end
  for (const LoweredTerm& t : lb.terms) {
    const int inner_n =
        t.outer.size() == 0 ? lb.n : static_cast<int>(t.outer.cols());
    CMat inner = CMat::Zero(inner_n, inner_n);
    bool any = false;
    for (const LoweredParam& pr : t.params) {
      const double xv = x(pr.col);
      if (xv == 0.0) continue;
      any = true;
      for (const LoweredEntry& e : pr.tri) inner(e.r, e.c) += e.w * xv;
    }
    if (!any) continue;
    if (t.outer.size() == 0) {
      s += inner;
    } else {
      s += t.outer * inner * t.outer.adjoint();
    }
  }
  return hermitize(s) * lb.scale;
}

// dX = sum_j dx_j F_j for one block (scaled).
inline CMat apply_jacobian(const LoweredBlock& lb, const RVec& dx) {
  CMat s = CMat::Zero(lb.n, lb.n);
  for (const LoweredTerm& t : lb.terms) {
    const int inner_n =
        t.outer.size() == 0 ? lb.n : static_cast<int>(t.outer.cols());
    CMat inner = CMat::Zero(inner_n, inner_n);
    bool any = false;
    for (const LoweredParam& pr : t.params) {
      const double v = dx(pr.col);
      if (v == 0.0) continue;
      any = true;
      for (const LoweredEntry& e : pr.tri) {
        inner(e.r, e.c) += e.w * v;
      }
    }
    if (!any) continue;
    if (t.outer.size() == 0) {
      s += inner;
    } else {
      s += t.outer * inner * t.outer.adjoint();
    }
  }
  return hermitize(s) * lb.scale;
}

// M_jl = sum_k Re Tr(F_jk X_k^-1 F_lk Z_k) over structured terms. For
// F_j = D1 T_j D1^H and F_l = D2 T_l D2^H,
//   Re Tr(F_j Xi F_l Z) = Re Tr(T_j [D1^H Xi D2] T_l [D2^H Z D1]),
// an O(nnz(T_j) * nnz(T_l)) sum once the two projections are formed. Both
// orders of a distinct term pair contribute the same real part (take the
// conjugate transpose under the trace), so only t2 >= t1 is visited.
inline void assemble_schur(const Lowered& lo, const std::vector<CMat>& Xi,
                           const std::vector<CMat>& Z, RMat& M) {
  M.setZero();
  const auto project = [](const CMat& mid, const CMat& o1, const CMat& o2,
                          CMat& out) {
    if (o1.size() == 0 && o2.size() == 0) {
      out = mid;
    } else if (o1.size() == 0) {
      out = mid * o2;
    } else if (o2.size() == 0) {
      out = o1.adjoint() * mid;
    } else {
      out = o1.adjoint() * (mid * o2);
    }
  };
  CMat P, Q;
  for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
    const LoweredBlock& lb = lo.blocks[k];
    const double s2 = lb.scale * lb.scale;
    const int nt = static_cast<int>(lb.terms.size());
    for (int t1 = 0; t1 < nt; ++t1) {
      const auto& T1 = lb.terms[t1];
      for (int t2 = t1; t2 < nt; ++t2) {
        const auto& T2 = lb.terms[t2];
        project(Xi[k], T1.outer, T2.outer, P);
        project(Z[k], T2.outer, T1.outer, Q);
        const bool same = (t1 == t2);
        for (std::size_t a = 0; a < T1.params.size(); ++a) {
          const auto& pj = T1.params[a];
          const std::size_t b0 = same ? a : 0;
          for (std::size_t b = b0; b < T2.params.size(); ++b) {
            const auto& pl = T2.params[b];
            cplx acc(0.0, 0.0);
            for (const auto& ej : pj.tri) {
              for (const auto& el : pl.tri) {
                acc += ej.w * el.w * P(ej.c, el.r) * Q(el.c, ej.r);
              }
            }
            const double v = acc.real() * s2;
            M(pj.col, pl.col) += v;
            if (pj.col != pl.col) {
              M(pl.col, pj.col) += v;
            } else if (!same) {
              // Distinct terms hitting the same column: both orders feed
              // the diagonal entry.
              M(pj.col, pl.col) += v;
            }
          }
        }
      }
    }
  }
}

// adj_j += Re Tr(F_j G) for all columns j of this block. G need not be
// Hermitian (it appears as X^-1 (Rc - rp Z) in the KKT right-hand side).
inline void accumulate_adjoint(const LoweredBlock& lb, const CMat& g,
                               RVec& out) {
  CMat proj;
  for (const LoweredTerm& t : lb.terms) {
    const bool id = t.outer.size() == 0;
    if (!id) proj = t.outer.adjoint() * g * t.outer;
    const CMat& k = id ? g : proj;
    for (const LoweredParam& pr : t.params) {
      double acc = 0.0;
      for (const LoweredEntry& e : pr.tri) {
        acc += (e.w * k(e.c, e.r)).real();
      }
      out(pr.col) += acc * lb.scale;
    }
  }
}

}  // namespace detail

class Solver {
 public:
  explicit Solver(const Problem& p, SolverOptions opt = {})
      : prob_(p), opt_(opt), lo_(detail::lower(p)) {}

  const detail::Lowered& lowered() const { return lo_; }

  ConicSolution solve() {
    ConicSolution sol = run_main();
    if (sol.status == SolveStatus::numerical_failure &&
        opt_.allow_phase1_fallback) {
      // Ambiguous ending: classify via the margin problem.
      const double margin = feasibility_margin();
      if (std::isnan(margin)) {
        sol.message += "; phase-1 classification failed";
      } else if (margin > -1e-9) {
        sol.status = SolveStatus::infeasible;
        sol.message += "; phase-1 margin " + std::to_string(margin);
      } else {
        sol.message += "; phase-1 says feasible (margin " +
                       std::to_string(margin) + ")";
      }
    }
    return sol;
  }

  // Optimal value of min t s.t. S_k(x) + t I >= 0, t >= -1. Negative means
  // strictly feasible; NaN on failure.
  double feasibility_margin() const {
    Problem ph = prob_;
    for (auto& m : ph.obj_mat) m = CMat();
    const int t = ph.add_scalar_var("phase1_t");
    ph.obj_scalar.assign(ph.svars.size(), 0.0);
    ph.set_scalar_objective(t, 1.0);
    for (auto& blk : ph.blocks) {
      for (int i = 0; i < blk.n; ++i) {
        blk.add_scalar_entry(t, i, i, cplx(1.0, 0.0));
      }
    }
    ph.add_scalar_lower_bound(t, -1.0, "phase1_t_bound");
    SolverOptions o = opt_;
    o.allow_phase1_fallback = false;
    o.tol_gap = std::max(o.tol_gap, 1e-9);
    // Only the sign of the margin matters, so a coarse solve suffices.
    o.accept_gap = 1e-3;
    o.accept_feas = 1e-5;
    o.accept_dual = 1e-2;
    Solver s(ph, o);
    ConicSolution r = s.run_main();
    if (r.status != SolveStatus::optimal) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return r.scalars[t];
  }

 private:
  struct State {
    RVec x;
    RVec y;
    std::vector<CMat> X, Z;
  };

  ConicSolution run_main() {
    using detail::LoweredBlock;
    const int m = lo_.num_cols;
    const int neq = static_cast<int>(lo_.eq_b.size());
    const int nblk = static_cast<int>(lo_.blocks.size());

    ConicSolution sol;
    sol.matrices.resize(prob_.mvars.size());
    sol.scalars.assign(prob_.svars.size(), 0.0);

    if (m == 0) {
      sol.status = SolveStatus::optimal;
      sol.objective = lo_.obj_const;
      sol.duality_gap = 0;
      sol.psd_residual = 0;
      finalize(sol, RVec::Zero(0));
      return sol;
    }

    // Data norms for relative tolerances and the initial point.
    double f0norm = 1.0, cnorm = 1.0;
    for (const auto& lb : lo_.blocks) {
      f0norm = std::max(f0norm, lb.constant.cwiseAbs().maxCoeff());
    }
    cnorm = std::max(cnorm, lo_.c.cwiseAbs().maxCoeff());

    State st;
    st.x = RVec::Zero(m);
    st.y = RVec::Zero(neq);
    st.X.resize(nblk);
    st.Z.resize(nblk);
    const double rho = opt_.init_scale > 0 ? opt_.init_scale : 10.0;
    for (int k = 0; k < nblk; ++k) {
      const int n = lo_.blocks[k].n;
      const double sx = std::max(
          rho, 1.5 * lo_.blocks[k].constant.cwiseAbs().maxCoeff());
      st.X[k] = CMat::Identity(n, n) * sx;
      st.Z[k] = CMat::Identity(n, n) * std::max(rho, 1.5 * cnorm);
    }

    std::vector<CMat> S(nblk), Xi(nblk), Rp(nblk);
    std::vector<Eigen::LLT<CMat>> lltX(nblk), lltZ(nblk);
    RMat M(m, m);
    RVec rd(m), rhs(m);

    double total_dim = 0;
    for (const auto& lb : lo_.blocks) total_dim += lb.n;

    int iter = 0;
    std::string stall_msg;
    // Best iterate by worst normalized residual, kept for the
    // reduced-accuracy exit when the strict tolerances prove unreachable.
    RVec best_x;
    double best_score = std::numeric_limits<double>::infinity();
    double best_pobj = 0.0, best_gap = 0.0, best_einf = 0.0;
    int best_iter = -1;
    double best_mu = std::numeric_limits<double>::infinity();
    int best_mu_iter = -1;
    double last_pobj = std::numeric_limits<double>::infinity();
    int last_move_iter = 0;
    for (; iter < opt_.max_iters; ++iter) {
      // Factor current iterates.
      bool fact_ok = true;
      for (int k = 0; k < nblk; ++k) {
        lltX[k].compute(st.X[k]);
        lltZ[k].compute(st.Z[k]);
        if (lltX[k].info() != Eigen::Success ||
            lltZ[k].info() != Eigen::Success) {
          fact_ok = false;
          break;
        }
        Xi[k] = lltX[k].solve(CMat::Identity(lo_.blocks[k].n, lo_.blocks[k].n));
      }
      if (!fact_ok) {
        sol.message = "factorization failed";
        break;
      }

      // Residuals, gap, objectives.
      double pinf = 0.0, mu = 0.0;
      for (int k = 0; k < nblk; ++k) {
        S[k] = detail::eval_block(lo_.blocks[k], st.x);
        Rp[k] = S[k] - st.X[k];
        pinf = std::max(pinf, Rp[k].cwiseAbs().maxCoeff());
        mu += (st.X[k] * st.Z[k]).trace().real();
      }
      const double gap_abs = mu;
      mu /= total_dim;

      rd = lo_.c;
      for (int k = 0; k < nblk; ++k) {
        RVec adj = RVec::Zero(m);
        detail::accumulate_adjoint(lo_.blocks[k], st.Z[k], adj);
        rd -= adj;
      }
      if (neq > 0) rd -= lo_.eq_a.transpose() * st.y;
      const double dinf = rd.cwiseAbs().maxCoeff() / (1.0 + cnorm);

      RVec req = neq > 0 ? RVec(lo_.eq_b - lo_.eq_a * st.x) : RVec();
      const double einf =
          neq > 0 ? req.cwiseAbs().maxCoeff() /
                        (1.0 + lo_.eq_b.cwiseAbs().maxCoeff())
                  : 0.0;

      const double pobj = lo_.c.dot(st.x) + lo_.obj_const;
      double dobj = lo_.obj_const;
      for (int k = 0; k < nblk; ++k) {
        dobj -= (lo_.blocks[k].constant * st.Z[k]).trace().real();
      }
      if (neq > 0) dobj += lo_.eq_b.dot(st.y);
      const double rel_gap =
          std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
      const double rel_pinf = pinf / (1.0 + f0norm);

      if (opt_.verbose) {
        std::printf("it %3d  pobj % .8e dobj % .8e gap %.2e pinf %.2e "
                    "dinf %.2e einf %.2e mu %.2e\n",
                    iter, pobj, dobj, rel_gap, rel_pinf, dinf, einf, mu);
      }

      if (rel_gap <= opt_.tol_gap && rel_pinf <= opt_.tol_feas &&
          dinf <= opt_.tol_feas && einf <= opt_.tol_feas) {
        sol.status = SolveStatus::optimal;
        sol.objective = pobj;
        sol.duality_gap = gap_abs;
        sol.eq_residual = einf;
        sol.iterations = iter;
        finalize(sol, st.x);
        return sol;
      }

      const double score =
          std::max({rel_gap / opt_.accept_gap, rel_pinf / opt_.accept_feas,
                    dinf / opt_.accept_dual, einf / opt_.accept_feas});
      if (score < 0.999 * best_score) {
        best_score = score;
        best_x = st.x;
        best_pobj = pobj;
        best_gap = gap_abs;
        best_einf = einf;
        best_iter = iter;
      }
      if (mu < 0.97 * best_mu) {
        best_mu = mu;
        best_mu_iter = iter;
      }
      if (std::abs(pobj - last_pobj) > 1e-7 * (1.0 + std::abs(pobj))) {
        last_move_iter = iter;
      }
      last_pobj = pobj;
      // A plateau in the residual score alone is not terminal while the
      // barrier parameter shrinks or the objective still travels; require
      // all three to flatline.
      if (iter - best_iter >= opt_.stall_iters &&
          iter - best_mu_iter >= opt_.stall_iters &&
          iter - last_move_iter >= opt_.stall_iters) {
        stall_msg = "progress stalled";
        break;
      }

      // Primal infeasibility certificate: adj(Z) + A^T y ~ 0 with
      // sum <F0, Z> - b^T y < 0. Work with the homogeneous adjoint.
      {
        RVec hom = lo_.c - rd;  // = adj(Z) + A^T y
        double znorm = 0.0;
        for (int k = 0; k < nblk; ++k) znorm += st.Z[k].norm();
        double nu = 0.0;
        for (int k = 0; k < nblk; ++k) {
          nu += (lo_.blocks[k].constant * st.Z[k]).trace().real();
        }
        if (neq > 0) nu -= lo_.eq_b.dot(st.y);
        if (znorm > 0.0) {
          const double eta = hom.cwiseAbs().maxCoeff() / znorm;
          const double nuh = nu / znorm;
          if (nuh < -1e-9 && eta < 1e-7 * std::abs(nuh) / (1.0 + f0norm)) {
            sol.status = SolveStatus::infeasible;
            sol.iterations = iter;
            sol.message = "dual ray certificate";
            finalize(sol, st.x);
            return sol;
          }
        }
      }

      // Schur complement.
      detail::assemble_schur(lo_, Xi, st.Z, M);
      const double mreg = 1e-13 * std::max(1.0, M.diagonal().maxCoeff());
      M.diagonal().array() += mreg;
      Eigen::LLT<RMat> lltM(M);
      Eigen::LDLT<RMat> ldltM;
      const bool use_ldlt = lltM.info() != Eigen::Success;
      if (use_ldlt) {
        ldltM.compute(M);
        if (ldltM.info() != Eigen::Success) {
          sol.message = "Schur factorization failed";
          break;
        }
      }
      const auto solve_m = [&](const RVec& v) -> RVec {
        return use_ldlt ? RVec(ldltM.solve(v)) : RVec(lltM.solve(v));
      };

      // Eliminated KKT solve for a given complementarity target Rc.
      // Substituting dZ = X^-1 (Rc - dX Z) with dX = J(dx) + Rp into the
      // linearized dual equation gives
      //   M dx - A^T dy = G - rd,   A dx = req,
      // where G_j = sum_k <F_jk, X_k^-1 (Rc_k - Rp_k Z_k)>.
      RMat eq_schur;
      RMat am_inv;  // A M^-1
      if (neq > 0) {
        am_inv.resize(neq, m);
        for (int r = 0; r < neq; ++r) {
          am_inv.row(r) = solve_m(lo_.eq_a.row(r).transpose()).transpose();
        }
        eq_schur = am_inv * lo_.eq_a.transpose();
      }
      const auto kkt_solve = [&](const std::vector<CMat>& rc, RVec& dx,
                                 RVec& dy) {
        rhs = -rd;
        for (int k = 0; k < nblk; ++k) {
          const CMat g = Xi[k] * (rc[k] - Rp[k] * st.Z[k]);
          RVec adj = RVec::Zero(m);
          detail::accumulate_adjoint(lo_.blocks[k], g, adj);
          rhs += adj;
        }
        if (neq > 0) {
          // dy = (A M^-1 A^T)^-1 (req - A M^-1 rhs), dx back-substituted
          // from M dx = rhs + A^T dy.
          const RVec t1 = am_inv * rhs;
          Eigen::LDLT<RMat> es(eq_schur);
          dy = es.solve(req - t1);
          dx = solve_m(rhs + lo_.eq_a.transpose() * dy);
        } else {
          dy.resize(0);
          dx = solve_m(rhs);
        }
      };

      const auto directions = [&](const RVec& dx,
                                  std::vector<CMat>& dX,
                                  std::vector<CMat>& dZ,
                                  const std::vector<CMat>& rc) {
        for (int k = 0; k < nblk; ++k) {
          dX[k] = detail::apply_jacobian(lo_.blocks[k], dx) + Rp[k];
          CMat dz = Xi[k] * (rc[k] - dX[k] * st.Z[k]);
          dZ[k] = 0.5 * (dz + dz.adjoint());
        }
      };

      std::vector<CMat> rc(nblk), dXa(nblk), dZa(nblk), dX(nblk), dZ(nblk);
      RVec dxa(m), dya, dx(m), dy;

      // Predictor (affine scaling).
      for (int k = 0; k < nblk; ++k) rc[k] = -(st.X[k] * st.Z[k]);
      kkt_solve(rc, dxa, dya);
      directions(dxa, dXa, dZa, rc);
      const double apa = max_step(st.X, dXa, lltX);
      const double ada = max_step(st.Z, dZa, lltZ);

      double mu_aff = 0.0;
      for (int k = 0; k < nblk; ++k) {
        mu_aff += ((st.X[k] + apa * dXa[k]) * (st.Z[k] + ada * dZa[k]))
                      .trace()
                      .real();
      }
      mu_aff /= total_dim;
      double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
      sigma = std::clamp(sigma, 1e-6, 1.0);

      // Corrector.
      for (int k = 0; k < nblk; ++k) {
        rc[k] = sigma * mu * CMat::Identity(lo_.blocks[k].n, lo_.blocks[k].n)
                - st.X[k] * st.Z[k] - dXa[k] * dZa[k];
      }
      kkt_solve(rc, dx, dy);
      directions(dx, dX, dZ, rc);

      const double tau = opt_.step_fraction;
      const double ap = std::min(1.0, tau * max_step(st.X, dX, lltX));
      const double ad = std::min(1.0, tau * max_step(st.Z, dZ, lltZ));

      if (ap < 1e-8 && ad < 1e-8) {
        stall_msg = "step length collapsed";
        break;
      }

      st.x += ap * dx;
      for (int k = 0; k < nblk; ++k) {
        st.X[k] = hermitize(st.X[k] + ap * dX[k]);
        st.Z[k] = hermitize(st.Z[k] + ad * dZ[k]);
      }
      if (neq > 0) st.y += ad * dy;
    }

    if (best_iter >= 0 && best_score <= 1.0) {
      sol.status = SolveStatus::optimal;
      sol.objective = best_pobj;
      sol.duality_gap = best_gap;
      sol.eq_residual = best_einf;
      sol.iterations = iter;
      sol.message = "reduced accuracy";
      finalize(sol, best_x);
      return sol;
    }

    sol.status = SolveStatus::numerical_failure;
    sol.iterations = iter;
    if (sol.message.empty()) {
      sol.message = stall_msg.empty() ? "iteration limit" : stall_msg;
    }
    sol.objective = lo_.c.dot(st.x) + lo_.obj_const;
    finalize(sol, st.x);
    return sol;
  }

  // Largest step with X + a dX >= 0, via eigenvalues of L^-1 dX L^-H.
  static double max_step(const std::vector<CMat>& xs,
                         const std::vector<CMat>& dxs,
                         const std::vector<Eigen::LLT<CMat>>& llts) {
    double amax = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const CMat& l = llts[k].matrixL();
      CMat w = l.triangularView<Eigen::Lower>().solve(dxs[k]);
      w = l.triangularView<Eigen::Lower>()
              .solve(w.adjoint())
              .adjoint();
      Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(w),
                                             Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues()(0);
      if (lmin < 0.0) amax = std::min(amax, -1.0 / lmin);
    }
    return amax;
  }

  void finalize(ConicSolution& sol, const RVec& x) const {
    for (std::size_t v = 0; v < prob_.mvars.size(); ++v) {
      const detail::VarMap& vm = lo_.vmaps[v];
      RVec full = RVec::Zero(vm.basis.num_params());
      for (int bp = 0; bp < vm.basis.num_params(); ++bp) {
        const int cc = vm.col_of(bp);
        if (cc >= 0 && cc < x.size()) full(bp) = x(cc);
        if (cc < 0) full(bp) = prob_.mvars[v].pin_value;
      }
      sol.matrices[v] = vm.basis.unpack(full);
    }
    for (std::size_t s = 0; s < prob_.svars.size(); ++s) {
      const int cc = lo_.num_scalar_offset + static_cast<int>(s);
      sol.scalars[s] = cc < x.size() ? x(cc) : 0.0;
    }
    // Worst PSD violation of S_k(x) in unscaled units.
    double worst = 0.0;
    for (const auto& lb : lo_.blocks) {
      if (x.size() == 0) break;
      const CMat s = detail::eval_block(lb, x) / lb.scale;
      Eigen::SelfAdjointEigenSolver<CMat> es(s, Eigen::EigenvaluesOnly);
      worst = std::min(worst, es.eigenvalues()(0));
    }
    sol.psd_residual = -worst;
  }

  const Problem& prob_;
  SolverOptions opt_;
  detail::Lowered lo_;
};

inline ConicSolution solve(const Problem& p, const SolverOptions& opt = {}) {
  return Solver(p, opt).solve();
}

}  // namespace irsbeam::conic
