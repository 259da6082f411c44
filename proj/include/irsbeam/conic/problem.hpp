// SPDX-License-Identifier: MIT
//
// Carrier types for linear matrix inequality problems over complex Hermitian
// matrix variables and real scalar variables:
//
//   minimize    sum_v Re Tr(C_v X_v) + sum_s d_s t_s
//   subject to  S_k(X, t) >= 0                       (Hermitian PSD blocks)
//               sum_v Re Tr(H_rv X_v) + a_r^T t = b_r (equality rows)
//
// Every block is affine in the variables. Affine dependence is expressed by
// entry dependences "inner(r, c) += w * X(vr, vc)" optionally pushed through
// a fixed outer factor D (block += D * inner * D^H), which covers plain
// congruences D X D^H, trace placements Tr(H X) * E, and sparse entry maps
// with one mechanism. Scalar variables contribute fixed Hermitian
// coefficients. Solvers consume this structure after lowering each complex
// Hermitian variable onto its real parameter basis (see realify.hpp).

#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsbeam/common.hpp"
#include "irsbeam/conic/realify.hpp"

namespace irsbeam::conic {

struct MatrixVar {
  std::string name;
  int n = 0;
  // Optional pinned diagonal entry X(pin_index, pin_index) = pin_value
  // (removed from the parameter space; folded into constants).
  int pin_index = -1;
  double pin_value = 0.0;
};

struct ScalarVar {
  std::string name;
};

// inner(r, c) += w * X(vr, vc) plus the Hermitian mirror at (c, r).
// For r == c the contribution is Re(w * X(vr, vc)) so the diagonal stays
// real. Builders must emit placements with r <= c.
struct EntryDep {
  int r = 0, c = 0;
  cplx w{0.0, 0.0};
  int vr = 0, vc = 0;
};

// One affine appearance of a matrix variable inside a block:
//   block += D * (sum of entry deps applied to X) * D^H
// An empty D means the identity (inner coordinates == block coordinates).
struct MatrixTerm {
  int var = -1;
  CMat outer;  // block_n x inner_n, or empty for identity
  std::vector<EntryDep> deps;
};

// block(r, c) += w * t (+ mirror); r == c requires w real.
struct ScalarEntry {
  int r = 0, c = 0;
  cplx w{0.0, 0.0};
};

struct ScalarTerm {
  int var = -1;
  std::vector<ScalarEntry> entries;
};

struct Block {
  std::string name;
  int n = 0;
  CMat constant;  // Hermitian F0
  std::vector<MatrixTerm> mterms;
  std::vector<ScalarTerm> sterms;

  // --- builder helpers --------------------------------------------------

  MatrixTerm& add_matrix_term(int var, CMat outer = CMat()) {
    mterms.push_back(MatrixTerm{var, std::move(outer), {}});
    return mterms.back();
  }

  // block += alpha * D X D^H (or alpha * X when D is empty).
  void add_congruence(int var, const CMat& d, double alpha, int var_n) {
    MatrixTerm& t = add_matrix_term(var, d);
    t.deps.reserve(static_cast<std::size_t>(var_n) * (var_n + 1) / 2);
    for (int a = 0; a < var_n; ++a) {
      for (int b = a; b < var_n; ++b) {
        t.deps.push_back(EntryDep{a, b, cplx(alpha, 0.0), a, b});
      }
    }
  }

  // block += Re Tr(H X) * (w placed at (r, c) with Hermitian mirror).
  // For r == c the placement weight w must be real.
  void add_trace_term(int var, const CMat& h, int r, int c, cplx w,
                      double drop_tol = 0.0) {
    if (r > c) throw std::invalid_argument("add_trace_term: need r <= c");
    MatrixTerm& t = add_matrix_term(var);
    const int n = static_cast<int>(h.rows());
    for (int p = 0; p < n; ++p) {
      for (int q = 0; q < n; ++q) {
        const cplx coef = h(q, p) * w;  // Tr(H X) = sum H(q,p) X(p,q)
        if (std::abs(coef) > drop_tol) {
          t.deps.push_back(EntryDep{r, c, coef, p, q});
        }
      }
    }
  }

  void add_scalar_entry(int var, int r, int c, cplx w) {
    if (r > c) throw std::invalid_argument("add_scalar_entry: need r <= c");
    for (auto& st : sterms) {
      if (st.var == var) {
        st.entries.push_back(ScalarEntry{r, c, w});
        return;
      }
    }
    sterms.push_back(ScalarTerm{var, {ScalarEntry{r, c, w}}});
  }
};

// Re Tr(H X_v) terms + scalar terms == rhs.
struct EqualityRow {
  std::vector<std::pair<int, CMat>> mat_coeffs;
  std::vector<std::pair<int, double>> scalar_coeffs;
  double rhs = 0.0;
};

struct Problem {
  std::vector<MatrixVar> mvars;
  std::vector<ScalarVar> svars;
  std::vector<Block> blocks;
  std::vector<EqualityRow> equalities;
  std::vector<CMat> obj_mat;  // aligned with mvars; empty matrix == zero
  std::vector<double> obj_scalar;  // aligned with svars

  int add_matrix_var(const std::string& name, int n) {
    mvars.push_back(MatrixVar{name, n, -1, 0.0});
    obj_mat.emplace_back();
    return static_cast<int>(mvars.size()) - 1;
  }

  int add_scalar_var(const std::string& name) {
    svars.push_back(ScalarVar{name});
    obj_scalar.push_back(0.0);
    return static_cast<int>(svars.size()) - 1;
  }

  void pin_diagonal(int var, int index, double value) {
    mvars.at(var).pin_index = index;
    mvars.at(var).pin_value = value;
  }

  Block& add_block(const std::string& name, int n) {
    blocks.push_back(Block{name, n, CMat::Zero(n, n), {}, {}});
    return blocks.back();
  }

  // X_v >= 0 as its own block.
  Block& add_psd_block(int var, const std::string& name) {
    const int n = mvars.at(var).n;
    Block& b = add_block(name, n);
    b.add_congruence(var, CMat(), 1.0, n);
    return b;
  }

  // t >= lo as a 1x1 block.
  Block& add_scalar_lower_bound(int var, double lo, const std::string& name) {
    Block& b = add_block(name, 1);
    b.constant(0, 0) = cplx(-lo, 0.0);
    b.add_scalar_entry(var, 0, 0, cplx(1.0, 0.0));
    return b;
  }

  void set_matrix_objective(int var, const CMat& c) { obj_mat.at(var) = c; }
  void set_scalar_objective(int var, double d) { obj_scalar.at(var) = d; }

  int num_matrix_params() const {
    int m = 0;
    for (const auto& v : mvars) m += v.n * v.n - (v.pin_index >= 0 ? 1 : 0);
    return m;
  }

  // Structural checks; throws std::invalid_argument naming the offender.
  void validate() const {
    for (const auto& blk : blocks) {
      if (blk.n <= 0 || blk.constant.rows() != blk.n ||
          blk.constant.cols() != blk.n) {
        throw std::invalid_argument("block '" + blk.name +
                                    "': bad constant dimensions");
      }
      if (!is_hermitian(blk.constant, 1e-10)) {
        throw std::invalid_argument("block '" + blk.name +
                                    "': constant not Hermitian");
      }
      for (const auto& t : blk.mterms) {
        if (t.var < 0 || t.var >= static_cast<int>(mvars.size())) {
          throw std::invalid_argument("block '" + blk.name +
                                      "': bad matrix var id");
        }
        const int vn = mvars[t.var].n;
        int inner = blk.n;
        if (t.outer.size() != 0) {
          if (t.outer.rows() != blk.n) {
            throw std::invalid_argument("block '" + blk.name +
                                        "': outer factor row mismatch");
          }
          inner = static_cast<int>(t.outer.cols());
        }
        for (const auto& d : t.deps) {
          const bool inner_ok = d.r >= 0 && d.r <= d.c && d.c < inner;
          const bool var_ok =
              d.vr >= 0 && d.vr < vn && d.vc >= 0 && d.vc < vn;
          if (!inner_ok || !var_ok) {
            throw std::invalid_argument("block '" + blk.name +
                                        "': entry dep out of range");
          }
          if (d.r == d.c && d.vr == d.vc && std::abs(d.w.imag()) > 1e-12) {
            throw std::invalid_argument(
                "block '" + blk.name +
                "': complex weight on diagonal placement of a diagonal "
                "variable entry");
          }
        }
      }
      for (const auto& st : blk.sterms) {
        if (st.var < 0 || st.var >= static_cast<int>(svars.size())) {
          throw std::invalid_argument("block '" + blk.name +
                                      "': bad scalar var id");
        }
        for (const auto& e : st.entries) {
          if (e.r < 0 || e.r > e.c || e.c >= blk.n) {
            throw std::invalid_argument("block '" + blk.name +
                                        "': scalar entry out of range");
          }
          if (e.r == e.c && std::abs(e.w.imag()) > 1e-12) {
            throw std::invalid_argument("block '" + blk.name +
                                        "': complex weight on diagonal");
          }
        }
      }
    }
    for (std::size_t v = 0; v < mvars.size(); ++v) {
      if (obj_mat[v].size() != 0 &&
          (obj_mat[v].rows() != mvars[v].n || obj_mat[v].cols() != mvars[v].n))
        throw std::invalid_argument("objective matrix size mismatch for '" +
                                    mvars[v].name + "'");
      if (mvars[v].pin_index >= mvars[v].n) {
        throw std::invalid_argument("pinned index out of range for '" +
                                    mvars[v].name + "'");
      }
    }
  }

  // Plain-text dump (one record per line):
  //   var <name> <n> [pin <idx> <val>]
  //   scalar <name>
  //   objm <var> <r> <c> <re> <im>      objective matrix entries
  //   objs <var> <coef>
  //   block <name> <n>
  //   const <r> <c> <re> <im>
  //   outer <term> <r> <c> <re> <im>
  //   dep <term> <var> <r> <c> <w.re> <w.im> <vr> <vc>
  //   sdep <svar> <r> <c> <w.re> <w.im>
  //   eq <rhs> followed by eqm/eqs rows
  void dump(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("dump: cannot open " + path);
    for (const auto& v : mvars) {
      std::fprintf(f, "var %s %d", v.name.c_str(), v.n);
      if (v.pin_index >= 0)
        std::fprintf(f, " pin %d %.17g", v.pin_index, v.pin_value);
      std::fprintf(f, "\n");
    }
    for (const auto& s : svars) std::fprintf(f, "scalar %s\n", s.name.c_str());
    for (std::size_t v = 0; v < mvars.size(); ++v) {
      if (obj_mat[v].size() == 0) continue;
      for (int r = 0; r < obj_mat[v].rows(); ++r)
        for (int c = 0; c < obj_mat[v].cols(); ++c)
          if (std::abs(obj_mat[v](r, c)) > 0)
            std::fprintf(f, "objm %zu %d %d %.17g %.17g\n", v, r, c,
                         obj_mat[v](r, c).real(), obj_mat[v](r, c).imag());
    }
    for (std::size_t s = 0; s < svars.size(); ++s) {
      if (obj_scalar[s] != 0.0)
        std::fprintf(f, "objs %zu %.17g\n", s, obj_scalar[s]);
    }
    for (const auto& blk : blocks) {
      std::fprintf(f, "block %s %d\n", blk.name.c_str(), blk.n);
      for (int r = 0; r < blk.n; ++r)
        for (int c = 0; c < blk.n; ++c)
          if (std::abs(blk.constant(r, c)) > 0)
            std::fprintf(f, "const %d %d %.17g %.17g\n", r, c,
                         blk.constant(r, c).real(), blk.constant(r, c).imag());
      for (std::size_t t = 0; t < blk.mterms.size(); ++t) {
        const auto& mt = blk.mterms[t];
        for (int r = 0; r < mt.outer.rows(); ++r)
          for (int c = 0; c < mt.outer.cols(); ++c)
            if (std::abs(mt.outer(r, c)) > 0)
              std::fprintf(f, "outer %zu %d %d %.17g %.17g\n", t, r, c,
                           mt.outer(r, c).real(), mt.outer(r, c).imag());
        for (const auto& d : mt.deps)
          std::fprintf(f, "dep %zu %d %d %d %.17g %.17g %d %d\n", t, mt.var,
                       d.r, d.c, d.w.real(), d.w.imag(), d.vr, d.vc);
      }
      for (const auto& st : blk.sterms)
        for (const auto& e : st.entries)
          std::fprintf(f, "sdep %d %d %d %.17g %.17g\n", st.var, e.r, e.c,
                       e.w.real(), e.w.imag());
    }
    for (const auto& eq : equalities) {
      std::fprintf(f, "eq %.17g\n", eq.rhs);
      for (const auto& [v, h] : eq.mat_coeffs)
        for (int r = 0; r < h.rows(); ++r)
          for (int c = 0; c < h.cols(); ++c)
            if (std::abs(h(r, c)) > 0)
              std::fprintf(f, "eqm %d %d %d %.17g %.17g\n", v, r, c,
                           h(r, c).real(), h(r, c).imag());
      for (const auto& [s, coef] : eq.scalar_coeffs)
        std::fprintf(f, "eqs %d %.17g\n", s, coef);
    }
    std::fclose(f);
  }
};

}  // namespace irsbeam::conic
