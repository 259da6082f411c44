// SPDX-License-Identifier: MIT
//
// Covered tests:
//   - analytic optima: scalar LP, trace-normalized PSD, lambda_max as an
//     LMI, a Schur-complement second-order cone, pinned diagonals,
//     equality-constrained recovery
//   - certified infeasibility on an impossible trace bound
//   - feasibility_margin sign on feasible/infeasible toys
//   - bitwise determinism of repeated solves
//   - structured Schur complement, Jacobian, and adjoint agree with dense
//     reference computations on a problem exercising every term kind
//   - problem validation errors name the offending block; dump writes a
//     readable file

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "irsbeam/common.hpp"
#include "irsbeam/conic/problem.hpp"
#include "irsbeam/conic/solver.hpp"

using namespace irsbeam;
using namespace irsbeam::conic;

namespace {

CMat random_complex(int r, int c, Rng& rng) {
  CMat a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.complex_gaussian();
  return a;
}

CMat random_hermitian(int n, Rng& rng) { return hermitize(random_complex(n, n, rng)); }

CMat random_pd(int n, Rng& rng) {
  const CMat b = random_complex(n, n, rng);
  return b * b.adjoint() + 0.5 * CMat::Identity(n, n);
}

}  // namespace

TEST_CASE("scalar LP: min x subject to x >= 1") {
  Problem p;
  const int x = p.add_scalar_var("x");
  p.add_scalar_lower_bound(x, 1.0, "x_lo");
  p.set_scalar_objective(x, 1.0);
  const ConicSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.scalars[x] == Catch::Approx(1.0).margin(1e-7));
}

TEST_CASE("min Tr(W) with Tr(W) >= 1 centers at I/2") {
  Problem p;
  const int w = p.add_matrix_var("W", 2);
  p.add_psd_block(w, "W_psd");
  Block& b = p.add_block("trace_lb", 1);
  b.constant(0, 0) = -1.0;
  b.add_trace_term(w, CMat::Identity(2, 2), 0, 0, 1.0);
  p.set_matrix_objective(w, CMat::Identity(2, 2));
  const ConicSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.matrices[w](0, 0).real() == Catch::Approx(0.5).margin(1e-4));
  CHECK(s.matrices[w](1, 1).real() == Catch::Approx(0.5).margin(1e-4));
  CHECK(s.duality_gap < 1e-6);
  CHECK(s.psd_residual < 1e-7);
}

TEST_CASE("min x with x I - H >= 0 finds lambda_max") {
  Rng rng(21);
  for (int n : {2, 4, 6}) {
    const CMat h = random_hermitian(n, rng);
    Problem p;
    const int x = p.add_scalar_var("x");
    Block& b = p.add_block("lmax", n);
    b.constant = -h;
    for (int i = 0; i < n; ++i) b.add_scalar_entry(x, i, i, 1.0);
    p.set_scalar_objective(x, 1.0);
    const ConicSolution s = solve(p);
    REQUIRE(s.status == SolveStatus::optimal);
    Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
    CHECK(s.objective == Catch::Approx(es.eigenvalues()(n - 1)).margin(1e-6));
  }
}

TEST_CASE("Schur-complement cone: min z with [[z, a^T],[a, I]] >= 0") {
  Problem p;
  const int z = p.add_scalar_var("z");
  Block& b = p.add_block("soc", 3);
  b.constant << cplx(0, 0), cplx(3, 0), cplx(4, 0),
                cplx(3, 0), cplx(1, 0), cplx(0, 0),
                cplx(4, 0), cplx(0, 0), cplx(1, 0);
  b.add_scalar_entry(z, 0, 0, 1.0);
  p.set_scalar_objective(z, 1.0);
  const ConicSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == Catch::Approx(25.0).epsilon(1e-6));
}

TEST_CASE("certified infeasibility: W >= 0 with Tr(W) <= -1") {
  Problem p;
  const int w = p.add_matrix_var("W", 2);
  p.add_psd_block(w, "W_psd");
  Block& b = p.add_block("bad_trace", 1);
  b.constant(0, 0) = -1.0;
  b.add_trace_term(w, CMat::Identity(2, 2), 0, 0, -1.0);
  p.set_matrix_objective(w, CMat::Identity(2, 2));
  const ConicSolution s = solve(p);
  CHECK(s.status == SolveStatus::infeasible);
}

TEST_CASE("feasibility margin sign") {
  Problem feas;
  const int x = feas.add_scalar_var("x");
  feas.add_scalar_lower_bound(x, 1.0, "x_lo");
  CHECK(Solver(feas).feasibility_margin() < -1e-3);

  Problem infeas;
  const int w = infeas.add_matrix_var("W", 2);
  infeas.add_psd_block(w, "W_psd");
  Block& b = infeas.add_block("bad_trace", 1);
  b.constant(0, 0) = -1.0;
  b.add_trace_term(w, CMat::Identity(2, 2), 0, 0, -1.0);
  CHECK(Solver(infeas).feasibility_margin() > 1e-6);
}

TEST_CASE("equalities recover the unique feasible point") {
  Problem p;
  const int x = p.add_scalar_var("x");
  const int y = p.add_scalar_var("y");
  p.add_scalar_lower_bound(x, 0.0, "x_lo");
  p.add_scalar_lower_bound(y, 0.0, "y_lo");
  EqualityRow r1;
  r1.scalar_coeffs = {{x, 1.0}, {y, 1.0}};
  r1.rhs = 2.0;
  EqualityRow r2;
  r2.scalar_coeffs = {{x, 1.0}, {y, -1.0}};
  r2.rhs = 0.0;
  p.equalities = {r1, r2};
  p.set_scalar_objective(x, 1.0);
  const ConicSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.scalars[x] == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.scalars[y] == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.eq_residual < 1e-8);
}

TEST_CASE("pinned diagonal entries are honored exactly") {
  Problem p;
  const int w = p.add_matrix_var("W", 2);
  p.pin_diagonal(w, 1, 2.0);
  p.add_psd_block(w, "W_psd");
  p.set_matrix_objective(w, CMat::Identity(2, 2));
  const ConicSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.matrices[w](1, 1).real() == 2.0);
  CHECK(s.objective == Catch::Approx(2.0).margin(1e-6));
  CHECK(std::abs(s.matrices[w](0, 1)) < 1e-5);
}

TEST_CASE("repeated solves are bitwise identical") {
  Rng rng(22);
  const CMat h = random_hermitian(5, rng);
  const auto build = [&]() {
    Problem p;
    const int x = p.add_scalar_var("x");
    Block& b = p.add_block("lmax", 5);
    b.constant = -h;
    for (int i = 0; i < 5; ++i) b.add_scalar_entry(x, i, i, 1.0);
    p.set_scalar_objective(x, 1.0);
    return p;
  };
  const Problem p1 = build();
  const Problem p2 = build();
  const ConicSolution s1 = solve(p1);
  const ConicSolution s2 = solve(p2);
  REQUIRE(s1.status == SolveStatus::optimal);
  CHECK(s1.objective == s2.objective);
  CHECK(s1.iterations == s2.iterations);
  CHECK(s1.scalars[0] == s2.scalars[0]);
}

namespace {

// A problem touching every term kind: congruence with a complex outer
// factor, identity congruence, sparse entry deps, trace placements, pinned
// diagonals, scalar entries, and a constant offset.
Problem synthetic_problem(Rng& rng) {
  Problem p;
  const int a = p.add_matrix_var("A", 3);
  const int u = p.add_matrix_var("U", 3);
  p.pin_diagonal(u, 2, 0.7);
  const int s = p.add_scalar_var("s");
  const int t = p.add_scalar_var("t");

  p.add_psd_block(a, "A_psd");
  p.add_psd_block(u, "U_psd");
  p.add_scalar_lower_bound(s, 0.0, "s_lo");

  Block& b1 = p.add_block("mixed", 4);
  b1.constant = random_hermitian(4, rng) + 6.0 * CMat::Identity(4, 4);
  b1.add_congruence(a, random_complex(4, 3, rng), 1.3, 3);
  MatrixTerm& mt = b1.add_matrix_term(u, random_complex(4, 2, rng));
  mt.deps.push_back(EntryDep{0, 1, cplx(0.5, -0.25), 0, 1});
  mt.deps.push_back(EntryDep{0, 0, cplx(0.8, 0.0), 1, 1});
  mt.deps.push_back(EntryDep{1, 1, cplx(0.4, 0.0), 2, 2});  // pinned
  mt.deps.push_back(EntryDep{0, 1, cplx(0.0, 0.9), 2, 0});
  b1.add_trace_term(a, random_hermitian(3, rng), 0, 2, cplx(0.3, 0.7));
  b1.add_trace_term(u, random_hermitian(3, rng), 1, 1, cplx(0.6, 0.0));
  b1.add_scalar_entry(s, 0, 3, cplx(0.2, -0.1));
  b1.add_scalar_entry(s, 2, 2, cplx(0.5, 0.0));
  b1.add_scalar_entry(t, 1, 2, cplx(-0.3, 0.4));

  Block& b2 = p.add_block("aux", 2);
  b2.constant = CMat::Identity(2, 2) * 4.0;
  b2.add_trace_term(u, random_hermitian(3, rng), 0, 1, cplx(1.0, -0.2));
  b2.add_scalar_entry(t, 0, 0, cplx(1.0, 0.0));

  p.set_matrix_objective(a, CMat::Identity(3, 3));
  p.set_scalar_objective(t, 0.5);
  return p;
}

}  // namespace

TEST_CASE("structured kernels agree with dense references") {
  Rng rng(23);
  const Problem p = synthetic_problem(rng);
  const detail::Lowered lo = detail::lower(p);
  const int m = lo.num_cols;
  REQUIRE(m == 9 + 8 + 2);

  // Dense coefficient matrices per block.
  std::vector<std::vector<CMat>> F(lo.blocks.size());
  for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
    F[k].resize(m);
    for (int j = 0; j < m; ++j) {
      F[k][j] = detail::materialize_column(lo.blocks[k], j);
      REQUIRE(is_hermitian(F[k][j], 1e-10));
    }
  }

  RVec x(m);
  for (int i = 0; i < m; ++i) x(i) = rng.gaussian();

  SECTION("eval matches constant plus dense expansion") {
    for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
      CMat ref = lo.blocks[k].constant;
      for (int j = 0; j < m; ++j) ref += x(j) * F[k][j];
      const CMat got = detail::eval_block(lo.blocks[k], x);
      CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + ref.norm()));
    }
  }

  SECTION("jacobian matches dense expansion") {
    for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
      CMat ref = CMat::Zero(lo.blocks[k].n, lo.blocks[k].n);
      for (int j = 0; j < m; ++j) ref += x(j) * F[k][j];
      const CMat got = detail::apply_jacobian(lo.blocks[k], x);
      CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + ref.norm()));
    }
  }

  SECTION("adjoint matches dense inner products") {
    for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
      const CMat g = random_complex(lo.blocks[k].n, lo.blocks[k].n, rng);
      RVec got = RVec::Zero(m);
      detail::accumulate_adjoint(lo.blocks[k], g, got);
      for (int j = 0; j < m; ++j) {
        const double ref = (F[k][j] * g).trace().real();
        CHECK(got(j) == Catch::Approx(ref).margin(1e-10));
      }
    }
  }

  SECTION("structured Schur complement matches dense assembly") {
    std::vector<CMat> Xi(lo.blocks.size()), Z(lo.blocks.size());
    for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
      const int n = lo.blocks[k].n;
      Xi[k] = random_pd(n, rng).inverse();
      Z[k] = random_pd(n, rng);
    }
    RMat M(m, m);
    detail::assemble_schur(lo, Xi, Z, M);
    RMat ref = RMat::Zero(m, m);
    for (std::size_t k = 0; k < lo.blocks.size(); ++k) {
      for (int j = 0; j < m; ++j) {
        if (F[k][j].cwiseAbs().maxCoeff() == 0.0) continue;
        const CMat left = Xi[k] * F[k][j];
        for (int l = 0; l < m; ++l) {
          if (F[k][l].cwiseAbs().maxCoeff() == 0.0) continue;
          ref(j, l) += (F[k][j] * Xi[k] * F[k][l] * Z[k]).trace().real();
        }
      }
    }
    CHECK((M - ref).cwiseAbs().maxCoeff() <
          1e-9 * (1.0 + ref.cwiseAbs().maxCoeff()));
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <
          1e-9 * (1.0 + ref.cwiseAbs().maxCoeff()));
  }

  SECTION("synthetic problem solves to optimality") {
    const ConicSolution s = solve(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.psd_residual < 1e-6);
    CHECK(s.matrices[1](2, 2).real() == 0.7);
  }
}

TEST_CASE("validation names the offending block") {
  Problem p;
  const int w = p.add_matrix_var("W", 2);
  Block& b = p.add_block("shape_bad", 3);
  b.constant = CMat::Zero(2, 2);
  (void)w;
  try {
    p.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("shape_bad") != std::string::npos);
  }
}

TEST_CASE("problem dump writes a parsable text file") {
  Problem p;
  const int w = p.add_matrix_var("W", 2);
  p.add_psd_block(w, "W_psd");
  p.set_matrix_objective(w, CMat::Identity(2, 2));
  const std::string path = "dump_test.txt";
  p.dump(path);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f != nullptr);
  char head[4] = {0};
  REQUIRE(std::fread(head, 1, 3, f) == 3);
  std::fclose(f);
  std::remove(path.c_str());
  CHECK(std::string(head) == "var");
}
