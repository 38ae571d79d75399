#include <catch_amalgamated.hpp>

#include <spinsim/circuit.hpp>
#include <spinsim/dense.hpp>
#include <spinsim/errors.hpp>
#include <spinsim/mps.hpp>
#include <spinsim/spin.hpp>

#include "test_helpers.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <vector>

using namespace spinsim;
using namespace testing_oracle;

namespace {

CVec random_state(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  CVec v(static_cast<Eigen::Index>(std::size_t{1} << n));
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = cdouble{nd(gen), nd(gen)};
  return v / v.norm();
}

}  // namespace

TEST_CASE("site 0 is the most significant bit", "[dense]") {
  DenseState s(3);
  REQUIRE(std::abs(s.amplitudes()(0) - 1.0) < 1e-15);

  CMat lower = CMat::Zero(2, 2);
  lower(1, 0) = 1.0;
  DenseState a = s;
  a.apply_one_site(0, lower);
  REQUIRE(std::abs(a.amplitudes()(4) - 1.0) < 1e-15);  // bits 100

  DenseState b = s;
  b.apply_one_site(2, lower);
  REQUIRE(std::abs(b.amplitudes()(1) - 1.0) < 1e-15);  // bits 001
}

TEST_CASE("one- and two-site application match explicit embeddings", "[dense]") {
  std::mt19937_64 gen(201);
  const std::size_t n = 4;
  const CVec v = random_state(n, gen);

  for (std::size_t site = 0; site < n; ++site) {
    const CMat u = random_unitary(2, gen);
    DenseState s(n);
    s.amplitudes() = v;
    s.apply_one_site(site, u);
    const CVec want = embed_one_site(n, site, u) * v;
    REQUIRE((s.amplitudes() - want).norm() < 1e-12);
  }

  for (std::size_t bond = 0; bond + 1 < n; ++bond) {
    const CMat u = random_unitary(4, gen);
    DenseState s(n);
    s.amplitudes() = v;
    s.apply_two_site(bond, u);
    const CVec want = embed_two_site(n, bond, u) * v;
    REQUIRE((s.amplitudes() - want).norm() < 1e-12);
  }
}

TEST_CASE("apply_circuit equals the assembled circuit unitary", "[dense]") {
  std::mt19937_64 gen(203);
  ModelParams p;
  p.model = ModelKind::kicked_ising;
  p.n = 5;
  p.t = 2.0;
  const Circuit c = build_circuit(p);
  const CVec v = random_state(5, gen);

  DenseState s(5);
  s.amplitudes() = v;
  s.apply_circuit(c);
  const CVec want = circuit_unitary(c) * v;
  REQUIRE((s.amplitudes() - want).norm() < 1e-11);
}

TEST_CASE("dense expectation values and reduced density matrices", "[dense]") {
  std::mt19937_64 gen(205);
  const std::size_t n = 4;
  DenseState s(n);
  s.amplitudes() = random_state(n, gen);

  for (std::size_t site = 0; site < n; ++site) {
    for (Axis ax : {Axis::x, Axis::y, Axis::z}) {
      const CMat full = embed_one_site(n, site, spin_op(ax));
      const double want = (s.amplitudes().adjoint() * full * s.amplitudes())(0).real();
      REQUIRE(s.expect_local(site, spin_op(ax)) == Catch::Approx(want).margin(1e-12));
      const CMat rho = s.one_body_rdm(site);
      REQUIRE((rho * spin_op(ax)).trace().real() == Catch::Approx(want).margin(1e-12));
    }
  }

  const CMat zz =
      embed_one_site(n, 1, spin_op(Axis::z)) * embed_one_site(n, 3, spin_op(Axis::z));
  const double want = (s.amplitudes().adjoint() * zz * s.amplitudes())(0).real();
  REQUIRE(s.expect_two_site(1, 3, spin_op(Axis::z), spin_op(Axis::z)) ==
          Catch::Approx(want).margin(1e-12));

  CMat not_herm = CMat::Zero(2, 2);
  not_herm(0, 1) = 1.0;
  REQUIRE_THROWS_AS(s.expect_local(0, not_herm), ContractViolation);
  REQUIRE_THROWS_AS(s.expect_two_site(0, 1, not_herm, spin_op(Axis::z)), ContractViolation);
}

TEST_CASE("cross terms, overlaps, projection", "[dense]") {
  std::mt19937_64 gen(207);
  const std::size_t n = 3;
  DenseState a(n), b(n);
  a.amplitudes() = random_state(n, gen) * 1.7;  // deliberately unnormalized
  b.amplitudes() = random_state(n, gen);

  const cdouble ov = DenseState::overlap(a, b);
  REQUIRE(std::abs(ov - (a.amplitudes().adjoint() * b.amplitudes())(0)) < 1e-13);

  const CMat op = spin_op(Axis::y);
  const cdouble cx = DenseState::cross_expect(a, 1, op, b);
  const cdouble want = (a.amplitudes().adjoint() * embed_one_site(n, 1, op) * b.amplitudes())(0);
  REQUIRE(std::abs(cx - want) < 1e-13);

  DenseState c = b;
  const CVec plus = axis_basis(Axis::x).col(0);
  const double before2 = c.amplitudes().squaredNorm();
  const double p = c.project_site(1, plus);
  const CVec projected = embed_one_site(n, 1, CMat(plus * plus.adjoint())) * b.amplitudes();
  REQUIRE((c.amplitudes() - projected).norm() < 1e-13);
  REQUIRE(p == Catch::Approx(projected.squaredNorm() / before2).margin(1e-13));
}

TEST_CASE("from_product and from_mps agree with kron products", "[dense]") {
  CVec up(2), side(2);
  up << 1.0, 0.0;
  side << std::sqrt(0.5), cdouble{0.0, std::sqrt(0.5)};
  DenseState s = DenseState::from_product({up, side, up});
  // Index bits: site1 down contributes stride 2.
  REQUIRE(std::abs(s.amplitudes()(0) - std::sqrt(0.5)) < 1e-13);
  REQUIRE(std::abs(s.amplitudes()(2) - cdouble{0.0, std::sqrt(0.5)}) < 1e-13);

  MpsState psi = MpsState::random_mps(4, 3, 11);
  DenseState d = DenseState::from_mps(psi);
  REQUIRE((d.amplitudes() - psi.statevector()).norm() < 1e-13);
}

TEST_CASE("capacity guards", "[dense]") {
  REQUIRE_THROWS_AS(DenseState(15), CapacityError);
  ModelParams p;
  p.model = ModelKind::kicked_ising;
  p.n = 15;
  p.t = 1.0;
  REQUIRE_THROWS_AS(dense_floquet_operator(p), CapacityError);
  REQUIRE_THROWS_AS(dense_heisenberg_hamiltonian(15), CapacityError);
}

TEST_CASE("floquet operator built by hand for two sites", "[dense]") {
  ModelParams p;
  p.model = ModelKind::kicked_ising;
  p.n = 2;
  p.t = 1.0;
  p.j = 0.31;
  p.h = 0.47;

  // V = diag over z configurations, K = kick on both sites.
  CVec phases(4);
  const double zs[2] = {1.0, -1.0};
  for (int s0 = 0; s0 < 2; ++s0)
    for (int s1 = 0; s1 < 2; ++s1)
      phases(s0 * 2 + s1) = std::exp(
          cdouble{0.0, -(p.j * zs[s0] * zs[s1] + p.h * zs[s0] + p.h * zs[s1])});
  const CMat kick = expm_oracle(cdouble{0.0, -kPi / 4.0} * pauli(Axis::x));
  const CMat want = kron2(kick, kick) * CMat(phases.asDiagonal());

  REQUIRE(max_abs_diff(dense_floquet_operator(p), want) < 1e-12);
}

TEST_CASE("phase aligned distance ignores a global phase", "[dense]") {
  std::mt19937_64 gen(209);
  const CVec v = random_state(3, gen);
  const CVec w = std::exp(cdouble{0.0, 1.234}) * v;
  REQUIRE(phase_aligned_distance(v, w) < 1e-13);
  const CVec u = random_state(3, gen);
  REQUIRE(phase_aligned_distance(v, u) > 1e-2);
}
