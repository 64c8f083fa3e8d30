#include "polarimeter/quantum.hpp"

#include <gtest/gtest.h>

#include "polarimeter/random.hpp"
#include "test_oracles.hpp"

using namespace polarimeter;

namespace {

DensityMatrix phi_plus() { return density_from_pure(PureState2Q::phi_plus()); }
DensityMatrix hh() { return density_from_pure(PureState2Q::basis(0)); }

}  // namespace

TEST(quantum_core, density_from_pure_basis_states) {
  Matrix4c expected = Matrix4c::Zero();
  expected(0, 0) = 1.0;
  EXPECT_TRUE(hh().matrix().isApprox(expected, 1e-15));

  expected.setZero();
  expected(1, 1) = 1.0;
  EXPECT_TRUE(density_from_pure(PureState2Q::basis(1)).matrix().isApprox(expected, 1e-15));

  const Matrix4c& m = phi_plus().matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const bool corner = (r == 0 || r == 3) && (c == 0 || c == 3);
      EXPECT_NEAR(std::abs(m(r, c) - Complex{corner ? 0.5 : 0.0, 0.0}), 0.0, 1e-15) << r << "," << c;
    }
}

TEST(quantum_core, pure_state_rejects_unnormalized) {
  EXPECT_THROW(PureState2Q(Vector4c{1, 0, 0, 1}), InvalidArgument);
  EXPECT_THROW(PureState2Q::normalized(Vector4c::Zero()), InvalidArgument);
}

TEST(quantum_core, density_matrix_rejects_invalid) {
  Matrix4c m = Matrix4c::Identity() / 4.0;
  m(0, 1) = Complex{0.1, 0.0};
  EXPECT_THROW(DensityMatrix::from_matrix(m), InvalidArgument);  // not Hermitian
  EXPECT_THROW(DensityMatrix::from_matrix(Matrix4c::Identity() / 2.0), InvalidArgument);  // trace 2
  Matrix4c neg = Matrix4c::Zero();
  neg.diagonal() << 1.2, -0.2, 0.0, 0.0;
  EXPECT_THROW(DensityMatrix::from_matrix(neg), InvalidArgument);
}

TEST(quantum_core, stokes_of_maximally_mixed) {
  const StokesVector2Q s = stokes_from_density(DensityMatrix::maximally_mixed());
  EXPECT_NEAR(s(0, 0), 1.0, 1e-15);
  for (std::size_t k = 1; k < 16; ++k) EXPECT_NEAR(s[k], 0.0, 1e-15) << pauli::label(k);
}

TEST(quantum_core, stokes_matches_independent_trace_oracle) {
  // phi+ -> S00 = S11 = S33 = 1, S22 = -1; HH -> S00 = S03 = S30 = S33 = 1.
  const std::array<double, 16> phi_expected{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1};
  const std::array<double, 16> hh_expected{1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1};
  const StokesVector2Q phi = stokes_from_density(phi_plus());
  const StokesVector2Q h = stokes_from_density(hh());
  for (std::size_t k = 0; k < 16; ++k) {
    const int i = static_cast<int>(k / 4), j = static_cast<int>(k % 4);
    EXPECT_NEAR(oracle::pauli_expectation(phi_plus().matrix(), i, j), phi_expected[k], 1e-15);
    EXPECT_NEAR(phi[k], phi_expected[k], 1e-15) << pauli::label(k);
    EXPECT_NEAR(oracle::pauli_expectation(hh().matrix(), i, j), hh_expected[k], 1e-15);
    EXPECT_NEAR(h[k], hh_expected[k], 1e-15) << pauli::label(k);
  }
}

TEST(quantum_core, density_from_stokes_identity_and_non_psd) {
  StokesVector2Q s;
  s(0, 0) = 1.0;
  EXPECT_TRUE(density_from_stokes(s).isApprox(Matrix4c::Identity() / 4.0, 1e-15));

  s(3, 3) = 1.2;
  const Matrix4c h = density_from_stokes(s);
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(h);
  // (1 - 1.2)/4 twice, (1 + 1.2)/4 twice
  EXPECT_NEAR(eig.eigenvalues()(0), -0.05, 1e-15);
  EXPECT_NEAR(eig.eigenvalues()(1), -0.05, 1e-15);
  EXPECT_NEAR(eig.eigenvalues()(2), 0.55, 1e-15);
  EXPECT_NEAR(eig.eigenvalues()(3), 0.55, 1e-15);
  EXPECT_NEAR(h.trace().real(), 1.0, 1e-15);
}

TEST(quantum_core, stokes_round_trip_property) {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    const DensityMatrix rho = random_density_matrix(rng, 1 + t % 4);
    const StokesVector2Q s = stokes_from_density(rho);
    EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
    for (double v : s.s) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
    const Matrix4c back = density_from_stokes(s);
    ASSERT_LE((back - rho.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(quantum_core, random_states_satisfy_invariants) {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const DensityMatrix rho = random_density_matrix(rng, 1 + t % 4);
    const Matrix4c& m = rho.matrix();
    ASSERT_LE((m - m.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_NEAR(m.trace().real(), 1.0, 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix4c> eig(m);
    ASSERT_GE(eig.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(quantum_core, fidelity_examples) {
  EXPECT_NEAR(fidelity(hh(), phi_plus()), 0.5, 1e-12);
  EXPECT_NEAR(fidelity(DensityMatrix::maximally_mixed(), phi_plus()), 0.25, 1e-12);
  EXPECT_NEAR(fidelity(phi_plus(), phi_plus()), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed()), 1.0, 1e-12);
}

TEST(quantum_core, fidelity_properties) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const DensityMatrix a = random_density_matrix(rng, 1 + t % 4);
    const DensityMatrix b = random_density_matrix(rng, 1 + (t / 4) % 4);
    const double fab = fidelity(a, b);
    const double fba = fidelity(b, a);
    ASSERT_GE(fab, 0.0);
    ASSERT_LE(fab, 1.0);
    ASSERT_NEAR(fab, fba, 1e-10);
    ASSERT_NEAR(fidelity(a, a), 1.0, 1e-9);
    ASSERT_LT(fab, 1.0 - 1e-9);  // distinct random states
  }
}

TEST(quantum_core, fidelity_pure_state_shortcut) {
  Rng rng(7);
  for (int t = 0; t < 500; ++t) {
    const DensityMatrix rho = random_density_matrix(rng, 1 + t % 4);
    const PureState2Q psi = random_pure_state(rng);
    const double direct = (psi.amplitudes().adjoint() * rho.matrix() * psi.amplitudes())(0).real();
    ASSERT_NEAR(fidelity(rho, density_from_pure(psi)), direct, 1e-10);
    ASSERT_NEAR(fidelity(density_from_pure(psi), rho), direct, 1e-10);
    ASSERT_NEAR(fidelity(rho, psi), direct, 1e-15);
  }
}

TEST(quantum_core, hermitian_sqrt_rejects_non_psd) {
  Matrix4c neg = Matrix4c::Zero();
  neg.diagonal() << 1.2, -0.2, 0.0, 0.0;
  EXPECT_THROW(detail::hermitian_sqrt(neg), InvalidArgument);
  EXPECT_THROW(fidelity(neg, Matrix4c::Identity() / 4.0), InvalidArgument);
}

TEST(quantum_core, purity_examples) {
  EXPECT_NEAR(purity(DensityMatrix::maximally_mixed()), 0.25, 1e-15);
  EXPECT_NEAR(purity(phi_plus()), 1.0, 1e-15);
  EXPECT_NEAR(purity(hh()), 1.0, 1e-15);
  // 0.75 phi+ + 0.25 I/4: spectrum (0.8125, 0.0625 x3) -> 0.8125^2 + 3 * 0.0625^2
  const DensityMatrix werner =
      DensityMatrix::from_matrix(0.75 * phi_plus().matrix() + 0.25 * Matrix4c::Identity() / 4.0);
  EXPECT_NEAR(purity(werner), 0.671875, 1e-15);
  EXPECT_NEAR(oracle::purity_from_spectrum(werner.matrix()), 0.671875, 1e-14);
}

TEST(quantum_core, concurrence_examples) {
  EXPECT_NEAR(concurrence(hh()), 0.0, 1e-12);
  EXPECT_NEAR(concurrence(DensityMatrix::maximally_mixed()), 0.0, 1e-12);
  EXPECT_NEAR(oracle::wootters_concurrence(phi_plus().matrix()), 1.0, 1e-7);
  EXPECT_NEAR(concurrence(phi_plus()), 1.0, 1e-12);
}

TEST(quantum_core, concurrence_matches_eigenvalue_oracle) {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const DensityMatrix rho = random_density_matrix(rng, 1 + t % 4);
    ASSERT_NEAR(concurrence(rho), oracle::wootters_concurrence(rho.matrix()), 1e-6);
  }
}
