#pragma once

// Two-qubit state algebra: density matrices, Pauli/Stokes transforms and
// state metrics. Basis ordering is {HH, HV, VH, VV}; qubit 1 is the signal
// arm, qubit 2 the idler arm.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "polarimeter/error.hpp"

namespace polarimeter {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;
using Vector2c = Eigen::Vector2cd;
using Vector4c = Eigen::Vector4cd;

namespace tolerance {
inline constexpr double kHermitian = 1e-12;
inline constexpr double kTrace = 1e-12;
inline constexpr double kNegativeEigenvalue = -1e-9;
inline constexpr double kNorm = 1e-12;
// Eigenvalues below this are round-off of a zero eigenvalue.
inline constexpr double kEigenvalueFloor = 1e-13;
}  // namespace tolerance

namespace pauli {

/// sigma_0 = I, sigma_1 = X, sigma_2 = Y, sigma_3 = Z.
inline const std::array<Matrix2c, 4>& single() {
  static const std::array<Matrix2c, 4> table = [] {
    const Complex i{0.0, 1.0};
    std::array<Matrix2c, 4> s;
    s[0] << 1, 0, 0, 1;
    s[1] << 0, 1, 1, 0;
    s[2] << 0, -i, i, 0;
    s[3] << 1, 0, 0, -1;
    return s;
  }();
  return table;
}

inline Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
  Matrix4c out;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) out.block<2, 2>(2 * r, 2 * c) = a(r, c) * b;
  return out;
}

inline Vector4c kron(const Vector2c& a, const Vector2c& b) {
  return Vector4c{a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1)};
}

/// sigma_i (x) sigma_j at index 4*i + j.
inline const std::array<Matrix4c, 16>& two_qubit() {
  static const std::array<Matrix4c, 16> table = [] {
    std::array<Matrix4c, 16> t;
    const auto& s = single();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) t[4 * i + j] = kron(s[i], s[j]);
    return t;
  }();
  return table;
}

/// "II", "IX", ..., "ZZ" for index 4*i + j.
inline std::string label(std::size_t index) {
  static constexpr char kNames[] = {'I', 'X', 'Y', 'Z'};
  return {kNames[index / 4], kNames[index % 4]};
}

}  // namespace pauli

/// Normalized two-qubit pure state in the {HH, HV, VH, VV} basis.
class PureState2Q {
 public:
  /// Throws InvalidArgument unless |norm - 1| <= 1e-12.
  explicit PureState2Q(const Vector4c& amplitudes) : amplitudes_(amplitudes) {
    if (!(std::abs(amplitudes.norm() - 1.0) <= tolerance::kNorm))
      throw InvalidArgument("pure state is not normalized (norm " +
                            std::to_string(amplitudes.norm()) + ")");
  }

  static PureState2Q normalized(const Vector4c& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("cannot normalize a zero vector");
    return PureState2Q(v / n);
  }

  static PureState2Q basis(int index) {
    Vector4c v = Vector4c::Zero();
    v(index) = 1.0;
    return PureState2Q(v);
  }

  static PureState2Q phi_plus() { return normalized(Vector4c{1, 0, 0, 1}); }

  const Vector4c& amplitudes() const noexcept { return amplitudes_; }

 private:
  Vector4c amplitudes_;
};

/// 16 real coefficients S_ij = Tr(rho sigma_i (x) sigma_j), stored at 4*i + j.
struct StokesVector2Q {
  std::array<double, 16> s{};

  double& operator()(int i, int j) { return s[static_cast<std::size_t>(4 * i + j)]; }
  double operator()(int i, int j) const { return s[static_cast<std::size_t>(4 * i + j)]; }
  double& operator[](std::size_t k) { return s[k]; }
  double operator[](std::size_t k) const { return s[k]; }

  Eigen::Matrix<double, 16, 1> vector() const {
    return Eigen::Map<const Eigen::Matrix<double, 16, 1>>(s.data());
  }
  static StokesVector2Q from_vector(const Eigen::Matrix<double, 16, 1>& v) {
    StokesVector2Q out;
    Eigen::Map<Eigen::Matrix<double, 16, 1>>(out.s.data()) = v;
    return out;
  }

  friend bool operator==(const StokesVector2Q&, const StokesVector2Q&) = default;
};

/// Hermitian, unit-trace, positive semidefinite 4x4 matrix.
class DensityMatrix {
 public:
  /// Validates every invariant; throws InvalidArgument naming the violated one.
  static DensityMatrix from_matrix(const Matrix4c& m) {
    const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
    if (!(asym <= tolerance::kHermitian))
      throw InvalidArgument("matrix is not Hermitian (max |rho - rho^dagger| = " +
                            std::to_string(asym) + ")");
    const Complex tr = m.trace();
    if (!(std::abs(tr - Complex{1.0, 0.0}) <= tolerance::kTrace))
      throw InvalidArgument("matrix trace is " + std::to_string(tr.real()) + ", expected 1");
    Matrix4c h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> eig(h, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() >= tolerance::kNegativeEigenvalue))
      throw InvalidArgument("matrix is not positive semidefinite (min eigenvalue " +
                            std::to_string(eig.eigenvalues().minCoeff()) + ")");
    return DensityMatrix(m);
  }

  static DensityMatrix maximally_mixed() { return DensityMatrix(Matrix4c::Identity() / 4.0); }

  const Matrix4c& matrix() const noexcept { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  friend bool operator==(const DensityMatrix& a, const DensityMatrix& b) { return a.m_ == b.m_; }

 private:
  explicit DensityMatrix(const Matrix4c& m) : m_(m) {}
  Matrix4c m_;
};

inline DensityMatrix density_from_pure(const PureState2Q& psi) {
  const Vector4c& v = psi.amplitudes();
  Matrix4c m = v * v.adjoint();
  // exact Hermitian symmetry, real diagonal
  m = (0.5 * (m + m.adjoint())).eval();
  for (int k = 0; k < 4; ++k) m(k, k) = m(k, k).real();
  m /= m.trace().real();
  return DensityMatrix::from_matrix(m);
}

/// S_ij = Tr(h sigma_i (x) sigma_j) for any Hermitian h.
inline StokesVector2Q stokes_from_matrix(const Matrix4c& h) {
  StokesVector2Q out;
  const auto& table = pauli::two_qubit();
  for (std::size_t k = 0; k < 16; ++k) out[k] = (h * table[k]).trace().real();
  return out;
}

inline StokesVector2Q stokes_from_density(const DensityMatrix& rho) {
  return stokes_from_matrix(rho.matrix());
}

/// (1/4) sum S_ij sigma_i (x) sigma_j. Hermitian with trace S_00, possibly not PSD.
inline Matrix4c density_from_stokes(const StokesVector2Q& s) {
  Matrix4c m = Matrix4c::Zero();
  const auto& table = pauli::two_qubit();
  for (std::size_t k = 0; k < 16; ++k) m += s[k] * table[k];
  m /= 4.0;
  return m;
}

namespace detail {

/// Square root of a Hermitian PSD matrix. Eigenvalues below -1e-9 are rejected,
/// eigenvalues in [-1e-9, 1e-13] are treated as exact zeros.
inline Matrix4c hermitian_sqrt(const Matrix4c& m) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(0.5 * (m + m.adjoint()));
  if (eig.info() != Eigen::Success) throw InvalidArgument("eigendecomposition failed");
  Eigen::Vector4d root;
  for (int k = 0; k < 4; ++k) {
    const double lambda = eig.eigenvalues()(k);
    if (lambda < tolerance::kNegativeEigenvalue)
      throw InvalidArgument("matrix square root of a non-PSD matrix (eigenvalue " +
                            std::to_string(lambda) + ")");
    root(k) = lambda <= tolerance::kEigenvalueFloor ? 0.0 : std::sqrt(lambda);
  }
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().adjoint();
}

inline Eigen::Vector4d singular_values(const Matrix4c& m) {
  Eigen::JacobiSVD<Matrix4c> svd(m);
  return svd.singularValues();
}

}  // namespace detail

/// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, evaluated as the
/// squared trace norm of sqrt(rho) sqrt(sigma).
inline double fidelity(const Matrix4c& rho, const Matrix4c& sigma) {
  const Matrix4c product = detail::hermitian_sqrt(rho) * detail::hermitian_sqrt(sigma);
  const double nuclear = detail::singular_values(product).sum();
  return std::clamp(nuclear * nuclear, 0.0, 1.0);
}

inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return fidelity(rho.matrix(), sigma.matrix());
}

/// <psi|rho|psi>.
inline double fidelity(const DensityMatrix& rho, const PureState2Q& psi) {
  const Vector4c& v = psi.amplitudes();
  return std::clamp((v.adjoint() * rho.matrix() * v)(0).real(), 0.0, 1.0);
}

inline double purity(const DensityMatrix& rho) {
  // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
  return rho.matrix().squaredNorm();
}

/// Wootters concurrence max(0, l1 - l2 - l3 - l4), l_k the decreasing square
/// roots of the spectrum of rho (Y(x)Y) rho* (Y(x)Y).
inline double concurrence(const DensityMatrix& rho) {
  const Matrix4c& yy = pauli::two_qubit()[2 * 4 + 2];
  const Matrix4c flipped = yy * rho.matrix().conjugate() * yy;
  const Matrix4c product = detail::hermitian_sqrt(rho.matrix()) * detail::hermitian_sqrt(flipped);
  Eigen::Vector4d l = detail::singular_values(product);  // sorted decreasing
  return std::clamp(l(0) - l(1) - l(2) - l(3), 0.0, 1.0);
}

}  // namespace polarimeter
