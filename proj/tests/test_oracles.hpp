#pragma once

// Independent reference computations for tests. Nothing here calls the
// library routine it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using C = std::complex<double>;
using M2 = std::array<std::array<C, 2>, 2>;

inline M2 pauli(int k) {
  const C i{0, 1};
  switch (k) {
    case 1: return {{{0, 1}, {1, 0}}};
    case 2: return {{{0, -i}, {i, 0}}};
    case 3: return {{{1, 0}, {0, -1}}};
    default: return {{{1, 0}, {0, 1}}};
  }
}

/// Tr(rho sigma_i (x) sigma_j), element by element.
inline double pauli_expectation(const Eigen::Matrix4cd& rho, int i, int j) {
  const M2 a = pauli(i), b = pauli(j);
  C tr = 0;
  for (int r1 = 0; r1 < 2; ++r1)
    for (int r2 = 0; r2 < 2; ++r2)
      for (int c1 = 0; c1 < 2; ++c1)
        for (int c2 = 0; c2 < 2; ++c2)
          tr += rho(2 * c1 + c2, 2 * r1 + r2) * a[r1][c1] * b[r2][c2];
  return tr.real();
}

inline double purity_from_spectrum(const Eigen::Matrix4cd& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> eig(rho);
  return eig.eigenvalues().squaredNorm();
}

/// Wootters concurrence from the (non-Hermitian) eigenvalues of rho * rho~.
inline double wootters_concurrence(const Eigen::Matrix4cd& rho) {
  Eigen::Matrix4cd yy = Eigen::Matrix4cd::Zero();
  yy(0, 3) = -1;
  yy(1, 2) = 1;
  yy(2, 1) = 1;
  yy(3, 0) = -1;
  const Eigen::Matrix4cd flipped = yy * rho.conjugate() * yy;
  Eigen::ComplexEigenSolver<Eigen::Matrix4cd> eig(rho * flipped);
  std::array<double, 4> l{};
  for (int k = 0; k < 4; ++k) l[k] = std::sqrt(std::max(0.0, eig.eigenvalues()(k).real()));
  std::sort(l.begin(), l.end(), std::greater<>());
  return std::max(0.0, l[0] - l[1] - l[2] - l[3]);
}

/// |<a|b>|^2 for kets given as plain arrays.
inline double overlap(const Eigen::Vector4cd& a, const Eigen::Vector4cd& b) {
  C s = 0;
  for (int k = 0; k < 4; ++k) s += std::conj(a(k)) * b(k);
  return std::norm(s);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Spearman rank correlation (no tie correction).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
