#pragma once

// Analyzer settings, the measurement matrix and the coincidence-count model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "polarimeter/error.hpp"
#include "polarimeter/quantum.hpp"
#include "polarimeter/random.hpp"

namespace polarimeter {

enum class Polarization { H, V, D, A, R, L };

inline char label(Polarization p) {
  static constexpr char kLabels[] = {'H', 'V', 'D', 'A', 'R', 'L'};
  return kLabels[static_cast<int>(p)];
}

/// H, V, D = (H+V)/sqrt2, A = (H-V)/sqrt2, R = (H+iV)/sqrt2, L = (H-iV)/sqrt2.
inline Vector2c ket(Polarization p) {
  const double h = std::numbers::sqrt2 / 2.0;
  const Complex i{0.0, 1.0};
  switch (p) {
    case Polarization::H: return {1.0, 0.0};
    case Polarization::V: return {0.0, 1.0};
    case Polarization::D: return {h, h};
    case Polarization::A: return {h, -h};
    case Polarization::R: return {h, i * h};
    case Polarization::L: return {h, -i * h};
  }
  return {};
}

/// Single-qubit analyzer basis; each has a transmitted and a reflected port.
enum class Basis { HV = 0, DA = 1, RL = 2 };

inline constexpr std::array<Basis, 3> kBases = {Basis::HV, Basis::DA, Basis::RL};

inline std::array<Polarization, 2> basis_states(Basis b) {
  switch (b) {
    case Basis::HV: return {Polarization::H, Polarization::V};
    case Basis::DA: return {Polarization::D, Polarization::A};
    case Basis::RL: return {Polarization::R, Polarization::L};
  }
  return {};
}

inline std::string label(Basis b) {
  const auto s = basis_states(b);
  return {label(s[0]), label(s[1])};
}

inline Basis parse_basis(const std::string& text) {
  for (Basis b : kBases)
    if (label(b) == text) return b;
  throw ParseError("unknown analyzer basis '" + text + "' (expected HV, DA or RL)");
}

/// One two-qubit analyzer configuration: four detectors, one projector each.
struct MeasurementSetting {
  int id = 0;
  std::array<Basis, 2> bases{};
  /// Kets in detector order (t,t), (t,r), (r,t), (r,r) with t/r the
  /// transmitted/reflected port of each qubit's analyzer.
  std::array<Vector4c, 4> projectors{};
  std::array<std::string, 4> labels{};
  double dwell = 1.0;
};

inline MeasurementSetting make_setting(int id, Basis q1, Basis q2, double dwell,
                                       const Matrix2c& u1 = Matrix2c::Identity(),
                                       const Matrix2c& u2 = Matrix2c::Identity()) {
  MeasurementSetting s;
  s.id = id;
  s.bases = {q1, q2};
  s.dwell = dwell;
  const auto a = basis_states(q1);
  const auto b = basis_states(q2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      s.projectors[2 * i + j] = pauli::kron(Vector2c(u1 * ket(a[i])), Vector2c(u2 * ket(b[j])));
      s.labels[2 * i + j] = {label(a[i]), label(b[j])};
    }
  return s;
}

/// m = 9: the nine basis pairs {HV, DA, RL}^2 in lexicographic order (first
/// qubit slowest), so setting 0 is {HH, HV, VH, VV}. m = 36: the same nine
/// bases visited four times in that order.
inline std::vector<MeasurementSetting> canonical_settings(int m, double dwell = 1.0) {
  if (m != 9 && m != 36) throw InvalidArgument("setting count must be 9 or 36, got " + std::to_string(m));
  std::vector<MeasurementSetting> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const int b = k % 9;
    out.push_back(make_setting(k, kBases[static_cast<std::size_t>(b / 3)],
                               kBases[static_cast<std::size_t>(b % 3)], dwell));
  }
  return out;
}

/// Gram matrix <pi_a|pi_b> of a setting's projectors.
inline Matrix4c gram_matrix(const MeasurementSetting& s) {
  Matrix4c g;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) g(a, b) = s.projectors[a].dot(s.projectors[b]);
  return g;
}

/// Angle between two single-qubit states on the Poincare sphere, in degrees.
inline double poincare_deviation_deg(const Vector2c& a, const Vector2c& b) {
  const double overlap = std::clamp(std::abs(a.dot(b)) / (a.norm() * b.norm()), 0.0, 1.0);
  return 2.0 * std::acos(overlap) * 180.0 / std::numbers::pi;
}

/// Bloch (Poincare) vector of a single-qubit ket.
inline Eigen::Vector3d bloch_vector(const Vector2c& k) {
  const auto& s = pauli::single();
  return {(k.adjoint() * s[1] * k)(0).real(), (k.adjoint() * s[2] * k)(0).real(),
          (k.adjoint() * s[3] * k)(0).real()};
}

/// exp(-i angle/2 axis.sigma).
inline Matrix2c su2_rotation(const Eigen::Vector3d& axis, double angle_rad) {
  const auto& s = pauli::single();
  const Matrix2c generator = axis(0) * s[1] + axis(1) * s[2] + axis(2) * s[3];
  return std::cos(angle_rad / 2.0) * Matrix2c::Identity() -
         Complex{0.0, 1.0} * std::sin(angle_rad / 2.0) * generator;
}

/// Per-analyzer misalignment table: rotations[qubit][basis].
using AnalyzerRotations = std::array<std::array<Matrix2c, 3>, 2>;

/// One random rotation per (qubit, basis) about an axis perpendicular to the
/// basis Bloch vector, so every projector moves by exactly angle_deg on the
/// Poincare sphere and each basis stays orthonormal.
inline AnalyzerRotations random_analyzer_rotations(double angle_deg, std::uint64_t seed) {
  if (!(angle_deg >= 0.0)) throw InvalidArgument("perturbation angle must be >= 0");
  Rng rng(derive_seed(seed, SeedStream::perturbation));
  std::normal_distribution<double> g;
  AnalyzerRotations table;
  for (auto& qubit : table)
    for (Basis b : kBases) {
      const Eigen::Vector3d n = bloch_vector(ket(basis_states(b)[0]));
      Eigen::Vector3d axis;
      do {
        const Eigen::Vector3d u{g(rng), g(rng), g(rng)};
        axis = u - u.dot(n) * n;
      } while (axis.norm() < 1e-6);
      axis.normalize();
      qubit[static_cast<std::size_t>(b)] = su2_rotation(axis, angle_deg * std::numbers::pi / 180.0);
    }
  return table;
}

inline std::vector<MeasurementSetting> perturb_projectors(std::span<const MeasurementSetting> settings,
                                                          double angle_deg, std::uint64_t seed) {
  std::vector<MeasurementSetting> out(settings.begin(), settings.end());
  if (angle_deg == 0.0) return out;
  const AnalyzerRotations rot = random_analyzer_rotations(angle_deg, seed);
  for (auto& s : out)
    s = make_setting(s.id, s.bases[0], s.bases[1], s.dwell,
                     rot[0][static_cast<std::size_t>(s.bases[0])],
                     rot[1][static_cast<std::size_t>(s.bases[1])]);
  return out;
}

struct ProjectorPerturbation {
  double angle_deg = 0.0;
  std::uint64_t seed = 0;
};

using StokesRow = Eigen::Matrix<double, 1, 16>;

/// One 16-real row per projector with row . S = <pi|rho|pi>.
struct MeasurementMatrix {
  std::vector<MeasurementSetting> settings;
  Eigen::Matrix<double, Eigen::Dynamic, 16, Eigen::RowMajor> rows;

  std::size_t row_count() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t setting_count() const { return settings.size(); }

  /// Index of the setting with the given id; throws if absent.
  std::size_t index_of(int setting_id) const {
    for (std::size_t k = 0; k < settings.size(); ++k)
      if (settings[k].id == setting_id) return k;
    throw InvalidArgument("unknown setting id " + std::to_string(setting_id));
  }

  StokesRow row(std::size_t setting_index, int outcome) const {
    return rows.row(static_cast<Eigen::Index>(4 * setting_index + static_cast<std::size_t>(outcome)));
  }

  Eigen::VectorXd probabilities(const DensityMatrix& rho) const {
    return rows * stokes_from_density(rho).vector();
  }
};

inline StokesRow stokes_row(const Vector4c& projector) {
  const Matrix4c pi = projector * projector.adjoint();
  return stokes_from_matrix(pi).vector().transpose() / 4.0;
}

inline MeasurementMatrix build_measurement_matrix(std::span<const MeasurementSetting> settings,
                                                  std::optional<ProjectorPerturbation> perturbation = {}) {
  if (settings.empty()) throw InvalidArgument("measurement matrix needs at least one setting");
  MeasurementMatrix m;
  m.settings = perturbation ? perturb_projectors(settings, perturbation->angle_deg, perturbation->seed)
                            : std::vector<MeasurementSetting>(settings.begin(), settings.end());
  m.rows.resize(static_cast<Eigen::Index>(4 * m.settings.size()), 16);
  for (std::size_t s = 0; s < m.settings.size(); ++s)
    for (int r = 0; r < 4; ++r)
      m.rows.row(static_cast<Eigen::Index>(4 * s + static_cast<std::size_t>(r))) =
          stokes_row(m.settings[s].projectors[static_cast<std::size_t>(r)]);
  return m;
}

/// Count-generation parameters.
struct NoiseModel {
  double pair_rate = 1e6;  ///< pairs/s
  double car = std::numeric_limits<double>::infinity();
  double dark_rate = 2e-4;  ///< dark counts per gate per detector
  double gate_rate = 0.0;   ///< gates/s; 0 disables dark coincidences
  double eta = 0.07;        ///< per-arm transmission
  double systematic_angle_deg = 0.0;

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw InvalidArgument(what);
    };
    check(pair_rate >= 0.0 && std::isfinite(pair_rate), "pair_rate must be finite and >= 0");
    check(car > 0.0, "car must be > 0");
    check(dark_rate >= 0.0 && std::isfinite(dark_rate), "dark_rate must be finite and >= 0");
    check(gate_rate >= 0.0 && std::isfinite(gate_rate), "gate_rate must be finite and >= 0");
    check(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
    check(systematic_angle_deg >= 0.0 && std::isfinite(systematic_angle_deg),
          "systematic_angle_deg must be finite and >= 0");
  }
};

struct ExpectedCounts {
  std::array<double, 4> signal{};
  std::array<double, 4> accidental{};
  std::array<double, 4> dark{};

  double total(std::size_t r) const { return signal[r] + accidental[r] + dark[r]; }
};

inline double born_probability(const DensityMatrix& rho, const Vector4c& projector) {
  return std::max(0.0, (projector.adjoint() * rho.matrix() * projector)(0).real());
}

/// signal = R eta^2 dwell p_r; accidentals = signal_total / car spread evenly
/// over the four outcomes; dark = dark_rate gate_rate dwell.
inline ExpectedCounts expected_counts(const DensityMatrix& rho, const MeasurementSetting& setting,
                                      const NoiseModel& noise) {
  noise.validate();
  ExpectedCounts e;
  const double pairs = noise.pair_rate * noise.eta * noise.eta * setting.dwell;
  double signal_total = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    e.signal[r] = pairs * born_probability(rho, setting.projectors[r]);
    signal_total += e.signal[r];
  }
  const double acc = std::isinf(noise.car) ? 0.0 : signal_total / noise.car / 4.0;
  const double dark = noise.dark_rate * noise.gate_rate * setting.dwell;
  for (std::size_t r = 0; r < 4; ++r) {
    e.accidental[r] = acc;
    e.dark[r] = dark;
  }
  return e;
}

/// Coincidence counts from one setting over one dwell period.
struct CountRecord {
  std::uint64_t id = 0;
  int setting_id = 0;
  std::array<double, 4> counts{};
  /// Expected accidental + dark counts per outcome.
  std::array<double, 4> expected_accidentals{};
  double dwell = 0.0;
  double timestamp = 0.0;

  double total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }

  friend bool operator==(const CountRecord&, const CountRecord&) = default;
};

inline double sample_poisson(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0.0;
  std::poisson_distribution<long long> d(mean);
  return static_cast<double>(d(rng));
}

/// Independent Poisson draw per outcome; identical inputs and seed give an
/// identical record.
inline CountRecord simulate_counts(const DensityMatrix& rho, const MeasurementSetting& setting,
                                   const NoiseModel& noise, std::uint64_t seed) {
  const ExpectedCounts e = expected_counts(rho, setting, noise);
  Rng rng(derive_seed(seed, SeedStream::record));
  CountRecord rec;
  rec.setting_id = setting.id;
  rec.dwell = setting.dwell;
  for (std::size_t r = 0; r < 4; ++r) {
    rec.counts[r] = sample_poisson(e.total(r), rng);
    rec.expected_accidentals[r] = e.accidental[r] + e.dark[r];
  }
  return rec;
}

/// Exact expectation values as counts (noiseless oracle input).
inline CountRecord expected_record(const DensityMatrix& rho, const MeasurementSetting& setting,
                                   const NoiseModel& noise) {
  const ExpectedCounts e = expected_counts(rho, setting, noise);
  CountRecord rec;
  rec.setting_id = setting.id;
  rec.dwell = setting.dwell;
  for (std::size_t r = 0; r < 4; ++r) {
    rec.counts[r] = e.total(r);
    rec.expected_accidentals[r] = e.accidental[r] + e.dark[r];
  }
  return rec;
}

}  // namespace polarimeter
