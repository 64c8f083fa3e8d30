#pragma once

// Density-matrix reconstruction from count records.
//
// lls_reconstruct solves the weighted linear least-squares problem
// w M . S = w C for the 16 Stokes parameters and legalizes the result by
// truncating negative eigenvalues. ml_reconstruct maximizes the Poisson
// likelihood over the Cholesky parametrization rho = L L^dagger / Tr(L L^dagger)
// and serves as the reference estimator.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polarimeter/error.hpp"
#include "polarimeter/lbfgs.hpp"
#include "polarimeter/measurement.hpp"
#include "polarimeter/quantum.hpp"

namespace polarimeter {

enum class Method { lls, ml };

inline std::string to_string(Method m) { return m == Method::lls ? "lls" : "ml"; }

inline Method parse_method(const std::string& s) {
  if (s == "lls" || s == "LLS") return Method::lls;
  if (s == "ml" || s == "ML") return Method::ml;
  throw InvalidArgument("unknown reconstruction method '" + s + "' (expected lls or ml)");
}

struct MlOptions {
  double gradient_tolerance = 1e-7;
  int max_iterations = 10000;
  /// Weight of I/4 mixed into the LLS starting point to keep every model count positive.
  double start_mixing = 1e-3;
};

struct ReconstructionOptions {
  bool subtract_accidentals = true;
  /// Fit per-record probabilities (counts over the record total). When false,
  /// fit raw counts with one global intensity scaled by each record's dwell.
  bool normalize_per_setting = true;
  /// Relative singular-value threshold of the rank test.
  double rank_tolerance = 1e-10;
  MlOptions ml;
};

struct ReconstructionReport {
  DensityMatrix rho = DensityMatrix::maximally_mixed();
  /// Unconstrained least-squares solution (probability units when normalizing
  /// per setting, count-rate units otherwise). For ML, the Stokes vector of rho.
  StokesVector2Q raw_stokes;
  /// Sum of the magnitudes of the clipped negative eigenvalues.
  double truncated_mass = 0.0;
  /// Weighted RMS residual of the linear system at the returned state.
  double residual = 0.0;
  double solve_time = 0.0;  ///< seconds
  Method method = Method::lls;
  /// Some accidental-subtracted counts were negative and clamped to zero.
  bool clamped_counts = false;
  bool converged = true;
  int iterations = 0;
};

/// One positive, finite weight per matrix row.
class WeightVector {
 public:
  explicit WeightVector(Eigen::VectorXd w) : w_(std::move(w)) {
    for (Eigen::Index k = 0; k < w_.size(); ++k)
      if (!(w_(k) > 0.0) || !std::isfinite(w_(k)))
        throw InvalidArgument("weights must be finite and positive");
  }
  const Eigen::VectorXd& values() const noexcept { return w_; }
  double operator[](Eigen::Index k) const { return w_(k); }
  Eigen::Index size() const { return w_.size(); }

 private:
  Eigen::VectorXd w_;
};

/// w_r = 1 / sqrt(max(C_r, 1)): Gaussian width sqrt(N) of a Poisson count,
/// floored at one count.
inline WeightVector weights_from_counts(std::span<const CountRecord> records) {
  if (records.empty()) throw InvalidArgument("no count records");
  Eigen::VectorXd w(static_cast<Eigen::Index>(4 * records.size()));
  for (std::size_t k = 0; k < records.size(); ++k)
    for (std::size_t r = 0; r < 4; ++r)
      w(static_cast<Eigen::Index>(4 * k + r)) = 1.0 / std::sqrt(std::max(records[k].counts[r], 1.0));
  return WeightVector(std::move(w));
}

struct LegalizedState {
  DensityMatrix rho;
  double truncated_mass = 0.0;
};

/// Clips negative eigenvalues of a Hermitian matrix, divides the spectrum by
/// the remaining positive mass and reassembles with the original eigenvectors.
inline LegalizedState legalize_spectrum(const Matrix4c& h) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(0.5 * (h + h.adjoint()));
  if (eig.info() != Eigen::Success) throw DegenerateDataError("eigendecomposition failed");
  Eigen::Vector4d lambda = eig.eigenvalues();
  double positive = 0.0;
  double clipped = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (lambda(k) > 0.0) {
      positive += lambda(k);
    } else {
      clipped -= lambda(k);
      lambda(k) = 0.0;
    }
  }
  if (!(positive > 0.0) || !std::isfinite(positive))
    throw DegenerateDataError("every eigenvalue of the fitted matrix is <= 0");
  lambda /= positive;
  Matrix4c m = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().adjoint();
  m = (0.5 * (m + m.adjoint())).eval();
  for (int k = 0; k < 4; ++k) m(k, k) = m(k, k).real();
  m /= m.trace().real();
  return {DensityMatrix::from_matrix(m), clipped};
}

inline DensityMatrix legalize_psd(const Matrix4c& h) { return legalize_spectrum(h).rho; }

namespace detail {

struct LinearSystem {
  Eigen::MatrixXd design;  // unweighted rows, scaled by record total or dwell
  Eigen::VectorXd target;  // (subtracted) counts
  Eigen::VectorXd weights;
  bool clamped = false;
};

inline LinearSystem assemble(const MeasurementMatrix& matrix, std::span<const CountRecord> records,
                             const ReconstructionOptions& options) {
  if (records.empty()) throw InvalidArgument("no count records");
  const auto rows = static_cast<Eigen::Index>(4 * records.size());
  LinearSystem sys;
  sys.design.resize(rows, 16);
  sys.target.resize(rows);
  sys.weights = weights_from_counts(records).values();
  for (std::size_t k = 0; k < records.size(); ++k) {
    const CountRecord& rec = records[k];
    const std::size_t s = matrix.index_of(rec.setting_id);
    std::array<double, 4> c{};
    double total = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      c[r] = options.subtract_accidentals ? rec.counts[r] - rec.expected_accidentals[r] : rec.counts[r];
      if (c[r] < 0.0) {
        c[r] = 0.0;
        sys.clamped = true;
      }
      total += c[r];
    }
    const double scale = options.normalize_per_setting ? total : rec.dwell;
    for (std::size_t r = 0; r < 4; ++r) {
      const auto row = static_cast<Eigen::Index>(4 * k + r);
      sys.design.row(row) = scale * matrix.row(s, static_cast<int>(r));
      sys.target(row) = c[r];
    }
  }
  return sys;
}

inline std::string describe_direction(const Eigen::VectorXd& v) {
  std::vector<std::pair<double, std::size_t>> parts;
  for (std::size_t k = 0; k < 16; ++k)
    if (std::abs(v(static_cast<Eigen::Index>(k))) > 1e-3) parts.emplace_back(v(static_cast<Eigen::Index>(k)), k);
  std::sort(parts.begin(), parts.end(),
            [](const auto& a, const auto& b) { return std::abs(a.first) > std::abs(b.first); });
  if (parts.size() == 1) return pauli::label(parts[0].second);
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double c = i == 0 ? parts[i].first : std::abs(parts[i].first);
    if (i > 0) out += parts[i].first < 0 ? " - " : " + ";
    std::snprintf(buf, sizeof buf, "%.3g*", c);
    out += buf + pauli::label(parts[i].second);
  }
  return out;
}

inline double weighted_rms(const LinearSystem& sys, const Eigen::Matrix<double, 16, 1>& s) {
  const Eigen::VectorXd r = sys.weights.cwiseProduct(sys.design * s - sys.target);
  return std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

/// Least-squares Stokes vector; throws RankDeficientError naming the
/// unconstrained directions.
inline Eigen::Matrix<double, 16, 1> solve_stokes(const LinearSystem& sys, double rank_tolerance) {
  const Eigen::MatrixXd a = sys.weights.asDiagonal() * sys.design;
  const Eigen::VectorXd b = sys.weights.cwiseProduct(sys.target);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = rank_tolerance * sv(0);
  std::vector<std::string> missing;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (!(sv(k) > cutoff)) missing.push_back(describe_direction(svd.matrixV().col(k)));
  if (!missing.empty()) {
    std::string msg = "measurement records do not determine the state: rank " +
                      std::to_string(16 - missing.size()) + " of 16; unconstrained Stokes directions:";
    for (const auto& d : missing) msg += " [" + d + "]";
    throw RankDeficientError(msg, missing);
  }
  return svd.solve(b);
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

inline ReconstructionReport lls_reconstruct(const MeasurementMatrix& matrix, std::span<const CountRecord> records,
                                            const ReconstructionOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  const detail::LinearSystem sys = detail::assemble(matrix, records, options);
  const Eigen::Matrix<double, 16, 1> s = detail::solve_stokes(sys, options.rank_tolerance);
  const StokesVector2Q stokes = StokesVector2Q::from_vector(s);
  LegalizedState legal = legalize_spectrum(density_from_stokes(stokes));

  ReconstructionReport report;
  report.rho = legal.rho;
  report.raw_stokes = stokes;
  report.truncated_mass = legal.truncated_mass;
  report.residual = detail::weighted_rms(sys, s);
  report.method = Method::lls;
  report.clamped_counts = sys.clamped;
  report.solve_time = detail::seconds_since(start);
  return report;
}

namespace detail {

/// Negative Poisson log-likelihood of the records, as a function of the 16
/// real entries of a lower-triangular L (real diagonal first, then the real
/// and imaginary parts of the strictly lower entries), G = L L^dagger.
///
/// Per-setting mode: mu_r = I_k <pi_r|G|pi_r>/Tr G + a_r with I_k the record's
/// (accidental-subtracted) total. Raw mode: mu_r = dwell_k <pi_r|G|pi_r> + a_r.
/// a_r is zero unless accidentals are subtracted. The value is the deviance
/// sum(mu - C - C ln(mu/C)) divided by the total count.
class PoissonLikelihood {
 public:
  PoissonLikelihood(const MeasurementMatrix& matrix, std::span<const CountRecord> records,
                    const ReconstructionOptions& options)
      : normalize_(options.normalize_per_setting) {
    const auto rows = static_cast<Eigen::Index>(4 * records.size());
    kets_.resize(4, rows);
    counts_.resize(rows);
    background_.resize(rows);
    scale_.resize(rows);
    total_ = 0.0;
    for (std::size_t k = 0; k < records.size(); ++k) {
      const CountRecord& rec = records[k];
      const MeasurementSetting& setting = matrix.settings[matrix.index_of(rec.setting_id)];
      double intensity = 0.0;
      for (std::size_t r = 0; r < 4; ++r)
        intensity += options.subtract_accidentals ? rec.counts[r] - rec.expected_accidentals[r] : rec.counts[r];
      intensity = std::max(intensity, 0.0);
      for (std::size_t r = 0; r < 4; ++r) {
        const auto row = static_cast<Eigen::Index>(4 * k + r);
        kets_.col(row) = setting.projectors[r];
        counts_(row) = rec.counts[r];
        background_(row) = options.subtract_accidentals ? rec.expected_accidentals[r] : 0.0;
        scale_(row) = normalize_ ? intensity : rec.dwell;
        total_ += rec.counts[r];
      }
    }
    if (!(total_ > 0.0)) total_ = 1.0;
  }

  static Matrix4c unpack(const Eigen::VectorXd& x) {
    Matrix4c l = Matrix4c::Zero();
    int k = 4;
    for (int i = 0; i < 4; ++i) l(i, i) = x(i);
    for (int i = 1; i < 4; ++i)
      for (int j = 0; j < i; ++j, ++k) l(i, j) = Complex{x(k), x(k + 6)};
    return l;
  }

  static Eigen::VectorXd pack(const Matrix4c& l) {
    Eigen::VectorXd x(16);
    int k = 4;
    for (int i = 0; i < 4; ++i) x(i) = l(i, i).real();
    for (int i = 1; i < 4; ++i)
      for (int j = 0; j < i; ++j, ++k) {
        x(k) = l(i, j).real();
        x(k + 6) = l(i, j).imag();
      }
    return x;
  }

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const Matrix4c l = unpack(x);
    const Eigen::Matrix<Complex, 4, Eigen::Dynamic> u = l.adjoint() * kets_;
    const Eigen::VectorXd q = u.colwise().squaredNorm().transpose();  // <pi|G|pi>
    const double trace = l.squaredNorm();
    if (!(trace > 0.0)) return std::numeric_limits<double>::infinity();

    const Eigen::Index rows = q.size();
    Eigen::VectorXd dmu(rows);  // d value / d mu
    double value = 0.0;
    double weighted_p = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double model = normalize_ ? scale_(r) * q(r) / trace : scale_(r) * q(r);
      const double mu = model + background_(r);
      const double c = counts_(r);
      if (c > 0.0) {
        if (!(mu > 0.0)) return std::numeric_limits<double>::infinity();
        value += mu - c - c * std::log(mu / c);
        dmu(r) = (1.0 - c / mu) / total_;
      } else {
        value += mu;
        dmu(r) = 1.0 / total_;
      }
      // chain factor d mu / d q
      dmu(r) *= scale_(r) / (normalize_ ? trace : 1.0);
      if (normalize_) weighted_p += dmu(r) * q(r) / trace;
    }
    // D = dvalue/dG = sum c_r pi pi^dagger - (sum c_r q_r / Tr G) I in per-setting mode
    Matrix4c d = kets_ * dmu.asDiagonal() * kets_.adjoint();
    if (normalize_) d -= weighted_p * Matrix4c::Identity();
    // dvalue = 2 Re Tr(L^dagger D dL)
    const Matrix4c k = l.adjoint() * d;
    grad.resize(16);
    int idx = 4;
    for (int i = 0; i < 4; ++i) grad(i) = 2.0 * k(i, i).real();
    for (int i = 1; i < 4; ++i)
      for (int j = 0; j < i; ++j, ++idx) {
        grad(idx) = 2.0 * k(j, i).real();
        grad(idx + 6) = -2.0 * k(j, i).imag();
      }
    return value / total_;
  }

  double total_counts() const { return total_; }
  bool normalized() const { return normalize_; }
  double rate_scale(std::span<const CountRecord> records, bool subtract) const {
    double counts = 0.0;
    double dwell = 0.0;
    for (const auto& rec : records) {
      for (std::size_t r = 0; r < 4; ++r)
        counts += subtract ? rec.counts[r] - rec.expected_accidentals[r] : rec.counts[r];
      dwell += rec.dwell;
    }
    return dwell > 0.0 ? std::max(counts, 1.0) / dwell : 1.0;
  }

 private:
  bool normalize_;
  Eigen::Matrix<Complex, 4, Eigen::Dynamic> kets_;
  Eigen::VectorXd counts_;
  Eigen::VectorXd background_;
  Eigen::VectorXd scale_;
  double total_ = 0.0;
};

inline DensityMatrix density_from_cholesky(const Matrix4c& l) {
  Matrix4c g = l * l.adjoint();
  g = (0.5 * (g + g.adjoint())).eval();
  for (int k = 0; k < 4; ++k) g(k, k) = g(k, k).real();
  g /= g.trace().real();
  return DensityMatrix::from_matrix(g);
}

}  // namespace detail

inline ReconstructionReport ml_reconstruct(const MeasurementMatrix& matrix, std::span<const CountRecord> records,
                                           const ReconstructionOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  const ReconstructionReport lls = lls_reconstruct(matrix, records, options);
  const detail::PoissonLikelihood likelihood(matrix, records, options);

  const double mix = options.ml.start_mixing;
  Matrix4c g0 = (1.0 - mix) * lls.rho.matrix() + mix * Matrix4c::Identity() / 4.0;
  if (!options.normalize_per_setting) g0 *= likelihood.rate_scale(records, options.subtract_accidentals);
  Eigen::LLT<Matrix4c> llt(g0);
  const Eigen::VectorXd x0 = detail::PoissonLikelihood::pack(llt.matrixL());

  LbfgsOptions lbfgs;
  lbfgs.gradient_tolerance = options.ml.gradient_tolerance;
  lbfgs.max_iterations = options.ml.max_iterations;
  const LbfgsResult fit = minimize_lbfgs(likelihood, x0, lbfgs);

  const detail::LinearSystem sys = detail::assemble(matrix, records, options);
  ReconstructionReport report;
  report.rho = detail::density_from_cholesky(detail::PoissonLikelihood::unpack(fit.x));
  report.raw_stokes = stokes_from_density(report.rho);
  Eigen::Matrix<double, 16, 1> s = report.raw_stokes.vector();
  if (!options.normalize_per_setting) s *= lls.raw_stokes[0];
  report.residual = detail::weighted_rms(sys, s);
  report.method = Method::ml;
  report.clamped_counts = sys.clamped;
  report.converged = fit.converged;
  report.iterations = fit.iterations;
  report.solve_time = detail::seconds_since(start);
  return report;
}

inline ReconstructionReport reconstruct(Method method, const MeasurementMatrix& matrix,
                                        std::span<const CountRecord> records,
                                        const ReconstructionOptions& options = {}) {
  return method == Method::lls ? lls_reconstruct(matrix, records, options)
                               : ml_reconstruct(matrix, records, options);
}

}  // namespace polarimeter
