#pragma once

// Timing algebra and Monte Carlo precision studies.

#include <bit>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarimeter/error.hpp"
#include "polarimeter/measurement.hpp"
#include "polarimeter/random.hpp"
#include "polarimeter/reconstruction.hpp"

namespace polarimeter {

struct TimingProfile {
  std::string name = "custom";
  int m = 9;               ///< settings per tomography
  double tau_m = 0.08;     ///< s counting per setting
  double tau_s = 0.02;     ///< s switching
  double tau_a = 0.001;    ///< s analysis
  double pair_rate = 1e6;  ///< pairs/s
  double eta = 0.07;       ///< per-arm efficiency

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw InvalidArgument(what);
    };
    check(m > 0, "m must be positive");
    check(tau_m >= 0.0 && tau_s >= 0.0 && tau_a >= 0.0, "times must be >= 0");
    check(std::isfinite(tau_m) && std::isfinite(tau_s) && std::isfinite(tau_a), "times must be finite");
    check(pair_rate >= 0.0 && std::isfinite(pair_rate), "pair_rate must be finite and >= 0");
    check(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
  }

  /// Motorized wave plates with a slow analysis step. tau_m is set per T.
  static TimingProfile freespace() { return {"freespace", 9, 1.0, 5.0, 5.0, 1e6, 0.1}; }
  static TimingProfile polarimeter() { return {"polarimeter", 9, 0.08, 0.02, 0.001, 1e6, 0.07}; }

  static TimingProfile preset(const std::string& name) {
    if (name == "freespace") return freespace();
    if (name == "polarimeter") return polarimeter();
    throw InvalidArgument("unknown timing preset '" + name + "'");
  }

  double overhead() const { return m * tau_s + tau_a; }
  double pair_yield() const { return pair_rate * eta * eta; }  ///< detected pairs per counting second
};

/// T = M (tau_m + tau_s) + tau_a
inline double tomography_time(const TimingProfile& p) {
  p.validate();
  return p.m * (p.tau_m + p.tau_s) + p.tau_a;
}

/// N = R eta^2 (T - M tau_s - tau_a): every second not spent switching or
/// analysing is counting time.
inline double ensemble_size(const TimingProfile& p, double total_time) {
  p.validate();
  const double counting = total_time - p.overhead();
  if (!(counting >= 0.0))
    throw InfeasibleTimingError("total time " + std::to_string(total_time) + " s is below the overhead " +
                                std::to_string(p.overhead()) + " s of profile '" + p.name + "'");
  return p.pair_yield() * counting;
}

inline bool feasible(const TimingProfile& p, double total_time) { return total_time - p.overhead() >= 0.0; }

/// Inverse of ensemble_size.
inline double time_for_ensemble(const TimingProfile& p, double n) {
  p.validate();
  if (!(p.pair_yield() > 0.0)) throw InvalidArgument("pair_rate is zero; no ensemble size is reachable");
  if (!(n >= 0.0)) throw InvalidArgument("ensemble size must be >= 0");
  return n / p.pair_yield() + p.overhead();
}

/// The profile with tau_m chosen so that one tomography takes total_time.
inline TimingProfile profile_for_time(TimingProfile p, double total_time) {
  if (!feasible(p, total_time)) (void)ensemble_size(p, total_time);  // throws
  p.tau_m = (total_time - p.overhead()) / p.m;
  return p;
}

struct PrecisionOptions {
  int trials = 500;
  Method estimator = Method::lls;
  /// car, systematic_angle_deg and dark counts are used; pair_rate and eta
  /// are overridden so that each tomography holds N signal pairs.
  NoiseModel noise;
  int settings_m = 9;
  ReconstructionOptions reconstruction;
};

struct PrecisionPoint {
  double n = 0.0;
  double mean_fidelity = 0.0;
  std::optional<double> std_fidelity;  ///< sample std; absent for a single trial
  int trials = 0;
  Method estimator = Method::lls;
  /// Trials whose records could not be inverted; they score the maximally mixed estimate.
  int failed_trials = 0;

  double standard_error() const {
    return std_fidelity ? *std_fidelity / std::sqrt(static_cast<double>(trials)) : 0.0;
  }
  friend bool operator==(const PrecisionPoint&, const PrecisionPoint&) = default;
};

namespace detail {

inline std::uint64_t point_seed(std::uint64_t seed, double n) {
  return derive_seed(seed, SeedStream::trial, std::bit_cast<std::uint64_t>(n));
}

/// One simulate-then-reconstruct cycle. Returns the fidelity to rho_ideal and
/// whether the reconstruction failed.
inline std::pair<double, bool> precision_trial(const DensityMatrix& rho_ideal, double n,
                                               const PrecisionOptions& options, const MeasurementMatrix& ideal,
                                               std::uint64_t trial_seed) {
  NoiseModel noise = options.noise;
  noise.eta = 1.0;
  noise.pair_rate = n / options.settings_m;  // dwell 1 s per setting
  std::vector<MeasurementSetting> actual = ideal.settings;
  if (noise.systematic_angle_deg > 0.0)
    actual = perturb_projectors(actual, noise.systematic_angle_deg, derive_seed(trial_seed, SeedStream::perturbation));
  std::vector<CountRecord> records;
  records.reserve(actual.size());
  for (std::size_t k = 0; k < actual.size(); ++k) {
    CountRecord r = simulate_counts(rho_ideal, actual[k], noise, derive_seed(trial_seed, SeedStream::record, k));
    r.id = k;
    records.push_back(r);
  }
  try {
    const ReconstructionReport rep = reconstruct(options.estimator, ideal, records, options.reconstruction);
    return {fidelity(rep.rho, rho_ideal), false};
  } catch (const RankDeficientError&) {
  } catch (const DegenerateDataError&) {
  }
  return {fidelity(DensityMatrix::maximally_mixed(), rho_ideal), true};
}

}  // namespace detail

/// Mean and spread of F(rho, rho_ideal) over independent tomographies of N
/// signal pairs split evenly over the settings. Trial seeds are keyed by
/// (seed, N, trial), so each point is independent of the others in the list.
inline std::vector<PrecisionPoint> precision_curve(const DensityMatrix& rho_ideal, std::span<const double> n_values,
                                                   const PrecisionOptions& options, std::uint64_t seed) {
  if (options.trials < 1) throw InvalidArgument("trials must be >= 1");
  options.noise.validate();
  const MeasurementMatrix ideal = build_measurement_matrix(canonical_settings(options.settings_m, 1.0));
  std::vector<PrecisionPoint> out;
  for (double n : n_values) {
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("ensemble sizes must be positive");
    const std::uint64_t base = detail::point_seed(seed, n);
    PrecisionPoint point;
    point.n = n;
    point.trials = options.trials;
    point.estimator = options.estimator;
    std::vector<double> f(static_cast<std::size_t>(options.trials));
    for (int t = 0; t < options.trials; ++t) {
      const auto [value, failed] = detail::precision_trial(
          rho_ideal, n, options, ideal, derive_seed(base, SeedStream::trial, static_cast<std::uint64_t>(t)));
      f[static_cast<std::size_t>(t)] = value;
      point.failed_trials += failed;
    }
    double sum = 0.0;
    for (double v : f) sum += v;
    point.mean_fidelity = sum / options.trials;
    if (options.trials > 1) {
      double ss = 0.0;
      for (double v : f) ss += (v - point.mean_fidelity) * (v - point.mean_fidelity);
      point.std_fidelity = std::sqrt(ss / (options.trials - 1));
    }
    out.push_back(point);
  }
  return out;
}

struct TimePoint {
  double t = 0.0;
  double n = 0.0;
  std::optional<PrecisionPoint> precision;  ///< absent when T is infeasible for the profile
};

struct TimeCurve {
  TimingProfile profile;
  std::vector<TimePoint> points;
};

/// Precision against total tomography time for each timing profile. The
/// profile's eta and pair rate fix N; the noise model supplies CAR and the
/// systematic error.
inline std::vector<TimeCurve> precision_vs_time(const DensityMatrix& rho_ideal,
                                                std::span<const TimingProfile> profiles,
                                                std::span<const double> t_values, const PrecisionOptions& options,
                                                std::uint64_t seed) {
  std::vector<TimeCurve> out;
  for (const TimingProfile& p : profiles) {
    p.validate();
    PrecisionOptions opt = options;
    opt.settings_m = p.m;
    TimeCurve curve{p, {}};
    for (double t : t_values) {
      TimePoint tp;
      tp.t = t;
      if (feasible(p, t)) {
        tp.n = ensemble_size(p, t);
        if (tp.n > 0.0) {
          const double n[] = {tp.n};
          tp.precision = precision_curve(rho_ideal, n, opt, seed).front();
        }
      }
      curve.points.push_back(tp);
    }
    out.push_back(std::move(curve));
  }
  return out;
}

// ---- output ---------------------------------------------------------------

inline void write_precision_csv(std::ostream& out, std::span<const PrecisionPoint> points) {
  out << "n,mean_fidelity,std_fidelity,trials,estimator\n";
  out << std::setprecision(17);
  for (const auto& p : points) {
    out << p.n << ',' << p.mean_fidelity << ',';
    if (p.std_fidelity)
      out << *p.std_fidelity;
    else
      out << "NA";
    out << ',' << p.trials << ',' << to_string(p.estimator) << '\n';
  }
}

inline nlohmann::json to_json(const PrecisionPoint& p) {
  nlohmann::json j{{"n", p.n},
                   {"mean_fidelity", p.mean_fidelity},
                   {"std_fidelity", nullptr},
                   {"trials", p.trials},
                   {"estimator", to_string(p.estimator)},
                   {"failed_trials", p.failed_trials}};
  if (p.std_fidelity) j["std_fidelity"] = *p.std_fidelity;
  return j;
}

inline PrecisionPoint precision_point_from_json(const nlohmann::json& j) {
  PrecisionPoint p;
  p.n = j.at("n").get<double>();
  p.mean_fidelity = j.at("mean_fidelity").get<double>();
  if (!j.at("std_fidelity").is_null()) p.std_fidelity = j.at("std_fidelity").get<double>();
  p.trials = j.at("trials").get<int>();
  p.estimator = parse_method(j.at("estimator").get<std::string>());
  p.failed_trials = j.value("failed_trials", 0);
  return p;
}

inline nlohmann::json to_json(const TimingProfile& p) {
  return {{"name", p.name},   {"m", p.m},     {"tau_m", p.tau_m},         {"tau_s", p.tau_s},
          {"tau_a", p.tau_a}, {"eta", p.eta}, {"pair_rate", p.pair_rate}};
}

inline nlohmann::json to_json(std::span<const TimeCurve> curves) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& tp : c.points) {
      nlohmann::json j{{"t", tp.t}, {"n", tp.n}, {"feasible", feasible(c.profile, tp.t)}};
      if (tp.precision) j["precision"] = to_json(*tp.precision);
      pts.push_back(j);
    }
    out.push_back({{"profile", to_json(c.profile)}, {"points", pts}});
  }
  return out;
}

}  // namespace polarimeter
