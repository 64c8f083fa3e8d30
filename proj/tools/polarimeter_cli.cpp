// polarimeter: offline tomography, count simulation, Monte Carlo precision
// curves, the streaming service and capture replay.
//
// Exit codes: 0 ok, 1 other failure, 2 usage, 3 rank-deficient data,
// 4 parse error, 5 replay mismatch, 6 infeasible timing.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "polarimeter/chart.hpp"
#include "polarimeter/config.hpp"
#include "polarimeter/counts_io.hpp"
#include "polarimeter/engine.hpp"
#include "polarimeter/reconstruction.hpp"
#include "polarimeter/service.hpp"
#include "polarimeter/simulation.hpp"
#include "polarimeter/wire.hpp"

using namespace polarimeter;
using nlohmann::json;

namespace {

enum Exit : int { ok = 0, failure = 1, usage = 2, rank = 3, parse = 4, mismatch = 5, infeasible = 6 };

struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config_path;
  std::string format = "json";

  AppConfig load() const {
    AppConfig c = config_path ? load_config(*config_path) : AppConfig{};
    if (seed) {
      c.seed = *seed;
      c.engine.seed = *seed;
    }
    return c;
  }
};

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

/// Writes to the file, or stdout for "" and "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

template <class T>
void override_with(T& target, const std::optional<T>& value) {
  if (value) target = *value;
}

DensityMatrix named_state(const std::string& name) {
  if (!is_target(name) || name == "source")
    throw UsageError("unknown state '" + name + "' (expected HH, VV, phi+, phi-, psi+ or psi-)");
  return density_from_pure(target_state(name, SourceState{}));
}

// ---- tomo ------------------------------------------------------------------

struct TomoArgs {
  std::string counts;
  std::string method = "lls";
  std::string out;
  std::optional<std::string> target;
  bool no_subtract = false;
  bool raw = false;
  bool no_chart = false;
  bool timing = false;
};

json eigenvalues_json(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(rho.matrix());
  json a = json::array();
  for (int k = 3; k >= 0; --k) a.push_back(es.eigenvalues()(k));
  return a;
}

int run_tomo(const Globals& g, const TomoArgs& a) {
  AppConfig cfg = g.load();
  ReconstructionOptions options = cfg.reconstruction;
  if (a.no_subtract) options.subtract_accidentals = false;
  if (a.raw) options.normalize_per_setting = false;
  const Method method = parse_method(a.method);

  std::ifstream in(a.counts);
  if (!in) throw ParseError("cannot open counts file '" + a.counts + "'");
  CountFile file;
  try {
    file = read_count_file(in);
  } catch (const ParseError& e) {
    throw ParseError(a.counts + ": " + e.what());
  }
  if (file.records.empty()) throw ParseError(a.counts + ": no count records");
  const MeasurementMatrix matrix = build_measurement_matrix(file.settings);
  const ReconstructionReport rep = reconstruct(method, matrix, file.records, options);

  json stokes = json::array(), raw = json::array();
  const StokesVector2Q s = stokes_from_density(rep.rho);
  for (std::size_t k = 0; k < 16; ++k) {
    stokes.push_back(s[k]);
    raw.push_back(rep.raw_stokes[k]);
  }
  json report{{"method", to_string(rep.method)},
              {"records", file.records.size()},
              {"settings", file.settings.size()},
              {"subtract_accidentals", options.subtract_accidentals},
              {"normalize_per_setting", options.normalize_per_setting},
              {"rho", wire::rho_to_json(rep.rho.matrix())},
              {"eigenvalues", eigenvalues_json(rep.rho)},
              {"stokes", stokes},
              {"raw_stokes", raw},
              {"truncated_mass", rep.truncated_mass},
              {"residual", rep.residual},
              {"purity", purity(rep.rho)},
              {"concurrence", concurrence(rep.rho)},
              {"clamped_counts", rep.clamped_counts},
              {"converged", rep.converged},
              {"iterations", rep.iterations}};
  // wall-clock time breaks byte-identical reruns, so it is opt-in
  if (a.timing) report["solve_ms"] = rep.solve_time * 1e3;
  if (a.target) {
    report["target"] = *a.target;
    report["fidelity"] = fidelity(rep.rho, named_state(*a.target));
  }

  std::string text;
  if (g.format == "csv") {
    std::ostringstream csv;
    csv << std::setprecision(17) << "row,col,re,im\n";
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) csv << r << ',' << c << ',' << rep.rho(r, c).real() << ',' << rep.rho(r, c).imag() << '\n';
    text = csv.str();
  } else {
    text = json_text(report);
  }
  emit(a.out, text);

  if (!a.out.empty() && a.out != "-" && !a.no_chart) {
    std::filesystem::path base(a.out);
    const std::string title = a.counts.empty() ? "" : std::filesystem::path(a.counts).filename().string() + " (" +
                                                          to_string(rep.method) + ")";
    emit(std::filesystem::path(base).replace_extension(".svg").string(), chart::svg_density(rep.rho.matrix(), title));
    emit(std::filesystem::path(base).replace_extension(".txt").string(), chart::ascii_density(rep.rho.matrix()));
  }
  return ok;
}

// ---- simulate-counts -------------------------------------------------------

struct SimulateArgs {
  std::string state = "phi+";
  std::optional<double> theta;
  double depolarization = 0.0;
  int settings = 9;
  std::optional<double> dwell;
  std::optional<double> rate, eta, car, systematic, dark_rate, gate_rate;
  bool noiseless = false;
  std::vector<int> omit;
  int cycles = 1;
  std::string out;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  AppConfig cfg = g.load();
  NoiseModel noise = cfg.noise;
  override_with(noise.pair_rate, a.rate);
  override_with(noise.eta, a.eta);
  override_with(noise.car, a.car);
  override_with(noise.systematic_angle_deg, a.systematic);
  override_with(noise.dark_rate, a.dark_rate);
  override_with(noise.gate_rate, a.gate_rate);
  noise.validate();
  if (a.cycles < 1) throw UsageError("--cycles must be >= 1");
  if (!(a.depolarization >= 0.0 && a.depolarization <= 1.0)) throw UsageError("--depolarization must lie in [0, 1]");

  DensityMatrix rho = a.theta ? source_density(SourceState{*a.theta, noise.car, noise.pair_rate, a.depolarization})
                              : named_state(a.state);
  if (!a.theta && a.depolarization > 0.0)
    rho = DensityMatrix::from_matrix((1.0 - a.depolarization) * rho.matrix() +
                                     a.depolarization * Matrix4c::Identity() / 4.0);

  const double dwell = a.dwell.value_or(cfg.timing.tau_m);
  if (!(dwell >= 0.0)) throw UsageError("--dwell must be >= 0");
  const std::vector<MeasurementSetting> nominal = canonical_settings(a.settings, dwell);
  // the analyzers actually used; the file header keeps the nominal settings
  const std::vector<MeasurementSetting> actual =
      perturb_projectors(nominal, noise.systematic_angle_deg, derive_seed(cfg.seed, SeedStream::perturbation));

  CountFile file;
  file.seed = cfg.seed;
  file.settings = nominal;
  double clock = 0.0;
  std::uint64_t k = 0;
  for (int cycle = 0; cycle < a.cycles; ++cycle)
    for (const MeasurementSetting& s : actual) {
      if (std::find(a.omit.begin(), a.omit.end(), s.id) != a.omit.end()) continue;
      CountRecord r = a.noiseless ? expected_record(rho, s, noise)
                                  : simulate_counts(rho, s, noise, derive_seed(cfg.seed, SeedStream::record, k));
      r.id = k++;
      r.timestamp = clock;
      clock += dwell;
      file.records.push_back(r);
    }
  std::ostringstream out;
  write_count_file(out, file);
  emit(a.out, out.str());
  return ok;
}

// ---- montecarlo ------------------------------------------------------------

struct MonteCarloArgs {
  std::vector<double> n;
  std::vector<double> t;
  std::vector<std::string> profiles;
  std::optional<int> trials;
  std::optional<std::string> estimator;
  std::optional<std::string> state;
  std::optional<double> car, systematic;
  std::optional<int> settings_m;
  std::string preset;
  std::string out;
  std::string plot;
  bool n_given = false;
};

std::vector<Method> estimators_for(const std::string& name) {
  if (name == "both") return {Method::lls, Method::ml};
  return {parse_method(name)};
}

void apply_preset(const std::string& name, MonteCarloArgs& a, MonteCarloConfig& mc, NoiseModel& noise) {
  if (name.empty()) return;
  noise.car = 3.0;
  mc.state = "phi+";
  if (name == "n-sweep") {
    mc.n_values = {100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000, 100000};
    if (!a.estimator) a.estimator = "both";
  } else if (name == "t-sweep") {
    mc.t_values = {0.25, 0.5, 1, 2, 5, 10, 20, 50, 60, 80, 100, 200};
    mc.profiles = {"freespace", "polarimeter"};
  } else if (name == "checkpoints") {
    // the three precision rows: ~1 s and ~4 s of polarimeter data, and the large-N limit
    mc.n_values = {4000, 16000, 1e7};
  } else {
    throw UsageError("unknown preset '" + name + "' (expected n-sweep, t-sweep or checkpoints)");
  }
}

int run_montecarlo(const Globals& g, MonteCarloArgs a) {
  AppConfig cfg = g.load();
  MonteCarloConfig mc = cfg.montecarlo;
  NoiseModel noise = cfg.noise;
  apply_preset(a.preset, a, mc, noise);
  if (a.n_given) mc.n_values = a.n;
  if (!a.t.empty()) mc.t_values = a.t;
  if (!a.profiles.empty()) mc.profiles = a.profiles;
  override_with(mc.trials, a.trials);
  override_with(mc.settings_m, a.settings_m);
  override_with(mc.state, a.state);
  override_with(noise.car, a.car);
  override_with(noise.systematic_angle_deg, a.systematic);
  const std::string estimator = a.estimator.value_or(to_string(mc.estimator));

  if (a.n_given && a.n.empty()) throw UsageError("--n needs at least one ensemble size");
  if (!a.t.empty() && a.n_given) throw UsageError("--n and --t are mutually exclusive");
  const bool time_mode = mc.n_values.empty() || !a.t.empty();
  if (time_mode && mc.t_values.empty()) throw UsageError("give ensemble sizes with --n or total times with --t");
  if (!time_mode && mc.n_values.empty()) throw UsageError("the ensemble-size list is empty");
  if (mc.trials < 1) throw UsageError("--trials must be >= 1");
  for (double n : mc.n_values)
    if (!(n > 0.0) || !std::isfinite(n)) throw UsageError("ensemble sizes must be positive and finite");

  const DensityMatrix ideal = named_state(mc.state);
  PrecisionOptions opt;
  opt.trials = mc.trials;
  opt.noise = noise;
  opt.settings_m = mc.settings_m;
  opt.reconstruction = cfg.reconstruction;

  std::vector<chart::Series> series;
  std::string text;
  if (!time_mode) {
    std::vector<PrecisionPoint> points;
    for (Method m : estimators_for(estimator)) {
      opt.estimator = m;
      const auto curve = precision_curve(ideal, mc.n_values, opt, cfg.seed);
      chart::Series s{to_string(m), {}, {}, {}};
      for (const auto& p : curve) {
        s.x.push_back(p.n);
        s.y.push_back(p.mean_fidelity);
        s.err.push_back(p.standard_error());
      }
      series.push_back(std::move(s));
      points.insert(points.end(), curve.begin(), curve.end());
    }
    if (g.format == "csv") {
      std::ostringstream out;
      write_precision_csv(out, points);
      text = out.str();
    } else {
      json arr = json::array();
      for (const auto& p : points) arr.push_back(to_json(p));
      text = json_text({{"state", mc.state}, {"car", detail::real_or_inf(noise.car)}, {"seed", cfg.seed}, {"points", arr}});
    }
    if (!a.plot.empty())
      emit(a.plot, chart::svg_lines(series, "ensemble size N", "mean fidelity", true, "precision vs N, " + mc.state));
  } else {
    std::vector<TimingProfile> profiles;
    for (const auto& name : mc.profiles) profiles.push_back(TimingProfile::preset(name));
    if (profiles.empty()) throw UsageError("no timing profiles given");
    for (double t : mc.t_values) {
      bool any = false;
      for (const auto& p : profiles) any |= feasible(p, t);
      if (!any) {
        std::string msg = "T = " + std::to_string(t) + " s is infeasible for every profile:";
        for (const auto& p : profiles)
          msg += " " + p.name + " needs T >= " + std::to_string(p.overhead()) + " s;";
        throw InfeasibleTimingError(msg);
      }
    }
    std::vector<std::pair<Method, std::vector<TimeCurve>>> runs;
    for (Method m : estimators_for(estimator)) {
      opt.estimator = m;
      runs.emplace_back(m, precision_vs_time(ideal, profiles, mc.t_values, opt, cfg.seed));
      for (const auto& c : runs.back().second) {
        chart::Series s{c.profile.name + " " + to_string(m), {}, {}, {}};
        for (const auto& tp : c.points)
          if (tp.precision) {
            s.x.push_back(tp.t);
            s.y.push_back(tp.precision->mean_fidelity);
            s.err.push_back(tp.precision->standard_error());
          }
        series.push_back(std::move(s));
      }
    }
    if (g.format == "csv") {
      std::ostringstream out;
      out << std::setprecision(17) << "profile,t,n,feasible,mean_fidelity,std_fidelity,trials,estimator\n";
      for (const auto& [m, curves] : runs)
        for (const auto& c : curves)
          for (const auto& tp : c.points) {
            out << c.profile.name << ',' << tp.t << ',' << tp.n << ',' << (feasible(c.profile, tp.t) ? 1 : 0) << ',';
            if (tp.precision) {
              out << tp.precision->mean_fidelity << ',';
              if (tp.precision->std_fidelity)
                out << *tp.precision->std_fidelity;
              else
                out << "NA";
              out << ',' << tp.precision->trials;
            } else {
              out << "NA,NA,0";
            }
            out << ',' << to_string(m) << '\n';
          }
      text = out.str();
    } else {
      json arr = json::array();
      for (const auto& [m, curves] : runs) arr.push_back({{"estimator", to_string(m)}, {"curves", to_json(std::span<const TimeCurve>(curves))}});
      text = json_text({{"state", mc.state}, {"car", detail::real_or_inf(noise.car)}, {"seed", cfg.seed}, {"runs", arr}});
    }
    if (!a.plot.empty())
      emit(a.plot, chart::svg_lines(series, "total tomography time T (s)", "mean fidelity", true,
                                    "precision vs T, " + mc.state));
  }
  emit(a.out, text);
  return ok;
}

// ---- serve / replay --------------------------------------------------------

struct ServeArgs {
  std::optional<unsigned short> port;
  std::optional<std::string> address;
  std::optional<std::string> capture;
  std::optional<std::string> replay;
  std::optional<int> window;
  std::optional<std::string> pacing;
  std::optional<double> theta, car, rate;
  std::optional<std::size_t> mailbox;
  double duration = 0.0;
};

wire::Capture load_capture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open capture '" + path + "'");
  try {
    return wire::read_capture(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

int run_serve(const Globals& g, const ServeArgs& a) {
  AppConfig cfg = g.load();
  EngineConfig engine = cfg.engine;
  engine.pacing = Pacing::realtime;
  SourceState source = cfg.source;
  override_with(engine.window_m, a.window);
  if (a.pacing) engine.pacing = parse_pacing(*a.pacing);
  override_with(source.theta, a.theta);
  override_with(source.car, a.car);
  override_with(source.pair_rate, a.rate);
  engine.validate();

  ServiceOptions options;
  options.address = a.address.value_or(cfg.serve.address);
  options.port = a.port.value_or(cfg.serve.port);
  options.mailbox = a.mailbox.value_or(cfg.serve.mailbox);
  options.capture_path = a.capture;
  if (a.replay) options.replay = load_capture(*a.replay);

  Service service(engine, source, options);
  service.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving " << wire::kSchema << " on ws://" << options.address << ':' << service.port() << '/'
            << (service.replaying() ? " (replay)" : "") << std::endl;
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    if (a.duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= a.duration)
      break;
    if (service.replaying() && service.runner().finished()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  service.stop();
  std::cerr << "frames emitted: " << service.runner().frames_emitted() << std::endl;
  return ok;
}

struct ReplayArgs {
  std::string capture;
  std::string frames_out;
};

int run_replay(const Globals&, const ReplayArgs& a) {
  const wire::Capture cap = load_capture(a.capture);
  const wire::ReplayCheck check = wire::verify_capture(cap);
  json result{{"capture", a.capture},
              {"frames", cap.frames.size()},
              {"commands", cap.commands.size()},
              {"compared", check.compared},
              {"match", check.ok()}};
  if (check.first_mismatch_seq) result["first_mismatch_seq"] = *check.first_mismatch_seq;
  if (!check.detail.empty()) result["detail"] = check.detail;
  if (!a.frames_out.empty()) {
    std::uint64_t records = cap.records;
    if (records == 0 && !cap.frames.empty()) records = cap.frames.back().at("window").back().get<std::uint64_t>() + 1;
    EngineConfig config = cap.config;
    config.pacing = Pacing::fast;
    const StreamResult run = run_stream(config, cap.source, cap.commands, records);
    std::ostringstream out;
    for (const Frame& f : run.frames) out << wire::canonical_payload(wire::frame_to_json(f)).dump() << '\n';
    emit(a.frames_out, out.str());
  }
  std::cout << json_text(result);
  return check.ok() ? ok : mismatch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-qubit polarization tomography: reconstruction, simulation and live streaming."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "base seed for every random stream");
  app.add_option("--config", g.config_path, "versioned JSON config file")->check(CLI::ExistingFile);
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"json", "csv"}));

  TomoArgs tomo;
  auto* t = app.add_subcommand("tomo", "reconstruct a density matrix from a counts file");
  t->add_option("counts", tomo.counts, "counts file")->required();
  t->add_option("--method", tomo.method, "lls or ml")->check(CLI::IsMember({"lls", "ml"}));
  t->add_option("--out", tomo.out, "report path; charts go next to it as .svg and .txt");
  t->add_option("--target", tomo.target, "report the fidelity to this state")
      ->check(CLI::IsMember({"HH", "VV", "phi+", "phi-", "psi+", "psi-"}));
  t->add_flag("--no-subtract", tomo.no_subtract, "keep accidental coincidences in the counts");
  t->add_flag("--raw", tomo.raw, "fit raw counts with one global intensity instead of per-setting probabilities");
  t->add_flag("--no-chart", tomo.no_chart, "skip the chart files");
  t->add_flag("--timing", tomo.timing, "include solve_ms in the report");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate-counts", "write a simulated counts file");
  s->add_option("--state", sim.state, "HH, VV, phi+, phi-, psi+ or psi-");
  s->add_option("--theta", sim.theta, "use the source state cos2t|HH> + sin2t|VV> instead (radians)");
  s->add_option("--depolarization", sim.depolarization, "white-noise fraction mixed into the state");
  s->add_option("--settings", sim.settings, "9 or 36")->check(CLI::IsMember({9, 36}));
  s->add_option("--dwell", sim.dwell, "seconds per setting (default timing.tau_m)");
  s->add_option("--rate", sim.rate, "pair rate, pairs/s");
  s->add_option("--eta", sim.eta, "per-arm transmission");
  s->add_option("--car", sim.car, "coincidence-to-accidental ratio");
  s->add_option("--systematic", sim.systematic, "analyzer misalignment, degrees on the Poincare sphere");
  s->add_option("--dark-rate", sim.dark_rate, "dark counts per gate per detector");
  s->add_option("--gate-rate", sim.gate_rate, "gates/s (0 disables dark counts)");
  s->add_flag("--noiseless", sim.noiseless, "write exact expectation values instead of Poisson draws");
  s->add_option("--omit-setting", sim.omit, "leave out this setting id (repeatable)");
  s->add_option("--cycles", sim.cycles, "passes over the setting list");
  s->add_option("--out", sim.out, "output path (default stdout)");

  MonteCarloArgs mc;
  auto* m = app.add_subcommand("montecarlo", "precision against ensemble size or total time");
  auto* n_opt = m->add_option("--n", mc.n, "ensemble sizes (detected signal pairs per tomography)");
  m->add_option("--t", mc.t, "total tomography times in seconds");
  m->add_option("--profiles", mc.profiles, "timing presets for --t")
      ->check(CLI::IsMember({"freespace", "polarimeter"}));
  m->add_option("--trials", mc.trials, "tomographies per point");
  m->add_option("--estimator", mc.estimator, "lls, ml or both")->check(CLI::IsMember({"lls", "ml", "both"}));
  m->add_option("--state", mc.state, "ideal state")->check(CLI::IsMember({"HH", "VV", "phi+", "phi-", "psi+", "psi-"}));
  m->add_option("--car", mc.car, "coincidence-to-accidental ratio");
  m->add_option("--systematic", mc.systematic, "analyzer misalignment in degrees");
  m->add_option("--settings-m", mc.settings_m, "9 or 36")->check(CLI::IsMember({9, 36}));
  m->add_option("--preset", mc.preset, "n-sweep, t-sweep or checkpoints");
  m->add_option("--out", mc.out, "output path (default stdout)");
  m->add_option("--plot", mc.plot, "also write an SVG plot here");

  ServeArgs serve;
  auto* v = app.add_subcommand("serve", "stream frames over websocket and accept commands");
  v->add_option("--port", serve.port, "listen port (0 picks a free one)");
  v->add_option("--address", serve.address, "listen address");
  v->add_option("--capture", serve.capture, "record the session to this file");
  v->add_option("--replay", serve.replay, "serve a captured session instead of live control")
      ->check(CLI::ExistingFile);
  v->add_option("--window", serve.window, "records per reconstruction (multiple of 9)");
  v->add_option("--pacing", serve.pacing, "realtime or fast")->check(CLI::IsMember({"realtime", "fast"}));
  v->add_option("--theta", serve.theta, "initial wave-plate angle, radians");
  v->add_option("--car", serve.car, "initial coincidence-to-accidental ratio");
  v->add_option("--rate", serve.rate, "initial pair rate");
  v->add_option("--mailbox", serve.mailbox, "frames buffered per client");
  v->add_option("--duration", serve.duration, "stop after this many seconds (0 runs until interrupted)");

  ReplayArgs replay;
  auto* r = app.add_subcommand("replay", "regenerate a captured session and compare frame payloads");
  r->add_option("capture", replay.capture, "capture file")->required()->check(CLI::ExistingFile);
  r->add_option("--frames-out", replay.frames_out, "write the regenerated canonical frames here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }
  mc.n_given = n_opt->count() > 0;

  try {
    if (*t) return run_tomo(g, tomo);
    if (*s) return run_simulate(g, sim);
    if (*m) return run_montecarlo(g, mc);
    if (*v) return run_serve(g, serve);
    if (*r) return run_replay(g, replay);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return usage;
  } catch (const RankDeficientError& e) {
    std::cerr << "rank error: " << e.what() << "\n";
    return rank;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return parse;
  } catch (const InfeasibleTimingError& e) {
    std::cerr << "infeasible timing: " << e.what() << "\n";
    return infeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return usage;
}
