#pragma once

// The live instrument: a steerable simulated source, the setting scheduler and
// the rolling-window reconstruction loop.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarimeter/error.hpp"
#include "polarimeter/measurement.hpp"
#include "polarimeter/random.hpp"
#include "polarimeter/reconstruction.hpp"
#include "polarimeter/simulation.hpp"

namespace polarimeter {

struct SourceState {
  double theta = 0.0;  ///< half-wave plate angle, radians
  double car = 3.0;
  double pair_rate = 1e6;      ///< pairs/s
  double depolarization = 0.0;  ///< white-noise fraction p

  friend bool operator==(const SourceState&, const SourceState&) = default;
};

/// cos(2 theta)|HH> + sin(2 theta)|VV>
inline PureState2Q source_pure_state(double theta) {
  Vector4c v = Vector4c::Zero();
  v(0) = std::cos(2.0 * theta);
  v(3) = std::sin(2.0 * theta);
  return PureState2Q::normalized(v);
}

/// (1 - p)|psi(theta)><psi(theta)| + p I/4. Accidentals are added by the count model.
inline DensityMatrix source_density(const SourceState& s) {
  const Matrix4c pure = density_from_pure(source_pure_state(s.theta)).matrix();
  return DensityMatrix::from_matrix((1.0 - s.depolarization) * pure +
                                    s.depolarization * Matrix4c::Identity() / 4.0);
}

// ---- targets ---------------------------------------------------------------

/// "source" follows |psi(theta)> of the current source; the rest are fixed.
inline const std::vector<std::string>& target_names() {
  static const std::vector<std::string> names{"source", "HH", "VV", "phi+", "phi-", "psi+", "psi-"};
  return names;
}

inline bool is_target(const std::string& name) {
  const auto& n = target_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

inline PureState2Q target_state(const std::string& name, const SourceState& source) {
  const double h = 1.0 / std::sqrt(2.0);
  auto bell = [&](int a, int b, double sign) {
    Vector4c v = Vector4c::Zero();
    v(a) = h;
    v(b) = sign * h;
    return PureState2Q(v);
  };
  if (name == "source") return source_pure_state(source.theta);
  if (name == "HH") return PureState2Q::basis(0);
  if (name == "VV") return PureState2Q::basis(3);
  if (name == "phi+") return bell(0, 3, 1.0);
  if (name == "phi-") return bell(0, 3, -1.0);
  if (name == "psi+") return bell(1, 2, 1.0);
  if (name == "psi-") return bell(1, 2, -1.0);
  throw InvalidArgument("unknown target '" + name + "'");
}

// ---- configuration ---------------------------------------------------------

enum class Pacing { realtime, fast };

inline std::string to_string(Pacing p) { return p == Pacing::realtime ? "realtime" : "fast"; }
inline Pacing parse_pacing(const std::string& s) {
  if (s == "realtime") return Pacing::realtime;
  if (s == "fast") return Pacing::fast;
  throw InvalidArgument("unknown pacing '" + s + "' (expected realtime or fast)");
}

inline constexpr int kMaxWindow = 9 * 100;

inline void validate_window(int m) {
  if (m <= 0 || m % 9 != 0 || m > kMaxWindow)
    throw InvalidArgument("window must be a positive multiple of 9 up to " + std::to_string(kMaxWindow) + ", got " +
                          std::to_string(m));
}

struct EngineConfig {
  TimingProfile timing = TimingProfile::polarimeter();
  int window_m = 36;
  Pacing pacing = Pacing::fast;
  std::uint64_t seed = 1;
  /// Visit the nine settings in a fresh random order every cycle.
  bool randomized_order = false;
  /// Detector-side noise. pair_rate and car are taken from the source state.
  NoiseModel noise;
  ReconstructionOptions reconstruction;
  std::string target = "source";

  void validate() const {
    timing.validate();
    if (timing.m != 9) throw InvalidArgument("the engine cycles the 9 canonical settings; timing.m must be 9");
    validate_window(window_m);
    noise.validate();
    if (!is_target(target)) throw InvalidArgument("unknown target '" + target + "'");
  }

  /// Wall-clock period of one record in realtime pacing.
  double frame_period() const { return timing.tau_m + timing.tau_s + timing.tau_a; }
};

// ---- commands --------------------------------------------------------------

enum class CommandKind { set_theta, set_car, set_rate, set_depolarization, set_window, pause, resume, set_target };

inline const std::vector<std::pair<CommandKind, std::string>>& command_names() {
  static const std::vector<std::pair<CommandKind, std::string>> names{
      {CommandKind::set_theta, "set_theta"},   {CommandKind::set_car, "set_car"},
      {CommandKind::set_rate, "set_rate"},     {CommandKind::set_depolarization, "set_depolarization"},
      {CommandKind::set_window, "set_window"}, {CommandKind::pause, "pause"},
      {CommandKind::resume, "resume"},         {CommandKind::set_target, "set_target"}};
  return names;
}

inline std::string to_string(CommandKind k) {
  for (const auto& [kind, name] : command_names())
    if (kind == k) return name;
  return "?";
}

inline std::optional<CommandKind> parse_command_kind(const std::string& s) {
  for (const auto& [kind, name] : command_names())
    if (name == s) return kind;
  return std::nullopt;
}

struct Command {
  CommandKind kind = CommandKind::pause;
  nlohmann::json value;   ///< number, string or null depending on kind
  nlohmann::json req_id;  ///< echoed in the ack; any JSON scalar

  friend bool operator==(const Command&, const Command&) = default;
};

struct Ack {
  nlohmann::json req_id;
  std::optional<std::uint64_t> applied_seq;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  friend bool operator==(const Ack&, const Ack&) = default;
};

/// Mutable part of the instrument that commands act on.
struct ControlState {
  SourceState source;
  int window_m = 36;
  bool paused = false;
  std::string target = "source";

  friend bool operator==(const ControlState&, const ControlState&) = default;
};

/// Returns the reason a command is malformed or out of range, nothing when it is valid.
inline std::optional<std::string> validate_command(const Command& c) {
  auto number = [&](const char* what) -> std::optional<std::string> {
    if (!c.value.is_number()) return std::string(what) + " needs a numeric value";
    if (!std::isfinite(c.value.get<double>())) return std::string(what) + " needs a finite value";
    return std::nullopt;
  };
  switch (c.kind) {
    case CommandKind::set_theta:
      return number("set_theta");
    case CommandKind::set_car:
      if (auto e = number("set_car")) return e;
      if (!(c.value.get<double>() > 0.0)) return "car must be > 0";
      return std::nullopt;
    case CommandKind::set_rate:
      if (auto e = number("set_rate")) return e;
      if (!(c.value.get<double>() > 0.0)) return "pair rate must be > 0";
      return std::nullopt;
    case CommandKind::set_depolarization: {
      if (auto e = number("set_depolarization")) return e;
      const double p = c.value.get<double>();
      if (p < 0.0 || p > 1.0) return "depolarization must lie in [0, 1]";
      return std::nullopt;
    }
    case CommandKind::set_window: {
      if (!c.value.is_number_integer() &&
          !(c.value.is_number() && c.value.get<double>() == std::floor(c.value.get<double>())))
        return "set_window needs an integer value";
      const double m = c.value.get<double>();
      if (m <= 0 || m > kMaxWindow || std::fmod(m, 9.0) != 0.0)
        return "window must be a positive multiple of 9 up to " + std::to_string(kMaxWindow);
      return std::nullopt;
    }
    case CommandKind::pause:
    case CommandKind::resume:
      return std::nullopt;
    case CommandKind::set_target:
      if (!c.value.is_string()) return "set_target needs a string value";
      if (!is_target(c.value.get<std::string>())) return "unknown target '" + c.value.get<std::string>() + "'";
      return std::nullopt;
  }
  return "unknown command";
}

/// Pure state transition. On error the state is returned unchanged.
inline std::pair<ControlState, std::optional<std::string>> apply_command(ControlState state, const Command& c) {
  if (auto err = validate_command(c)) return {state, err};
  switch (c.kind) {
    case CommandKind::set_theta: state.source.theta = c.value.get<double>(); break;
    case CommandKind::set_car: state.source.car = c.value.get<double>(); break;
    case CommandKind::set_rate: state.source.pair_rate = c.value.get<double>(); break;
    case CommandKind::set_depolarization: state.source.depolarization = c.value.get<double>(); break;
    case CommandKind::set_window: state.window_m = static_cast<int>(c.value.get<double>()); break;
    case CommandKind::pause: state.paused = true; break;
    case CommandKind::resume: state.paused = false; break;
    case CommandKind::set_target: state.target = c.value.get<std::string>(); break;
  }
  return {state, std::nullopt};
}

// ---- frames ----------------------------------------------------------------

namespace flag {
inline constexpr const char* carried_forward = "carried_forward";  ///< reconstruction failed, rho is the previous one
inline constexpr const char* clamped_counts = "clamped_counts";
inline constexpr const char* no_estimate = "no_estimate";  ///< failed before any estimate existed; rho is I/4
}  // namespace flag

struct Frame {
  std::uint64_t seq = 0;
  double t = 0.0;  ///< acquisition clock at the end of the newest record, s
  DensityMatrix rho = DensityMatrix::maximally_mixed();
  StokesVector2Q stokes;
  double fidelity = 0.0;  ///< to the target state
  double purity = 0.0;
  double concurrence = 0.0;
  int window_m = 0;
  std::vector<std::uint64_t> window;  ///< record ids, oldest first
  double solve_time = 0.0;            ///< s
  double emit_time = 0.0;             ///< wall clock since engine start, s
  SourceState source;
  std::string target = "source";
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

// ---- engine ----------------------------------------------------------------

/// Single-threaded acquisition loop. Not thread-safe; StreamRunner wraps it.
class PolarimeterEngine {
 public:
  explicit PolarimeterEngine(EngineConfig config, SourceState source = {})
      : config_(std::move(config)),
        ideal_(build_measurement_matrix(canonical_settings(9, config_.timing.tau_m))),
        start_(std::chrono::steady_clock::now()) {
    config_.validate();
    state_.source = source;
    state_.window_m = config_.window_m;
    state_.target = config_.target;
    if (auto err = validate_source(source)) throw InvalidArgument(*err);
    actual_ = ideal_.settings;
    if (config_.noise.systematic_angle_deg > 0.0)
      actual_ = perturb_projectors(actual_, config_.noise.systematic_angle_deg,
                                   derive_seed(config_.seed, SeedStream::perturbation));
  }

  const EngineConfig& config() const { return config_; }
  const ControlState& state() const { return state_; }
  const MeasurementMatrix& measurement_matrix() const { return ideal_; }
  std::uint64_t next_seq() const { return next_seq_; }
  /// Id of the next record to be acquired.
  std::uint64_t next_record() const { return next_record_; }
  double clock() const { return clock_; }
  bool paused() const { return state_.paused; }
  const std::deque<CountRecord>& window() const { return window_; }

  /// Applies a command now, i.e. at the current dwell boundary.
  Ack apply(const Command& c) {
    auto [next, err] = apply_command(state_, c);
    if (err) return {c.req_id, std::nullopt, err};
    if (next.window_m != state_.window_m || c.kind == CommandKind::set_window) window_.clear();
    state_ = next;
    return {c.req_id, next_seq_, std::nullopt};
  }

  /// Setting index used for record k.
  std::size_t setting_for(std::uint64_t k) {
    const std::uint64_t cycle = k / 9, pos = k % 9;
    if (!config_.randomized_order) return static_cast<std::size_t>(pos);
    if (cycle != order_cycle_ || order_.empty()) {
      order_.resize(9);
      for (std::size_t i = 0; i < 9; ++i) order_[i] = i;
      Rng rng(derive_seed(config_.seed, SeedStream::order, cycle));
      std::shuffle(order_.begin(), order_.end(), rng);
      order_cycle_ = cycle;
    }
    return order_[pos];
  }

  /// Simulates the next record against the current source.
  CountRecord acquire_record() {
    const std::uint64_t k = next_record_++;
    NoiseModel noise = config_.noise;
    noise.pair_rate = state_.source.pair_rate;
    noise.car = state_.source.car;
    noise.eta = config_.timing.eta;
    const std::size_t s = setting_for(k);
    CountRecord rec = simulate_counts(source_density(state_.source), actual_[s], noise,
                                      derive_seed(config_.seed, SeedStream::record, k));
    rec.setting_id = ideal_.settings[s].id;
    rec.id = k;
    clock_ += config_.timing.tau_m + config_.timing.tau_s;
    rec.timestamp = clock_;
    return rec;
  }

  /// One dwell: acquire, push into the window and reconstruct once the window
  /// is full. Returns nothing while paused or warming up.
  std::optional<Frame> step() {
    if (state_.paused) return std::nullopt;
    CountRecord rec = acquire_record();
    window_.push_back(rec);
    while (window_.size() > static_cast<std::size_t>(state_.window_m)) window_.pop_front();
    if (window_.size() < static_cast<std::size_t>(state_.window_m)) return std::nullopt;
    return make_frame();
  }

 private:
  static std::optional<std::string> validate_source(const SourceState& s) {
    if (!std::isfinite(s.theta)) return "theta must be finite";
    if (!(s.car > 0.0)) return "car must be > 0";
    if (!(s.pair_rate > 0.0) || !std::isfinite(s.pair_rate)) return "pair rate must be finite and > 0";
    if (s.depolarization < 0.0 || s.depolarization > 1.0) return "depolarization must lie in [0, 1]";
    return std::nullopt;
  }

  Frame make_frame() {
    Frame f;
    f.seq = next_seq_++;
    f.t = clock_;
    f.window_m = state_.window_m;
    f.source = state_.source;
    f.target = state_.target;
    f.window.reserve(window_.size());
    for (const auto& r : window_) f.window.push_back(r.id);
    const std::vector<CountRecord> records(window_.begin(), window_.end());
    const auto start = std::chrono::steady_clock::now();
    try {
      const ReconstructionReport rep = lls_reconstruct(ideal_, records, config_.reconstruction);
      f.rho = rep.rho;
      if (rep.clamped_counts) f.flags.emplace_back(flag::clamped_counts);
      last_ = rep.rho;
    } catch (const RankDeficientError&) {
      carry_forward(f);
    } catch (const DegenerateDataError&) {
      carry_forward(f);
    }
    f.solve_time = detail::seconds_since(start);
    f.stokes = stokes_from_density(f.rho);
    f.fidelity = fidelity(f.rho, target_state(state_.target, state_.source));
    f.purity = purity(f.rho);
    f.concurrence = concurrence(f.rho);
    f.emit_time = detail::seconds_since(start_);
    return f;
  }

  void carry_forward(Frame& f) {
    f.flags.emplace_back(flag::carried_forward);
    if (last_) {
      f.rho = *last_;
    } else {
      f.rho = DensityMatrix::maximally_mixed();
      f.flags.emplace_back(flag::no_estimate);
    }
  }

  EngineConfig config_;
  MeasurementMatrix ideal_;
  std::vector<MeasurementSetting> actual_;
  ControlState state_;
  std::deque<CountRecord> window_;
  std::optional<DensityMatrix> last_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_record_ = 0;
  double clock_ = 0.0;
  std::vector<std::size_t> order_;
  std::uint64_t order_cycle_ = 0;
  std::chrono::steady_clock::time_point start_;
};

/// A command together with the record index at whose dwell boundary it applies.
struct ScheduledCommand {
  std::uint64_t record = 0;
  Command command;

  friend bool operator==(const ScheduledCommand&, const ScheduledCommand&) = default;
};

struct StreamResult {
  std::vector<Frame> frames;
  std::vector<Ack> acks;
};

/// Fast, deterministic run over `records` dwell periods. Commands must be
/// sorted by record index. A paused engine keeps applying later commands at
/// the same boundary, so a pause without a matching resume ends the run.
inline StreamResult run_stream(const EngineConfig& config, const SourceState& source,
                               const std::vector<ScheduledCommand>& commands, std::uint64_t records) {
  PolarimeterEngine engine(config, source);
  StreamResult out;
  std::size_t next = 0;
  while (engine.next_record() < records) {
    while (next < commands.size() && commands[next].record <= engine.next_record())
      out.acks.push_back(engine.apply(commands[next++].command));
    if (engine.paused()) {
      // the acquisition clock is frozen, so the next command lands on this boundary too
      if (next == commands.size()) break;
      out.acks.push_back(engine.apply(commands[next++].command));
      continue;
    }
    if (auto f = engine.step()) out.frames.push_back(std::move(*f));
  }
  return out;
}

// ---- realtime runner -------------------------------------------------------

/// Bounded frame queue for one consumer. When full, the oldest frame is
/// dropped, so what remains stays in order.
template <class T>
class Mailbox {
 public:
  explicit Mailbox(std::size_t capacity = 64) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() == capacity_) {
        queue_.pop_front();
        ++dropped_;
      }
      queue_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  std::optional<T> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
    T v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    T v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> queue_;
  std::uint64_t dropped_ = 0;
};

/// Owns a PolarimeterEngine on its own thread. Commands are queued from any
/// thread and applied at the next dwell boundary; frames go to subscriber
/// callbacks, which run on the loop thread and must not block.
class StreamRunner {
 public:
  using FramePtr = std::shared_ptr<const Frame>;
  using FrameCallback = std::function<void(const FramePtr&)>;
  using AckCallback = std::function<void(const Ack&)>;
  /// Observes every applied command with the record index of its boundary (capture).
  using CommandObserver = std::function<void(const ScheduledCommand&, const Ack&)>;

  explicit StreamRunner(EngineConfig config, SourceState source = {}) : engine_(std::move(config), source) {}
  ~StreamRunner() { stop(); }

  StreamRunner(const StreamRunner&) = delete;
  StreamRunner& operator=(const StreamRunner&) = delete;

  void start() {
    std::lock_guard lock(mutex_);
    if (thread_.joinable()) return;
    stopping_ = false;
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  /// Malformed commands are answered immediately; valid ones at the next dwell boundary.
  void submit(Command c, AckCallback reply = {}) {
    if (auto err = validate_command(c)) {
      if (reply) reply({c.req_id, std::nullopt, err});
      return;
    }
    {
      std::lock_guard lock(mutex_);
      pending_.push_back({std::move(c), std::move(reply)});
    }
    cv_.notify_all();
  }

  std::uint64_t subscribe(FrameCallback cb) {
    std::lock_guard lock(subscribers_mutex_);
    const std::uint64_t id = next_subscriber_++;
    subscribers_[id] = std::move(cb);
    return id;
  }

  void unsubscribe(std::uint64_t id) {
    std::lock_guard lock(subscribers_mutex_);
    subscribers_.erase(id);
  }

  void observe_commands(CommandObserver observer) {
    std::lock_guard lock(mutex_);
    observer_ = std::move(observer);
  }

  /// Commands injected at fixed record indices, as if submitted then (replay).
  void schedule(std::vector<ScheduledCommand> commands) {
    std::lock_guard lock(mutex_);
    scheduled_ = std::move(commands);
    next_scheduled_ = 0;
  }

  /// Stops after this many records (0 = run until stopped).
  void set_record_limit(std::uint64_t n) {
    std::lock_guard lock(mutex_);
    record_limit_ = n;
  }

  bool finished() const { return finished_.load(); }
  std::uint64_t records_acquired() {
    std::lock_guard lock(mutex_);
    return engine_.next_record();
  }
  std::uint64_t frames_emitted() const { return frames_emitted_.load(); }
  const EngineConfig& config() const { return engine_.config(); }

  /// Snapshot of the control state, taken under the loop lock.
  ControlState control_state() {
    std::lock_guard lock(mutex_);
    return engine_.state();
  }

 private:
  struct Pending {
    Command command;
    AckCallback reply;
  };

  // Applies queued and scheduled commands. Called with mutex_ held.
  void apply_pending() {
    const std::uint64_t k = engine_.next_record();
    while (next_scheduled_ < scheduled_.size() && scheduled_[next_scheduled_].record <= k) {
      const Command& c = scheduled_[next_scheduled_++].command;
      const Ack ack = engine_.apply(c);
      if (observer_) observer_({k, c}, ack);
    }
    for (auto& p : pending_) {
      const Ack ack = engine_.apply(p.command);
      if (observer_) observer_({k, p.command}, ack);
      if (p.reply) p.reply(ack);
    }
    pending_.clear();
  }

  void broadcast(Frame f) {
    const auto shared = std::make_shared<const Frame>(std::move(f));
    std::lock_guard lock(subscribers_mutex_);
    for (auto& [id, cb] : subscribers_) cb(shared);
    ++frames_emitted_;
  }

  void loop() {
    using clock = std::chrono::steady_clock;
    const bool realtime = engine_.config().pacing == Pacing::realtime;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(engine_.config().frame_period()));
    auto deadline = clock::now();
    std::unique_lock lock(mutex_);
    while (!stopping_) {
      apply_pending();
      if (record_limit_ && engine_.next_record() >= record_limit_) break;
      if (engine_.paused()) {
        if (next_scheduled_ < scheduled_.size()) {
          const Command& c = scheduled_[next_scheduled_++].command;
          const Ack ack = engine_.apply(c);
          if (observer_) observer_({engine_.next_record(), c}, ack);
          continue;
        }
        cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
        deadline = clock::now();
        continue;
      }
      if (realtime) {
        deadline += period;
        // Commands arriving during the dwell wait for the next boundary.
        cv_.wait_until(lock, deadline, [&] { return stopping_; });
        if (stopping_) break;
        // after a stall, resume the cadence from now instead of bursting
        if (clock::now() > deadline + period) deadline = clock::now();
      }
      std::optional<Frame> f = engine_.step();
      if (f) {
        lock.unlock();
        broadcast(std::move(*f));
        lock.lock();
      }
    }
    finished_ = true;
  }

  PolarimeterEngine engine_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Pending> pending_;
  std::vector<ScheduledCommand> scheduled_;
  std::size_t next_scheduled_ = 0;
  CommandObserver observer_;
  std::uint64_t record_limit_ = 0;
  bool stopping_ = false;
  std::atomic<bool> finished_{false};
  std::atomic<std::uint64_t> frames_emitted_{0};

  std::mutex subscribers_mutex_;
  std::map<std::uint64_t, FrameCallback> subscribers_;
  std::uint64_t next_subscriber_ = 0;

  std::thread thread_;
};

}  // namespace polarimeter
