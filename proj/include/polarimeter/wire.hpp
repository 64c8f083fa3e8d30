#pragma once

// JSON wire messages (schema v1) and session capture files. The layout is
// documented in docs/wire-protocol.md; keep the two in step.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarimeter/config.hpp"
#include "polarimeter/engine.hpp"
#include "polarimeter/error.hpp"

namespace polarimeter::wire {

using nlohmann::json;

inline constexpr int kVersion = 1;
inline constexpr const char* kSchema = "polarimeter.wire/1";

// ---- frames -----------------------------------------------------------------

/// rho as 32 reals: row-major, each entry as (re, im).
inline json rho_to_json(const Matrix4c& m) {
  json a = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      a.push_back(m(r, c).real());
      a.push_back(m(r, c).imag());
    }
  return a;
}

inline Matrix4c rho_from_json(const json& a) {
  if (!a.is_array() || a.size() != 32) throw ParseError("rho must be an array of 32 numbers");
  Matrix4c m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const json& re = a[static_cast<std::size_t>(8 * r + 2 * c)];
      const json& im = a[static_cast<std::size_t>(8 * r + 2 * c + 1)];
      if (!re.is_number() || !im.is_number()) throw ParseError("rho entries must be numbers");
      m(r, c) = Complex{re.get<double>(), im.get<double>()};
    }
  return m;
}

inline json frame_to_json(const Frame& f, std::uint64_t dropped = 0) {
  json stokes = json::array();
  for (double s : f.stokes.s) stokes.push_back(s);
  json flags = f.flags;
  if (dropped > 0) flags.push_back("dropped:" + std::to_string(dropped));
  return {{"v", kVersion},
          {"type", "frame"},
          {"seq", f.seq},
          {"t", f.t},
          {"rho", rho_to_json(f.rho.matrix())},
          {"stokes", stokes},
          {"fidelity", f.fidelity},
          {"purity", f.purity},
          {"concurrence", f.concurrence},
          {"window_m", f.window_m},
          {"window", f.window},
          {"solve_ms", f.solve_time * 1e3},
          {"emit", f.emit_time},
          {"target", f.target},
          {"source", to_json(f.source)},
          {"flags", flags}};
}

inline std::string frame_to_string(const Frame& f, std::uint64_t dropped = 0) {
  return frame_to_json(f, dropped).dump();
}

inline void check_version(const json& j, const char* type) {
  if (!j.is_object()) throw ParseError(std::string(type) + " message must be a JSON object");
  if (!j.contains("v") || j.at("v") != kVersion) throw ParseError(std::string(type) + " message has no v=1 field");
  if (!j.contains("type") || j.at("type") != type) throw ParseError(std::string("expected type '") + type + "'");
}

/// Strict decode. The density matrix is validated, so a decoded frame always
/// holds a legal state.
inline Frame frame_from_json(const json& j) {
  check_version(j, "frame");
  try {
    Frame f;
    f.seq = j.at("seq").get<std::uint64_t>();
    f.t = j.at("t").get<double>();
    try {
      f.rho = DensityMatrix::from_matrix(rho_from_json(j.at("rho")));
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string("frame rho is not a density matrix: ") + e.what());
    }
    const json& s = j.at("stokes");
    if (!s.is_array() || s.size() != 16) throw ParseError("stokes must be an array of 16 numbers");
    for (std::size_t k = 0; k < 16; ++k) f.stokes.s[k] = s[k].get<double>();
    f.fidelity = j.at("fidelity").get<double>();
    f.purity = j.at("purity").get<double>();
    f.concurrence = j.at("concurrence").get<double>();
    f.window_m = j.at("window_m").get<int>();
    f.window = j.at("window").get<std::vector<std::uint64_t>>();
    f.solve_time = j.at("solve_ms").get<double>() / 1e3;
    f.emit_time = j.at("emit").get<double>();
    f.target = j.at("target").get<std::string>();
    f.source = source_from_json(j.at("source"));
    for (const auto& flag : j.at("flags")) {
      const std::string v = flag.get<std::string>();
      if (v.rfind("dropped:", 0) != 0) f.flags.push_back(v);
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed frame: ") + e.what());
  }
}

/// Frame payload with the wall-clock fields (emit, solve_ms) and the
/// per-client drop counter removed; equal for a capture and its replay.
inline json canonical_payload(json frame) {
  frame.erase("emit");
  frame.erase("solve_ms");
  json flags = json::array();
  for (const auto& f : frame.value("flags", json::array()))
    if (!(f.is_string() && f.get<std::string>().rfind("dropped:", 0) == 0)) flags.push_back(f);
  frame["flags"] = flags;
  return frame;
}

// ---- commands and acks ------------------------------------------------------

inline json command_to_json(const Command& c) {
  json j{{"cmd", to_string(c.kind)}};
  if (!c.value.is_null()) j["value"] = c.value;
  if (!c.req_id.is_null()) j["req_id"] = c.req_id;
  return j;
}

struct DecodedCommand {
  std::optional<Command> command;
  json req_id;  ///< recovered even when the command itself is malformed
  std::string error;
};

/// Lenient about transport (any JSON object with `cmd`), strict about content.
inline DecodedCommand command_from_text(const std::string& text) {
  DecodedCommand out;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    out.error = std::string("not valid JSON: ") + e.what();
    return out;
  }
  if (!j.is_object()) {
    out.error = "command must be a JSON object";
    return out;
  }
  if (j.contains("req_id")) {
    if (j.at("req_id").is_structured()) {
      out.error = "req_id must be a string or number";
      return out;
    }
    out.req_id = j.at("req_id");
  }
  if (j.contains("v") && j.at("v") != kVersion) {
    out.error = "unsupported schema version " + j.at("v").dump();
    return out;
  }
  if (!j.contains("cmd") || !j.at("cmd").is_string()) {
    out.error = "missing string field 'cmd'";
    return out;
  }
  const auto kind = parse_command_kind(j.at("cmd").get<std::string>());
  if (!kind) {
    out.error = "unknown command '" + j.at("cmd").get<std::string>() + "'";
    return out;
  }
  Command c{*kind, j.value("value", json()), out.req_id};
  if (auto err = validate_command(c)) {
    out.error = *err;
    return out;
  }
  out.command = std::move(c);
  return out;
}

inline json ack_to_json(const Ack& a) {
  json j{{"v", kVersion}, {"type", "ack"}, {"req_id", a.req_id}};
  if (a.applied_seq) j["applied_seq"] = *a.applied_seq;
  if (a.error) j["error"] = *a.error;
  return j;
}

inline Ack ack_from_json(const json& j) {
  check_version(j, "ack");
  Ack a;
  a.req_id = j.value("req_id", json());
  if (j.contains("applied_seq")) a.applied_seq = j.at("applied_seq").get<std::uint64_t>();
  if (j.contains("error")) a.error = j.at("error").get<std::string>();
  if (a.applied_seq.has_value() == a.error.has_value())
    throw ParseError("ack must carry exactly one of applied_seq and error");
  return a;
}

// ---- hello ------------------------------------------------------------------

inline json settings_to_json(const std::vector<MeasurementSetting>& settings) {
  json a = json::array();
  for (const auto& s : settings)
    a.push_back({{"id", s.id},
                 {"bases", {label(s.bases[0]), label(s.bases[1])}},
                 {"outcomes", s.labels}});
  return a;
}

inline json hello(const EngineConfig& config, const ControlState& state, const std::string& mode = "live") {
  json control{{"window_m", state.window_m}, {"paused", state.paused}, {"target", state.target}};
  return {{"v", kVersion},
          {"type", "hello"},
          {"schema", kSchema},
          {"mode", mode},
          {"settings", settings_to_json(canonical_settings(9, config.timing.tau_m))},
          {"config", to_json(config)},
          {"source", to_json(state.source)},
          {"control", control},
          {"commands", [] {
             json names = json::array();
             for (const auto& [kind, name] : command_names()) names.push_back(name);
             return names;
           }()},
          {"targets", target_names()}};
}

// ---- capture files ----------------------------------------------------------

/// JSON lines: a header, then commands (with the record index of the dwell
/// boundary where they applied) and frames in emission order.
struct Capture {
  EngineConfig config;
  SourceState source;
  std::vector<ScheduledCommand> commands;
  std::vector<json> frames;  ///< as sent on the wire
  std::uint64_t records = 0;  ///< records acquired during the session, if known
};

inline json capture_header(const EngineConfig& config, const SourceState& source) {
  return {{"v", kVersion}, {"type", "capture"}, {"schema", kSchema}, {"config", to_json(config)},
          {"source", to_json(source)}};
}

inline json capture_command(const ScheduledCommand& c, const Ack& ack) {
  return {{"v", kVersion}, {"type", "command"}, {"record", c.record}, {"command", command_to_json(c.command)},
          {"ack", ack_to_json(ack)}};
}

inline json capture_footer(std::uint64_t records) {
  return {{"v", kVersion}, {"type", "end"}, {"records", records}};
}

inline Capture read_capture(std::istream& in) {
  Capture cap;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (!header) {
        if (type != "capture") throw ParseError("first record must be the capture header");
        if (j.at("v") != kVersion) throw ParseError("unsupported capture version");
        cap.config = engine_from_json(j.at("config"));
        cap.source = source_from_json(j.at("source"));
        header = true;
      } else if (type == "command") {
        const DecodedCommand d = command_from_text(j.at("command").dump());
        if (!d.command) throw ParseError(d.error);
        cap.commands.push_back({j.at("record").get<std::uint64_t>(), *d.command});
      } else if (type == "frame") {
        cap.frames.push_back(j);
      } else if (type == "end") {
        cap.records = j.at("records").get<std::uint64_t>();
      } else {
        throw ParseError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError("capture line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError("capture line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw ParseError("capture file is empty");
  return cap;
}

struct ReplayCheck {
  std::size_t compared = 0;
  std::optional<std::uint64_t> first_mismatch_seq;
  std::string detail;
  bool ok() const { return !first_mismatch_seq.has_value() && detail.empty(); }
};

/// Regenerates the session in fast pacing and compares every captured frame
/// payload, minus wall-clock fields.
inline ReplayCheck verify_capture(const Capture& cap) {
  ReplayCheck check;
  std::uint64_t records = cap.records;
  if (records == 0 && !cap.frames.empty()) {
    const json& last = cap.frames.back();
    records = last.at("window").back().get<std::uint64_t>() + 1;
  }
  EngineConfig config = cap.config;
  config.pacing = Pacing::fast;
  const StreamResult result = run_stream(config, cap.source, cap.commands, records);
  if (result.frames.size() < cap.frames.size()) {
    check.detail = "replay produced " + std::to_string(result.frames.size()) + " frames, capture holds " +
                   std::to_string(cap.frames.size());
  }
  const std::size_t n = std::min(result.frames.size(), cap.frames.size());
  for (std::size_t k = 0; k < n; ++k) {
    const json a = canonical_payload(cap.frames[k]);
    const json b = canonical_payload(frame_to_json(result.frames[k]));
    if (a.dump() != b.dump()) {
      check.first_mismatch_seq = cap.frames[k].value("seq", std::uint64_t{0});
      if (check.detail.empty()) check.detail = "frame payload differs";
      break;
    }
    ++check.compared;
  }
  return check;
}

}  // namespace polarimeter::wire
