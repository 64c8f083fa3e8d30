#include "polarimeter/wire.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "polarimeter/config.hpp"

using namespace polarimeter;
using nlohmann::json;

namespace {

Frame random_frame(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::uint64_t> id(0, 1ULL << 40);
  Frame f;
  f.seq = id(rng);
  f.t = 100.0 * std::abs(u(rng));
  f.rho = random_density_matrix(rng, 1 + static_cast<int>(id(rng) % 4));
  for (double& s : f.stokes.s) s = u(rng);
  f.fidelity = std::abs(u(rng));
  f.purity = std::abs(u(rng));
  f.concurrence = std::abs(u(rng));
  f.window_m = 9 * (1 + static_cast<int>(id(rng) % 8));
  for (int k = 0; k < f.window_m; ++k) f.window.push_back(id(rng));
  f.solve_time = 1e-3 * std::abs(u(rng));
  f.emit_time = 1e3 * std::abs(u(rng));
  f.source = {u(rng) * 3.0, id(rng) % 7 == 0 ? std::numeric_limits<double>::infinity() : 0.5 + std::abs(u(rng)),
              1e6 * std::abs(u(rng)) + 1.0, std::abs(u(rng))};
  f.target = target_names()[id(rng) % target_names().size()];
  if (id(rng) % 3 == 0) f.flags.push_back(flag::carried_forward);
  if (id(rng) % 5 == 0) f.flags.push_back(flag::clamped_counts);
  return f;
}

Command random_command(Rng& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::uniform_int_distribution<int> k(0, 7);
  const auto kind = static_cast<CommandKind>(k(rng));
  json value;
  switch (kind) {
    case CommandKind::set_theta: value = 3.0 * u(rng); break;
    case CommandKind::set_car: value = 10.0 * u(rng); break;
    case CommandKind::set_rate: value = 1e6 * u(rng); break;
    case CommandKind::set_depolarization: value = u(rng); break;
    case CommandKind::set_window: value = 9 * (1 + k(rng)); break;
    case CommandKind::set_target: value = target_names()[static_cast<std::size_t>(k(rng)) % 7]; break;
    default: break;
  }
  json req = k(rng) % 2 ? json(std::to_string(k(rng)) + "-req") : json(k(rng));
  return {kind, value, req};
}

}  // namespace

TEST(wire, frame_round_trip_property) {
  Rng rng(1);
  for (int n = 0; n < 10000; ++n) {
    const Frame f = random_frame(rng);
    const std::string text = wire::frame_to_string(f);
    const Frame back = wire::frame_from_json(json::parse(text));
    ASSERT_EQ(back.rho.matrix(), f.rho.matrix());
    ASSERT_EQ(back.stokes, f.stokes);
    ASSERT_EQ(back.window, f.window);
    ASSERT_EQ(back.source, f.source);
    ASSERT_EQ(back.flags, f.flags);
    ASSERT_EQ(back.seq, f.seq);
    ASSERT_EQ(back.t, f.t);
    ASSERT_EQ(back.emit_time, f.emit_time);
    ASSERT_EQ(wire::frame_to_string(back), text);
  }
}

TEST(wire, command_round_trip_property) {
  Rng rng(2);
  for (int n = 0; n < 10000; ++n) {
    const Command c = random_command(rng);
    const auto d = wire::command_from_text(wire::command_to_json(c).dump());
    ASSERT_TRUE(d.command) << d.error;
    ASSERT_EQ(*d.command, c);
    const Ack ack = n % 2 ? Ack{c.req_id, static_cast<std::uint64_t>(n), std::nullopt}
                          : Ack{c.req_id, std::nullopt, "reason " + std::to_string(n)};
    ASSERT_EQ(wire::ack_from_json(json::parse(wire::ack_to_json(ack).dump())), ack);
  }
}

TEST(wire, frame_layout) {
  Frame f;
  f.rho = density_from_pure(PureState2Q::phi_plus());
  const json j = wire::frame_to_json(f, 3);
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["type"], "frame");
  ASSERT_EQ(j["rho"].size(), 32u);
  EXPECT_NEAR(j["rho"][0].get<double>(), 0.5, 1e-15);   // Re rho(0,0)
  EXPECT_NEAR(j["rho"][6].get<double>(), 0.5, 1e-15);   // Re rho(0,3)
  EXPECT_NEAR(j["rho"][30].get<double>(), 0.5, 1e-15);  // Re rho(3,3)
  EXPECT_EQ(j["stokes"].size(), 16u);
  for (const char* key : {"seq", "t", "fidelity", "purity", "concurrence", "window_m", "solve_ms", "source", "flags"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["flags"].back(), "dropped:3");
  EXPECT_EQ(j["source"]["car"], 3.0);
}

TEST(wire, rejects_illegal_rho) {
  Frame f;
  json j = wire::frame_to_json(f);
  j["rho"][0] = 2.0;  // trace no longer 1
  EXPECT_THROW(wire::frame_from_json(j), ParseError);
  j = wire::frame_to_json(f);
  j["rho"][3] = 0.1;  // Im rho(0,1) without its conjugate partner
  EXPECT_THROW(wire::frame_from_json(j), ParseError);
  j = wire::frame_to_json(f);
  j["rho"].erase(0);
  EXPECT_THROW(wire::frame_from_json(j), ParseError);
  j = wire::frame_to_json(f);
  j["v"] = 2;
  EXPECT_THROW(wire::frame_from_json(j), ParseError);
}

TEST(wire, malformed_commands_keep_req_id) {
  auto d = wire::command_from_text(R"({"cmd":"set_window","value":7,"req_id":"abc"})");
  EXPECT_FALSE(d.command);
  EXPECT_EQ(d.req_id, "abc");
  EXPECT_NE(d.error.find("multiple of 9"), std::string::npos);

  d = wire::command_from_text("{not json");
  EXPECT_FALSE(d.command);
  EXPECT_TRUE(d.req_id.is_null());

  d = wire::command_from_text(R"({"cmd":"fly","req_id":4})");
  EXPECT_FALSE(d.command);
  EXPECT_EQ(d.req_id, 4);

  d = wire::command_from_text(R"([1,2])");
  EXPECT_FALSE(d.command);
  d = wire::command_from_text(R"({"cmd":"pause","v":9})");
  EXPECT_FALSE(d.command);
  d = wire::command_from_text(R"({"cmd":"resume"})");
  ASSERT_TRUE(d.command);
  EXPECT_EQ(d.command->kind, CommandKind::resume);
}

TEST(wire, hello_lists_settings_and_config) {
  EngineConfig config;
  config.seed = 42;
  const json h = wire::hello(config, ControlState{});
  EXPECT_EQ(h["schema"], wire::kSchema);
  ASSERT_EQ(h["settings"].size(), 9u);
  EXPECT_EQ(h["settings"][1]["bases"], json({"HV", "DA"}));
  EXPECT_EQ(h["settings"][0]["outcomes"], json({"HH", "HV", "VH", "VV"}));
  EXPECT_EQ(h["config"]["seed"], 42);
  EXPECT_EQ(engine_from_json(h["config"]).seed, 42u);
}

TEST(wire, capture_replay_matches) {
  EngineConfig config;
  config.seed = 99;
  config.window_m = 9;
  const SourceState source{};
  const std::vector<ScheduledCommand> cmds{{20, {CommandKind::set_theta, 0.3927, 1}},
                                           {30, {CommandKind::set_window, 18, 2}},
                                           {55, {CommandKind::pause, nullptr, 3}},
                                           {55, {CommandKind::resume, nullptr, 4}}};
  const StreamResult run = run_stream(config, source, cmds, 80);

  std::stringstream file;
  file << wire::capture_header(config, source).dump() << '\n';
  std::size_t next = 0;
  for (std::size_t k = 0; k < run.frames.size(); ++k) {
    const std::uint64_t newest = run.frames[k].window.back();
    while (next < cmds.size() && cmds[next].record <= newest) {
      file << wire::capture_command(cmds[next], run.acks[next]).dump() << '\n';
      ++next;
    }
    file << wire::frame_to_string(run.frames[k], k % 4) << '\n';
  }
  file << wire::capture_footer(80).dump() << '\n';

  const std::string text = file.str();
  std::istringstream in(text);
  const wire::Capture cap = wire::read_capture(in);
  EXPECT_EQ(cap.commands, cmds);
  EXPECT_EQ(cap.records, 80u);
  const wire::ReplayCheck check = wire::verify_capture(cap);
  EXPECT_TRUE(check.ok()) << check.detail;
  EXPECT_EQ(check.compared, run.frames.size());

  // a tampered frame is caught
  wire::Capture bad = cap;
  bad.frames[5]["fidelity"] = 0.123;
  const wire::ReplayCheck caught = wire::verify_capture(bad);
  EXPECT_FALSE(caught.ok());
  EXPECT_EQ(caught.first_mismatch_seq, 5u);
}

TEST(wire, capture_parse_errors_name_the_line) {
  std::istringstream in("{\"v\":1,\"type\":\"frame\"}\n");
  EXPECT_THROW(wire::read_capture(in), ParseError);
  EngineConfig config;
  std::istringstream bad(wire::capture_header(config, {}).dump() + "\n{\"type\":\"mystery\"}\n");
  try {
    wire::read_capture(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(config, round_trip_covers_every_field) {
  AppConfig c;
  c.seed = 123;
  c.noise.car = 2.5;
  c.noise.gate_rate = 10.0;
  c.noise.systematic_angle_deg = 1.5;
  c.timing = TimingProfile::freespace();
  c.reconstruction.subtract_accidentals = false;
  c.reconstruction.ml.max_iterations = 77;
  c.engine.window_m = 45;
  c.engine.pacing = Pacing::realtime;
  c.engine.randomized_order = true;
  c.engine.target = "psi-";
  c.engine.noise.eta = 0.2;
  c.source = {0.3, std::numeric_limits<double>::infinity(), 5e5, 0.1};
  c.montecarlo.trials = 11;
  c.montecarlo.estimator = Method::ml;
  c.montecarlo.n_values = {100, 1000};
  c.serve.port = 9000;
  const json j = to_json(c);
  const AppConfig back = config_from_json(json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.engine.seed, 123u);
  EXPECT_TRUE(std::isinf(back.source.car));
  EXPECT_EQ(back.engine.window_m, 45);
}

TEST(config, rejects_unknown_keys_and_versions) {
  EXPECT_THROW(config_from_json(json{{"version", 1}, {"noise", {{"carr", 3}}}}), ParseError);
  EXPECT_THROW(config_from_json(json{{"version", 2}}), ParseError);
  EXPECT_THROW(config_from_json(json{{"seed", 2}}), ParseError);
  EXPECT_THROW(config_from_json(json{{"version", 1}, {"engine", {{"window_m", 10}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"version", 1}, {"noise", {{"car", "lots"}}}}), ParseError);
  const AppConfig minimal = config_from_json(json{{"version", 1}});
  EXPECT_EQ(minimal.engine.window_m, 36);
  const AppConfig preset = config_from_json(json{{"version", 1}, {"timing", {{"preset", "freespace"}}}});
  EXPECT_EQ(preset.timing.tau_s, 5.0);
}
