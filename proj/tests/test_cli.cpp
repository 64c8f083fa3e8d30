// Runs the built `polarimeter` binary end to end.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polarimeter/chart.hpp"
#include "polarimeter/counts_io.hpp"
#include "polarimeter/wire.hpp"

using namespace polarimeter;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = POLARIMETER_CLI;
const fs::path kData = POLARIMETER_TEST_DATA;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("polarimeter_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  CliRun run(const std::string& args) const {
    const fs::path out = dir_ / "stdout", err = dir_ / "stderr";
    const std::string cmd = kCli + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path dir_;
};

Matrix4c rho_of(const json& report) { return wire::rho_from_json(report.at("rho")); }

}  // namespace

TEST_F(Cli, golden_hh_reconstructs_exactly) {
  const CliRun r = run("tomo " + (kData / "hh_noiseless.counts").string() + " --target HH --out " +
                    path("hh.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(slurp(path("hh.json")));
  EXPECT_GE(report["fidelity"].get<double>(), 1.0 - 1e-9);
  // independent check on rho itself: <HH|rho|HH>
  EXPECT_NEAR(rho_of(report)(0, 0).real(), 1.0, 1e-9);
  EXPECT_FALSE(report.contains("solve_ms"));
  EXPECT_TRUE(fs::exists(path("hh.svg")));
  const std::string txt = slurp(path("hh.txt"));
  EXPECT_NE(txt.find("+1.000 ##########"), std::string::npos) << txt;
}

TEST_F(Cli, missing_setting_is_a_rank_error_naming_directions) {
  const CliRun r = run("tomo " + (kData / "missing_hv_da.counts").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("unconstrained Stokes directions"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("ZX"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("rank 15"), std::string::npos) << r.err;
}

TEST_F(Cli, ml_and_lls_reports_agree) {
  const std::string file = (kData / "phi_plus_2000.counts").string();
  ASSERT_EQ(run("tomo " + file + " --method ml --no-chart --out " + path("ml.json").string()).code, 0);
  ASSERT_EQ(run("tomo " + file + " --method lls --no-chart --out " + path("lls.json").string()).code, 0);
  const json ml = json::parse(slurp(path("ml.json")));
  const json lls = json::parse(slurp(path("lls.json")));
  EXPECT_EQ(ml["method"], "ml");
  EXPECT_TRUE(ml["converged"].get<bool>());
  EXPECT_GE(fidelity(rho_of(ml), rho_of(lls)), 0.99);
}

TEST_F(Cli, identical_flags_and_seed_give_identical_files) {
  // same file names in two directories, since chart titles carry the input name
  for (const char* round : {"a", "b"}) {
    const fs::path d = path(round);
    fs::create_directories(d);
    ASSERT_EQ(run("--seed 5 simulate-counts --state psi- --car 3 --systematic 2 --settings 36 --out " +
                  (d / "c").string())
                  .code,
              0);
    ASSERT_EQ(run("tomo " + (d / "c").string() + " --method ml --target psi- --out " + (d / "r.json").string()).code,
              0);
    ASSERT_EQ(run("--seed 5 --format csv montecarlo --n 300 3000 --trials 20 --estimator both --plot " +
                  (d / "p.svg").string() + " --out " + (d / "m.csv").string())
                  .code,
              0);
  }
  for (const char* name : {"c", "r.json", "r.svg", "r.txt", "m.csv", "p.svg"}) {
    const fs::path a = path("a") / name, b = path("b") / name;
    ASSERT_TRUE(fs::exists(a)) << a;
    EXPECT_EQ(slurp(a), slurp(b)) << name;
  }
  // a different seed changes the counts
  ASSERT_EQ(run("--seed 6 simulate-counts --state psi- --car 3 --systematic 2 --settings 36 --out " +
                path("c2").string())
                .code,
            0);
  EXPECT_NE(slurp(path("a") / "c"), slurp(path("c2")));
}

TEST_F(Cli, simulate_counts_file_options) {
  ASSERT_EQ(run("--seed 2 simulate-counts --state HH --noiseless --eta 1 --dwell 1 --rate 1000 --cycles 2 --out " +
                path("c").string())
                .code,
            0);
  std::ifstream in(path("c"));
  const CountFile f = read_count_file(in);
  ASSERT_EQ(f.records.size(), 18u);
  EXPECT_EQ(f.seed, 2u);
  EXPECT_EQ(f.records[0].counts[0], 1000.0);  // all pairs land in HH
  EXPECT_EQ(f.records[17].timestamp, 17.0);
  const CliRun bad = run("simulate-counts --state nope");
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, parse_errors_name_the_line) {
  std::ofstream(path("bad.counts")) << "# polarimeter-counts v1\n# settings: 0=HV/HV\n0,HV,HV,1,2,3\n";
  const CliRun r = run("tomo " + path("bad.counts").string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_EQ(run("tomo " + path("absent.counts").string()).code, 4);
}

TEST_F(Cli, montecarlo_usage_errors) {
  EXPECT_EQ(run("montecarlo --n").code, 2);
  EXPECT_EQ(run("montecarlo --trials 3").code, 2);  // neither --n nor --t
  EXPECT_EQ(run("montecarlo --n 100 --t 1").code, 2);
  EXPECT_EQ(run("montecarlo --n 0").code, 2);
  EXPECT_EQ(run("montecarlo --n 100 --estimator best").code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST_F(Cli, single_trial_reports_missing_std) {
  CliRun r = run("--format csv montecarlo --n 1000 --trials 1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find(",NA,1,lls"), std::string::npos) << r.out;
  r = run("montecarlo --n 1000 --trials 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j["points"][0]["std_fidelity"].is_null());
  EXPECT_EQ(j["points"][0]["trials"], 1);
}

TEST_F(Cli, infeasible_time_is_a_named_error) {
  const CliRun r = run("montecarlo --t 10 --profiles freespace --trials 2");
  EXPECT_EQ(r.code, 6);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("freespace"), std::string::npos) << r.err;
  // mixed profiles: the freespace point is marked, not fatal
  const CliRun ok = run("--format csv montecarlo --t 10 60 --trials 2");
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("freespace,10,0,0,NA,NA,0,lls"), std::string::npos) << ok.out;
  EXPECT_NE(ok.out.find("polarimeter,10,"), std::string::npos);
}

TEST_F(Cli, checkpoints_preset_rows) {
  const CliRun r = run("--seed 4 montecarlo --preset checkpoints --trials 40");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  ASSERT_EQ(j["points"].size(), 3u);
  EXPECT_EQ(j["car"], 3.0);
  EXPECT_EQ(j["points"][0]["n"], 4000.0);
  EXPECT_EQ(j["points"][2]["n"], 1e7);
  EXPECT_GE(j["points"][2]["mean_fidelity"].get<double>(), 0.999);
}

TEST_F(Cli, config_file_supplies_defaults) {
  std::ofstream(path("cfg.json")) << R"({"version":1,"seed":77,"noise":{"car":"inf","eta":1.0,"pair_rate":500},
                                       "timing":{"tau_m":1.0}})";
  const CliRun r = run("--config " + path("cfg.json").string() + " simulate-counts --state HH --noiseless");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("# seed: 77"), std::string::npos);
  EXPECT_NE(r.out.find("0,HV,HV,500,0,0,0,1,"), std::string::npos) << r.out;
  // flags win over the file
  const CliRun s = run("--config " + path("cfg.json").string() + " --seed 78 simulate-counts --noiseless");
  EXPECT_NE(s.out.find("# seed: 78"), std::string::npos);
  std::ofstream(path("bad.json")) << R"({"version":1,"noise":{"carr":3}})";
  EXPECT_EQ(run("--config " + path("bad.json").string() + " simulate-counts").code, 4);
}

TEST_F(Cli, replay_verifies_a_capture) {
  EngineConfig config;
  config.seed = 8;
  config.window_m = 9;
  const std::vector<ScheduledCommand> cmds{{15, {CommandKind::set_theta, 0.2, "a"}}};
  const StreamResult run_a = run_stream(config, {}, cmds, 40);
  std::ofstream cap(path("cap.jsonl"));
  cap << wire::capture_header(config, {}).dump() << '\n';
  cap << wire::capture_command(cmds[0], run_a.acks[0]).dump() << '\n';
  for (const Frame& f : run_a.frames) cap << wire::frame_to_string(f) << '\n';
  cap << wire::capture_footer(40).dump() << '\n';
  cap.close();

  CliRun r = run("replay " + path("cap.jsonl").string() + " --frames-out " + path("frames.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(r.out);
  EXPECT_TRUE(result["match"].get<bool>());
  EXPECT_EQ(result["compared"], run_a.frames.size());
  std::ifstream frames(path("frames.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(frames, line)) {
    EXPECT_EQ(line, wire::canonical_payload(wire::frame_to_json(run_a.frames[n])).dump());
    ++n;
  }
  EXPECT_EQ(n, run_a.frames.size());

  // flip one fidelity digit
  std::string text = slurp(path("cap.jsonl"));
  const auto at = text.rfind("\"fidelity\":", text.find("\"seq\":3,"));  // keys are sorted
  text[at + 13] = text[at + 13] == '1' ? '2' : '1';
  std::ofstream(path("cap.jsonl"), std::ios::trunc) << text;
  r = run("replay " + path("cap.jsonl").string());
  EXPECT_EQ(r.code, 5) << r.err;
  EXPECT_EQ(json::parse(r.out)["first_mismatch_seq"], 3);
}

TEST_F(Cli, serve_runs_for_a_fixed_duration) {
  const CliRun r = run("serve --port 0 --duration 0.6 --window 9 --capture " + path("cap.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("ws://127.0.0.1:"), std::string::npos) << r.err;
  std::ifstream in(path("cap.jsonl"));
  const wire::Capture cap = wire::read_capture(in);
  EXPECT_GT(cap.records, 0u);
  EXPECT_TRUE(wire::verify_capture(cap).ok());
}

// ---- charts ----------------------------------------------------------------

TEST(chart, ascii_hh_has_one_full_bar) {
  const std::string txt = chart::ascii_density(density_from_pure(PureState2Q::basis(0)).matrix(), 10);
  std::size_t bars = 0;
  for (std::size_t p = txt.find('#'); p != std::string::npos; p = txt.find('#', p + 1)) ++bars;
  EXPECT_EQ(bars, 10u);
  EXPECT_EQ(txt.find('='), std::string::npos);
}

TEST(chart, ascii_phi_plus_has_four_half_bars) {
  const std::string txt = chart::ascii_density(density_from_pure(PureState2Q::phi_plus()).matrix(), 10);
  std::size_t count = 0;
  for (std::size_t p = txt.find("+0.500 #####"); p != std::string::npos; p = txt.find("+0.500 #####", p + 1)) ++count;
  EXPECT_EQ(count, 4u);
}

TEST(chart, ascii_negative_entries_use_a_different_glyph) {
  Matrix4c m = density_from_pure(PureState2Q::phi_plus()).matrix();
  m(0, 3) = m(3, 0) = -0.5;
  const std::string txt = chart::ascii_density(m, 10);
  EXPECT_NE(txt.find("-0.500 ====="), std::string::npos);
}

TEST(chart, svg_density_has_a_bar_per_entry) {
  const std::string svg = chart::svg_density(density_from_pure(PureState2Q::phi_plus()).matrix(), "a<b");
  std::size_t titles = 0;
  for (std::size_t p = svg.find("<title>"); p != std::string::npos; p = svg.find("<title>", p + 1)) ++titles;
  EXPECT_EQ(titles, 32u);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_NE(svg.find("HH,VV: +0.5000"), std::string::npos);
  EXPECT_EQ(svg.rfind("</svg>"), svg.size() - 7);
}

TEST(chart, svg_lines_handles_empty_and_log_axes) {
  EXPECT_NE(chart::svg_lines({}, "x", "y", true).find("</svg>"), std::string::npos);
  const std::string svg =
      chart::svg_lines({{"lls", {100, 1000, 10000}, {0.8, 0.9, 0.95}, {0.01, 0.01, 0.005}}}, "N", "F", true);
  std::size_t circles = 0;
  for (std::size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 3u);
  EXPECT_NE(svg.find(">lls<"), std::string::npos);
}
