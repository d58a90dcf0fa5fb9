#include <gtest/gtest.h>
#include <sys/wait.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "tesim/trace.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(TESIM_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::path(::testing::TempDir()) /
          ("tesim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string path(const std::string& name) { return (dir / name).string(); }

  fs::path dir;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_F(Cli, ValidateExitCodes) {
  const auto good = write("good.cfg", "[stim]\nmode = tdcs\nintensity_mA = 2.0\ndose_s = 600\n");
  CliRun r = run_cli("validate " + good);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("warm-up 120.000 s"), std::string::npos) << r.out;

  const auto high = write("high.cfg", "[stim]\nmode = tdcs\nintensity_mA = 4.1\ndose_s = 600\n");
  r = run_cli("validate " + high);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("4.0 mA"), std::string::npos) << r.out;

  const auto typo = write("typo.cfg", "[stim]\nmode = tdcs\nintensity_mA = 1\ndose = 600\n");
  r = run_cli("validate " + typo);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("line 4"), std::string::npos) << r.out;

  r = run_cli("validate " + path("missing.cfg"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("cannot open"), std::string::npos) << r.out;

  EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST_F(Cli, RenderTdcsPlateauMatchesStageModel) {
  const auto cfg = write("t.cfg", "[stim]\nmode = tdcs\nintensity_mA = 2.0\ndose_s = 10\n");
  CliRun r = run_cli("render " + cfg + " --out " + path("t.csv") + " --sample-rate 10");
  ASSERT_EQ(r.code, 0) << r.out;
  const tesim::Trace t = tesim::read_trace_csv(path("t.csv"));
  EXPECT_EQ(t.size(), 2500u);
  EXPECT_DOUBLE_EQ(t.commanded_mA[1250], 2.0);
  EXPECT_NEAR(t.actual_mA[1250], 1.8432, 1e-12);
}

TEST_F(Cli, RenderIsDeterministic) {
  const auto cfg = write("p.cfg",
                         "[stim]\nmode = tpcs\nintensity_mA = 1.0\nramp_rate_mA_per_min = 4\n"
                         "dose_s = 2\nfreq_lo_Hz = 5\nfreq_hi_Hz = 40\nduty_pct = 30\n");
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("a.csv") + " --seed 5 --sample-rate 1000").code, 0);
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("b.csv") + " --seed 5 --sample-rate 1000").code, 0);
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("c.csv") + " --seed 6 --sample-rate 1000").code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
  EXPECT_NE(slurp(path("a.csv")).find("#seed=5"), std::string::npos);
}

TEST_F(Cli, RenderRejectsUndersampling) {
  const auto cfg = write("k.cfg",
                         "[stim]\nmode = ces\nintensity_mA = 1.0\ndose_s = 1\n"
                         "freq_lo_Hz = 1000\nfreq_hi_Hz = 1000\n");
  CliRun r = run_cli("render " + cfg + " -o " + path("k.csv") + " --sample-rate 1500");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("below twice"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(path("k.csv")));
}

TEST_F(Cli, RenderIoError) {
  const auto cfg = write("t.cfg", "[stim]\nmode = tdcs\nintensity_mA = 0.1\ndose_s = 1\n");
  EXPECT_EQ(run_cli("render " + cfg + " -o /nonexistent/dir/x.csv --sample-rate 10").code, 3);
}

TEST_F(Cli, AnalyzeDutyReport) {
  const auto cfg = write("d.cfg",
                         "[stim]\nmode = ces\nintensity_mA = 1.0\nramp_rate_mA_per_min = 4\n"
                         "dose_s = 4\nfreq_lo_Hz = 20\nfreq_hi_Hz = 20\nduty_pct = 50\n");
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("d.csv") + " --sample-rate 2000").code, 0);
  CliRun r = run_cli("analyze " + path("d.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("median 50.000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("median 20.000"), std::string::npos) << r.out;
}

TEST_F(Cli, AnalyzeNoiseBand) {
  const auto cfg = write("n.cfg",
                         "[stim]\nmode = trns\nintensity_mA = 1.0\nramp_rate_mA_per_min = 4\n"
                         "dose_s = 5\n");
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("n.csv")).code, 0);
  CliRun r = run_cli("analyze --fft " + path("n.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("(commanded_mA): 0.9"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(>= 0.95)"), std::string::npos) << r.out;
}

TEST_F(Cli, AnalyzeListsSaturation) {
  const auto cfg = write("s.cfg",
                         "[stim]\nmode = tdcs\nintensity_mA = 2.0\nramp_rate_mA_per_min = 4\n"
                         "dose_s = 10\n[circuit]\nr_body_ohm = 20000\n");
  ASSERT_EQ(run_cli("render " + cfg + " -o " + path("s.csv") + " --sample-rate 10").code, 0);
  CliRun r = run_cli("analyze " + path("s.csv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("saturated intervals: 1"), std::string::npos) << r.out;
}

TEST_F(Cli, AnalyzeBadTrace) {
  const auto bad = write("bad.csv", "#sample_rate_Hz=10\nt_s,commanded_mA,actual_mA,v_body_V,compliant\n0,1,1\n");
  CliRun r = run_cli("analyze " + bad);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
}

TEST_F(Cli, ServePortInUse) {
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  CliRun r = run_cli("serve --listen 127.0.0.1:" + std::to_string(port));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("cannot listen"), std::string::npos) << r.out;
}

TEST_F(Cli, ServeShutdownAbortsAndFlushes) {
  const std::string traces = path("traces");
  const std::string log_path = path("serve.log");
  const std::string cmd = "TESIM_TEST_TOKEN=tok exec " + std::string(TESIM_CLI) +
                          " serve --listen 127.0.0.1:0 --unblind-token-env TESIM_TEST_TOKEN" +
                          " --trace-dir " + traces + " > " + log_path + " 2>&1";
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  struct Reaper {
    pid_t pid;
    ~Reaper() {
      if (pid > 0 && kill(pid, SIGKILL) == 0) waitpid(pid, nullptr, 0);
    }
  } reaper{pid};

  // The server prints the port it bound.
  int port = 0;
  const std::string marker = "listening on 127.0.0.1:";
  for (int i = 0; i < 200 && !port; ++i) {
    const std::string log = slurp(log_path);
    if (const auto at = log.find(marker); at != std::string::npos)
      port = std::atoi(log.c_str() + at + marker.size());
    else
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  ASSERT_GT(port, 0) << slurp(log_path);
  httplib::Client c("127.0.0.1", port);
  bool up = false;
  for (int i = 0; i < 200 && !up; ++i) {
    up = static_cast<bool>(c.Get("/api/v1/health"));
    if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  ASSERT_TRUE(up);
  auto r = c.Post("/api/v1/sessions",
                  R"({"stim": {"mode": "tdcs", "intensity_mA": 1.0, "dose_s": 600}})",
                  "application/json");
  ASSERT_EQ(r->status, 201);
  const std::string id = nlohmann::json::parse(r->body)["id"];
  ASSERT_EQ(c.Post("/api/v1/sessions/" + id + "/start", "", "application/json")->status, 200);
  httplib::Headers tok{{"X-Unblind-Token", "tok"}};
  ASSERT_EQ(c.Get("/api/v1/sessions/" + id, tok)->status, 200);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  reaper.pid = 0;
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  const std::string log = slurp(path("serve.log"));
  EXPECT_NE(log.find("session " + id + " Aborted"), std::string::npos) << log;
  const tesim::Trace t = tesim::read_trace_csv(traces + "/" + id + ".csv");
  EXPECT_GT(t.size(), 10u);
  EXPECT_EQ(t.commanded_mA.back(), 0.0);
}
