// tesim: validate, render, analyze and serve stimulation sessions.
//
// Exit codes: 0 ok, 2 validation, 3 I/O, 4 runtime.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tesim/analysis.hpp"
#include "tesim/config.hpp"
#include "tesim/control_service.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kIo = 3;
constexpr int kRuntime = 4;

struct Exit {
  int code;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

tesim::SessionConfig load(const std::string& path) {
  try {
    return tesim::load_session_config(path);
  } catch (const tesim::ConfigError& e) {
    std::cerr << path << ": invalid config\n";
    for (const auto& i : e.issues()) std::cerr << "  line " << i.line << ": " << i.message << '\n';
    throw Exit{kValidation};
  } catch (const std::system_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    throw Exit{kIo};
  }
}

tesim::ValidatedParams validated(const tesim::SessionConfig& cfg, const std::string& path) {
  tesim::Validation v = tesim::validate_params(cfg.stim);
  auto problems = v.violations;
  for (auto& cv : tesim::validate_circuit(cfg.circuit)) problems.push_back(cv);
  for (const auto& w : v.warnings) std::cerr << "warning: " << w << '\n';
  if (!problems.empty()) {
    std::cerr << path << ": " << problems.size() << " violation(s)\n";
    for (const auto& p : problems) std::cerr << "  " << p.message() << '\n';
    throw Exit{kValidation};
  }
  return *v.value;
}

int cmd_validate(const std::string& path) {
  const tesim::SessionConfig cfg = load(path);
  const tesim::ValidatedParams vp = validated(cfg, path);
  const tesim::SessionTiming t = tesim::session_timing(vp.get());
  std::cout << "ok: " << path << '\n'
            << tesim::format_session_config(cfg) << '\n'
            << "# warm-up " << fmt(t.warmup_us / 1e6, 3) << " s, dose " << fmt(t.dose_us / 1e6, 3)
            << " s, cool-down " << fmt(t.cooldown_us / 1e6, 3) << " s, " << t.steps
            << " steps of 0.1 mA\n";
  return kOk;
}

int cmd_render(const std::string& path, const std::string& out, double rate,
               std::optional<std::uint64_t> seed) {
  tesim::SessionConfig cfg = load(path);
  if (seed) cfg.stim.seed = *seed;
  const tesim::ValidatedParams vp = validated(cfg, path);
  tesim::Trace trace;
  try {
    if (vp->mode == tesim::StimMode::TRNS) {
      trace = tesim::gen_trns(vp, rate);
      tesim::apply_circuit(trace, cfg.circuit);
      for (auto& kv : trace.meta)
        if (kv.first == "stage") kv.second = "bjt";
      for (auto& kv : tesim::circuit_metadata(cfg.circuit)) trace.meta.push_back(kv);
    } else {
      trace = tesim::simulate_schedule(tesim::generate_schedule(vp), cfg.circuit, rate);
    }
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    throw Exit{kValidation};
  }
  try {
    tesim::write_trace_csv(trace, out);
  } catch (const std::system_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    throw Exit{kIo};
  }
  std::cout << "wrote " << trace.size() << " samples at " << tesim::format_double(rate)
            << " Hz to " << out << '\n';
  return kOk;
}

struct Stats {
  double min = 0, median = 0, max = 0;
};

Stats stats(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {v.front(), med, v.back()};
}

void pulse_report(const tesim::Trace& t, tesim::TraceChannel ch, bool detail) {
  const auto pulses = tesim::detect_pulses(t, 0.05, ch);
  std::cout << to_string(ch) << ": " << pulses.size() << " pulse(s)\n";
  if (pulses.size() < 2) return;
  const auto m = tesim::measure_duty_and_freq(pulses);
  std::vector<double> duty, freq;
  for (const auto& x : m) {
    duty.push_back(x.duty_pct);
    freq.push_back(x.freq_Hz);
  }
  const Stats d = stats(duty), f = stats(freq);
  std::cout << "  duty %   min " << fmt(d.min, 3) << "  median " << fmt(d.median, 3) << "  max "
            << fmt(d.max, 3) << '\n'
            << "  freq Hz  min " << fmt(f.min, 3) << "  median " << fmt(f.median, 3) << "  max "
            << fmt(f.max, 3) << '\n';
  if (!detail) return;
  std::cout << "  #  t_start_s  duration_s  polarity  amplitude_mA  duty_pct  freq_Hz\n";
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    const auto& p = pulses[i];
    std::cout << "  " << i << "  " << fmt(p.t_start_s, 6) << "  " << fmt(p.duration_s, 6) << "  "
              << (p.polarity > 0 ? "+" : "-") << "  " << fmt(p.amplitude_mA, 4);
    if (i < m.size()) std::cout << "  " << fmt(m[i].duty_pct, 3) << "  " << fmt(m[i].freq_Hz, 3);
    std::cout << '\n';
  }
}

int cmd_analyze(const std::string& path, bool fft, bool report) {
  tesim::Trace t;
  try {
    t = tesim::read_trace_csv(path);
  } catch (const tesim::TraceParseError& e) {
    std::cerr << path << ": " << e.what() << '\n';
    throw Exit{kIo};
  } catch (const std::system_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    throw Exit{kIo};
  }
  std::cout << path << ": " << t.size() << " samples at " << tesim::format_double(t.sample_rate_Hz)
            << " Hz (" << fmt(static_cast<double>(t.size()) / t.sample_rate_Hz, 3) << " s)\n";
  for (const auto& [k, v] : t.meta)
    if (k == "mode" || k == "pattern" || k == "stage") std::cout << "  " << k << " = " << v << '\n';

  pulse_report(t, tesim::TraceChannel::Commanded, report);
  pulse_report(t, tesim::TraceChannel::Actual, report);

  if (fft) {
    const double cutoff = tesim::trns::kBandLimit_Hz;
    for (auto ch : {tesim::TraceChannel::Commanded, tesim::TraceChannel::Actual}) {
      std::cout << "band energy below " << tesim::format_double(cutoff) << " Hz ("
                << to_string(ch) << "): ";
      try {
        const double r = tesim::band_energy_ratio(tesim::fft_spectrum(t, ch), cutoff);
        std::cout << fmt(r, 4) << (r >= tesim::trns::kMinBandEnergy ? "  (>= 0.95)" : "  (< 0.95)")
                  << '\n';
      } catch (const std::domain_error& e) {
        std::cout << "n/a (" << e.what() << ")\n";
      }
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < t.size();) {
    if (t.compliant[i]) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < t.size() && !t.compliant[i]) ++i;
    runs.emplace_back(b, i);
  }
  std::cout << "saturated intervals: " << runs.size() << '\n';
  for (const auto& [b, e] : runs)
    std::cout << "  " << fmt(t.time_s(b), 6) << " s .. " << fmt(t.time_s(e), 6) << " s\n";
  return kOk;
}

volatile std::sig_atomic_t g_signal = 0;

int cmd_serve(const std::string& listen, const std::string& token_env,
              tesim::service::ServiceConfig cfg) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --listen expects HOST:PORT\n";
    throw Exit{kValidation};
  }
  const std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in '" << listen << "'\n";
    throw Exit{kValidation};
  }
  if (const char* tok = std::getenv(token_env.c_str())) cfg.unblind_token = tok;

  tesim::service::ControlService service(cfg);
  tesim::service::HttpServer server(service);
  int bound = port;
  if (port == 0) {
    bound = server.bind_any_port(host);
    if (bound < 0) {
      std::cerr << "error: cannot listen on " << host << '\n';
      throw Exit{kIo};
    }
  } else if (!server.bind(host, port)) {
    std::cerr << "error: cannot listen on " << listen << " (address in use?)\n";
    throw Exit{kIo};
  }

  std::signal(SIGINT, [](int s) { g_signal = s; });
  std::signal(SIGTERM, [](int s) { g_signal = s; });

  std::thread http([&] { server.listen(); });
  service.start_clock();
  std::cout << "listening on " << host << ':' << bound
            << (cfg.unblind_token.empty() ? " (unblinded channel disabled)" : "") << std::endl;
  while (!g_signal) std::this_thread::sleep_for(std::chrono::milliseconds(50));

  std::cout << "shutting down" << std::endl;
  const auto active = service.active_session();
  service.shutdown();
  server.stop();
  http.join();
  if (active) {
    auto r = service.get(*active, false);
    std::cout << "session " << *active << " " << r.body["state"].get<std::string>() << std::endl;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tesim: transcranial stimulation session simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, trace_path;
  double rate = 10000.0;
  std::optional<std::uint64_t> seed;
  bool fft = false, report = false;
  std::string listen = "127.0.0.1:8080", token_env = "TESIM_UNBLIND_TOKEN";
  tesim::service::ServiceConfig svc;
  svc.trace_dir = "traces";

  auto* validate = app.add_subcommand("validate", "Parse and validate a session config");
  validate->add_option("config", config_path, "Config file")->required();

  auto* render = app.add_subcommand("render", "Render a config to a trace CSV");
  render->add_option("config", config_path, "Config file")->required();
  render->add_option("--out,-o", out_path, "Output CSV")->required();
  render->add_option("--sample-rate", rate, "Sample rate in Hz")->capture_default_str();
  render->add_option("--seed", seed, "Override the config seed");

  auto* analyze = app.add_subcommand("analyze", "Measure pulses, spectrum and compliance of a trace");
  analyze->add_option("trace", trace_path, "Trace CSV")->required();
  analyze->add_flag("--fft", fft, "Report band energy below 300 Hz");
  analyze->add_flag("--report", report, "List every pulse");

  auto* serve = app.add_subcommand("serve", "Run the control service");
  serve->add_option("--listen", listen, "HOST:PORT (port 0 picks a free port)")->capture_default_str();
  serve->add_option("--unblind-token-env", token_env,
                    "Environment variable holding the unblind token")
      ->capture_default_str();
  serve->add_option("--trace-dir", svc.trace_dir, "Directory for session traces")
      ->capture_default_str();
  serve->add_option("--time-scale", svc.time_scale, "Session ms per wall-clock ms")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*validate) return cmd_validate(config_path);
    if (*render) return cmd_render(config_path, out_path, rate, seed);
    if (*analyze) return cmd_analyze(trace_path, fft, report);
    if (*serve) return cmd_serve(listen, token_env, svc);
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
