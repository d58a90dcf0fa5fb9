#include "tesim/control_service.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

#include "httplib.h"

namespace tesim::service {

namespace {

Response error(int status, std::string message) {
  return {status, json{{"error", std::move(message)}}};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json violation_to_json(const Violation& v) {
  return {{"field", v.field}, {"value", v.value}, {"rule", v.rule},
          {"legal", v.legal}, {"message", v.message()}};
}

json stim_to_json(const StimParams& p, bool with_sham) {
  json j = {{"mode", to_string(p.mode)},
            {"intensity_mA", p.intensity_mA},
            {"ramp_rate_mA_per_min", p.ramp_rate_mA_per_min},
            {"dose_s", p.dose_s},
            {"freq_lo_Hz", p.freq_lo_Hz},
            {"freq_hi_Hz", p.freq_hi_Hz},
            {"duty_pct", p.duty_pct},
            {"pattern", to_string(p.pattern)},
            {"fm_steps", p.fm_steps},
            {"seed", p.seed}};
  if (p.burst) {
    j["burst_freq_Hz"] = p.burst->burst_freq_Hz;
    j["chain_count"] = p.burst->chain_count;
    if (p.burst->chain_freq_Hz) j["chain_freq_Hz"] = *p.burst->chain_freq_Hz;
  }
  if (with_sham) j["sham"] = p.sham;
  return j;
}

json circuit_to_json(const CircuitParams& c) {
  return {{"v_supply_V", c.v_supply_V}, {"v_cc_V", c.v_cc_V},
          {"v_be_on_V", c.v_be_on_V},   {"v_ce_sat_V", c.v_ce_sat_V},
          {"r_e_ohm", c.r_e_ohm},       {"v_early_V", c.v_early_V},
          {"r_body_ohm", c.r_body_ohm}};
}

// Renders one JSON section as config lines; nullopt on a value that cannot
// be expressed in the config format.
std::optional<std::string> section_text(const json& obj, const char* name,
                                        std::string& why) {
  if (!obj.is_object()) {
    why = std::string("'") + name + "' must be an object";
    return std::nullopt;
  }
  std::string out = std::string("[") + name + "]\n";
  for (const auto& [key, value] : obj.items()) {
    std::string text;
    if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_float()) {
      text = format_double(value.get<double>());
    } else if (value.is_number()) {
      text = value.dump();
    } else if (value.is_string()) {
      text = value.get<std::string>();
      if (text.find_first_of("\n\r#") != std::string::npos) {
        why = name + std::string(".") + key + ": string contains a forbidden character";
        return std::nullopt;
      }
    } else {
      why = name + std::string(".") + key + ": expected a number, string or boolean";
      return std::nullopt;
    }
    if (key.find_first_of("\n\r#=[") != std::string::npos) {
      why = "invalid key '" + key + "'";
      return std::nullopt;
    }
    out += key + " = " + text + "\n";
  }
  return out;
}

bool is_terminal(SessionState s) {
  return s == SessionState::Done || s == SessionState::Aborted;
}

}  // namespace

// --- Subscription ----------------------------------------------------------

void Subscription::push(const TelemetryFrame& f, bool sham) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      ++dropped_;
    }
    queue_.push_back({f, sham});
  }
  cv_.notify_one();
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::optional<std::string> Subscription::pop(std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, wait, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  Item item = queue_.front();
  queue_.pop_front();
  return frame_to_json(item.frame, channel_, item.sham, dropped_).dump() + "\n";
}

bool Subscription::finished() const {
  std::lock_guard lock(mu_);
  return closed_ && queue_.empty();
}

std::uint64_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

json frame_to_json(const TelemetryFrame& f, Channel channel, bool sham,
                   std::uint64_t dropped) {
  json j = {{"t_ms", f.t_ms},
            {"state", to_string(f.state)},
            {"displayed_mA", f.displayed_mA}};
  if (channel == Channel::Unblinded) {
    j["commanded_mA"] = f.commanded_mA;
    j["actual_mA"] = f.actual_mA;
    j["v_body_V"] = f.v_body_V;
    j["compliant"] = f.compliant;
    j["sham"] = sham;
  }
  j["dropped"] = dropped;
  return j;
}

// --- ControlService --------------------------------------------------------

ControlService::ControlService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.tick_Hz > 0)) throw std::invalid_argument("tick rate must be positive");
  if (cfg_.publish_every < 1) throw std::invalid_argument("publish_every must be >= 1");
  if (!(cfg_.time_scale > 0)) throw std::invalid_argument("time_scale must be positive");
  if (cfg_.subscriber_buffer < 1) throw std::invalid_argument("subscriber buffer must be >= 1");
}

ControlService::~ControlService() { stop_clock(); }

ControlService::Entry* ControlService::find(const std::string& id) {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : &it->second;
}

const ControlService::Entry* ControlService::find(const std::string& id) const {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : &it->second;
}

Response ControlService::not_found(const std::string& id) const {
  return error(404, "no session '" + id + "'");
}

json ControlService::resource(const Entry& e, bool unblinded) const {
  json j = {{"id", e.id},
            {"state", to_string(e.session.state())},
            {"created_at", e.created_at},
            {"elapsed_ms", e.session.elapsed_ms()},
            {"stim", stim_to_json(e.session.params(), unblinded)},
            {"circuit", circuit_to_json(e.session.circuit())}};
  return j;
}

Response ControlService::create(const std::string& body, bool plain_text) {
  std::string text;
  if (plain_text) {
    text = body;
  } else {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) return error(400, "body is not valid JSON");
    if (!doc.is_object()) return error(400, "body must be a JSON object");
    for (const auto& [key, _] : doc.items())
      if (key != "stim" && key != "circuit")
        return error(400, "unknown top-level key '" + key + "'");
    std::string why;
    for (const char* name : {"stim", "circuit"}) {
      if (!doc.contains(name)) continue;
      auto section = section_text(doc[name], name, why);
      if (!section) return error(400, why);
      text += *section;
    }
  }

  SessionConfig cfg;
  try {
    cfg = parse_session_config(text);
  } catch (const ConfigError& e) {
    json issues = json::array();
    for (const auto& i : e.issues()) {
      json item = {{"message", i.message}};
      if (plain_text) item["line"] = i.line;
      issues.push_back(item);
    }
    return {400, {{"error", "malformed session config"}, {"issues", issues}}};
  }

  Session session;
  auto problems = session.configure(cfg.stim, cfg.circuit);
  if (!problems.empty()) {
    json list = json::array();
    for (const auto& v : problems) list.push_back(violation_to_json(v));
    return {422, {{"error", "invalid parameters"}, {"violations", list}}};
  }

  std::lock_guard lock(mu_);
  const std::string id = "s" + std::to_string(next_id_++);
  Entry& e = sessions_.emplace(id, Entry{id, std::move(session), utc_now(), {}, 0, false, {}})
                 .first->second;
  e.trace.sample_rate_Hz = cfg_.tick_Hz;
  e.trace.meta = params_metadata(cfg.stim);
  for (auto& kv : circuit_metadata(cfg.circuit)) e.trace.meta.push_back(kv);
  e.trace.meta.emplace_back("source", "service");
  e.trace.meta.emplace_back("session", id);
  return {201, resource(e, false)};
}

Response ControlService::get(const std::string& id, bool unblinded) const {
  std::lock_guard lock(mu_);
  const Entry* e = find(id);
  if (!e) return not_found(id);
  return {200, resource(*e, unblinded)};
}

Response ControlService::list() const {
  std::lock_guard lock(mu_);
  json arr = json::array();
  for (const auto& [_, e] : sessions_) arr.push_back(resource(e, false));
  json j = {{"sessions", arr}};
  j["active"] = active_ ? json(*active_) : json(nullptr);
  return {200, j};
}

Response ControlService::start(const std::string& id) {
  std::lock_guard lock(mu_);
  Entry* e = find(id);
  if (!e) return not_found(id);
  if (active_ && *active_ != id)
    return error(409, "session '" + *active_ + "' is already running on the output stage");
  try {
    e->session.start();
  } catch (const StateError& ex) {
    return error(409, ex.what());
  }
  active_ = id;
  e->ticks = 0;
  return {200, resource(*e, false)};
}

Response ControlService::abort(const std::string& id) {
  std::lock_guard lock(mu_);
  Entry* e = find(id);
  if (!e) return not_found(id);
  AbortAck ack;
  try {
    ack = e->session.abort();
  } catch (const StateError& ex) {
    return error(409, ex.what());
  }
  if (is_terminal(e->session.state())) {
    TelemetryFrame f;
    f.t_ms = e->session.elapsed_ms();
    f.state = e->session.state();
    finish(*e, f);
  }
  json body = resource(*e, false);
  body["ramp_s"] = ack.ramp_s;
  return {200, body};
}

Response ControlService::set_intensity(const std::string& id, const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("intensity_mA") ||
      !doc["intensity_mA"].is_number())
    return error(400, "body must be {\"intensity_mA\": <number>}");
  const double mA = doc["intensity_mA"].get<double>();

  std::lock_guard lock(mu_);
  Entry* e = find(id);
  if (!e) return not_found(id);
  if (e->session.state() != SessionState::Dose || e->session.aborting())
    return error(409, "intensity can only be adjusted during the dose phase, state is " +
                          std::string(to_string(e->session.state())));
  const IntensityAck ack = e->session.set_intensity(mA);
  if (!ack.accepted) return error(422, ack.reason);
  json out = resource(*e, false);
  out["ramp_s"] = ack.ramp_s;
  return {200, out};
}

std::shared_ptr<Subscription> ControlService::subscribe(const std::string& id,
                                                        Channel channel,
                                                        const std::string& token,
                                                        Response& err) {
  if (channel == Channel::Unblinded) {
    if (cfg_.unblind_token.empty()) {
      err = error(403, "the unblinded channel is disabled on this service");
      return nullptr;
    }
    if (token.empty()) {
      err = error(401, "the unblinded channel requires X-Unblind-Token");
      return nullptr;
    }
    if (token != cfg_.unblind_token) {
      err = error(403, "invalid unblind token");
      return nullptr;
    }
  }
  std::lock_guard lock(mu_);
  Entry* e = find(id);
  if (!e) {
    err = not_found(id);
    return nullptr;
  }
  auto sub = std::make_shared<Subscription>(channel, cfg_.subscriber_buffer);
  if (is_terminal(e->session.state())) {
    TelemetryFrame f;
    f.t_ms = e->session.elapsed_ms();
    f.state = e->session.state();
    sub->push(f, e->session.params().sham);
    sub->close();
  } else {
    e->subscribers.push_back(sub);
  }
  return sub;
}

void ControlService::advance(double dt_ms) {
  std::lock_guard lock(mu_);
  advance_locked(dt_ms);
}

void ControlService::advance_locked(double dt_ms) {
  if (!active_) return;
  Entry& e = sessions_.at(*active_);
  if (!is_running(e.session.state())) {
    active_.reset();
    return;
  }
  const TelemetryFrame f = e.session.tick(dt_ms);
  e.trace.commanded_mA.push_back(f.commanded_mA);
  e.trace.actual_mA.push_back(f.actual_mA);
  e.trace.v_body_V.push_back(f.v_body_V);
  e.trace.compliant.push_back(f.compliant ? 1 : 0);
  ++e.ticks;
  if (is_terminal(f.state)) {
    finish(e, f);
  } else {
    publish(e, f, false);
  }
}

void ControlService::publish(Entry& e, const TelemetryFrame& f, bool force) {
  if (!force && e.ticks % static_cast<std::uint64_t>(cfg_.publish_every) != 0) return;
  const bool sham = e.session.params().sham;
  std::erase_if(e.subscribers, [&](const std::weak_ptr<Subscription>& w) {
    auto s = w.lock();
    if (!s) return true;
    s->push(f, sham);
    return false;
  });
}

void ControlService::finish(Entry& e, const TelemetryFrame& f) {
  publish(e, f, true);
  for (auto& w : e.subscribers)
    if (auto s = w.lock()) s->close();
  e.subscribers.clear();
  flush_trace(e);
  if (active_ == e.id) active_.reset();
}

void ControlService::flush_trace(Entry& e) {
  if (e.flushed || cfg_.trace_dir.empty() || e.trace.size() == 0) return;
  e.flushed = true;
  std::filesystem::create_directories(cfg_.trace_dir);
  write_trace_csv(e.trace, (std::filesystem::path(cfg_.trace_dir) / (e.id + ".csv")).string());
}

void ControlService::start_clock() {
  if (clock_running_.exchange(true)) return;
  clock_ = std::thread([this] {
    using namespace std::chrono;
    const auto period = duration_cast<steady_clock::duration>(duration<double>(1.0 / cfg_.tick_Hz));
    const double dt_ms = 1000.0 / cfg_.tick_Hz;
    auto next = steady_clock::now() + period;
    // time_scale changes how many fixed ticks run per wall period, never the
    // tick size, so traces and publish cadence stay in session time.
    double owed = 0;
    while (clock_running_) {
      std::this_thread::sleep_until(next);
      next += period;
      owed += cfg_.time_scale;
      std::lock_guard lock(mu_);
      for (; owed >= 1; owed -= 1) advance_locked(dt_ms);
    }
  });
}

void ControlService::stop_clock() {
  clock_running_ = false;
  if (clock_.joinable()) clock_.join();
}

void ControlService::shutdown() {
  stop_clock();
  std::lock_guard lock(mu_);
  if (active_) {
    Entry& e = sessions_.at(*active_);
    e.session.abort();
    const double dt_ms = 1000.0 / cfg_.tick_Hz;
    while (active_) advance_locked(dt_ms);
  }
  for (auto& [_, e] : sessions_) {
    if (e.session.state() == SessionState::Armed) {
      e.session.abort();
      TelemetryFrame f;
      f.t_ms = e.session.elapsed_ms();
      f.state = e.session.state();
      finish(e, f);
    }
    for (auto& w : e.subscribers)
      if (auto s = w.lock()) s->close();
    e.subscribers.clear();
  }
}

std::optional<std::string> ControlService::active_session() const {
  std::lock_guard lock(mu_);
  return active_;
}

// --- HttpServer ------------------------------------------------------------

struct HttpServer::Impl {
  ControlService& service;
  httplib::Server server;

  explicit Impl(ControlService& s) : service(s) {
    // No SO_REUSEPORT: a second instance on the same port must fail to bind.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  static void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump() + "\n", "application/json");
  }

  bool unblinded(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_header("X-Unblind-Token")) return false;
    const std::string token = req.get_header_value("X-Unblind-Token");
    const std::string& expected = service.config().unblind_token;
    if (expected.empty() || token != expected) {
      reply(res, error(403, "invalid unblind token"));
      return false;
    }
    return true;
  }

  void routes() {
    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, {200, json{{"status", "ok"}}});
    });
    server.Get("/api/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, service.list());
    });
    server.Post("/api/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string type = req.get_header_value("Content-Type");
      reply(res, service.create(req.body, type.rfind("text/plain", 0) == 0));
    });
    server.Get(R"(/api/v1/sessions/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 const bool open = unblinded(req, res);
                 if (res.status == 403) return;
                 reply(res, service.get(req.matches[1], open));
               });
    server.Post(R"(/api/v1/sessions/([^/]+)/start)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.start(req.matches[1]));
                });
    server.Post(R"(/api/v1/sessions/([^/]+)/abort)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.abort(req.matches[1]));
                });
    server.Post(R"(/api/v1/sessions/([^/]+)/intensity)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.set_intensity(req.matches[1], req.body));
                });
    server.Get(R"(/api/v1/sessions/([^/]+)/telemetry)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 Channel channel = Channel::Blinded;
                 if (req.has_param("channel")) {
                   const std::string c = req.get_param_value("channel");
                   if (c == "unblinded") {
                     channel = Channel::Unblinded;
                   } else if (c != "blinded") {
                     reply(res, error(400, "channel must be blinded or unblinded"));
                     return;
                   }
                 }
                 Response err;
                 auto sub = service.subscribe(req.matches[1], channel,
                                              req.get_header_value("X-Unblind-Token"), err);
                 if (!sub) {
                   reply(res, err);
                   return;
                 }
                 res.set_chunked_content_provider(
                     "application/x-ndjson",
                     [sub](std::size_t, httplib::DataSink& sink) {
                       if (!sink.is_writable()) return false;
                       if (auto line = sub->pop(std::chrono::milliseconds(100))) {
                         return sink.write(line->data(), line->size());
                       }
                       if (sub->finished()) sink.done();
                       return true;
                     },
                     [sub](bool) { sub->close(); });
               });
  }
};

HttpServer::HttpServer(ControlService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

int HttpServer::bind_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace tesim::service
