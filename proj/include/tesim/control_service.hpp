#pragma once

// Network control of the session engine. ControlService holds the sessions
// and the wall-clock driver and speaks JSON; HttpServer maps it onto HTTP.
// The wire protocol is documented in docs/protocol.md.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tesim/config.hpp"
#include "tesim/session.hpp"
#include "tesim/trace.hpp"

namespace tesim::service {

using nlohmann::json;

struct ServiceConfig {
  double tick_Hz = 100.0;
  int publish_every = 10;       // ticks per published frame (10 frames/s)
  double time_scale = 1.0;      // session ms advanced per wall-clock ms
  std::size_t subscriber_buffer = 256;
  std::string unblind_token;    // empty disables the unblinded channel
  std::string trace_dir;        // empty disables trace export
};

struct Response {
  int status = 200;
  json body;
};

enum class Channel { Blinded, Unblinded };

// Frames waiting for one stream client. Overflow drops the oldest frame.
class Subscription {
 public:
  Subscription(Channel channel, std::size_t capacity)
      : channel_(channel), capacity_(capacity) {}

  void push(const TelemetryFrame& f, bool sham);
  void close();
  // Next NDJSON line, or nullopt on timeout or once closed and drained.
  std::optional<std::string> pop(std::chrono::milliseconds wait);
  bool finished() const;
  Channel channel() const { return channel_; }
  std::uint64_t dropped() const;

 private:
  struct Item {
    TelemetryFrame frame;
    bool sham;
  };

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  Channel channel_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

json frame_to_json(const TelemetryFrame& f, Channel channel, bool sham,
                   std::uint64_t dropped);

class ControlService {
 public:
  explicit ControlService(ServiceConfig cfg);
  ~ControlService();

  ControlService(const ControlService&) = delete;
  ControlService& operator=(const ControlService&) = delete;

  // Body is a JSON object {"stim": {...}, "circuit": {...}} with config
  // keys, or a config file when `plain_text` is set.
  Response create(const std::string& body, bool plain_text = false);
  Response get(const std::string& id, bool unblinded) const;
  Response list() const;
  Response start(const std::string& id);
  Response abort(const std::string& id);
  Response set_intensity(const std::string& id, const std::string& body);

  // nullptr with `error` filled when the request is refused.
  std::shared_ptr<Subscription> subscribe(const std::string& id,
                                          Channel channel,
                                          const std::string& token,
                                          Response& error);

  // Advances the running session by dt (session time) and publishes.
  void advance(double dt_ms);

  void start_clock();
  void stop_clock();

  // Aborts the running session, runs its ramp to completion in session
  // time, flushes traces and closes every stream.
  void shutdown();

  std::optional<std::string> active_session() const;
  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Entry {
    std::string id;
    Session session;
    std::string created_at;
    Trace trace;
    std::uint64_t ticks = 0;
    bool flushed = false;
    std::vector<std::weak_ptr<Subscription>> subscribers;
  };

  json resource(const Entry& e, bool unblinded) const;
  Entry* find(const std::string& id);
  const Entry* find(const std::string& id) const;
  void advance_locked(double dt_ms);
  void publish(Entry& e, const TelemetryFrame& f, bool force);
  void finish(Entry& e, const TelemetryFrame& f);
  void flush_trace(Entry& e);
  Response not_found(const std::string& id) const;

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> sessions_;
  std::optional<std::string> active_;
  std::uint64_t next_id_ = 1;

  std::atomic<bool> clock_running_{false};
  std::thread clock_;
};

// HTTP/1.1 front end. Routes under /api/v1.
class HttpServer {
 public:
  explicit HttpServer(ControlService& service);
  ~HttpServer();

  // Returns false when the address cannot be bound.
  bool bind(const std::string& host, int port);
  int bind_any_port(const std::string& host);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tesim::service
