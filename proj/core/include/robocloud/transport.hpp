#pragma once

// Message plumbing shared by every component: a small REST-shaped
// request/response pair, a pluggable transport (deterministic simulated
// time or real localhost sockets) and the run-wide event log.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace robocloud::net {

struct HttpRequest {
  std::string method;  // GET | POST | PUT | DELETE
  std::string path;    // "/robots/rob-1"
  std::map<std::string, std::string> query;
  std::string body;
  std::string from;  // sender endpoint URI, informational
};

struct HttpResponse {
  int status = 200;
  std::string body;
  bool ok() const { return status >= 200 && status < 300; }
};

using HttpHandler = std::function<HttpResponse(const HttpRequest&)>;
using ReplyFn = std::function<void(const HttpResponse&)>;

/// Renders "METHOD path?k=v&k2=v2" for logs and route-shape assertions.
std::string describe(const HttpRequest& req);

class Transport {
 public:
  virtual ~Transport() = default;

  /// Registers a component under `hint` and returns the endpoint URI other
  /// components must use to reach it ("sim://hint" or "http://127.0.0.1:p").
  virtual std::string register_endpoint(const std::string& hint, HttpHandler handler) = 0;
  virtual void unregister_endpoint(const std::string& endpoint) = 0;

  /// Sends a request to a full URI (endpoint + path). `on_reply` may be
  /// empty for fire-and-forget messages. Unreachable endpoints produce a
  /// status-503 reply.
  virtual void send(const std::string& uri, HttpRequest req, ReplyFn on_reply) = 0;

  /// Runs `fn` after `delay_ms` on this transport's timeline.
  virtual void schedule(double delay_ms, std::function<void()> fn) = 0;

  virtual double now_ms() const = 0;
};

}  // namespace robocloud::net

namespace robocloud {

struct EventRecord {
  double t_ms = 0;
  std::string component;
  std::string kind;
  nlohmann::ordered_json detail;
};

/// Append-only, thread-safe record of everything observable in a run.
/// In simulated time the serialized log is byte-identical per seed.
class EventLog {
 public:
  void record(double t_ms, std::string component, std::string kind,
              nlohmann::ordered_json detail = {});
  std::vector<EventRecord> snapshot() const;
  std::vector<EventRecord> of_kind(const std::string& kind) const;
  std::size_t count(const std::string& kind) const;
  void clear();
  std::string to_json_string() const;

 private:
  mutable std::mutex mu_;
  std::vector<EventRecord> events_;
};

}  // namespace robocloud
