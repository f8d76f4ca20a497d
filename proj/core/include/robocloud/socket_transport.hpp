#pragma once

// Real-socket transport: every endpoint is an HTTP server on a loopback
// port, outbound requests run on a small worker pool, timers on a timer
// thread. Used for the socket benchmark mode and the integration tests;
// timing here is wall-clock and only orderings are asserted.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include "robocloud/transport.hpp"

namespace robocloud::net {

class SocketTransport : public Transport {
 public:
  explicit SocketTransport(std::string host = "127.0.0.1", int workers = 4);
  ~SocketTransport() override;

  std::string register_endpoint(const std::string& hint, HttpHandler handler) override;
  void unregister_endpoint(const std::string& endpoint) override;
  void send(const std::string& uri, HttpRequest req, ReplyFn on_reply) override;
  void schedule(double delay_ms, std::function<void()> fn) override;
  double now_ms() const override;

  /// Stops all servers and worker threads; called by the destructor.
  void shutdown();

 private:
  struct Endpoint;
  struct Job {
    std::string uri;
    HttpRequest req;
    ReplyFn on_reply;
  };
  struct TimerItem {
    std::chrono::steady_clock::time_point due;
    std::function<void()> fn;
  };

  void worker_loop();
  void timer_loop();

  std::string host_;
  std::chrono::steady_clock::time_point t0_;

  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Endpoint>> endpoints_;

  std::mutex job_mu_;
  std::condition_variable job_cv_;
  std::deque<Job> jobs_;
  std::vector<std::thread> workers_;

  std::mutex timer_mu_;
  std::condition_variable timer_cv_;
  std::vector<TimerItem> timers_;
  std::thread timer_thread_;

  std::atomic<bool> stopping_{false};
};

}  // namespace robocloud::net
