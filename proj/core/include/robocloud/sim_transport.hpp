#pragma once

// Discrete-event simulated time. One thread owns the whole world; events
// fire in (time, insertion) order, so a run is a pure function of its
// configuration and seed.

#include <cstdint>
#include <functional>
#include <queue>
#include <random>

#include "robocloud/transport.hpp"

namespace robocloud::net {

class SimScheduler {
 public:
  double now() const { return now_; }
  void at(double t_ms, std::function<void()> fn);
  void after(double delay_ms, std::function<void()> fn);

  bool empty() const { return queue_.empty(); }
  /// Fires the next event; false when the queue is empty.
  bool step();
  /// Runs until no events remain.
  void run();
  /// Runs events with t <= t_ms, then advances the clock to t_ms.
  void run_until(double t_ms);

 private:
  struct Event {
    double t;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };
  double now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

struct SimParams {
  double latency_ms = 5.0;  // one-way delay per message leg
  double jitter_ms = 0.0;   // uniform [0, jitter_ms) added per leg
  std::uint64_t seed = 42;
};

class SimTransport : public Transport {
 public:
  explicit SimTransport(SimParams params = {});

  SimScheduler& scheduler() { return sched_; }
  const SimParams& params() const { return params_; }

  std::string register_endpoint(const std::string& hint, HttpHandler handler) override;
  void unregister_endpoint(const std::string& endpoint) override;
  void send(const std::string& uri, HttpRequest req, ReplyFn on_reply) override;
  void schedule(double delay_ms, std::function<void()> fn) override;
  double now_ms() const override { return sched_.now(); }

 private:
  double leg_delay();

  SimParams params_;
  SimScheduler sched_;
  std::mt19937_64 rng_;
  std::map<std::string, HttpHandler> endpoints_;
};

}  // namespace robocloud::net
