#include "robocloud/sim_transport.hpp"

#include "robocloud/util.hpp"

namespace robocloud::net {

void SimScheduler::at(double t_ms, std::function<void()> fn) {
  if (t_ms < now_) t_ms = now_;
  queue_.push({t_ms, seq_++, std::move(fn)});
}

void SimScheduler::after(double delay_ms, std::function<void()> fn) {
  at(now_ + (delay_ms > 0 ? delay_ms : 0), std::move(fn));
}

bool SimScheduler::step() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  now_ = ev.t;
  ev.fn();
  return true;
}

void SimScheduler::run() {
  while (step()) {
  }
}

void SimScheduler::run_until(double t_ms) {
  while (!queue_.empty() && queue_.top().t <= t_ms) step();
  if (now_ < t_ms) now_ = t_ms;
}

SimTransport::SimTransport(SimParams params) : params_(params), rng_(params.seed) {}

std::string SimTransport::register_endpoint(const std::string& hint, HttpHandler handler) {
  std::string uri = "sim://" + hint;
  endpoints_[uri] = std::move(handler);
  return uri;
}

void SimTransport::unregister_endpoint(const std::string& endpoint) {
  endpoints_.erase(endpoint);
}

double SimTransport::leg_delay() {
  double d = params_.latency_ms;
  if (params_.jitter_ms > 0)
    d += std::uniform_real_distribution<double>(0.0, params_.jitter_ms)(rng_);
  return d;
}

void SimTransport::send(const std::string& uri, HttpRequest req, ReplyFn on_reply) {
  auto [endpoint, path] = util::split_uri(uri);
  if (endpoint.empty()) endpoint = uri;  // bare endpoint, path carried in req
  if (!path.empty() && path != "/") req.path = path;

  double fwd = leg_delay();
  sched_.after(fwd, [this, endpoint, req = std::move(req), on_reply = std::move(on_reply)]() {
    auto it = endpoints_.find(endpoint);
    if (it == endpoints_.end()) {
      if (on_reply) {
        HttpResponse unreachable{503, R"({"error":"endpoint unreachable"})"};
        sched_.after(leg_delay(), [on_reply, unreachable]() { on_reply(unreachable); });
      }
      return;
    }
    HttpResponse resp = it->second(req);
    if (on_reply)
      sched_.after(leg_delay(), [on_reply, resp = std::move(resp)]() { on_reply(resp); });
  });
}

void SimTransport::schedule(double delay_ms, std::function<void()> fn) {
  sched_.after(delay_ms, std::move(fn));
}

}  // namespace robocloud::net
