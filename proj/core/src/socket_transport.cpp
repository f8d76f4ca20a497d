#include "robocloud/socket_transport.hpp"

#include <algorithm>

#include "httplib.h"
#include "robocloud/util.hpp"

namespace robocloud::net {

struct SocketTransport::Endpoint {
  httplib::Server server;
  std::thread listen_thread;
  int port = 0;
};

namespace {

HttpRequest to_request(const httplib::Request& r) {
  HttpRequest req;
  req.method = r.method;
  req.path = r.path;
  for (const auto& [k, v] : r.params) req.query[k] = v;
  req.body = r.body;
  return req;
}

std::string with_query(const HttpRequest& req) {
  std::string target = req.path;
  bool first = true;
  for (const auto& [k, v] : req.query) {
    target += first ? "?" : "&";
    target += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v);
    first = false;
  }
  return target;
}

}  // namespace

SocketTransport::SocketTransport(std::string host, int workers)
    : host_(std::move(host)), t0_(std::chrono::steady_clock::now()) {
  for (int i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  timer_thread_ = std::thread([this] { timer_loop(); });
}

SocketTransport::~SocketTransport() { shutdown(); }

std::string SocketTransport::register_endpoint(const std::string& hint, HttpHandler handler) {
  (void)hint;  // socket endpoints are identified by their bound port
  auto ep = std::make_unique<Endpoint>();
  auto relay = [handler](const httplib::Request& r, httplib::Response& res) {
    HttpResponse out = handler(to_request(r));
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  const std::string any = R"(/(.*))";
  ep->server.Get(any, relay);
  ep->server.Post(any, relay);
  ep->server.Put(any, relay);
  ep->server.Delete(any, relay);

  ep->port = ep->server.bind_to_any_port(host_);
  if (ep->port <= 0) throw std::runtime_error("failed to bind endpoint on " + host_);
  Endpoint* raw = ep.get();
  ep->listen_thread = std::thread([raw] { raw->server.listen_after_bind(); });
  ep->server.wait_until_ready();

  std::string uri = "http://" + host_ + ":" + std::to_string(ep->port);
  std::lock_guard lk(mu_);
  endpoints_[uri] = std::move(ep);
  return uri;
}

void SocketTransport::unregister_endpoint(const std::string& endpoint) {
  std::unique_ptr<Endpoint> ep;
  {
    std::lock_guard lk(mu_);
    auto it = endpoints_.find(endpoint);
    if (it == endpoints_.end()) return;
    ep = std::move(it->second);
    endpoints_.erase(it);
  }
  ep->server.stop();
  if (ep->listen_thread.joinable()) ep->listen_thread.join();
}

void SocketTransport::send(const std::string& uri, HttpRequest req, ReplyFn on_reply) {
  {
    std::lock_guard lk(job_mu_);
    jobs_.push_back({uri, std::move(req), std::move(on_reply)});
  }
  job_cv_.notify_one();
}

void SocketTransport::worker_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lk(job_mu_);
      job_cv_.wait(lk, [this] { return stopping_ || !jobs_.empty(); });
      if (stopping_ && jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
    }

    auto [endpoint, path] = util::split_uri(job.uri);
    if (endpoint.empty()) endpoint = job.uri;
    if (!path.empty() && path != "/") job.req.path = path;

    httplib::Client cli(endpoint);
    cli.set_connection_timeout(2, 0);
    cli.set_read_timeout(5, 0);
    std::string target = with_query(job.req);

    httplib::Result result;
    if (job.req.method == "GET") result = cli.Get(target);
    else if (job.req.method == "POST") result = cli.Post(target, job.req.body, "application/json");
    else if (job.req.method == "PUT") result = cli.Put(target, job.req.body, "application/json");
    else if (job.req.method == "DELETE") result = cli.Delete(target, job.req.body, "application/json");

    if (job.on_reply) {
      if (result) job.on_reply(HttpResponse{result->status, result->body});
      else job.on_reply(HttpResponse{503, R"({"error":"endpoint unreachable"})"});
    }
  }
}

void SocketTransport::schedule(double delay_ms, std::function<void()> fn) {
  auto due = std::chrono::steady_clock::now() +
             std::chrono::microseconds(static_cast<long long>(delay_ms * 1000.0));
  {
    std::lock_guard lk(timer_mu_);
    timers_.push_back({due, std::move(fn)});
  }
  timer_cv_.notify_one();
}

void SocketTransport::timer_loop() {
  std::unique_lock lk(timer_mu_);
  for (;;) {
    if (stopping_) return;
    if (timers_.empty()) {
      timer_cv_.wait(lk, [this] { return stopping_ || !timers_.empty(); });
      continue;
    }
    auto next = std::min_element(timers_.begin(), timers_.end(),
                                 [](const TimerItem& a, const TimerItem& b) { return a.due < b.due; });
    auto now = std::chrono::steady_clock::now();
    if (next->due <= now) {
      auto fn = std::move(next->fn);
      timers_.erase(next);
      lk.unlock();
      fn();
      lk.lock();
    } else {
      timer_cv_.wait_until(lk, next->due);
    }
  }
}

double SocketTransport::now_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
}

void SocketTransport::shutdown() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) return;
  job_cv_.notify_all();
  timer_cv_.notify_all();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  if (timer_thread_.joinable()) timer_thread_.join();

  std::map<std::string, std::unique_ptr<Endpoint>> eps;
  {
    std::lock_guard lk(mu_);
    eps.swap(endpoints_);
  }
  for (auto& [uri, ep] : eps) {
    ep->server.stop();
    if (ep->listen_thread.joinable()) ep->listen_thread.join();
  }
}

}  // namespace robocloud::net
