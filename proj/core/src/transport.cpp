#include "robocloud/transport.hpp"

namespace robocloud::net {

std::string describe(const HttpRequest& req) {
  std::string out = req.method + " " + req.path;
  bool first = true;
  for (const auto& [k, v] : req.query) {
    out += first ? "?" : "&";
    out += k + "=" + v;
    first = false;
  }
  return out;
}

}  // namespace robocloud::net

namespace robocloud {

void EventLog::record(double t_ms, std::string component, std::string kind,
                      nlohmann::ordered_json detail) {
  std::lock_guard lk(mu_);
  events_.push_back({t_ms, std::move(component), std::move(kind), std::move(detail)});
}

std::vector<EventRecord> EventLog::snapshot() const {
  std::lock_guard lk(mu_);
  return events_;
}

std::vector<EventRecord> EventLog::of_kind(const std::string& kind) const {
  std::lock_guard lk(mu_);
  std::vector<EventRecord> out;
  for (const auto& e : events_)
    if (e.kind == kind) out.push_back(e);
  return out;
}

std::size_t EventLog::count(const std::string& kind) const {
  std::lock_guard lk(mu_);
  std::size_t n = 0;
  for (const auto& e : events_)
    if (e.kind == kind) ++n;
  return n;
}

void EventLog::clear() {
  std::lock_guard lk(mu_);
  events_.clear();
}

std::string EventLog::to_json_string() const {
  std::lock_guard lk(mu_);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : events_) {
    nlohmann::ordered_json j;
    j["t_ms"] = e.t_ms;
    j["component"] = e.component;
    j["kind"] = e.kind;
    j["detail"] = e.detail;
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

}  // namespace robocloud
