#include "robocloud/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robocloud/util.hpp"

namespace robocloud::gateway {

using util::fmt_num;

WireCommand WireCommand::move(std::string task_id, double x, double y) {
  WireCommand c;
  c.kind = Kind::kMove;
  c.task_id = std::move(task_id);
  c.x = x;
  c.y = y;
  return c;
}

WireCommand WireCommand::actuate(std::string task_id, std::string tag) {
  WireCommand c;
  c.kind = Kind::kActuate;
  c.task_id = std::move(task_id);
  c.tag = std::move(tag);
  return c;
}

WireCommand WireCommand::sense(std::string task_id, std::string tag) {
  WireCommand c;
  c.kind = Kind::kSense;
  c.task_id = std::move(task_id);
  c.tag = std::move(tag);
  return c;
}

std::string frame(const WireCommand& c) {
  switch (c.kind) {
    case WireCommand::Kind::kMove:
      return "CMD " + c.task_id + " MOVE " + fmt_num(c.x) + " " + fmt_num(c.y);
    case WireCommand::Kind::kActuate:
      return "CMD " + c.task_id + " ACTUATE " + c.tag;
    case WireCommand::Kind::kSense:
      return "CMD " + c.task_id + " SENSE " + c.tag;
  }
  return {};
}

std::string frame(const WireEvent& e) {
  switch (e.kind) {
    case WireEvent::Kind::kDone:
      return "EVT " + e.task_id + " DONE";
    case WireEvent::Kind::kFail:
      return "EVT " + e.task_id + " FAIL " + e.reason;
    case WireEvent::Kind::kSensed:
      return "EVT " + e.task_id + " SENSED " + e.tag + " " + fmt_num(e.value);
  }
  return {};
}

WireCommand parse_command_frame(const std::string& line) {
  auto tok = util::split(line, ' ');
  if (tok.size() < 3 || tok[0] != "CMD") throw std::invalid_argument("bad command frame: " + line);
  if (tok[2] == "MOVE" && tok.size() == 5)
    return WireCommand::move(tok[1], std::stod(tok[3]), std::stod(tok[4]));
  if (tok[2] == "ACTUATE" && tok.size() == 4) return WireCommand::actuate(tok[1], tok[3]);
  if (tok[2] == "SENSE" && tok.size() == 4) return WireCommand::sense(tok[1], tok[3]);
  throw std::invalid_argument("bad command frame: " + line);
}

WireEvent parse_event_frame(const std::string& line) {
  auto tok = util::split(line, ' ');
  if (tok.size() < 3 || tok[0] != "EVT") throw std::invalid_argument("bad event frame: " + line);
  WireEvent e;
  e.task_id = tok[1];
  if (tok[2] == "DONE" && tok.size() == 3) {
    e.kind = WireEvent::Kind::kDone;
    return e;
  }
  if (tok[2] == "FAIL" && tok.size() == 4) {
    e.kind = WireEvent::Kind::kFail;
    e.reason = tok[3];
    return e;
  }
  if (tok[2] == "SENSED" && tok.size() == 5) {
    e.kind = WireEvent::Kind::kSensed;
    e.tag = tok[3];
    e.value = std::stod(tok[4]);
    return e;
  }
  throw std::invalid_argument("bad event frame: " + line);
}

// ---------------------------------------------------------------------------
// SimRobot

SimRobot::SimRobot(senml::RobotDescriptor descriptor, FaultModel fault, std::uint64_t seed)
    : descriptor_(std::move(descriptor)), fault_(fault), rng_(seed) {
  x_ = descriptor_.dynamic.x;
  y_ = descriptor_.dynamic.y;
  state_ = senml::RobotState::kIdle;
}

void SimRobot::plan(Task& t, double now_ms, double duration_ms) {
  std::size_t non_move = 0;
  for (const auto& s : t.segments)
    if (s.cmd.kind != WireCommand::Kind::kMove) ++non_move;
  double per_non_move = non_move ? std::max(duration_ms, 0.0) / static_cast<double>(non_move) : 0;

  double cursor = now_ms;
  double px = x_, py = y_;
  for (auto& s : t.segments) {
    s.start_ms = cursor;
    s.from_x = px;
    s.from_y = py;
    if (s.cmd.kind == WireCommand::Kind::kMove) {
      double dist = std::hypot(s.cmd.x - px, s.cmd.y - py);
      cursor += dist / kSpeedMps * 1000.0;
      px = s.cmd.x;
      py = s.cmd.y;
    } else {
      cursor += per_non_move;
    }
    s.end_ms = cursor;
  }
  t.ends_at = cursor;
}

void SimRobot::feed(const std::vector<std::string>& command_frames, double now_ms,
                    double task_duration_ms) {
  if (state_ == senml::RobotState::kFailed)
    throw std::logic_error("robot " + id() + " is FAILED and cannot accept commands");
  if (command_frames.empty()) return;

  Task t;
  for (const auto& line : command_frames) {
    Segment seg;
    seg.cmd = parse_command_frame(line);
    if (t.id.empty()) t.id = seg.cmd.task_id;
    t.segments.push_back(std::move(seg));
  }
  plan(t, now_ms, task_duration_ms);
  tasks_.push_back(std::move(t));
  if (state_ == senml::RobotState::kIdle) state_ = senml::RobotState::kAssigned;
}

WireEvent SimRobot::sensed_event(const std::string& task_id, const std::string& tag) {
  WireEvent e;
  e.kind = WireEvent::Kind::kSensed;
  e.task_id = task_id;
  e.tag = tag;
  double lo = 0, hi = 1;
  for (const auto& s : descriptor_.static_ch.sensors) {
    if (s.name != tag) continue;
    if (auto r = senml::parse_value_range(s.range, "sval")) {
      lo = r->min;
      hi = r->max;
    }
    break;
  }
  e.value = std::uniform_real_distribution<double>(lo, hi)(rng_);
  return e;
}

std::vector<std::string> SimRobot::step(double now_ms) {
  std::vector<std::string> out;
  if (state_ == senml::RobotState::kFailed || tasks_.empty()) return out;
  if (state_ == senml::RobotState::kAssigned) state_ = senml::RobotState::kExecuting;

  for (auto it = tasks_.begin(); it != tasks_.end();) {
    Task& t = *it;
    bool failed_now = false;
    while (t.next_segment < t.segments.size()) {
      Segment& s = t.segments[t.next_segment];
      if (s.cmd.kind == WireCommand::Kind::kMove) {
        if (now_ms >= s.end_ms) {
          x_ = s.cmd.x;
          y_ = s.cmd.y;
        } else if (now_ms > s.start_ms && s.end_ms > s.start_ms) {
          double f = (now_ms - s.start_ms) / (s.end_ms - s.start_ms);
          x_ = s.from_x + (s.cmd.x - s.from_x) * f;
          y_ = s.from_y + (s.cmd.y - s.from_y) * f;
        }
      }
      if (now_ms < s.end_ms) break;
      if (s.cmd.kind == WireCommand::Kind::kSense)
        out.push_back(frame(sensed_event(t.id, s.cmd.tag)));
      ++t.next_segment;
    }

    if (t.next_segment >= t.segments.size() && now_ms >= t.ends_at) {
      bool fails = fault_.fail_probability > 0 &&
                   std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < fault_.fail_probability;
      WireEvent e;
      e.task_id = t.id;
      if (fails) {
        e.kind = WireEvent::Kind::kFail;
        e.reason = "fault";
        failed_now = true;
      } else {
        e.kind = WireEvent::Kind::kDone;
      }
      out.push_back(frame(e));
      it = tasks_.erase(it);
    } else {
      ++it;
    }

    if (failed_now) {
      // The robot is broken: abort whatever else it was running.
      for (const auto& rest : tasks_) {
        WireEvent abort;
        abort.kind = WireEvent::Kind::kFail;
        abort.task_id = rest.id;
        abort.reason = "robot-failed";
        out.push_back(frame(abort));
      }
      tasks_.clear();
      state_ = senml::RobotState::kFailed;
      return out;
    }
  }

  if (tasks_.empty() && state_ == senml::RobotState::kExecuting)
    state_ = senml::RobotState::kIdle;
  return out;
}

std::optional<double> SimRobot::next_due_ms() const {
  if (state_ == senml::RobotState::kFailed || tasks_.empty()) return std::nullopt;
  double due = std::numeric_limits<double>::infinity();
  for (const auto& t : tasks_) {
    if (t.next_segment < t.segments.size())
      due = std::min(due, t.segments[t.next_segment].end_ms);
    else
      due = std::min(due, t.ends_at);
  }
  return due;
}

void SimRobot::reset() {
  if (state_ == senml::RobotState::kFailed) {
    tasks_.clear();
    state_ = senml::RobotState::kIdle;
  }
}

// ---------------------------------------------------------------------------
// Gateway

const char* to_string(GatewayLifecycle s) {
  switch (s) {
    case GatewayLifecycle::kUp: return "UP";
    case GatewayLifecycle::kDraining: return "DRAINING";
    case GatewayLifecycle::kDown: return "DOWN";
  }
  return "DOWN";
}

Gateway::Gateway(std::string id, std::string protocol, net::Transport& transport, EventLog& log)
    : id_(std::move(id)), protocol_(std::move(protocol)), transport_(transport), log_(log) {}

void Gateway::bind(std::shared_ptr<SimRobot> robot) {
  robots_[robot->id()] = std::move(robot);
  lifecycle_ = GatewayLifecycle::kUp;
}

void Gateway::unbind(const std::string& robot_id) { robots_.erase(robot_id); }

bool Gateway::has_robot(const std::string& robot_id) const { return robots_.count(robot_id) > 0; }

void Gateway::send(const std::string& robot_id, const std::vector<WireCommand>& commands,
                   double task_duration_ms) {
  auto it = robots_.find(robot_id);
  if (it == robots_.end())
    throw RoutingError("robot '" + robot_id + "' is not bound to gateway " + id_);
  auto& robot = it->second;
  if (robot->state() == senml::RobotState::kFailed)
    throw RoutingError("robot '" + robot_id + "' is FAILED");
  if (lifecycle_ == GatewayLifecycle::kDown)
    throw RoutingError("gateway " + id_ + " is DOWN");

  std::vector<std::string> frames;
  frames.reserve(commands.size());
  for (const auto& c : commands) frames.push_back(frame(c));

  double now = transport_.now_ms();
  robot->feed(frames, now, task_duration_ms);
  for (const auto& f : frames) {
    frame_log_.push_back(robot_id + " <- " + f);
    log_.record(now, id_, "frame-out", {{"robotid", robot_id}, {"frame", f}});
  }
  pump(robot);
}

void Gateway::pump(const std::shared_ptr<SimRobot>& robot) {
  auto before = robot->state();
  auto frames = robot->step(transport_.now_ms());
  auto after = robot->state();

  if (before != senml::RobotState::kExecuting && after == senml::RobotState::kExecuting && sink_) {
    GatewayNotice n;
    n.robot_id = robot->id();
    n.started = true;
    sink_(n);
  }
  for (const auto& f : frames) {
    frame_log_.push_back(robot->id() + " -> " + f);
    log_.record(transport_.now_ms(), id_, "frame-in", {{"robotid", robot->id()}, {"frame", f}});
    if (sink_) {
      GatewayNotice n;
      n.robot_id = robot->id();
      n.event = parse_event_frame(f);
      sink_(n);
    }
  }

  if (auto due = robot->next_due_ms()) {
    double delay = std::max(0.0, *due - transport_.now_ms());
    std::weak_ptr<SimRobot> weak = robot;
    transport_.schedule(delay, [this, weak] {
      if (auto r = weak.lock()) pump(r);
    });
  }
}

// ---------------------------------------------------------------------------
// GatewayManager

GatewayManager::GatewayManager(std::string owner_id, net::Transport& transport, EventLog& log)
    : owner_id_(std::move(owner_id)), transport_(transport), log_(log) {}

Gateway& GatewayManager::ensure(const std::string& protocol) {
  auto it = gateways_.find(protocol);
  if (it != gateways_.end() && it->second->lifecycle() != GatewayLifecycle::kDown) {
    it->second->mark(GatewayLifecycle::kUp);
    return *it->second;
  }
  auto gw = std::make_unique<Gateway>(owner_id_ + "-gw-" + std::to_string(next_id_++), protocol,
                                      transport_, log_);
  gw->set_notice_sink(sink_);
  log_.record(transport_.now_ms(), gw->id(), "gateway-up", {{"protocol", protocol}});
  auto [pos, ok] = gateways_.insert_or_assign(protocol, std::move(gw));
  (void)ok;
  return *pos->second;
}

Gateway* GatewayManager::find(const std::string& protocol) {
  auto it = gateways_.find(protocol);
  return it == gateways_.end() ? nullptr : it->second.get();
}

Gateway* GatewayManager::find_for_robot(const std::string& robot_id) {
  for (auto& [proto, gw] : gateways_)
    if (gw->has_robot(robot_id) && gw->lifecycle() != GatewayLifecycle::kDown) return gw.get();
  return nullptr;
}

void GatewayManager::bind_robot(const std::string& protocol, std::shared_ptr<SimRobot> robot) {
  ensure(protocol).bind(std::move(robot));
}

void GatewayManager::unbind_robot(const std::string& robot_id) {
  for (auto& [proto, gw] : gateways_) {
    if (!gw->has_robot(robot_id)) continue;
    gw->unbind(robot_id);
    if (gw->bound_count() == 0 && gw->lifecycle() == GatewayLifecycle::kUp) {
      gw->mark(GatewayLifecycle::kDraining);
      arm_drain_timer(proto);
    }
    return;
  }
}

void GatewayManager::arm_drain_timer(const std::string& protocol) {
  transport_.schedule(kDrainTimeoutMs, [this, protocol] {
    auto it = gateways_.find(protocol);
    if (it == gateways_.end()) return;
    auto& gw = *it->second;
    if (gw.lifecycle() == GatewayLifecycle::kDraining && gw.bound_count() == 0) {
      gw.mark(GatewayLifecycle::kDown);
      log_.record(transport_.now_ms(), gw.id(), "gateway-down", {{"protocol", protocol}});
    }
  });
}

void GatewayManager::set_notice_sink(NoticeSink sink) {
  sink_ = std::move(sink);
  for (auto& [proto, gw] : gateways_) gw->set_notice_sink(sink_);
}

std::vector<const Gateway*> GatewayManager::instances() const {
  std::vector<const Gateway*> out;
  for (const auto& [proto, gw] : gateways_) out.push_back(gw.get());
  return out;
}

}  // namespace robocloud::gateway
