#include "robocloud/iaas_node.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "robocloud/util.hpp"

namespace robocloud::iaas {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using senml::RobotState;

const char* to_string(MemberStatus s) {
  switch (s) {
    case MemberStatus::kPending: return "PENDING";
    case MemberStatus::kSent: return "SENT";
    case MemberStatus::kRunning: return "RUNNING";
    case MemberStatus::kDone: return "DONE";
    case MemberStatus::kFailed: return "FAILED";
  }
  return "PENDING";
}

const char* to_string(AssignmentStatus s) {
  switch (s) {
    case AssignmentStatus::kRunning: return "RUNNING";
    case AssignmentStatus::kDone: return "DONE";
    case AssignmentStatus::kFailed: return "FAILED";
  }
  return "RUNNING";
}

bool member_transition_ok(MemberStatus from, MemberStatus to) {
  auto rank = [](MemberStatus s) {
    switch (s) {
      case MemberStatus::kPending: return 0;
      case MemberStatus::kSent: return 1;
      case MemberStatus::kRunning: return 2;
      case MemberStatus::kDone:
      case MemberStatus::kFailed: return 3;
    }
    return 0;
  };
  if (rank(from) >= 3) return false;  // terminal states are final
  return rank(to) > rank(from);
}

// ---------------------------------------------------------------------------
// RobotsRepository

RobotsRepository::RobotsRepository(std::string storage_dir) : dir_(std::move(storage_dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

void RobotsRepository::add(const senml::RobotDescriptor& d) {
  senml::validate(d);
  std::lock_guard lk(mu_);
  if (entries_.count(d.robot_id))
    throw senml::ConflictError("robot '" + d.robot_id + "' already in repository");
  Entry e;
  e.desc = d;
  e.availability = RobotState::kIdle;
  persist(e);
  entries_.emplace(d.robot_id, std::move(e));
}

void RobotsRepository::remove(const std::string& robot_id) {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) throw NotFoundError("unknown robot '" + robot_id + "'");
  entries_.erase(it);
  unpersist(robot_id);
}

bool RobotsRepository::contains(const std::string& robot_id) const {
  std::lock_guard lk(mu_);
  return entries_.count(robot_id) > 0;
}

std::optional<senml::RobotDescriptor> RobotsRepository::descriptor(
    const std::string& robot_id) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.desc;
}

std::vector<senml::RobotDescriptor> RobotsRepository::list() const {
  std::lock_guard lk(mu_);
  std::vector<senml::RobotDescriptor> out;
  for (const auto& [id, e] : entries_) out.push_back(e.desc);
  return out;
}

std::size_t RobotsRepository::size() const {
  std::lock_guard lk(mu_);
  return entries_.size();
}

void RobotsRepository::set_availability(const std::string& robot_id, RobotState s) {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) throw NotFoundError("unknown robot '" + robot_id + "'");
  it->second.availability = s;
}

RobotState RobotsRepository::availability(const std::string& robot_id) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) throw NotFoundError("unknown robot '" + robot_id + "'");
  return it->second.availability;
}

void RobotsRepository::acquire_leases(const std::string& robot_id,
                                      const senml::CapabilitySet& tags,
                                      const std::string& assignment_id) {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) throw NotFoundError("unknown robot '" + robot_id + "'");
  Entry& e = it->second;

  senml::CapabilitySet actuators;
  for (const auto& a : e.desc.static_ch.actuators) actuators.insert(a.name);

  // Conflict check first: acquisition is all-or-nothing.
  for (const auto& tag : tags) {
    if (!actuators.contains(tag)) continue;
    auto held = e.actuator_leases.find(tag);
    if (held != e.actuator_leases.end() && held->second != assignment_id)
      throw LeaseConflict("actuator '" + tag + "' of robot '" + robot_id +
                          "' is leased to assignment " + held->second);
  }
  for (const auto& tag : tags) {
    if (actuators.contains(tag))
      e.actuator_leases[tag] = assignment_id;
    else
      e.sensor_leases[tag].insert(assignment_id);  // sensors and task tags are shareable
  }
}

void RobotsRepository::release_leases(const std::string& robot_id,
                                      const std::string& assignment_id) {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) return;
  Entry& e = it->second;
  for (auto a = e.actuator_leases.begin(); a != e.actuator_leases.end();)
    a = (a->second == assignment_id) ? e.actuator_leases.erase(a) : std::next(a);
  for (auto s = e.sensor_leases.begin(); s != e.sensor_leases.end();) {
    s->second.erase(assignment_id);
    s = s->second.empty() ? e.sensor_leases.erase(s) : std::next(s);
  }
}

bool RobotsRepository::has_lease(const std::string& robot_id,
                                 const std::string& assignment_id) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) return false;
  for (const auto& [tag, asg] : it->second.actuator_leases)
    if (asg == assignment_id) return true;
  for (const auto& [tag, asgs] : it->second.sensor_leases)
    if (asgs.count(assignment_id)) return true;
  return false;
}

std::size_t RobotsRepository::actuator_lease_count(const std::string& robot_id) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  return it == entries_.end() ? 0 : it->second.actuator_leases.size();
}

std::size_t RobotsRepository::sensor_lease_count(const std::string& robot_id,
                                                 const std::string& tag) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(robot_id);
  if (it == entries_.end()) return 0;
  auto s = it->second.sensor_leases.find(tag);
  return s == it->second.sensor_leases.end() ? 0 : s->second.size();
}

void RobotsRepository::persist(const Entry& e) {
  if (dir_.empty()) return;
  std::ofstream out(fs::path(dir_) / (e.desc.robot_id + ".robot.senml.json"), std::ios::trunc);
  out << senml::serialize_descriptor(e.desc);
}

void RobotsRepository::unpersist(const std::string& robot_id) {
  if (dir_.empty()) return;
  std::error_code ec;
  fs::remove(fs::path(dir_) / (robot_id + ".robot.senml.json"), ec);
}

// ---------------------------------------------------------------------------
// IaasNode

namespace {

json error_body(const std::string& msg) {
  json j;
  j["error"] = msg;
  return j;
}

net::HttpResponse error_response(int status, const std::string& msg) {
  return {status, error_body(msg).dump()};
}

json commands_to_json(const std::vector<gateway::WireCommand>& cmds) {
  json arr = json::array();
  for (const auto& c : cmds) {
    json e;
    switch (c.kind) {
      case gateway::WireCommand::Kind::kMove:
        e["kind"] = "move";
        e["x"] = c.x;
        e["y"] = c.y;
        break;
      case gateway::WireCommand::Kind::kActuate:
        e["kind"] = "actuate";
        e["tag"] = c.tag;
        break;
      case gateway::WireCommand::Kind::kSense:
        e["kind"] = "sense";
        e["tag"] = c.tag;
        break;
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

std::vector<gateway::WireCommand> commands_from_json(const nlohmann::json& arr,
                                                     const std::string& task_id) {
  std::vector<gateway::WireCommand> out;
  for (const auto& e : arr) {
    auto kind = e.at("kind").get<std::string>();
    if (kind == "move")
      out.push_back(gateway::WireCommand::move(task_id, e.at("x").get<double>(),
                                               e.at("y").get<double>()));
    else if (kind == "actuate")
      out.push_back(gateway::WireCommand::actuate(task_id, e.at("tag").get<std::string>()));
    else if (kind == "sense")
      out.push_back(gateway::WireCommand::sense(task_id, e.at("tag").get<std::string>()));
    else
      throw std::invalid_argument("unknown command kind '" + kind + "'");
  }
  return out;
}

}  // namespace

IaasNode::IaasNode(net::Transport& transport, EventLog& log, NodeConfig cfg)
    : transport_(transport),
      log_(log),
      cfg_(std::move(cfg)),
      repo_(cfg_.repo_dir),
      gateways_(cfg_.node_id, transport, log) {
  gateways_.set_notice_sink([this](const gateway::GatewayNotice& n) {
    // Monitor delivery is decoupled from the frame pump: per-robot order is
    // preserved by the transport timeline.
    transport_.schedule(0, [this, n] {
      if (n.started) {
        std::lock_guard lk(mu_);
        if (!repo_.contains(n.robot_id)) return;
        repo_.set_availability(n.robot_id, RobotState::kExecuting);
        republish_state(n.robot_id, RobotState::kExecuting);
        for (auto& [aid, a] : assignments_) {
          auto m = a.members.find(n.robot_id);
          if (m != a.members.end() && m->second.status == MemberStatus::kSent)
            set_member_status(a, m->second, MemberStatus::kRunning);
        }
      } else if (n.event) {
        on_robot_event(n.robot_id, *n.event);
      }
    });
  });
}

std::string IaasNode::start() {
  endpoint_ =
      transport_.register_endpoint(cfg_.node_id, [this](const net::HttpRequest& r) { return handle_http(r); });

  if (!cfg_.marketplace_uri.empty()) {
    // Standing list subscription: keeps the presence cache warm so
    // discovery never needs a marketplace round trip.
    net::HttpRequest req;
    req.method = "POST";
    req.path = "/robots";
    req.query["fromuri"] = endpoint_ + "/presence/notify";
    req.from = endpoint_;
    transport_.send(cfg_.marketplace_uri + "/robots?fromuri=" + endpoint_ + "/presence/notify",
                    std::move(req), [this](const net::HttpResponse& resp) {
                      std::lock_guard lk(mu_);
                      marketplace_ok_ = resp.ok();
                      if (!resp.ok())
                        log_.record(transport_.now_ms(), cfg_.node_id, "marketplace-unreachable",
                                    {{"status", resp.status}});
                    });
  }

  if (!cfg_.metadata_dir.empty() && fs::exists(cfg_.metadata_dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg_.metadata_dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      std::ifstream in(p);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      add_robot(text);
    }
  }
  return endpoint_;
}

void IaasNode::stop() {
  if (!endpoint_.empty()) transport_.unregister_endpoint(endpoint_);
  endpoint_.clear();
}

// --- O&M manager ------------------------------------------------------------

std::string IaasNode::add_robot(const std::string& metadata_doc) {
  std::lock_guard lk(mu_);
  auto d = senml::parse_descriptor(metadata_doc);
  if (d.robot_id.empty()) d.robot_id = cfg_.node_id + "-r" + std::to_string(next_robot_++);
  senml::validate(d);
  if (!senml::is_publishable(d))
    throw senml::ValidationError("descriptor has an empty capability set", "document");

  repo_.add(d);  // throws ConflictError on duplicate ids

  auto robot = std::make_shared<gateway::SimRobot>(
      d, gateway::FaultModel{cfg_.fault_probability},
      util::fnv1a(d.robot_id, cfg_.seed ^ 0x9e3779b97f4a7c15ull));
  robots_[d.robot_id] = robot;
  std::string protocol = d.interaction.protocol.empty() ? cfg_.robot_protocol : d.interaction.protocol;
  gateways_.bind_robot(protocol, robot);

  log_.record(transport_.now_ms(), cfg_.node_id, "robot-added",
              {{"robotid", d.robot_id}, {"caps", senml::capability_set(d).to_string()}});
  publish_to_marketplace(d, d.robot_id);
  return d.robot_id;
}

void IaasNode::publish_to_marketplace(const senml::RobotDescriptor& d,
                                      const std::string& robot_id) {
  if (cfg_.marketplace_uri.empty()) return;
  net::HttpRequest req;
  req.method = "POST";
  req.path = "/robots";
  req.query["owner"] = endpoint_;
  req.body = senml::serialize_descriptor(d);
  req.from = endpoint_;
  transport_.send(cfg_.marketplace_uri + "/robots?owner=" + endpoint_, std::move(req),
                  [this, robot_id](const net::HttpResponse& resp) {
                    std::lock_guard lk(mu_);
                    if (resp.ok()) {
                      marketplace_ok_ = true;
                      return;
                    }
                    if (resp.status == 503) marketplace_ok_ = false;
                    // Publication refused: roll the local add back.
                    log_.record(transport_.now_ms(), cfg_.node_id, "add-rolled-back",
                                {{"robotid", robot_id}, {"status", resp.status}});
                    if (repo_.contains(robot_id)) repo_.remove(robot_id);
                    gateways_.unbind_robot(robot_id);
                    robots_.erase(robot_id);
                  });
}

void IaasNode::remove_robot(const std::string& robot_id) {
  std::lock_guard lk(mu_);
  if (!repo_.contains(robot_id)) throw NotFoundError("unknown robot '" + robot_id + "'");
  if (repo_.actuator_lease_count(robot_id) > 0 || has_live_member(robot_id))
    throw BusyError("robot '" + robot_id + "' is part of a live assignment");

  if (!cfg_.marketplace_uri.empty()) {
    net::HttpRequest req;
    req.method = "DELETE";
    req.path = "/robots/" + robot_id;
    req.query["owner"] = endpoint_;
    req.from = endpoint_;
    transport_.send(cfg_.marketplace_uri + "/robots/" + robot_id + "?owner=" + endpoint_,
                    std::move(req), nullptr);
  }
  gateways_.unbind_robot(robot_id);
  robots_.erase(robot_id);
  repo_.remove(robot_id);
  log_.record(transport_.now_ms(), cfg_.node_id, "robot-removed", {{"robotid", robot_id}});
}

// --- discovery ---------------------------------------------------------------

DiscoveryResult IaasNode::discover(const senml::CapabilitySet& required) const {
  std::lock_guard lk(mu_);
  DiscoveryResult out;
  out.degraded = !marketplace_ok_;

  for (const auto& d : repo_.list()) {
    auto caps = senml::capability_set(d);
    bool relevant = required.empty();  // partial contributors matter for multi-robot covers
    for (const auto& t : required)
      if (caps.contains(t)) relevant = true;
    if (!relevant) continue;
    if (repo_.availability(d.robot_id) != RobotState::kIdle) continue;
    coalition::Candidate c;
    c.robot_id = d.robot_id;
    c.owner_uri = endpoint_;
    c.caps = std::move(caps);
    c.x = d.dynamic.x;
    c.y = d.dynamic.y;
    c.local = true;
    out.candidates.push_back(std::move(c));
  }

  for (const auto& [rid, entry] : presence_cache_) {
    if (entry.owner_uri == endpoint_) continue;  // own robots come from the repository
    if (repo_.contains(rid)) continue;
    if (entry.state != RobotState::kIdle) continue;
    bool relevant = required.empty();
    for (const auto& t : required)
      if (entry.caps.contains(t)) relevant = true;
    if (!relevant) continue;
    coalition::Candidate c;
    c.robot_id = rid;
    c.owner_uri = entry.owner_uri;
    c.caps = entry.caps;
    c.x = entry.x;
    c.y = entry.y;
    c.local = false;
    out.candidates.push_back(std::move(c));
  }

  std::sort(out.candidates.begin(), out.candidates.end(),
            [](const auto& a, const auto& b) { return a.robot_id < b.robot_id; });
  return out;
}

// --- request handling ---------------------------------------------------------

std::string IaasNode::handle_request(ServiceRequest req) {
  std::lock_guard lk(mu_);
  if (req.required.empty())
    throw std::invalid_argument("service request requires a non-empty capability set");
  if (req.request_id.empty())
    req.request_id = cfg_.node_id + "-req-" + std::to_string(next_assignment_);
  if (req.task.task_id.empty()) req.task.task_id = req.request_id + "-task";

  log_.record(transport_.now_ms(), cfg_.node_id, "request-received",
              {{"requestid", req.request_id},
               {"caps", req.required.to_string()},
               {"origin", req.origin == RequestOrigin::kPaas ? "paas" : "peer-iaas"}});

  // Local-sufficiency fast path: a single idle local robot covering the
  // whole request avoids any marketplace-backed discovery round.
  std::vector<coalition::Candidate> pool;
  for (const auto& d : repo_.list()) {
    if (repo_.availability(d.robot_id) != RobotState::kIdle) continue;
    auto caps = senml::capability_set(d);
    if (!caps.covers(req.required)) continue;
    coalition::Candidate c;
    c.robot_id = d.robot_id;
    c.owner_uri = endpoint_;
    c.caps = std::move(caps);
    c.x = d.dynamic.x;
    c.y = d.dynamic.y;
    c.local = true;
    pool.push_back(std::move(c));
  }
  bool fast_path = !pool.empty();
  if (!fast_path) pool = discover(req.required).candidates;

  auto coal = coalition::form_coalition(pool, req.required, req.task.site_x, req.task.site_y,
                                        cfg_.cost);

  Assignment a;
  a.id = cfg_.node_id + "-asg-" + std::to_string(next_assignment_++);
  a.request = std::move(req);
  a.coalition = coal;

  std::vector<senml::RobotDescriptor> member_descs;
  for (const auto& m : coal.members) {
    if (auto d = repo_.descriptor(m.robot_id)) {
      member_descs.push_back(*d);
    } else {
      auto it = presence_cache_.find(m.robot_id);
      if (it != presence_cache_.end()) member_descs.push_back(cache_descriptor(it->first));
    }
  }
  a.composite = senml::merge_descriptors(member_descs);

  for (const auto& m : coal.members) {
    SubTask st;
    st.task_id = "t" + std::to_string(next_task_++);
    st.robot_id = m.robot_id;
    st.owner_uri = m.owner_uri;
    st.local = m.local;
    st.assigned_tags = m.assigned_tags;
    senml::RobotDescriptor d;
    if (auto local = repo_.descriptor(m.robot_id)) d = *local;
    else d = cache_descriptor(m.robot_id);
    st.commands = build_commands(st.task_id, d, m.assigned_tags, a.request.task);
    a.members.emplace(m.robot_id, std::move(st));
  }

  auto [it, ok] = assignments_.emplace(a.id, std::move(a));
  (void)ok;
  log_.record(transport_.now_ms(), cfg_.node_id, "coalition-formed",
              {{"assignmentid", it->first},
               {"members", json::parse(it->second.composite.to_json_string())["members"]},
               {"cost", it->second.coalition.cost},
               {"fast_path", fast_path}});
  delegate(it->second);
  return it->first;
}

// --- delegation ----------------------------------------------------------------

std::vector<gateway::WireCommand> IaasNode::build_commands(const std::string& task_id,
                                                           const senml::RobotDescriptor& d,
                                                           const senml::CapabilitySet& tags,
                                                           const TaskSpec& task) const {
  senml::CapabilitySet sensors, actuators;
  for (const auto& s : d.static_ch.sensors) sensors.insert(s.name);
  for (const auto& a : d.static_ch.actuators) actuators.insert(a.name);

  std::vector<gateway::WireCommand> cmds;
  if (tags.contains("movement-motor") && actuators.contains("movement-motor"))
    cmds.push_back(gateway::WireCommand::move(task_id, task.site_x, task.site_y));
  for (const auto& t : tags) {
    if (t == "movement-motor") continue;
    if (actuators.contains(t)) cmds.push_back(gateway::WireCommand::actuate(task_id, t));
  }
  for (const auto& t : tags)
    if (sensors.contains(t)) cmds.push_back(gateway::WireCommand::sense(task_id, t));
  // Behavioral tags carry no physical command; supporting the task is enough.
  return cmds;
}

senml::CapabilitySet IaasNode::actuator_tags_of(const senml::RobotDescriptor& d) const {
  senml::CapabilitySet out;
  for (const auto& a : d.static_ch.actuators) out.insert(a.name);
  return out;
}

void IaasNode::delegate(Assignment& a) {
  // Lease every local member before any dispatch: an assignment either
  // holds all of its local leases or none.
  std::vector<std::string> leased;
  try {
    for (auto& [rid, st] : a.members) {
      if (!st.local || st.status != MemberStatus::kPending) continue;
      repo_.acquire_leases(rid, st.assigned_tags, a.id);
      leased.push_back(rid);
    }
  } catch (const LeaseConflict&) {
    for (const auto& rid : leased) repo_.release_leases(rid, a.id);
    a.status = AssignmentStatus::kFailed;
    log_.record(transport_.now_ms(), cfg_.node_id, "assignment-aborted",
                {{"assignmentid", a.id}, {"reason", "lease-conflict"}});
    throw;
  }

  for (auto& [rid, st] : a.members) {
    if (st.status != MemberStatus::kPending) continue;
    if (st.local) dispatch_local(a, st);
    else dispatch_remote(a, st);
  }
}

void IaasNode::dispatch_local(Assignment& a, SubTask& st) {
  wire_tasks_[st.task_id] = a.id;
  repo_.set_availability(st.robot_id, RobotState::kAssigned);
  republish_state(st.robot_id, RobotState::kAssigned);
  auto* gw = gateways_.find_for_robot(st.robot_id);
  if (!gw) {
    on_member_terminal(a, st, true, "no gateway for robot");
    return;
  }
  try {
    gw->send(st.robot_id, st.commands, a.request.task.duration_ms);
  } catch (const gateway::Gateway::RoutingError& e) {
    repo_.release_leases(st.robot_id, a.id);
    on_member_terminal(a, st, true, e.what());
    return;
  }
  st.sent_at_ms = transport_.now_ms();
  set_member_status(a, st, MemberStatus::kSent);
}

void IaasNode::dispatch_remote(Assignment& a, SubTask& st) {
  json body;
  body["assignmentid"] = a.id;
  body["robotid"] = st.robot_id;
  body["taskid"] = st.task_id;
  body["tags"] = std::vector<std::string>(st.assigned_tags.begin(), st.assigned_tags.end());
  body["commands"] = commands_to_json(st.commands);
  body["duration_ms"] = a.request.task.duration_ms;
  body["replyto"] = endpoint_;

  net::HttpRequest req;
  req.method = "POST";
  req.path = "/federation/tasks";
  req.body = body.dump();
  req.from = endpoint_;

  st.sent_at_ms = transport_.now_ms();
  set_member_status(a, st, MemberStatus::kSent);
  log_.record(st.sent_at_ms, cfg_.node_id, "federation-send",
              {{"assignmentid", a.id}, {"robotid", st.robot_id}, {"to", st.owner_uri}});

  std::string aid = a.id, rid = st.robot_id;
  transport_.send(st.owner_uri + "/federation/tasks", std::move(req),
                  [this, aid, rid](const net::HttpResponse& resp) {
                    std::lock_guard lk(mu_);
                    auto it = assignments_.find(aid);
                    if (it == assignments_.end()) return;
                    auto m = it->second.members.find(rid);
                    if (m == it->second.members.end()) return;
                    if (resp.ok()) {
                      auto j = nlohmann::json::parse(resp.body);
                      m->second.received_at_ms = j.value("received_ms", -1.0);
                      log_.record(transport_.now_ms(), cfg_.node_id, "tad",
                                  {{"assignmentid", aid},
                                   {"robotid", rid},
                                   {"receiver", m->second.owner_uri},
                                   {"send_ms", m->second.sent_at_ms},
                                   {"recv_ms", m->second.received_at_ms}});
                    } else if (m->second.status == MemberStatus::kSent ||
                               m->second.status == MemberStatus::kRunning) {
                      std::string reason = "remote rejection (" + std::to_string(resp.status) + ")";
                      on_member_terminal(it->second, m->second, true, reason);
                    }
                  });

  // Asynchronous call guard: a peer that never answers fails the member.
  std::string aid2 = a.id, rid2 = st.robot_id;
  transport_.schedule(cfg_.federation_timeout_ms, [this, aid2, rid2] {
    std::lock_guard lk(mu_);
    auto it = assignments_.find(aid2);
    if (it == assignments_.end()) return;
    auto m = it->second.members.find(rid2);
    if (m == it->second.members.end()) return;
    if (m->second.status == MemberStatus::kSent && m->second.received_at_ms < 0)
      on_member_terminal(it->second, m->second, true, "federation timeout");
  });
}

// --- monitor ---------------------------------------------------------------------

void IaasNode::on_robot_event(const std::string& robot_id, const gateway::WireEvent& event) {
  std::lock_guard lk(mu_);
  if (!robots_.count(robot_id)) {
    log_.record(transport_.now_ms(), cfg_.node_id, "event-dropped",
                {{"robotid", robot_id}, {"reason", "unknown robot"}});
    return;
  }

  if (event.kind == gateway::WireEvent::Kind::kSensed) {
    log_.record(transport_.now_ms(), cfg_.node_id, "sensed",
                {{"robotid", robot_id}, {"tag", event.tag}, {"value", event.value}});
    return;
  }

  bool failed = event.kind == gateway::WireEvent::Kind::kFail;

  // Terminal event: settle availability, release the lease, re-publish.
  auto robot = robots_.find(robot_id)->second;
  if (!failed) {
    // Keep the repository's view of the robot position current.
    if (auto d = repo_.descriptor(robot_id)) {
      senml::RobotDescriptor upd = *d;
      upd.dynamic.x = robot->x();
      upd.dynamic.y = robot->y();
      repo_.remove(robot_id);
      repo_.add(upd);
    }
  }
  RobotState new_state = failed ? RobotState::kFailed : RobotState::kIdle;
  if (robot->active_task_count() > 0 && !failed) new_state = RobotState::kExecuting;
  repo_.set_availability(robot_id, new_state);
  republish_state(robot_id, new_state);

  // Local assignment member or a sub-task delegated to us by a peer.
  auto wt = wire_tasks_.find(event.task_id);
  if (wt != wire_tasks_.end()) {
    auto aid = wt->second;
    wire_tasks_.erase(wt);
    auto it = assignments_.find(aid);
    if (it != assignments_.end()) {
      auto m = it->second.members.find(robot_id);
      if (m != it->second.members.end()) {
        repo_.release_leases(robot_id, aid);
        on_member_terminal(it->second, m->second, failed, event.reason);
      }
    }
    return;
  }

  auto ft = foreign_tasks_.find(event.task_id);
  if (ft != foreign_tasks_.end()) {
    ForeignTask task = ft->second;
    foreign_tasks_.erase(ft);
    repo_.release_leases(robot_id, task.origin_assignment);
    json body;
    body["assignmentid"] = task.origin_assignment;
    body["robotid"] = robot_id;
    body["taskid"] = event.task_id;
    body["status"] = failed ? "FAILED" : "DONE";
    body["reason"] = event.reason;
    net::HttpRequest req;
    req.method = "POST";
    req.path = "/federation/events";
    req.body = body.dump();
    req.from = endpoint_;
    transport_.send(task.origin_uri + "/federation/events", std::move(req), nullptr);
  }
}

void IaasNode::set_member_status(Assignment& a, SubTask& st, MemberStatus s) {
  if (!member_transition_ok(st.status, s)) return;
  st.status = s;
  log_.record(transport_.now_ms(), cfg_.node_id, "member-status",
              {{"assignmentid", a.id}, {"robotid", st.robot_id}, {"status", to_string(s)}});
}

void IaasNode::on_member_terminal(Assignment& a, SubTask& st, bool failed,
                                  const std::string& reason) {
  set_member_status(a, st, failed ? MemberStatus::kFailed : MemberStatus::kDone);
  if (failed) {
    st.fail_reason = reason;
    log_.record(transport_.now_ms(), cfg_.node_id, "member-failed",
                {{"assignmentid", a.id}, {"robotid", st.robot_id}, {"reason", reason}});
    replan(a, st.robot_id);
    return;
  }
  finish_if_complete(a);
}

void IaasNode::replan(Assignment& a, const std::string& failed_robot) {
  if (a.replanned) {
    finish_if_complete(a);
    return;
  }
  a.replanned = true;

  // Tags still uncovered by surviving members.
  senml::CapabilitySet covered;
  for (const auto& [rid, st] : a.members)
    if (st.status != MemberStatus::kFailed) covered.merge(st.assigned_tags);
  senml::CapabilitySet remaining;
  for (const auto& t : a.request.required)
    if (!covered.contains(t)) remaining.insert(t);
  if (remaining.empty()) {
    finish_if_complete(a);
    return;
  }

  auto pool = discover(remaining).candidates;
  std::erase_if(pool, [&](const coalition::Candidate& c) {
    return c.robot_id == failed_robot || a.members.count(c.robot_id) > 0;
  });

  log_.record(transport_.now_ms(), cfg_.node_id, "replan",
              {{"assignmentid", a.id},
               {"failed", failed_robot},
               {"remaining", remaining.to_string()}});
  try {
    auto coal = coalition::form_coalition(pool, remaining, a.request.task.site_x,
                                          a.request.task.site_y, cfg_.cost);
    for (const auto& m : coal.members) {
      SubTask st;
      st.task_id = "t" + std::to_string(next_task_++);
      st.robot_id = m.robot_id;
      st.owner_uri = m.owner_uri;
      st.local = m.local;
      st.assigned_tags = m.assigned_tags;
      senml::RobotDescriptor d;
      if (auto local = repo_.descriptor(m.robot_id)) d = *local;
      else d = cache_descriptor(m.robot_id);
      st.commands = build_commands(st.task_id, d, m.assigned_tags, a.request.task);
      a.members.emplace(m.robot_id, std::move(st));
    }
    delegate(a);
  } catch (const coalition::Unsatisfiable& e) {
    log_.record(transport_.now_ms(), cfg_.node_id, "replan-unsatisfiable",
                {{"assignmentid", a.id}, {"error", e.what()}});
    finish_if_complete(a);
  } catch (const LeaseConflict&) {
    finish_if_complete(a);
  }
}

void IaasNode::finish_if_complete(Assignment& a) {
  if (a.status != AssignmentStatus::kRunning) return;
  bool any_failed = false;
  for (const auto& [rid, st] : a.members) {
    if (st.status != MemberStatus::kDone && st.status != MemberStatus::kFailed) return;
    if (st.status == MemberStatus::kFailed) any_failed = true;
  }
  a.status = any_failed ? AssignmentStatus::kFailed : AssignmentStatus::kDone;
  log_.record(transport_.now_ms(), cfg_.node_id,
              any_failed ? "assignment-failed" : "assignment-done", {{"assignmentid", a.id}});
}

void IaasNode::republish_state(const std::string& robot_id, RobotState s) {
  if (cfg_.marketplace_uri.empty()) return;
  json body;
  body["state"] = senml::to_string(s);
  if (auto d = repo_.descriptor(robot_id))
    body["descriptor"] = nlohmann::json::parse(senml::serialize_descriptor(*d));
  net::HttpRequest req;
  req.method = "PUT";
  req.path = "/robots/" + robot_id;
  req.query["owner"] = endpoint_;
  req.body = body.dump();
  req.from = endpoint_;
  transport_.send(cfg_.marketplace_uri + "/robots/" + robot_id + "?owner=" + endpoint_,
                  std::move(req), [this](const net::HttpResponse& resp) {
                    if (resp.status == 503) {
                      std::lock_guard lk(mu_);
                      marketplace_ok_ = false;
                    }
                  });
}

// --- presence cache -----------------------------------------------------------

void IaasNode::handle_presence_notify(const nlohmann::json& body) {
  std::lock_guard lk(mu_);
  auto rid = body.at("robotid").get<std::string>();
  auto version = body.at("version").get<std::uint64_t>();
  auto state = senml::robot_state_from_string(body.at("state").get<std::string>());

  auto it = presence_cache_.find(rid);
  if (it != presence_cache_.end() && version <= it->second.version) return;  // stale or duplicate

  CacheEntry e = (it != presence_cache_.end()) ? it->second : CacheEntry{};
  e.version = version;
  e.state = state;
  if (body.contains("owner")) e.owner_uri = body.at("owner").get<std::string>();
  if (body.contains("descriptor")) {
    auto d = senml::parse_descriptor(body.at("descriptor").dump());
    e.caps = senml::capability_set(d);
    e.x = d.dynamic.x;
    e.y = d.dynamic.y;
    descriptors_[rid] = std::move(d);
  }
  log_.record(transport_.now_ms(), cfg_.node_id, "presence-update",
              {{"robotid", rid}, {"state", senml::to_string(state)}, {"version", version}});
  if (state == RobotState::kOffline) {
    presence_cache_.erase(rid);
    descriptors_.erase(rid);
    return;
  }
  presence_cache_[rid] = std::move(e);
}

// --- REST --------------------------------------------------------------------

net::HttpResponse IaasNode::handle_http(const net::HttpRequest& req) {
  try {
    if (req.path.empty()) return error_response(404, "empty path");
    auto segs = util::split(req.path.substr(req.path.front() == '/' ? 1 : 0), '/');
    if (segs.empty()) return error_response(404, "no such resource");

    if (segs[0] == "admin") return handle_admin(req, segs);
    if (segs[0] == "services") return handle_services(req, segs);
    if (segs[0] == "federation") return handle_federation(req, segs);
    if (segs[0] == "presence" && segs.size() == 2 && segs[1] == "notify" && req.method == "POST") {
      handle_presence_notify(nlohmann::json::parse(req.body));
      return {200, "{}"};
    }
    return error_response(404, "no route for " + net::describe(req));
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const BusyError& e) {
    return error_response(409, e.what());
  } catch (const LeaseConflict& e) {
    return error_response(409, e.what());
  } catch (const coalition::Unsatisfiable& e) {
    json j = error_body(e.what());
    j["missing"] = e.missing;
    return {409, j.dump()};
  } catch (const senml::ConflictError& e) {
    return error_response(409, e.what());
  } catch (const senml::DescriptorError& e) {
    return error_response(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(400, e.what());
  }
}

net::HttpResponse IaasNode::handle_admin(const net::HttpRequest& req,
                                         const std::vector<std::string>& segs) {
  if (segs.size() == 2 && segs[1] == "robots" && req.method == "POST") {
    json j;
    j["robotid"] = add_robot(req.body);
    return {201, j.dump()};
  }
  if (segs.size() == 3 && segs[1] == "robots" && req.method == "DELETE") {
    remove_robot(segs[2]);
    return {200, "{}"};
  }
  return error_response(404, "no route for " + net::describe(req));
}

net::HttpResponse IaasNode::handle_services(const net::HttpRequest& req,
                                            const std::vector<std::string>& segs) {
  if (segs.size() == 2 && segs[1] == "requests" && req.method == "POST") {
    auto body = nlohmann::json::parse(req.body);
    ServiceRequest sr;
    sr.request_id = body.value("requestid", "");
    for (const auto& t : body.at("caps")) sr.required.insert(t.get<std::string>());
    if (body.contains("task")) {
      const auto& t = body.at("task");
      sr.task.task_id = t.value("taskid", "");
      if (t.contains("site")) {
        sr.task.site_x = t.at("site").at(0).get<double>();
        sr.task.site_y = t.at("site").at(1).get<double>();
      }
      sr.task.kind = t.value("kind", "");
      sr.task.duration_ms = t.value("duration_ms", 100.0);
    }
    auto origin = body.value("origin", "paas");
    sr.origin = origin == "peer-iaas" ? RequestOrigin::kPeerIaas : RequestOrigin::kPaas;
    sr.origin_uri = body.value("origin_uri", req.from);
    json j;
    j["assignmentid"] = handle_request(std::move(sr));
    return {201, j.dump()};
  }
  if (segs.size() == 3 && segs[1] == "requests" && req.method == "GET") {
    std::lock_guard lk(mu_);
    auto it = assignments_.find(segs[2]);
    if (it == assignments_.end()) return error_response(404, "unknown assignment " + segs[2]);
    const Assignment& a = it->second;
    json j;
    j["assignmentid"] = a.id;
    j["status"] = to_string(a.status);
    j["cost"] = a.coalition.cost;
    j["replanned"] = a.replanned;
    j["composite"] = nlohmann::json::parse(a.composite.to_json_string());
    json members = json::array();
    for (const auto& [rid, st] : a.members) {
      json m;
      m["robotid"] = rid;
      m["owner"] = st.owner_uri;
      m["local"] = st.local;
      m["status"] = to_string(st.status);
      m["tags"] = std::vector<std::string>(st.assigned_tags.begin(), st.assigned_tags.end());
      if (!st.fail_reason.empty()) m["reason"] = st.fail_reason;
      members.push_back(std::move(m));
    }
    j["members"] = std::move(members);
    return {200, j.dump()};
  }
  return error_response(404, "no route for " + net::describe(req));
}

net::HttpResponse IaasNode::handle_federation(const net::HttpRequest& req,
                                              const std::vector<std::string>& segs) {
  if (segs.size() == 2 && segs[1] == "tasks" && req.method == "POST") {
    std::lock_guard lk(mu_);
    auto body = nlohmann::json::parse(req.body);
    auto rid = body.at("robotid").get<std::string>();
    auto task_id = body.at("taskid").get<std::string>();
    double received = transport_.now_ms();
    if (!repo_.contains(rid)) return error_response(404, "unknown robot '" + rid + "'");

    senml::CapabilitySet tags;
    for (const auto& t : body.at("tags")) tags.insert(t.get<std::string>());
    auto origin_assignment = body.at("assignmentid").get<std::string>();
    repo_.acquire_leases(rid, tags, origin_assignment);  // throws LeaseConflict -> 409

    auto commands = commands_from_json(body.at("commands"), task_id);
    auto* gw = gateways_.find_for_robot(rid);
    if (!gw) {
      repo_.release_leases(rid, origin_assignment);
      return error_response(409, "no gateway for robot '" + rid + "'");
    }
    try {
      gw->send(rid, commands, body.value("duration_ms", 100.0));
    } catch (const gateway::Gateway::RoutingError& e) {
      repo_.release_leases(rid, origin_assignment);
      return error_response(409, e.what());
    }
    foreign_tasks_[task_id] =
        ForeignTask{task_id, rid, body.value("replyto", req.from), origin_assignment};
    repo_.set_availability(rid, RobotState::kAssigned);
    republish_state(rid, RobotState::kAssigned);
    log_.record(received, cfg_.node_id, "federation-received",
                {{"assignmentid", origin_assignment}, {"robotid", rid}, {"from", req.from}});
    json j;
    j["received_ms"] = received;
    j["robotid"] = rid;
    return {200, j.dump()};
  }

  if (segs.size() == 2 && segs[1] == "events" && req.method == "POST") {
    std::lock_guard lk(mu_);
    auto body = nlohmann::json::parse(req.body);
    auto aid = body.at("assignmentid").get<std::string>();
    auto rid = body.at("robotid").get<std::string>();
    auto it = assignments_.find(aid);
    if (it == assignments_.end()) return error_response(404, "unknown assignment " + aid);
    auto m = it->second.members.find(rid);
    if (m == it->second.members.end()) return error_response(404, "unknown member " + rid);
    bool failed = body.at("status").get<std::string>() == "FAILED";
    on_member_terminal(it->second, m->second, failed, body.value("reason", ""));
    return {200, "{}"};
  }
  return error_response(404, "no route for " + net::describe(req));
}

// --- misc ------------------------------------------------------------------------

const Assignment* IaasNode::assignment(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = assignments_.find(id);
  return it == assignments_.end() ? nullptr : &it->second;
}

std::vector<std::string> IaasNode::assignment_ids() const {
  std::lock_guard lk(mu_);
  std::vector<std::string> out;
  for (const auto& [id, a] : assignments_) out.push_back(id);
  return out;
}

std::shared_ptr<gateway::SimRobot> IaasNode::robot(const std::string& robot_id) {
  std::lock_guard lk(mu_);
  auto it = robots_.find(robot_id);
  return it == robots_.end() ? nullptr : it->second;
}

bool IaasNode::converged_with(const presence::Marketplace& m) const {
  std::lock_guard lk(mu_);
  for (const auto& d : repo_.list()) {
    auto rec = m.record(d.robot_id);
    if (!rec) return false;
    if (rec->owner_iaas != endpoint_) return false;
    if (rec->state != repo_.availability(d.robot_id)) return false;
  }
  return true;
}

bool IaasNode::has_live_member(const std::string& robot_id) const {
  for (const auto& [aid, a] : assignments_) {
    auto m = a.members.find(robot_id);
    if (m == a.members.end()) continue;
    if (m->second.status != MemberStatus::kDone && m->second.status != MemberStatus::kFailed)
      return true;
  }
  return false;
}

senml::RobotDescriptor IaasNode::cache_descriptor(const std::string& robot_id) const {
  auto it = descriptors_.find(robot_id);
  if (it == descriptors_.end())
    throw NotFoundError("no cached descriptor for '" + robot_id + "'");
  return it->second;
}

}  // namespace robocloud::iaas
