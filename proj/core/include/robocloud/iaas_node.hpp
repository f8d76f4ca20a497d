#pragma once

// One IaaS-for-robots node. Hosts the local robots repository (with the
// lease table that enforces actuator exclusivity), publishes robots to the
// marketplace, keeps a presence cache fed by a standing subscription,
// forms coalitions for incoming service requests, composes descriptors,
// delegates sub-tasks to local gateways or to peer infrastructures, and
// monitors robot completion events.
//
// REST surface:
//   POST   /admin/robots                add a robot from a metadata document
//   DELETE /admin/robots/{robotid}      remove a robot
//   POST   /services/requests           submit a service request
//   GET    /services/requests/{id}      assignment status
//   POST   /federation/tasks            sub-task delegated by a peer node
//   POST   /federation/events           completion events from a peer node
//   POST   /presence/notify             marketplace notification callback

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robocloud/coalition.hpp"
#include "robocloud/descriptor.hpp"
#include "robocloud/gateway.hpp"
#include "robocloud/marketplace.hpp"
#include "robocloud/transport.hpp"

namespace robocloud::iaas {

struct TaskSpec {
  std::string task_id;
  double site_x = 0;
  double site_y = 0;
  std::string kind;          // e.g. "fire-suppression"
  double duration_ms = 100;  // estimated sub-task duration
};

enum class RequestOrigin { kPaas, kPeerIaas };

struct ServiceRequest {
  std::string request_id;
  senml::CapabilitySet required;
  TaskSpec task;
  RequestOrigin origin = RequestOrigin::kPaas;
  std::string origin_uri;  // peer endpoint when origin == kPeerIaas
};

enum class MemberStatus { kPending, kSent, kRunning, kDone, kFailed };
const char* to_string(MemberStatus s);

/// Forward-only along PENDING -> SENT -> RUNNING -> {DONE, FAILED};
/// intermediate states may be skipped but never revisited.
bool member_transition_ok(MemberStatus from, MemberStatus to);

struct SubTask {
  std::string task_id;  // wire task id
  std::string robot_id;
  std::string owner_uri;  // hosting node endpoint ("" for local)
  bool local = true;
  senml::CapabilitySet assigned_tags;
  std::vector<gateway::WireCommand> commands;
  MemberStatus status = MemberStatus::kPending;
  double sent_at_ms = -1;
  double received_at_ms = -1;  // at the hosting node (TAD pairs)
  std::string fail_reason;
};

enum class AssignmentStatus { kRunning, kDone, kFailed };
const char* to_string(AssignmentStatus s);

struct Assignment {
  std::string id;
  ServiceRequest request;
  coalition::Coalition coalition;
  senml::CompositeDescriptor composite;
  std::map<std::string, SubTask> members;  // by robot_id
  AssignmentStatus status = AssignmentStatus::kRunning;
  bool replanned = false;
};

struct DiscoveryResult {
  std::vector<coalition::Candidate> candidates;  // available services only
  bool degraded = false;  // marketplace unreachable, local-only view
};

struct BusyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LeaseConflict : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Local descriptor store plus the node-level virtualization lease table:
/// one live lease per (robot, actuator tag), any number of concurrent
/// leases per (robot, sensor tag). Acquisition is atomic per robot.
class RobotsRepository {
 public:
  explicit RobotsRepository(std::string storage_dir = {});

  void add(const senml::RobotDescriptor& d);  // throws ConflictError on duplicates
  void remove(const std::string& robot_id);
  bool contains(const std::string& robot_id) const;
  std::optional<senml::RobotDescriptor> descriptor(const std::string& robot_id) const;
  std::vector<senml::RobotDescriptor> list() const;  // ordered by robot_id
  std::size_t size() const;

  void set_availability(const std::string& robot_id, senml::RobotState s);
  senml::RobotState availability(const std::string& robot_id) const;

  /// All-or-nothing: either every requested tag is leased or none are.
  /// Throws LeaseConflict when an actuator tag is already held by another
  /// assignment, NotFoundError for unknown robots.
  void acquire_leases(const std::string& robot_id, const senml::CapabilitySet& tags,
                      const std::string& assignment_id);
  void release_leases(const std::string& robot_id, const std::string& assignment_id);
  bool has_lease(const std::string& robot_id, const std::string& assignment_id) const;
  std::size_t actuator_lease_count(const std::string& robot_id) const;
  std::size_t sensor_lease_count(const std::string& robot_id, const std::string& tag) const;

 private:
  struct Entry {
    senml::RobotDescriptor desc;
    senml::RobotState availability = senml::RobotState::kIdle;
    std::map<std::string, std::string> actuator_leases;  // tag -> assignment
    std::map<std::string, std::set<std::string>> sensor_leases;  // tag -> assignments
  };
  void persist(const Entry& e);
  void unpersist(const std::string& robot_id);

  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
  std::string dir_;
};

struct NodeConfig {
  std::string node_id;          // "iaas-1"
  std::string marketplace_uri;  // marketplace endpoint, may be empty (standalone)
  std::string metadata_dir;     // robot metadata documents loaded on start
  std::string repo_dir;         // on-disk repository (optional)
  std::string robot_protocol = "simwire";
  coalition::CostParams cost;
  double fault_probability = 0.0;  // applied to robots created by this node
  double federation_timeout_ms = 25.0;  // 5x the default one-way latency
  std::uint64_t seed = 42;
};

class IaasNode {
 public:
  IaasNode(net::Transport& transport, EventLog& log, NodeConfig cfg);

  /// Registers the endpoint, opens the standing marketplace subscription
  /// and loads the metadata directory. Returns the node endpoint URI.
  std::string start();
  void stop();

  const std::string& endpoint() const { return endpoint_; }
  const NodeConfig& config() const { return cfg_; }

  // --- O&M manager ---------------------------------------------------------
  std::string add_robot(const std::string& metadata_doc);
  void remove_robot(const std::string& robot_id);

  // --- request handler / discovery / virtualization ------------------------
  std::string handle_request(ServiceRequest req);
  DiscoveryResult discover(const senml::CapabilitySet& required) const;

  // --- monitor --------------------------------------------------------------
  void on_robot_event(const std::string& robot_id, const gateway::WireEvent& event);

  const Assignment* assignment(const std::string& id) const;
  std::vector<std::string> assignment_ids() const;
  RobotsRepository& repository() { return repo_; }
  const RobotsRepository& repository() const { return repo_; }
  gateway::GatewayManager& gateways() { return gateways_; }
  std::shared_ptr<gateway::SimRobot> robot(const std::string& robot_id);
  bool marketplace_ok() const { return marketplace_ok_; }

  /// True when every local robot's marketplace record mirrors the local
  /// repository availability.
  bool converged_with(const presence::Marketplace& m) const;

 private:
  net::HttpResponse handle_http(const net::HttpRequest& req);
  net::HttpResponse handle_admin(const net::HttpRequest& req,
                                 const std::vector<std::string>& segs);
  net::HttpResponse handle_services(const net::HttpRequest& req,
                                    const std::vector<std::string>& segs);
  net::HttpResponse handle_federation(const net::HttpRequest& req,
                                      const std::vector<std::string>& segs);
  void handle_presence_notify(const nlohmann::json& body);

  void publish_to_marketplace(const senml::RobotDescriptor& d, const std::string& robot_id);
  void republish_state(const std::string& robot_id, senml::RobotState s);
  void delegate(Assignment& a);
  void dispatch_local(Assignment& a, SubTask& st);
  void dispatch_remote(Assignment& a, SubTask& st);
  void on_member_terminal(Assignment& a, SubTask& st, bool failed, const std::string& reason);
  void replan(Assignment& a, const std::string& failed_robot);
  void finish_if_complete(Assignment& a);
  void set_member_status(Assignment& a, SubTask& st, MemberStatus s);
  std::vector<gateway::WireCommand> build_commands(const std::string& task_id,
                                                   const senml::RobotDescriptor& d,
                                                   const senml::CapabilitySet& tags,
                                                   const TaskSpec& task) const;
  senml::CapabilitySet actuator_tags_of(const senml::RobotDescriptor& d) const;
  bool has_live_member(const std::string& robot_id) const;
  senml::RobotDescriptor cache_descriptor(const std::string& robot_id) const;

  net::Transport& transport_;
  EventLog& log_;
  NodeConfig cfg_;
  std::string endpoint_;
  bool marketplace_ok_ = true;

  RobotsRepository repo_;
  gateway::GatewayManager gateways_;
  std::map<std::string, std::shared_ptr<gateway::SimRobot>> robots_;

  struct CacheEntry {
    std::string owner_uri;
    senml::CapabilitySet caps;
    double x = 0, y = 0;
    senml::RobotState state = senml::RobotState::kIdle;
    std::uint64_t version = 0;
  };
  std::map<std::string, CacheEntry> presence_cache_;
  std::map<std::string, senml::RobotDescriptor> descriptors_;  // remote, from notifications

  struct ForeignTask {
    std::string task_id;
    std::string robot_id;
    std::string origin_uri;
    std::string origin_assignment;
  };

  std::map<std::string, Assignment> assignments_;
  std::map<std::string, std::string> wire_tasks_;    // wire task id -> assignment id
  std::map<std::string, ForeignTask> foreign_tasks_;  // sub-tasks delegated by peers

  mutable std::recursive_mutex mu_;
  std::uint64_t next_robot_ = 1;
  std::uint64_t next_assignment_ = 1;
  std::uint64_t next_task_ = 1;
};

}  // namespace robocloud::iaas
