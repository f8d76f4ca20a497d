#pragma once

// Scenario engine: boots a complete world (marketplace or overlay,
// infrastructure nodes, gateways, simulated robots) from a declarative
// config, runs scripted service requests, and drives the IRDD / TAD
// measurements and the end-to-end fire-suppression run.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "robocloud/iaas_node.hpp"
#include "robocloud/marketplace.hpp"
#include "robocloud/metrics.hpp"
#include "robocloud/overlay.hpp"
#include "robocloud/sim_transport.hpp"
#include "robocloud/socket_transport.hpp"

namespace robocloud::bench {

struct TransportConfig {
  enum class Mode { kSim, kSocket };
  Mode mode = Mode::kSim;
  double latency_ms = 5.0;  // one-way message latency (sim)
  double proc_ms = 1.0;     // overlay per-packet processing delay
  double jitter_ms = 0.0;
  std::uint64_t seed = 42;
};

struct BackendConfig {
  enum class Kind { kPresence, kOverlay };
  Kind kind = Kind::kPresence;
  std::string topology = "ring";
};

struct ScriptedRequest {
  double at_ms = 0;
  std::string origin_node;  // "iaas-1"
  std::vector<std::string> caps;
  iaas::TaskSpec task;
};

struct ScenarioConfig {
  std::string scenario_id = "scenario";
  int iaas_count = 4;
  /// Robot metadata per node: file paths and/or inline documents.
  std::map<std::string, std::vector<std::string>> robot_files;
  std::map<std::string, std::vector<std::string>> robot_docs;
  TransportConfig transport;
  BackendConfig backend;
  std::vector<ScriptedRequest> script;
  double fault_probability = 0.0;  // applied to robots whose caps contain fault_tag
  std::string fault_tag;           // empty: all robots

  void validate() const;  // throws std::invalid_argument
  static ScenarioConfig from_json_string(const std::string& text);
  static ScenarioConfig from_file(const std::string& path);
  std::string to_json_string() const;
};

/// Canonical fleet documents (canonical serialized bytes).
namespace fleet {
std::string arms_mover_doc(const std::string& robot_id, double x, double y);
std::string light_kicker_doc(const std::string& robot_id, double x, double y);
std::string single_capability_doc(const std::string& robot_id, const std::string& tag,
                                  bool sensor, double x, double y);
/// The paper-style combined scout: light sensor, kicking arm and movement
/// motor on one chassis.
std::string scout_doc(const std::string& robot_id, double x, double y);
}  // namespace fleet

/// 4 infrastructures x (one arms robot + one light-kicker each).
ScenarioConfig default_scenario(int iaas_count = 4);
/// Capability-disjoint fleet whose only cover spans three remote
/// infrastructures (the TAD topology).
ScenarioConfig tad_scenario();

class ScenarioRuntime {
 public:
  explicit ScenarioRuntime(const ScenarioConfig& cfg);
  ~ScenarioRuntime();

  ScenarioRuntime(const ScenarioRuntime&) = delete;
  ScenarioRuntime& operator=(const ScenarioRuntime&) = delete;

  /// Boots every component and settles until publication converged.
  void boot();
  /// Schedules the scripted requests (issued through the front-door route
  /// table on behalf of the SaaS client).
  void run_script();
  /// Runs until `done` or the timeout. Simulated time steps the event
  /// queue; wall-clock mode polls.
  bool await(const std::function<bool()>& done, double timeout_ms);
  /// Drains all pending work (sim) / waits for quiescence (socket).
  void settle(double budget_ms = 30000);

  net::Transport& transport() { return *transport_; }
  net::SimScheduler* scheduler();  // null for socket mode
  EventLog& log() { return log_; }
  double now_ms() const { return transport_->now_ms(); }

  presence::Marketplace* marketplace() { return marketplace_.get(); }
  iaas::IaasNode* node(const std::string& node_id);
  overlay::OverlayNode* overlay_node(int id);
  std::vector<std::string> node_ids() const;
  const ScenarioConfig& config() const { return cfg_; }
  /// Front door: static route table from node id to endpoint.
  std::string route(const std::string& node_id) const;

  bool all_robots_idle();
  bool marketplace_converged();

 private:
  ScenarioConfig cfg_;
  EventLog log_;
  std::unique_ptr<net::SimTransport> sim_;
  std::unique_ptr<net::SocketTransport> socket_;
  net::Transport* transport_ = nullptr;

  std::unique_ptr<presence::Marketplace> marketplace_;
  std::map<std::string, std::unique_ptr<iaas::IaasNode>> nodes_;
  std::map<int, std::unique_ptr<overlay::OverlayNode>> overlays_;
  std::map<std::string, std::string> routes_;  // node id -> endpoint
};

struct RunReport {
  bool aborted = false;
  std::string abort_reason;
  std::vector<MetricSample> samples;
  std::string event_log_json;
  std::size_t marketplace_records = 0;
  std::map<std::string, std::string> assignments;  // id -> status
  std::size_t censored = 0;
};

RunReport run_scenario(const ScenarioConfig& cfg);

struct IrddOptions {
  std::vector<int> iaas_counts{2, 3, 4, 6, 8};
  std::vector<std::string> backends{"presence", "overlay"};
  int reps = 30;
  TransportConfig transport;
  std::string topology = "ring";
  double rep_interval_ms = 200;
};
std::vector<MetricSample> measure_irdd(const IrddOptions& opt, std::size_t* censored = nullptr);

struct TadOptions {
  int iaas_count = 4;
  int reps = 30;
  TransportConfig transport;
  std::string topology = "ring";
  double rep_interval_ms = 500;
};
/// Direct federation vs. overlay pipes; sample scenario_id carries the
/// receiving node ("recv-iaas-<k>").
std::vector<MetricSample> measure_tad(const TadOptions& opt, std::size_t* censored = nullptr);

struct FireOptions {
  TransportConfig transport;
  double fault_probability = 0.0;
  std::string fault_tag;
};

struct FireReport {
  bool ok = false;
  std::vector<std::string> violations;
  std::string assignment_id;
  std::string status;
  bool replanned = false;
  std::vector<std::string> members;
  bool both_types = false;
  std::vector<std::string> composite_caps;
  std::vector<std::string> frames;
  bool all_idle = false;
  bool marketplace_converged = false;
  std::string event_log_json;
};
FireReport run_fire_suppression(const FireOptions& opt = {});

}  // namespace robocloud::bench
