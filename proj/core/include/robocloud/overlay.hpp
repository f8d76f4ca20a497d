#pragma once

// P2P overlay comparison system: one overlay node per infrastructure.
// Publication and discovery ride on flooded advertisements; task
// assignment rides on point-to-point pipes routed hop-by-hop through the
// overlay. Every packet a node receives costs it a fixed processing delay
// before it acts -- that per-node overhead is exactly what the direct
// presence architecture avoids.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robocloud/descriptor.hpp"
#include "robocloud/transport.hpp"

namespace robocloud::overlay {

struct OverlayParams {
  double proc_ms = 1.0;        // per-packet processing delay at each node
  double adv_ttl_ms = 30000;   // advertisement cache lifetime
  double query_timeout_ms = 10000;
};

/// Neighbor maps for the configurable topologies. Node ids are 1..n.
struct Topology {
  static std::map<int, std::set<int>> line(int n);
  static std::map<int, std::set<int>> ring(int n);
  static std::map<int, std::set<int>> random_regular(int n, int degree, std::uint64_t seed);
  static std::map<int, std::set<int>> make(const std::string& name, int n, std::uint64_t seed);
  /// BFS next-hop table and hop distances from `src` over `neighbors`.
  static std::map<int, int> next_hops(const std::map<int, std::set<int>>& neighbors, int src);
  static std::map<int, int> distances(const std::map<int, std::set<int>>& neighbors, int src);
};

/// What an advertisement carries: a digest of the robot service, not the
/// full descriptor.
struct AdvRecord {
  std::string robot_id;
  int origin_node = 0;
  senml::CapabilitySet caps;
  senml::RobotState state = senml::RobotState::kIdle;
  std::uint64_t version = 0;
  int hop_count = 0;
  double expires_ms = 0;
};

struct DiscoverOutcome {
  std::vector<AdvRecord> records;  // ordered by robot_id
  bool from_cache = false;
  bool partial = false;  // timeout before all peers answered
  double started_ms = 0;
  double completed_ms = 0;
};

class OverlayNode {
 public:
  OverlayNode(net::Transport& transport, EventLog& log, int node_id, OverlayParams params);

  std::string start(const std::string& hint);
  void stop();
  int node_id() const { return id_; }
  const std::string& endpoint() const { return endpoint_; }

  /// Wires the node into the overlay: peer endpoints, neighbor ids, and the
  /// precomputed next-hop routing table.
  void configure(std::map<int, std::string> peer_uris, std::set<int> neighbors,
                 std::map<int, int> next_hops);

  void add_local_robot(const senml::RobotDescriptor& d);
  /// Floods advertisements for every local robot.
  void advertise_all();
  /// Floods a state-change advertisement for one robot.
  void advertise(const std::string& robot_id);

  /// Local-cache discovery; falls back to a query/response round over the
  /// overlay when the cache holds nothing fresh (or `force_query`).
  void discover(const senml::CapabilitySet& tags, bool force_query,
                std::function<void(const DiscoverOutcome&)> done);

  /// Routes a task-assignment message to the destination node through the
  /// overlay. The receive timestamp is taken at the destination after its
  /// processing delay; `on_delivered` runs there-after at the sender side
  /// with that timestamp (negative when undeliverable).
  void pipe_send(int dst_node, nlohmann::json payload,
                 std::function<void(double recv_ms)> on_delivered);

  std::vector<AdvRecord> cache_snapshot() const;
  void clear_cache();
  std::size_t packets_processed() const { return packets_processed_; }

 private:
  net::HttpResponse handle(const net::HttpRequest& req);
  void process_adv(const nlohmann::json& body);
  void process_query(const nlohmann::json& body);
  void process_resp(const nlohmann::json& body);
  void process_pipe(const nlohmann::json& body);
  void forward(int to_node, const std::string& path, const nlohmann::json& body);
  void flood(const std::string& kind, nlohmann::ordered_json body, int except_node);
  std::vector<AdvRecord> cache_matches(const senml::CapabilitySet& tags) const;
  void finish_query(const std::string& query_id, bool partial);

  net::Transport& transport_;
  EventLog& log_;
  int id_;
  OverlayParams params_;
  std::string endpoint_;
  mutable std::recursive_mutex mu_;

  std::map<int, std::string> peer_uris_;
  std::set<int> neighbors_;
  std::map<int, int> next_hops_;
  int hop_bound_ = 0;

  std::map<std::string, senml::RobotDescriptor> local_robots_;
  std::map<std::string, std::uint64_t> local_versions_;
  std::map<std::string, AdvRecord> cache_;       // robot_id -> freshest digest
  std::set<std::string> seen_advs_;              // dedup: robot|version|origin
  std::set<std::string> seen_queries_;

  struct PendingQuery {
    senml::CapabilitySet tags;
    std::set<int> awaiting;
    std::map<std::string, AdvRecord> results;
    std::function<void(const DiscoverOutcome&)> done;
    double started_ms = 0;
    bool from_cache = false;
  };
  std::map<std::string, PendingQuery> pending_;
  std::map<std::string, std::function<void(double)>> pending_pipes_;

  std::uint64_t next_query_ = 1;
  std::uint64_t next_pipe_ = 1;
  std::size_t packets_processed_ = 0;
};

}  // namespace robocloud::overlay
