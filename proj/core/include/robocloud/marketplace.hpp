#pragma once

// Robots Services Marketplace: the third-party presence server. Robots are
// presentities published by their owning infrastructure; discovery engines
// are watchers. State is distributed by callback notifications, and the
// resource model is:
//
//   POST   /robots                                 publish (joining)
//   POST   /robots/{robotid}?fromuri={subscriberuri}   subscribe to one robot
//   POST   /robots?fromuri={subscriberuri}             subscribe to the list
//   PUT    /robots/{robotid}                       re-publish (state change)
//   DELETE /robots/{robotid}/{subscriberid}        unsubscribe from one robot
//   DELETE /robots/{subscriberid}                  unsubscribe from the list
//
// Extensions beyond that table (flagged): GET /robots for queries without a
// subscription, and DELETE /robots/{robotid}?owner={iaasuri} for removal.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "robocloud/descriptor.hpp"
#include "robocloud/transport.hpp"

namespace robocloud::presence {

struct PresenceRecord {
  std::string robot_id;
  std::string owner_iaas;
  senml::RobotDescriptor descriptor;
  senml::RobotState state = senml::RobotState::kIdle;
  std::uint64_t version = 0;
  double updated_at_ms = 0;
};

struct Subscription {
  std::string id;             // "sub-<n>"
  std::string callback_uri;   // the fromuri
  std::string scope_robot;    // empty = all robots
  double created_at_ms = 0;
  std::set<std::string> sent_full;  // robots that already received a full descriptor
};

struct MarketplaceConfig {
  std::string storage_dir;  // empty: no on-disk descriptor folder
};

class Marketplace {
 public:
  Marketplace(net::Transport& transport, EventLog& log, MarketplaceConfig cfg = {});

  /// Registers the REST endpoint; returns its URI.
  std::string start(const std::string& hint = "marketplace");
  void stop();
  const std::string& endpoint() const { return endpoint_; }

  // Direct (in-process) surface, mirrored 1:1 by the REST routes.
  struct PublishResult {
    std::string robot_id;
    std::uint64_t version;
  };
  PublishResult publish(const senml::RobotDescriptor& d, const std::string& owner);
  std::string subscribe(const std::string& robot_id, const std::string& fromuri);
  std::string subscribe_all(const std::string& fromuri);
  std::uint64_t republish(const std::string& robot_id, const std::string& owner,
                          std::optional<senml::RobotState> new_state,
                          const std::optional<senml::RobotDescriptor>& new_descriptor,
                          std::optional<std::uint64_t> expected_version = std::nullopt);
  void unsubscribe(const std::string& robot_id, const std::string& subscriber_id);
  void unsubscribe_all(const std::string& subscriber_id);
  void remove_robot(const std::string& robot_id, const std::string& owner);
  std::vector<PresenceRecord> query(const senml::CapabilitySet& tags,
                                    std::optional<senml::RobotState> state = std::nullopt) const;

  std::size_t record_count() const;
  std::size_t subscription_count() const;
  std::optional<PresenceRecord> record(const std::string& robot_id) const;

  /// Reloads descriptor documents from the storage folder (robots restored
  /// with version 1, state from the document).
  std::size_t load_storage(const std::string& owner_for_all);

  /// The resource routes, verbatim.
  static const std::vector<std::string>& route_templates();

 private:
  net::HttpResponse handle(const net::HttpRequest& req);
  void notify_watchers(const std::string& robot_id, bool joining);
  void send_notification(Subscription& sub, const PresenceRecord& rec, bool initial);
  void persist(const PresenceRecord& rec);
  void unpersist(const std::string& robot_id);

  net::Transport& transport_;
  EventLog& log_;
  MarketplaceConfig cfg_;
  std::string endpoint_;

  mutable std::mutex mu_;
  std::map<std::string, PresenceRecord> records_;
  std::map<std::string, Subscription> subs_;
  std::uint64_t next_robot_ = 1;
  std::uint64_t next_sub_ = 1;
};

/// Errors carry the status the REST layer maps them to.
struct MarketplaceError : std::runtime_error {
  MarketplaceError(int status, const std::string& msg)
      : std::runtime_error(msg), status(status) {}
  int status;
};

}  // namespace robocloud::presence
