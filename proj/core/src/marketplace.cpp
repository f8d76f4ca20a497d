#include "robocloud/marketplace.hpp"

#include <filesystem>
#include <fstream>

#include "robocloud/util.hpp"

namespace robocloud::presence {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using senml::RobotState;

Marketplace::Marketplace(net::Transport& transport, EventLog& log, MarketplaceConfig cfg)
    : transport_(transport), log_(log), cfg_(std::move(cfg)) {
  if (!cfg_.storage_dir.empty()) fs::create_directories(cfg_.storage_dir);
}

std::string Marketplace::start(const std::string& hint) {
  endpoint_ = transport_.register_endpoint(hint, [this](const net::HttpRequest& r) { return handle(r); });
  return endpoint_;
}

void Marketplace::stop() {
  if (!endpoint_.empty()) transport_.unregister_endpoint(endpoint_);
  endpoint_.clear();
}

const std::vector<std::string>& Marketplace::route_templates() {
  static const std::vector<std::string> routes = {
      "POST:/robots",
      "POST:/robots/{robotid}?fromuri={subscriberuri}",
      "POST:/robots?fromuri={subscriberuri}",
      "PUT:/robots/{robotid}",
      "DELETE:/robots/{robotid}/{subscriberid}",
      "DELETE:/robots/{subscriberid}",
  };
  return routes;
}

// ---------------------------------------------------------------------------
// Core operations

Marketplace::PublishResult Marketplace::publish(const senml::RobotDescriptor& descriptor,
                                                const std::string& owner) {
  std::unique_lock lk(mu_);
  if (owner.empty()) throw MarketplaceError(400, "publish requires an owner IaaS id");

  senml::RobotDescriptor d = descriptor;
  if (d.robot_id.empty()) d.robot_id = "rob-" + std::to_string(next_robot_++);
  senml::validate(d);
  if (!senml::is_publishable(d))
    throw MarketplaceError(400, "descriptor has an empty capability set and is unpublishable");
  if (records_.count(d.robot_id))
    throw MarketplaceError(409, "robot '" + d.robot_id + "' already published");

  PresenceRecord rec;
  rec.robot_id = d.robot_id;
  rec.owner_iaas = owner;
  rec.descriptor = std::move(d);
  rec.state = RobotState::kIdle;
  rec.version = 1;
  rec.updated_at_ms = transport_.now_ms();
  persist(rec);
  auto [it, inserted] = records_.emplace(rec.robot_id, std::move(rec));
  (void)inserted;

  log_.record(transport_.now_ms(), "marketplace", "publish",
              {{"robotid", it->second.robot_id}, {"owner", owner}, {"version", 1}});
  std::string robot_id = it->second.robot_id;
  lk.unlock();
  notify_watchers(robot_id, /*joining=*/true);
  return {robot_id, 1};
}

std::string Marketplace::subscribe(const std::string& robot_id, const std::string& fromuri) {
  std::unique_lock lk(mu_);
  if (!util::is_valid_uri(fromuri) || fromuri.empty())
    throw MarketplaceError(400, "fromuri is not a valid URI");
  auto rec = records_.find(robot_id);
  if (rec == records_.end())
    throw MarketplaceError(404, "unknown robot '" + robot_id + "'");
  for (auto& [id, sub] : subs_)
    if (sub.callback_uri == fromuri && sub.scope_robot == robot_id) return id;  // idempotent

  Subscription sub;
  sub.id = "sub-" + std::to_string(next_sub_++);
  sub.callback_uri = fromuri;
  sub.scope_robot = robot_id;
  sub.created_at_ms = transport_.now_ms();
  auto [it, ok] = subs_.emplace(sub.id, std::move(sub));
  (void)ok;
  log_.record(transport_.now_ms(), "marketplace", "subscribe",
              {{"subscriberid", it->first}, {"robotid", robot_id}, {"fromuri", fromuri}});
  send_notification(it->second, rec->second, /*initial=*/true);
  return it->first;
}

std::string Marketplace::subscribe_all(const std::string& fromuri) {
  std::unique_lock lk(mu_);
  if (!util::is_valid_uri(fromuri) || fromuri.empty())
    throw MarketplaceError(400, "fromuri is not a valid URI");
  for (auto& [id, sub] : subs_)
    if (sub.callback_uri == fromuri && sub.scope_robot.empty()) return id;

  Subscription sub;
  sub.id = "sub-" + std::to_string(next_sub_++);
  sub.callback_uri = fromuri;
  sub.created_at_ms = transport_.now_ms();
  auto [it, ok] = subs_.emplace(sub.id, std::move(sub));
  (void)ok;
  log_.record(transport_.now_ms(), "marketplace", "subscribe",
              {{"subscriberid", it->first}, {"robotid", "*"}, {"fromuri", fromuri}});
  for (const auto& [rid, rec] : records_) send_notification(it->second, rec, /*initial=*/true);
  return it->first;
}

std::uint64_t Marketplace::republish(const std::string& robot_id, const std::string& owner,
                                     std::optional<RobotState> new_state,
                                     const std::optional<senml::RobotDescriptor>& new_descriptor,
                                     std::optional<std::uint64_t> expected_version) {
  std::unique_lock lk(mu_);
  auto it = records_.find(robot_id);
  if (it == records_.end()) throw MarketplaceError(404, "unknown robot '" + robot_id + "'");
  PresenceRecord& rec = it->second;
  if (owner != rec.owner_iaas)
    throw MarketplaceError(403, "robot '" + robot_id + "' is owned by " + rec.owner_iaas);
  if (expected_version && *expected_version != rec.version)
    throw MarketplaceError(409, "stale version " + std::to_string(*expected_version) +
                                    " (current " + std::to_string(rec.version) + ")");

  bool changed = false;
  if (new_state && *new_state != rec.state) {
    rec.state = *new_state;
    changed = true;
  }
  if (new_descriptor) {
    senml::RobotDescriptor d = *new_descriptor;
    if (d.robot_id.empty()) d.robot_id = robot_id;
    if (d.robot_id != robot_id)
      throw MarketplaceError(400, "descriptor robotid does not match the resource");
    senml::validate(d);
    if (!(d == rec.descriptor)) {
      rec.descriptor = std::move(d);
      changed = true;
    }
  }
  rec.version++;  // every accepted re-publication advances the version
  rec.updated_at_ms = transport_.now_ms();
  persist(rec);
  std::uint64_t version = rec.version;
  log_.record(transport_.now_ms(), "marketplace", "republish",
              {{"robotid", robot_id},
               {"version", version},
               {"state", senml::to_string(rec.state)},
               {"changed", changed}});
  lk.unlock();
  if (changed) notify_watchers(robot_id, /*joining=*/false);  // no-change updates are suppressed
  return version;
}

void Marketplace::unsubscribe(const std::string& robot_id, const std::string& subscriber_id) {
  std::lock_guard lk(mu_);
  auto it = subs_.find(subscriber_id);
  if (it == subs_.end() || it->second.scope_robot != robot_id)
    throw MarketplaceError(404, "unknown subscription '" + subscriber_id + "' for '" + robot_id + "'");
  subs_.erase(it);
  log_.record(transport_.now_ms(), "marketplace", "unsubscribe",
              {{"subscriberid", subscriber_id}, {"robotid", robot_id}});
}

void Marketplace::unsubscribe_all(const std::string& subscriber_id) {
  std::lock_guard lk(mu_);
  auto it = subs_.find(subscriber_id);
  if (it == subs_.end() || !it->second.scope_robot.empty())
    throw MarketplaceError(404, "unknown list subscription '" + subscriber_id + "'");
  subs_.erase(it);
  log_.record(transport_.now_ms(), "marketplace", "unsubscribe",
              {{"subscriberid", subscriber_id}, {"robotid", "*"}});
}

void Marketplace::remove_robot(const std::string& robot_id, const std::string& owner) {
  std::unique_lock lk(mu_);
  auto it = records_.find(robot_id);
  if (it == records_.end()) throw MarketplaceError(404, "unknown robot '" + robot_id + "'");
  if (it->second.owner_iaas != owner)
    throw MarketplaceError(403, "robot '" + robot_id + "' is owned by " + it->second.owner_iaas);
  it->second.state = RobotState::kOffline;
  it->second.version++;
  lk.unlock();
  notify_watchers(robot_id, /*joining=*/false);  // watchers see OFFLINE before removal
  lk.lock();
  records_.erase(robot_id);
  unpersist(robot_id);
  log_.record(transport_.now_ms(), "marketplace", "remove", {{"robotid", robot_id}});
}

std::vector<PresenceRecord> Marketplace::query(const senml::CapabilitySet& tags,
                                               std::optional<RobotState> state) const {
  std::lock_guard lk(mu_);
  std::vector<PresenceRecord> out;
  for (const auto& [rid, rec] : records_) {  // std::map: ordered by robot_id
    if (state && rec.state != *state) continue;
    if (!senml::capability_set(rec.descriptor).covers(tags)) continue;
    out.push_back(rec);
  }
  return out;
}

std::size_t Marketplace::record_count() const {
  std::lock_guard lk(mu_);
  return records_.size();
}

std::size_t Marketplace::subscription_count() const {
  std::lock_guard lk(mu_);
  return subs_.size();
}

std::optional<PresenceRecord> Marketplace::record(const std::string& robot_id) const {
  std::lock_guard lk(mu_);
  auto it = records_.find(robot_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::size_t Marketplace::load_storage(const std::string& owner_for_all) {
  if (cfg_.storage_dir.empty()) return 0;
  std::size_t n = 0;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cfg_.storage_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream in(p);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto d = senml::parse_descriptor(text);
    std::lock_guard lk(mu_);
    if (d.robot_id.empty() || records_.count(d.robot_id)) continue;
    PresenceRecord rec;
    rec.robot_id = d.robot_id;
    rec.owner_iaas = owner_for_all;
    rec.state = d.dynamic.state;
    rec.descriptor = std::move(d);
    rec.version = 1;
    rec.updated_at_ms = transport_.now_ms();
    records_.emplace(rec.robot_id, std::move(rec));
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Notifications

void Marketplace::notify_watchers(const std::string& robot_id, bool joining) {
  std::lock_guard lk(mu_);
  auto rec = records_.find(robot_id);
  if (rec == records_.end()) return;
  for (auto& [sid, sub] : subs_) {
    bool matches = sub.scope_robot.empty() ? true : sub.scope_robot == robot_id;
    if (!matches) continue;
    if (joining && !sub.scope_robot.empty()) continue;  // single-robot scopes predate the robot
    send_notification(sub, rec->second, /*initial=*/false);
  }
}

void Marketplace::send_notification(Subscription& sub, const PresenceRecord& rec, bool initial) {
  json body;
  body["robotid"] = rec.robot_id;
  body["state"] = senml::to_string(rec.state);
  body["version"] = rec.version;
  body["initial"] = initial;
  if (!sub.sent_full.count(rec.robot_id)) {
    body["descriptor"] = json::parse(senml::serialize_descriptor(rec.descriptor));
    sub.sent_full.insert(rec.robot_id);
  }
  net::HttpRequest req;
  req.method = "POST";
  req.body = body.dump();
  req.from = endpoint_;
  log_.record(transport_.now_ms(), "marketplace", "notify",
              {{"subscriberid", sub.id},
               {"robotid", rec.robot_id},
               {"version", rec.version},
               {"state", senml::to_string(rec.state)},
               {"initial", initial}});
  transport_.send(sub.callback_uri, std::move(req), nullptr);
}

// ---------------------------------------------------------------------------
// Persistence

void Marketplace::persist(const PresenceRecord& rec) {
  if (cfg_.storage_dir.empty()) return;
  senml::RobotDescriptor d = rec.descriptor;
  d.dynamic.state = rec.state;
  std::ofstream out(fs::path(cfg_.storage_dir) / (rec.robot_id + ".robot.senml.json"),
                    std::ios::trunc);
  out << senml::serialize_descriptor(d);
}

void Marketplace::unpersist(const std::string& robot_id) {
  if (cfg_.storage_dir.empty()) return;
  std::error_code ec;
  fs::remove(fs::path(cfg_.storage_dir) / (robot_id + ".robot.senml.json"), ec);
}

// ---------------------------------------------------------------------------
// REST dispatch

namespace {

net::HttpResponse error_response(int status, const std::string& msg) {
  json j;
  j["error"] = msg;
  return {status, j.dump()};
}

}  // namespace

net::HttpResponse Marketplace::handle(const net::HttpRequest& req) {
  try {
    if (req.path.empty()) return error_response(404, "empty path");
    auto segs = util::split(req.path.substr(req.path.front() == '/' ? 1 : 0), '/');
    if (segs.empty() || segs[0] != "robots")
      return error_response(404, "no such resource: " + req.path);
    bool has_fromuri = req.query.count("fromuri") > 0;

    if (req.method == "POST" && segs.size() == 1) {
      if (has_fromuri) {
        json j;
        j["subscriberid"] = subscribe_all(req.query.at("fromuri"));
        return {201, j.dump()};
      }
      auto d = senml::parse_descriptor(req.body);
      auto owner = req.query.count("owner") ? req.query.at("owner") : req.from;
      auto res = publish(d, owner);
      json j;
      j["robotid"] = res.robot_id;
      j["version"] = res.version;
      return {201, j.dump()};
    }

    if (req.method == "POST" && segs.size() == 2) {
      if (!has_fromuri) return error_response(400, "subscription requires a fromuri parameter");
      json j;
      j["subscriberid"] = subscribe(segs[1], req.query.at("fromuri"));
      return {201, j.dump()};
    }

    if (req.method == "PUT" && segs.size() == 2) {
      auto body = nlohmann::json::parse(req.body);
      std::optional<RobotState> state;
      if (body.contains("state"))
        state = senml::robot_state_from_string(body.at("state").get<std::string>());
      std::optional<senml::RobotDescriptor> desc;
      if (body.contains("descriptor")) desc = senml::parse_descriptor(body.at("descriptor").dump());
      std::optional<std::uint64_t> expected;
      if (body.contains("version")) expected = body.at("version").get<std::uint64_t>();
      auto owner = req.query.count("owner") ? req.query.at("owner") : req.from;
      json j;
      j["robotid"] = segs[1];
      j["version"] = republish(segs[1], owner, state, desc, expected);
      return {200, j.dump()};
    }

    if (req.method == "DELETE" && segs.size() == 3) {
      unsubscribe(segs[1], segs[2]);
      return {200, "{}"};
    }

    if (req.method == "DELETE" && segs.size() == 2) {
      if (segs[1].rfind("sub-", 0) == 0) {
        unsubscribe_all(segs[1]);
        return {200, "{}"};
      }
      auto owner = req.query.count("owner") ? req.query.at("owner") : req.from;
      remove_robot(segs[1], owner);
      return {200, "{}"};
    }

    if (req.method == "GET" && segs.size() == 1) {
      senml::CapabilitySet tags;
      if (req.query.count("caps"))
        for (const auto& t : util::split(req.query.at("caps"), ',')) tags.insert(t);
      std::optional<RobotState> state;
      if (req.query.count("state"))
        state = senml::robot_state_from_string(req.query.at("state"));
      json arr = json::array();
      for (const auto& rec : query(tags, state)) {
        json r;
        r["robotid"] = rec.robot_id;
        r["owner"] = rec.owner_iaas;
        r["state"] = senml::to_string(rec.state);
        r["version"] = rec.version;
        r["descriptor"] = json::parse(senml::serialize_descriptor(rec.descriptor));
        arr.push_back(std::move(r));
      }
      json j;
      j["robots"] = std::move(arr);
      return {200, j.dump()};
    }

    return error_response(404, "no route for " + net::describe(req));
  } catch (const MarketplaceError& e) {
    return error_response(e.status, e.what());
  } catch (const senml::DescriptorError& e) {
    return error_response(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, e.what());
  }
}

}  // namespace robocloud::presence
