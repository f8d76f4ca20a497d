#include "robocloud/overlay.hpp"

#include <algorithm>
#include <random>

#include "robocloud/util.hpp"

namespace robocloud::overlay {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Topology

std::map<int, std::set<int>> Topology::line(int n) {
  std::map<int, std::set<int>> t;
  for (int i = 1; i <= n; ++i) t[i];
  for (int i = 1; i < n; ++i) {
    t[i].insert(i + 1);
    t[i + 1].insert(i);
  }
  return t;
}

std::map<int, std::set<int>> Topology::ring(int n) {
  auto t = line(n);
  if (n > 2) {
    t[1].insert(n);
    t[n].insert(1);
  }
  return t;
}

std::map<int, std::set<int>> Topology::random_regular(int n, int degree, std::uint64_t seed) {
  if (degree >= n || (n * degree) % 2 != 0)
    throw std::invalid_argument("no " + std::to_string(degree) + "-regular graph on " +
                                std::to_string(n) + " nodes");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 2000; ++attempt) {
    std::vector<int> stubs;
    for (int i = 1; i <= n; ++i)
      for (int d = 0; d < degree; ++d) stubs.push_back(i);
    std::shuffle(stubs.begin(), stubs.end(), rng);

    std::map<int, std::set<int>> t;
    for (int i = 1; i <= n; ++i) t[i];
    bool ok = true;
    for (std::size_t i = 0; i + 1 < stubs.size() && ok; i += 2) {
      int a = stubs[i], b = stubs[i + 1];
      if (a == b || t[a].count(b)) ok = false;
      else {
        t[a].insert(b);
        t[b].insert(a);
      }
    }
    if (!ok) continue;
    if (distances(t, 1).size() != static_cast<std::size_t>(n)) continue;  // must be connected
    return t;
  }
  throw std::runtime_error("failed to sample a connected random-regular topology");
}

std::map<int, std::set<int>> Topology::make(const std::string& name, int n, std::uint64_t seed) {
  if (name == "line") return line(n);
  if (name == "ring") return ring(n);
  if (name.rfind("random", 0) == 0) return random_regular(n, std::min(3, n - 1), seed);
  throw std::invalid_argument("unknown topology '" + name + "'");
}

std::map<int, int> Topology::distances(const std::map<int, std::set<int>>& neighbors, int src) {
  std::map<int, int> dist;
  std::vector<int> frontier{src};
  dist[src] = 0;
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int u : frontier) {
      auto it = neighbors.find(u);
      if (it == neighbors.end()) continue;
      for (int v : it->second) {
        if (dist.count(v)) continue;
        dist[v] = dist[u] + 1;
        next.push_back(v);
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

std::map<int, int> Topology::next_hops(const std::map<int, std::set<int>>& neighbors, int src) {
  // First hop on a shortest path from src to every reachable node.
  std::map<int, int> hop;
  auto dist = distances(neighbors, src);
  for (const auto& [dst, d] : dist) {
    if (dst == src) continue;
    int cur = dst;
    // Walk back toward src along decreasing distance, smallest id first.
    while (dist[cur] > 1) {
      int best = -1;
      for (int v : neighbors.at(cur))
        if (dist.count(v) && dist[v] == dist[cur] - 1 && (best < 0 || v < best)) best = v;
      cur = best;
    }
    hop[dst] = cur;
  }
  return hop;
}

// ---------------------------------------------------------------------------
// OverlayNode

OverlayNode::OverlayNode(net::Transport& transport, EventLog& log, int node_id,
                         OverlayParams params)
    : transport_(transport), log_(log), id_(node_id), params_(params) {}

std::string OverlayNode::start(const std::string& hint) {
  endpoint_ = transport_.register_endpoint(hint, [this](const net::HttpRequest& r) { return handle(r); });
  return endpoint_;
}

void OverlayNode::stop() {
  if (!endpoint_.empty()) transport_.unregister_endpoint(endpoint_);
  endpoint_.clear();
}

void OverlayNode::configure(std::map<int, std::string> peer_uris, std::set<int> neighbors,
                            std::map<int, int> next_hops) {
  peer_uris_ = std::move(peer_uris);
  neighbors_ = std::move(neighbors);
  next_hops_ = std::move(next_hops);
  hop_bound_ = static_cast<int>(peer_uris_.size()) + 1;  // network diameter bound
}

void OverlayNode::add_local_robot(const senml::RobotDescriptor& d) {
  senml::validate(d);
  local_robots_[d.robot_id] = d;
}

void OverlayNode::advertise(const std::string& robot_id) {
  auto it = local_robots_.find(robot_id);
  if (it == local_robots_.end()) return;
  const auto& d = it->second;
  std::uint64_t version = ++local_versions_[robot_id];

  json adv;
  adv["robotid"] = robot_id;
  adv["origin"] = id_;
  adv["caps"] = std::vector<std::string>(senml::capability_set(d).begin(),
                                         senml::capability_set(d).end());
  adv["state"] = senml::to_string(d.dynamic.state);
  adv["version"] = version;
  adv["hops"] = 0;
  adv["from_node"] = id_;

  // The origin caches its own advertisement, then floods.
  seen_advs_.insert(robot_id + "|" + std::to_string(version) + "|" + std::to_string(id_));
  AdvRecord rec;
  rec.robot_id = robot_id;
  rec.origin_node = id_;
  rec.caps = senml::capability_set(d);
  rec.state = d.dynamic.state;
  rec.version = version;
  rec.hop_count = 0;
  rec.expires_ms = transport_.now_ms() + params_.adv_ttl_ms;
  cache_[robot_id] = rec;

  log_.record(transport_.now_ms(), "overlay-" + std::to_string(id_), "advertise",
              {{"robotid", robot_id}, {"version", version}});
  flood("adv", adv, id_);
}

void OverlayNode::advertise_all() {
  for (const auto& [rid, d] : local_robots_) advertise(rid);
}

void OverlayNode::flood(const std::string& kind, json body, int except_node) {
  body["from_node"] = id_;
  for (int nb : neighbors_) {
    if (nb == except_node) continue;
    forward(nb, "/overlay/" + kind, body);
  }
}

void OverlayNode::forward(int to_node, const std::string& path, const json& body) {
  auto it = peer_uris_.find(to_node);
  if (it == peer_uris_.end()) return;
  net::HttpRequest req;
  req.method = "POST";
  req.path = path;
  req.body = body.dump();
  req.from = endpoint_;
  transport_.send(it->second + path, std::move(req), nullptr);
}

net::HttpResponse OverlayNode::handle(const net::HttpRequest& req) {
  if (req.path.empty()) return {404, R"({"error":"empty path"})"};
  auto segs = util::split(req.path.substr(req.path.front() == '/' ? 1 : 0), '/');
  if (segs.size() != 2 || segs[0] != "overlay") return {404, R"({"error":"no such resource"})"};
  auto body = nlohmann::json::parse(req.body);
  std::string kind = segs[1];
  // Every received packet costs this node a deserialization/processing
  // delay before it acts on it.
  transport_.schedule(params_.proc_ms, [this, kind, body] {
    std::lock_guard lk(mu_);
    ++packets_processed_;
    if (kind == "adv") process_adv(body);
    else if (kind == "query") process_query(body);
    else if (kind == "resp") process_resp(body);
    else if (kind == "pipe") process_pipe(body);
  });
  return {200, "{}"};
}

void OverlayNode::process_adv(const nlohmann::json& body) {
  auto rid = body.at("robotid").get<std::string>();
  auto origin = body.at("origin").get<int>();
  auto version = body.at("version").get<std::uint64_t>();
  int hops = body.at("hops").get<int>() + 1;  // one more forward reached us

  std::string key = rid + "|" + std::to_string(version) + "|" + std::to_string(origin);
  if (!seen_advs_.insert(key).second) return;  // duplicate: cache unchanged, not re-forwarded

  auto it = cache_.find(rid);
  if (it == cache_.end() || version > it->second.version) {
    AdvRecord rec;
    rec.robot_id = rid;
    rec.origin_node = origin;
    for (const auto& t : body.at("caps")) rec.caps.insert(t.get<std::string>());
    rec.state = senml::robot_state_from_string(body.at("state").get<std::string>());
    rec.version = version;
    rec.hop_count = hops;
    rec.expires_ms = transport_.now_ms() + params_.adv_ttl_ms;
    cache_[rid] = std::move(rec);
  }

  if (hops >= hop_bound_) return;  // past the diameter bound: drop
  json fwd = body;
  fwd["hops"] = hops;
  flood("adv", fwd, body.at("from_node").get<int>());
}

std::vector<AdvRecord> OverlayNode::cache_matches(const senml::CapabilitySet& tags) const {
  std::vector<AdvRecord> out;
  double now = transport_.now_ms();
  for (const auto& [rid, rec] : cache_) {
    if (rec.expires_ms < now) continue;
    bool relevant = tags.empty();
    for (const auto& t : tags)
      if (rec.caps.contains(t)) relevant = true;
    if (!relevant) continue;
    out.push_back(rec);
  }
  return out;
}

void OverlayNode::discover(const senml::CapabilitySet& tags, bool force_query,
                           std::function<void(const DiscoverOutcome&)> done) {
  std::lock_guard lk(mu_);
  double now = transport_.now_ms();

  if (!force_query) {
    auto hits = cache_matches(tags);
    if (!hits.empty()) {
      DiscoverOutcome out;
      out.records = std::move(hits);
      std::sort(out.records.begin(), out.records.end(),
                [](const AdvRecord& a, const AdvRecord& b) { return a.robot_id < b.robot_id; });
      out.from_cache = true;
      out.started_ms = now;
      out.completed_ms = now;  // zero network rounds
      done(out);
      return;
    }
  }

  std::string qid = std::to_string(id_) + "-q" + std::to_string(next_query_++);
  PendingQuery pq;
  pq.tags = tags;
  pq.done = std::move(done);
  pq.started_ms = now;
  for (const auto& [node, hop] : next_hops_) pq.awaiting.insert(node);
  // The local answer is immediate.
  for (const auto& [rid, d] : local_robots_) {
    bool relevant = tags.empty();
    for (const auto& t : tags)
      if (senml::capability_set(d).contains(t)) relevant = true;
    if (!relevant) continue;
    AdvRecord rec;
    rec.robot_id = rid;
    rec.origin_node = id_;
    rec.caps = senml::capability_set(d);
    rec.state = d.dynamic.state;
    rec.version = local_versions_.count(rid) ? local_versions_.at(rid) : 1;
    rec.expires_ms = now + params_.adv_ttl_ms;
    pq.results[rid] = std::move(rec);
  }

  log_.record(now, "overlay-" + std::to_string(id_), "query",
              {{"queryid", qid}, {"tags", tags.to_string()}});

  if (pq.awaiting.empty()) {
    DiscoverOutcome out;
    for (auto& [rid, rec] : pq.results) out.records.push_back(rec);
    out.started_ms = pq.started_ms;
    out.completed_ms = now;
    pq.done(out);
    return;
  }

  pending_.emplace(qid, std::move(pq));
  seen_queries_.insert(qid);

  json q;
  q["queryid"] = qid;
  q["origin"] = id_;
  q["tags"] = std::vector<std::string>(tags.begin(), tags.end());
  q["hops"] = 0;
  q["from_node"] = id_;
  flood("query", q, id_);

  transport_.schedule(params_.query_timeout_ms, [this, qid] {
    std::lock_guard lk2(mu_);
    finish_query(qid, /*partial=*/true);
  });
}

void OverlayNode::process_query(const nlohmann::json& body) {
  auto qid = body.at("queryid").get<std::string>();
  if (!seen_queries_.insert(qid).second) return;
  int origin = body.at("origin").get<int>();
  int hops = body.at("hops").get<int>() + 1;

  senml::CapabilitySet tags;
  for (const auto& t : body.at("tags")) tags.insert(t.get<std::string>());

  // Answer with this node's local services, routed back through the overlay.
  json resp;
  resp["queryid"] = qid;
  resp["responder"] = id_;
  resp["to"] = origin;
  json records = json::array();
  for (const auto& [rid, d] : local_robots_) {
    bool relevant = tags.empty();
    for (const auto& t : tags)
      if (senml::capability_set(d).contains(t)) relevant = true;
    if (!relevant) continue;
    json r;
    r["robotid"] = rid;
    r["origin"] = id_;
    r["caps"] = std::vector<std::string>(senml::capability_set(d).begin(),
                                         senml::capability_set(d).end());
    r["state"] = senml::to_string(d.dynamic.state);
    r["version"] = local_versions_.count(rid) ? local_versions_.at(rid) : 1;
    records.push_back(std::move(r));
  }
  resp["records"] = std::move(records);
  resp["from_node"] = id_;
  auto hop = next_hops_.find(origin);
  if (hop != next_hops_.end()) forward(hop->second, "/overlay/resp", resp);

  if (hops < hop_bound_) {
    json fwd = body;
    fwd["hops"] = hops;
    flood("query", fwd, body.at("from_node").get<int>());
  }
}

void OverlayNode::process_resp(const nlohmann::json& body) {
  int to = body.at("to").get<int>();
  if (to != id_) {  // relay hop on the reverse path
    auto hop = next_hops_.find(to);
    if (hop != next_hops_.end()) {
      json fwd = body;
      fwd["from_node"] = id_;
      forward(hop->second, "/overlay/resp", fwd);
    }
    return;
  }

  auto qid = body.at("queryid").get<std::string>();
  auto it = pending_.find(qid);
  if (it == pending_.end()) return;
  PendingQuery& pq = it->second;
  int responder = body.at("responder").get<int>();
  pq.awaiting.erase(responder);
  for (const auto& r : body.at("records")) {
    AdvRecord rec;
    rec.robot_id = r.at("robotid").get<std::string>();
    rec.origin_node = r.at("origin").get<int>();
    for (const auto& t : r.at("caps")) rec.caps.insert(t.get<std::string>());
    rec.state = senml::robot_state_from_string(r.at("state").get<std::string>());
    rec.version = r.at("version").get<std::uint64_t>();
    rec.expires_ms = transport_.now_ms() + params_.adv_ttl_ms;
    pq.results[rec.robot_id] = rec;
    cache_[rec.robot_id] = rec;  // responses warm the cache
  }
  if (pq.awaiting.empty()) finish_query(qid, /*partial=*/false);
}

void OverlayNode::finish_query(const std::string& query_id, bool partial) {
  auto it = pending_.find(query_id);
  if (it == pending_.end()) return;
  PendingQuery pq = std::move(it->second);
  pending_.erase(it);

  DiscoverOutcome out;
  for (auto& [rid, rec] : pq.results) out.records.push_back(rec);
  out.partial = partial && !pq.awaiting.empty();
  out.started_ms = pq.started_ms;
  out.completed_ms = transport_.now_ms();
  log_.record(out.completed_ms, "overlay-" + std::to_string(id_), "query-complete",
              {{"queryid", query_id},
               {"records", out.records.size()},
               {"partial", out.partial},
               {"elapsed_ms", out.completed_ms - out.started_ms}});
  pq.done(out);
}

void OverlayNode::pipe_send(int dst_node, nlohmann::json payload,
                            std::function<void(double)> on_delivered) {
  std::lock_guard lk(mu_);
  double now = transport_.now_ms();
  if (dst_node == id_) {
    if (on_delivered) on_delivered(now);  // same node: nothing to traverse
    return;
  }
  auto hop = next_hops_.find(dst_node);
  if (hop == next_hops_.end()) {
    if (on_delivered) on_delivered(-1);
    return;
  }
  std::string pid = std::to_string(id_) + "-p" + std::to_string(next_pipe_++);
  if (on_delivered) pending_pipes_[pid] = std::move(on_delivered);

  json body;
  body["pipeid"] = pid;
  body["src"] = id_;
  body["dst"] = dst_node;
  body["payload"] = std::move(payload);
  body["ack"] = false;
  body["from_node"] = id_;
  log_.record(now, "overlay-" + std::to_string(id_), "pipe-send",
              {{"pipeid", pid}, {"dst", dst_node}, {"send_ms", now}});
  forward(hop->second, "/overlay/pipe", body);
}

void OverlayNode::process_pipe(const nlohmann::json& body) {
  bool ack = body.at("ack").get<bool>();
  int dst = ack ? body.at("src").get<int>() : body.at("dst").get<int>();

  if (dst != id_) {  // relay
    auto hop = next_hops_.find(dst);
    if (hop == next_hops_.end()) return;
    json fwd = body;
    fwd["from_node"] = id_;
    forward(hop->second, "/overlay/pipe", fwd);
    return;
  }

  if (!ack) {
    double recv = transport_.now_ms();
    log_.record(recv, "overlay-" + std::to_string(id_), "pipe-recv",
                {{"pipeid", body.at("pipeid").get<std::string>()},
                 {"src", body.at("src").get<int>()},
                 {"recv_ms", recv}});
    json back = body;
    back["ack"] = true;
    back["recv_ms"] = recv;
    back["from_node"] = id_;
    auto hop = next_hops_.find(body.at("src").get<int>());
    if (hop != next_hops_.end()) forward(hop->second, "/overlay/pipe", back);
    return;
  }

  auto pid = body.at("pipeid").get<std::string>();
  auto cb = pending_pipes_.find(pid);
  if (cb == pending_pipes_.end()) return;
  auto fn = std::move(cb->second);
  pending_pipes_.erase(cb);
  fn(body.at("recv_ms").get<double>());
}

std::vector<AdvRecord> OverlayNode::cache_snapshot() const {
  std::lock_guard lk(mu_);
  std::vector<AdvRecord> out;
  for (const auto& [rid, rec] : cache_) out.push_back(rec);
  return out;
}

void OverlayNode::clear_cache() {
  std::lock_guard lk(mu_);
  cache_.clear();
  seen_advs_.clear();
}

}  // namespace robocloud::overlay
