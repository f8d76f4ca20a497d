#include "robocloud/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "robocloud/util.hpp"

namespace robocloud::bench {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Fleet documents

namespace fleet {

namespace {

senml::RobotDescriptor base(const std::string& robot_id, double x, double y) {
  senml::RobotDescriptor d;
  d.robot_id = robot_id;
  d.dynamic.x = x;
  d.dynamic.y = y;
  d.dynamic.battery_pct = 100;
  d.interaction.protocol = "simwire";
  d.interaction.endpoint = "sim://" + robot_id;
  return d;
}

}  // namespace

std::string arms_mover_doc(const std::string& robot_id, double x, double y) {
  auto d = base(robot_id, x, y);
  d.static_ch.physical["chassis"] = "tracked";
  d.static_ch.actuators.push_back({"gripper-arm", "(0,90)", "deg"});
  d.static_ch.actuators.push_back({"movement-motor", "(0,0.5)", "m/s"});
  d.static_ch.info.emplace_back("class", "arms-mover");
  d.behavioral.supported_tasks = {"debris-sifting"};
  return senml::serialize_descriptor(d);
}

std::string light_kicker_doc(const std::string& robot_id, double x, double y) {
  auto d = base(robot_id, x, y);
  d.static_ch.physical["chassis"] = "wheeled";
  d.static_ch.sensors.push_back({"light", "(0,100)", "lux"});
  d.static_ch.actuators.push_back({"kicking-arm", "(0,90)", "deg"});
  d.static_ch.info.emplace_back("class", "light-kicker");
  d.behavioral.supported_tasks = {"fire-suppression"};
  return senml::serialize_descriptor(d);
}

std::string scout_doc(const std::string& robot_id, double x, double y) {
  auto d = base(robot_id, x, y);
  d.static_ch.physical["chassis"] = "wheeled";
  d.static_ch.sensors.push_back({"light", "(0,100)", "lux"});
  d.static_ch.actuators.push_back({"kicking-arm", "(0,90)", "deg"});
  d.static_ch.actuators.push_back({"movement-motor", "(0,0.5)", "m/s"});
  d.static_ch.info.emplace_back("class", "scout");
  d.behavioral.supported_tasks = {"fire-suppression"};
  return senml::serialize_descriptor(d);
}

std::string single_capability_doc(const std::string& robot_id, const std::string& tag,
                                  bool sensor, double x, double y) {
  auto d = base(robot_id, x, y);
  if (sensor)
    d.static_ch.sensors.push_back({tag, "(0,100)", "lux"});
  else
    d.static_ch.actuators.push_back({tag, "(0,90)", "deg"});
  return senml::serialize_descriptor(d);
}

}  // namespace fleet

// ---------------------------------------------------------------------------
// ScenarioConfig

void ScenarioConfig::validate() const {
  if (iaas_count < 1) throw std::invalid_argument("iaas_count must be >= 1");
  if (transport.mode == TransportConfig::Mode::kSim) {
    if (transport.latency_ms <= 0) throw std::invalid_argument("sim latency must be positive");
    if (transport.proc_ms <= 0) throw std::invalid_argument("sim proc delay must be positive");
    if (transport.jitter_ms < 0) throw std::invalid_argument("jitter must be non-negative");
  }
  double last = -1;
  for (const auto& r : script) {
    if (r.at_ms < last) throw std::invalid_argument("script times must be non-decreasing");
    last = r.at_ms;
    int idx = 0;
    if (r.origin_node.rfind("iaas-", 0) == 0) idx = std::stoi(r.origin_node.substr(5));
    if (idx < 1 || idx > iaas_count)
      throw std::invalid_argument("script origin '" + r.origin_node + "' is not a booted node");
    if (r.task.duration_ms <= 0) throw std::invalid_argument("task duration must be positive");
    if (!(std::isfinite(r.task.site_x) && std::isfinite(r.task.site_y)))
      throw std::invalid_argument("task site must be finite");
  }
  for (const auto& [node, files] : robot_files) {
    (void)files;
    if (node.rfind("iaas-", 0) != 0)
      throw std::invalid_argument("robot owner '" + node + "' is not an iaas-<k> id");
  }
}

ScenarioConfig ScenarioConfig::from_json_string(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ScenarioConfig c;
  c.scenario_id = j.value("scenario_id", "scenario");
  c.iaas_count = j.value("iaas_count", 4);
  if (j.contains("robots"))
    for (const auto& [node, files] : j.at("robots").items())
      for (const auto& f : files) c.robot_files[node].push_back(f.get<std::string>());
  if (j.contains("inline_robots"))
    for (const auto& [node, docs] : j.at("inline_robots").items())
      for (const auto& d : docs) c.robot_docs[node].push_back(d.dump());
  if (j.contains("transport")) {
    const auto& t = j.at("transport");
    auto mode = t.value("mode", "sim");
    c.transport.mode =
        mode == "socket" ? TransportConfig::Mode::kSocket : TransportConfig::Mode::kSim;
    c.transport.latency_ms = t.value("latency_ms", 5.0);
    c.transport.proc_ms = t.value("proc_ms", 1.0);
    c.transport.jitter_ms = t.value("jitter_ms", 0.0);
    c.transport.seed = t.value("seed", 42ull);
  }
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    auto kind = b.value("kind", "presence");
    c.backend.kind =
        kind == "overlay" ? BackendConfig::Kind::kOverlay : BackendConfig::Kind::kPresence;
    c.backend.topology = b.value("topology", "ring");
  }
  if (j.contains("script")) {
    for (const auto& r : j.at("script")) {
      ScriptedRequest sr;
      sr.at_ms = r.value("at_ms", 0.0);
      sr.origin_node = r.value("origin", "iaas-1");
      for (const auto& t : r.at("caps")) sr.caps.push_back(t.get<std::string>());
      if (r.contains("task")) {
        const auto& t = r.at("task");
        if (t.contains("site")) {
          sr.task.site_x = t.at("site").at(0).get<double>();
          sr.task.site_y = t.at("site").at(1).get<double>();
        }
        sr.task.kind = t.value("kind", "");
        sr.task.duration_ms = t.value("duration_ms", 100.0);
      }
      c.script.push_back(std::move(sr));
    }
  }
  if (j.contains("fault")) {
    c.fault_probability = j.at("fault").value("probability", 0.0);
    c.fault_tag = j.at("fault").value("tag", "");
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

std::string ScenarioConfig::to_json_string() const {
  json j;
  j["scenario_id"] = scenario_id;
  j["iaas_count"] = iaas_count;
  if (!robot_files.empty()) {
    json r;
    for (const auto& [node, files] : robot_files) r[node] = files;
    j["robots"] = std::move(r);
  }
  if (!robot_docs.empty()) {
    json r;
    for (const auto& [node, docs] : robot_docs) {
      json arr = json::array();
      for (const auto& d : docs) arr.push_back(json::parse(d));
      r[node] = std::move(arr);
    }
    j["inline_robots"] = std::move(r);
  }
  j["transport"] = {
      {"mode", transport.mode == TransportConfig::Mode::kSocket ? "socket" : "sim"},
      {"latency_ms", transport.latency_ms},
      {"proc_ms", transport.proc_ms},
      {"jitter_ms", transport.jitter_ms},
      {"seed", transport.seed}};
  j["backend"] = {
      {"kind", backend.kind == BackendConfig::Kind::kOverlay ? "overlay" : "presence"},
      {"topology", backend.topology}};
  json script_arr = json::array();
  for (const auto& r : script) {
    json s;
    s["at_ms"] = r.at_ms;
    s["origin"] = r.origin_node;
    s["caps"] = r.caps;
    s["task"] = {{"site", {r.task.site_x, r.task.site_y}},
                 {"kind", r.task.kind},
                 {"duration_ms", r.task.duration_ms}};
    script_arr.push_back(std::move(s));
  }
  j["script"] = std::move(script_arr);
  if (fault_probability > 0)
    j["fault"] = {{"probability", fault_probability}, {"tag", fault_tag}};
  return j.dump(2);
}

ScenarioConfig default_scenario(int iaas_count) {
  ScenarioConfig c;
  c.scenario_id = "default-fig5";
  c.iaas_count = iaas_count;
  for (int k = 1; k <= iaas_count; ++k) {
    std::string node = "iaas-" + std::to_string(k);
    c.robot_docs[node].push_back(fleet::arms_mover_doc(node + "-arms", k, 0));
    c.robot_docs[node].push_back(fleet::light_kicker_doc(node + "-kick", k, 1));
  }
  return c;
}

ScenarioConfig tad_scenario() {
  ScenarioConfig c;
  c.scenario_id = "tad-span3";
  c.iaas_count = 4;
  c.robot_docs["iaas-1"].push_back(
      fleet::single_capability_doc("iaas-1-grip", "gripper-arm", false, 1, 0));
  c.robot_docs["iaas-2"].push_back(
      fleet::single_capability_doc("iaas-2-light", "light", true, 2, 0));
  c.robot_docs["iaas-3"].push_back(
      fleet::single_capability_doc("iaas-3-kick", "kicking-arm", false, 3, 0));
  c.robot_docs["iaas-4"].push_back(
      fleet::single_capability_doc("iaas-4-move", "movement-motor", false, 4, 0));
  return c;
}

// ---------------------------------------------------------------------------
// ScenarioRuntime

ScenarioRuntime::ScenarioRuntime(const ScenarioConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.transport.mode == TransportConfig::Mode::kSim) {
    sim_ = std::make_unique<net::SimTransport>(
        net::SimParams{cfg_.transport.latency_ms, cfg_.transport.jitter_ms, cfg_.transport.seed});
    transport_ = sim_.get();
  } else {
    socket_ = std::make_unique<net::SocketTransport>();
    transport_ = socket_.get();
  }
}

ScenarioRuntime::~ScenarioRuntime() {
  if (socket_) socket_->shutdown();  // join threads before components die
}

net::SimScheduler* ScenarioRuntime::scheduler() { return sim_ ? &sim_->scheduler() : nullptr; }

iaas::IaasNode* ScenarioRuntime::node(const std::string& node_id) {
  auto it = nodes_.find(node_id);
  return it == nodes_.end() ? nullptr : it->second.get();
}

overlay::OverlayNode* ScenarioRuntime::overlay_node(int id) {
  auto it = overlays_.find(id);
  return it == overlays_.end() ? nullptr : it->second.get();
}

std::vector<std::string> ScenarioRuntime::node_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

std::string ScenarioRuntime::route(const std::string& node_id) const {
  auto it = routes_.find(node_id);
  if (it == routes_.end()) throw std::invalid_argument("no route for " + node_id);
  return it->second;
}

void ScenarioRuntime::boot() {
  std::size_t robot_total = 0;

  if (cfg_.backend.kind == BackendConfig::Kind::kPresence) {
    marketplace_ = std::make_unique<presence::Marketplace>(*transport_, log_);
    std::string mkt = marketplace_->start("marketplace");

    for (int k = 1; k <= cfg_.iaas_count; ++k) {
      std::string id = "iaas-" + std::to_string(k);
      iaas::NodeConfig nc;
      nc.node_id = id;
      nc.marketplace_uri = mkt;
      nc.seed = cfg_.transport.seed;
      nc.federation_timeout_ms = cfg_.transport.mode == TransportConfig::Mode::kSim
                                     ? 5 * cfg_.transport.latency_ms
                                     : 2500;
      auto node = std::make_unique<iaas::IaasNode>(*transport_, log_, nc);
      routes_[id] = node->start();
      nodes_.emplace(id, std::move(node));
    }

    for (const auto& [id, node] : nodes_) {
      auto docs = cfg_.robot_docs.count(id) ? cfg_.robot_docs.at(id) : std::vector<std::string>{};
      if (cfg_.robot_files.count(id)) {
        for (const auto& f : cfg_.robot_files.at(id)) {
          std::ifstream in(f);
          if (!in) throw std::runtime_error("cannot read robot metadata " + f);
          docs.emplace_back((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        }
      }
      for (const auto& doc : docs) {
        node->add_robot(doc);
        ++robot_total;
      }
    }

    // Scenario-scripted fault models.
    if (cfg_.fault_probability > 0) {
      for (const auto& [id, node] : nodes_) {
        for (const auto& d : node->repository().list()) {
          bool hit = cfg_.fault_tag.empty() ||
                     senml::capability_set(d).contains(cfg_.fault_tag);
          if (hit)
            if (auto r = node->robot(d.robot_id))
              r->set_fault(gateway::FaultModel{cfg_.fault_probability});
        }
      }
    }

    if (sim_) {
      sim_->scheduler().run();
    } else {
      std::size_t want = robot_total;
      await([&] { return marketplace_->record_count() == want; }, 5000);
    }
    return;
  }

  // Overlay backend.
  auto topo = overlay::Topology::make(cfg_.backend.topology, cfg_.iaas_count, cfg_.transport.seed);
  overlay::OverlayParams op;
  op.proc_ms = cfg_.transport.proc_ms;
  std::map<int, std::string> uris;
  for (int k = 1; k <= cfg_.iaas_count; ++k) {
    auto n = std::make_unique<overlay::OverlayNode>(*transport_, log_, k, op);
    uris[k] = n->start("overlay-" + std::to_string(k));
    overlays_.emplace(k, std::move(n));
  }
  for (auto& [k, n] : overlays_) {
    n->configure(uris, topo.at(k), overlay::Topology::next_hops(topo, k));
    routes_["iaas-" + std::to_string(k)] = uris[k];
  }
  for (auto& [k, n] : overlays_) {
    std::string id = "iaas-" + std::to_string(k);
    auto docs = cfg_.robot_docs.count(id) ? cfg_.robot_docs.at(id) : std::vector<std::string>{};
    if (cfg_.robot_files.count(id)) {
      for (const auto& f : cfg_.robot_files.at(id)) {
        std::ifstream in(f);
        if (!in) throw std::runtime_error("cannot read robot metadata " + f);
        docs.emplace_back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      }
    }
    for (const auto& doc : docs) {
      n->add_local_robot(senml::parse_descriptor(doc));
      ++robot_total;
    }
    n->advertise_all();
  }
  if (sim_) sim_->scheduler().run();
  else std::this_thread::sleep_for(std::chrono::milliseconds(300));
}

void ScenarioRuntime::run_script() {
  double base = transport_->now_ms();
  for (std::size_t i = 0; i < cfg_.script.size(); ++i) {
    const auto& r = cfg_.script[i];
    transport_->schedule(base + r.at_ms - transport_->now_ms(), [this, i] {
      const auto& req = cfg_.script[i];
      if (cfg_.backend.kind == BackendConfig::Kind::kPresence) {
        json body;
        body["requestid"] = cfg_.scenario_id + "-req-" + std::to_string(i + 1);
        body["caps"] = req.caps;
        body["task"] = {{"site", {req.task.site_x, req.task.site_y}},
                        {"kind", req.task.kind},
                        {"duration_ms", req.task.duration_ms}};
        body["origin"] = "paas";
        net::HttpRequest http;
        http.method = "POST";
        http.path = "/services/requests";
        http.body = body.dump();
        http.from = "saas-client";
        // SaaS requests enter through the front-door route table.
        transport_->send(route(req.origin_node) + "/services/requests", std::move(http), nullptr);
        return;
      }
      // Overlay backend: discovery then a pipe message to each owner.
      int origin = std::stoi(req.origin_node.substr(5));
      auto* src = overlay_node(origin);
      if (!src) return;
      senml::CapabilitySet tags;
      for (const auto& t : req.caps) tags.insert(t);
      src->discover(tags, /*force_query=*/false, [this, src, i](const overlay::DiscoverOutcome& out) {
        std::set<int> owners;
        for (const auto& rec : out.records) owners.insert(rec.origin_node);
        for (int owner : owners) {
          json payload;
          payload["assignment"] = cfg_.scenario_id + "-req-" + std::to_string(i + 1);
          src->pipe_send(owner, payload, nullptr);
        }
      });
    });
  }
}

bool ScenarioRuntime::await(const std::function<bool()>& done, double timeout_ms) {
  if (sim_) {
    double deadline = sim_->scheduler().now() + timeout_ms;
    while (!done()) {
      if (sim_->scheduler().now() > deadline) return false;
      if (!sim_->scheduler().step()) return done();
    }
    return true;
  }
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(static_cast<long long>(timeout_ms));
  while (!done()) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return true;
}

void ScenarioRuntime::settle(double budget_ms) {
  if (sim_) {
    sim_->scheduler().run();
    return;
  }
  std::this_thread::sleep_for(
      std::chrono::milliseconds(static_cast<long long>(std::min(budget_ms, 500.0))));
}

bool ScenarioRuntime::all_robots_idle() {
  for (auto& [id, node] : nodes_)
    for (const auto& d : node->repository().list())
      if (auto r = node->robot(d.robot_id); r && r->state() != senml::RobotState::kIdle)
        return false;
  return true;
}

bool ScenarioRuntime::marketplace_converged() {
  if (!marketplace_) return true;
  for (auto& [id, node] : nodes_)
    if (!node->converged_with(*marketplace_)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// run_scenario

RunReport run_scenario(const ScenarioConfig& cfg) {
  RunReport report;
  try {
    ScenarioRuntime rt(cfg);
    rt.boot();
    rt.run_script();
    if (auto* sched = rt.scheduler()) {
      sched->run();
    } else {
      double last = cfg.script.empty() ? 0 : cfg.script.back().at_ms;
      rt.await([&] { return false; }, last + 500);  // bounded wall-clock drain
    }
    if (rt.marketplace()) report.marketplace_records = rt.marketplace()->record_count();
    for (const auto& id : rt.node_ids()) {
      auto* n = rt.node(id);
      for (const auto& aid : n->assignment_ids())
        report.assignments[aid] = iaas::to_string(n->assignment(aid)->status);
    }
    report.event_log_json = rt.log().to_json_string();
  } catch (const std::exception& e) {
    report.aborted = true;
    report.abort_reason = e.what();
  }
  return report;
}

// ---------------------------------------------------------------------------
// IRDD measurement

namespace {

struct PresenceIrddProbe {
  std::string marketplace_uri;
  std::string watcher_uri;
  std::string target_robot;
  int reps = 0;
  double issue_ms = -1;
  bool arrived = false;
  std::string subscriber_id;
  std::vector<double> values;
  std::size_t censored = 0;
};

}  // namespace

std::vector<MetricSample> measure_irdd(const IrddOptions& opt, std::size_t* censored_out) {
  std::vector<MetricSample> samples;
  std::size_t censored_total = 0;

  for (int count : opt.iaas_counts) {
    for (const auto& backend : opt.backends) {
      ScenarioConfig cfg = default_scenario(count);
      cfg.scenario_id = "irdd-" + backend + "-" + std::to_string(count);
      cfg.transport = opt.transport;
      cfg.backend.kind = backend == "overlay" ? BackendConfig::Kind::kOverlay
                                              : BackendConfig::Kind::kPresence;
      cfg.backend.topology = opt.topology;

      ScenarioRuntime rt(cfg);
      rt.boot();

      if (backend == "presence") {
        auto probe = std::make_shared<PresenceIrddProbe>();
        probe->marketplace_uri = rt.marketplace()->endpoint();
        probe->target_robot = "iaas-" + std::to_string(std::min(2, count)) + "-arms";
        probe->reps = opt.reps;

        auto& transport = rt.transport();
        probe->watcher_uri = transport.register_endpoint(
            "bench-watcher", [probe, &transport](const net::HttpRequest& req) -> net::HttpResponse {
              if (req.path != "/notify") return {404, "{}"};
              auto body = nlohmann::json::parse(req.body);
              if (body.value("robotid", "") == probe->target_robot &&
                  body.value("initial", false) && !probe->arrived) {
                probe->arrived = true;
                probe->values.push_back(transport.now_ms() - probe->issue_ms);
                if (!probe->subscriber_id.empty()) {
                  net::HttpRequest del;
                  del.method = "DELETE";
                  del.path = "/robots/" + probe->target_robot + "/" + probe->subscriber_id;
                  transport.send(probe->marketplace_uri + del.path, std::move(del), nullptr);
                  probe->subscriber_id.clear();
                }
              }
              return {200, "{}"};
            });

        double base = rt.now_ms() + opt.rep_interval_ms;
        for (int rep = 0; rep < opt.reps; ++rep) {
          rt.transport().schedule(base + rep * opt.rep_interval_ms - rt.now_ms(),
                                  [probe, &transport] {
            probe->arrived = false;
            probe->issue_ms = transport.now_ms();
            net::HttpRequest sub;
            sub.method = "POST";
            sub.path = "/robots/" + probe->target_robot;
            sub.query["fromuri"] = probe->watcher_uri + "/notify";
            transport.send(probe->marketplace_uri + sub.path + "?fromuri=" + probe->watcher_uri +
                               "/notify",
                           std::move(sub), [probe, &transport](const net::HttpResponse& resp) {
                             if (!resp.ok()) return;
                             auto j = nlohmann::json::parse(resp.body);
                             probe->subscriber_id = j.value("subscriberid", "");
                             if (probe->arrived && !probe->subscriber_id.empty()) {
                               net::HttpRequest del;
                               del.method = "DELETE";
                               del.path = "/robots/" + probe->target_robot + "/" +
                                          probe->subscriber_id;
                               transport.send(probe->marketplace_uri + del.path, std::move(del),
                                              nullptr);
                               probe->subscriber_id.clear();
                             }
                           });
          });
        }

        bool complete = rt.await(
            [&] { return probe->values.size() + probe->censored >= static_cast<std::size_t>(opt.reps); },
            base + (opt.reps + 4) * opt.rep_interval_ms + 10000);
        if (!complete) probe->censored += opt.reps - probe->values.size();

        for (std::size_t i = 0; i < probe->values.size(); ++i)
          samples.push_back({"IRDD", cfg.scenario_id, "presence", count, probe->values[i],
                             static_cast<int>(i)});
        censored_total += probe->censored;
        rt.transport().unregister_endpoint(probe->watcher_uri);
      } else {
        auto* n1 = rt.overlay_node(1);
        auto values = std::make_shared<std::vector<double>>();
        auto partials = std::make_shared<std::size_t>(0);

        double base = rt.now_ms() + opt.rep_interval_ms;
        for (int rep = 0; rep < opt.reps; ++rep) {
          rt.transport().schedule(base + rep * opt.rep_interval_ms - rt.now_ms(),
                                  [n1, values, partials] {
            // Cold-cache discovery: the repetition model of the delay test.
            n1->clear_cache();
            n1->discover({}, /*force_query=*/true,
                         [values, partials](const overlay::DiscoverOutcome& out) {
                           if (out.partial) ++*partials;
                           else values->push_back(out.completed_ms - out.started_ms);
                         });
          });
        }
        bool complete = rt.await(
            [&] { return values->size() + *partials >= static_cast<std::size_t>(opt.reps); },
            base + (opt.reps + 4) * opt.rep_interval_ms + 30000);
        if (!complete) *partials += opt.reps - values->size();

        for (std::size_t i = 0; i < values->size(); ++i)
          samples.push_back(
              {"IRDD", cfg.scenario_id, "overlay", count, (*values)[i], static_cast<int>(i)});
        censored_total += *partials;
      }
    }
  }
  if (censored_out) *censored_out = censored_total;
  return samples;
}

// ---------------------------------------------------------------------------
// TAD measurement

std::vector<MetricSample> measure_tad(const TadOptions& opt, std::size_t* censored_out) {
  std::vector<MetricSample> samples;
  std::size_t censored = 0;

  // Direct federation.
  {
    ScenarioConfig cfg = tad_scenario();
    cfg.transport = opt.transport;
    cfg.scenario_id = "tad-direct";
    ScenarioRuntime rt(cfg);
    rt.boot();

    double base = rt.now_ms() + opt.rep_interval_ms;
    for (int rep = 0; rep < opt.reps; ++rep) {
      rt.transport().schedule(base + rep * opt.rep_interval_ms - rt.now_ms(), [&rt, rep] {
        json body;
        body["requestid"] = "tad-req-" + std::to_string(rep + 1);
        body["caps"] = {"light", "kicking-arm", "movement-motor"};
        body["task"] = {{"site", {2.0, 0.0}}, {"kind", "tad-probe"}, {"duration_ms", 10.0}};
        net::HttpRequest http;
        http.method = "POST";
        http.path = "/services/requests";
        http.body = body.dump();
        http.from = "saas-client";
        rt.transport().send(rt.route("iaas-1") + "/services/requests", std::move(http), nullptr);
      });
    }

    std::size_t want = static_cast<std::size_t>(opt.reps) * 3;
    bool complete =
        rt.await([&] { return rt.log().count("tad") >= want; },
                 base + (opt.reps + 4) * opt.rep_interval_ms + 30000);
    if (!complete) censored += want - rt.log().count("tad");

    std::map<std::string, std::string> endpoint_to_node;
    for (const auto& id : rt.node_ids()) endpoint_to_node[rt.route(id)] = id;
    std::map<std::string, int> rep_of;
    for (const auto& ev : rt.log().of_kind("tad")) {
      auto receiver_uri = ev.detail.at("receiver").get<std::string>();
      auto node = endpoint_to_node.count(receiver_uri) ? endpoint_to_node[receiver_uri]
                                                       : receiver_uri;
      double v = ev.detail.at("recv_ms").get<double>() - ev.detail.at("send_ms").get<double>();
      samples.push_back(
          {"TAD", "recv-" + node, "direct", opt.iaas_count, v, rep_of[node]++});
    }
  }

  // Overlay pipes.
  {
    ScenarioConfig cfg = tad_scenario();
    cfg.transport = opt.transport;
    cfg.scenario_id = "tad-overlay";
    cfg.backend.kind = BackendConfig::Kind::kOverlay;
    cfg.backend.topology = opt.topology;
    ScenarioRuntime rt(cfg);
    rt.boot();

    auto* src = rt.overlay_node(1);
    auto got = std::make_shared<std::vector<MetricSample>>();
    auto lost = std::make_shared<std::size_t>(0);

    double base = rt.now_ms() + opt.rep_interval_ms;
    for (int rep = 0; rep < opt.reps; ++rep) {
      rt.transport().schedule(base + rep * opt.rep_interval_ms - rt.now_ms(),
                              [&rt, src, got, lost, rep, &opt] {
        for (int dst = 2; dst <= opt.iaas_count; ++dst) {
          double send_ms = rt.now_ms();
          json payload;
          payload["assignment"] = "tad-req-" + std::to_string(rep + 1);
          payload["robot"] = "iaas-" + std::to_string(dst) + "-svc";
          src->pipe_send(dst, payload, [got, lost, rep, dst, send_ms, &opt](double recv_ms) {
            if (recv_ms < 0) ++*lost;
            else
              got->push_back({"TAD", "recv-iaas-" + std::to_string(dst), "overlay",
                              opt.iaas_count, recv_ms - send_ms, rep});
          });
        }
      });
    }

    std::size_t want = static_cast<std::size_t>(opt.reps) * (opt.iaas_count - 1);
    bool complete = rt.await([&] { return got->size() + *lost >= want; },
                             base + (opt.reps + 4) * opt.rep_interval_ms + 30000);
    if (!complete) censored += want - got->size();
    censored += *lost;
    samples.insert(samples.end(), got->begin(), got->end());
  }

  if (censored_out) *censored_out = censored;
  return samples;
}

// ---------------------------------------------------------------------------
// Fire suppression

FireReport run_fire_suppression(const FireOptions& opt) {
  FireReport report;

  ScenarioConfig cfg = default_scenario(4);
  cfg.scenario_id = "fire-suppression";
  cfg.transport = opt.transport;
  cfg.fault_probability = opt.fault_probability;
  cfg.fault_tag = opt.fault_tag;
  ScriptedRequest req;
  req.at_ms = 100;
  req.origin_node = "iaas-1";
  req.caps = {"light", "kicking-arm", "movement-motor"};
  req.task.site_x = 2;
  req.task.site_y = 3;
  req.task.kind = "fire-suppression";
  req.task.duration_ms = 400;
  cfg.script.push_back(req);

  ScenarioRuntime rt(cfg);
  rt.boot();
  rt.run_script();

  auto* n1 = rt.node("iaas-1");
  rt.await(
      [&] {
        auto ids = n1->assignment_ids();
        if (ids.empty()) return false;
        return n1->assignment(ids.front())->status != iaas::AssignmentStatus::kRunning;
      },
      120000);
  rt.settle();

  auto ids = n1->assignment_ids();
  if (ids.empty()) {
    report.violations.push_back("no assignment was created for the fire-suppression request");
    report.event_log_json = rt.log().to_json_string();
    return report;
  }
  const auto* a = n1->assignment(ids.front());
  report.assignment_id = a->id;
  report.status = iaas::to_string(a->status);
  report.replanned = a->replanned;
  for (const auto& [rid, st] : a->members) report.members.push_back(rid);

  senml::CapabilitySet required{{"light", "kicking-arm", "movement-motor"}};
  report.composite_caps.assign(a->composite.caps.begin(), a->composite.caps.end());
  if (!a->composite.caps.covers(required))
    report.violations.push_back("composite descriptor does not cover the required capabilities");

  bool has_light_member = false, has_mover_member = false;
  for (const auto& [rid, st] : a->members) {
    auto rec = rt.marketplace()->record(rid);
    if (!rec) continue;
    auto caps = senml::capability_set(rec->descriptor);
    if (caps.contains("light")) has_light_member = true;
    if (caps.contains("movement-motor") && !caps.contains("light")) has_mover_member = true;
  }
  report.both_types = has_light_member && has_mover_member;

  for (const auto& id : rt.node_ids())
    for (const auto* gw : rt.node(id)->gateways().instances())
      for (const auto& line : gw->frame_log()) report.frames.push_back(id + ": " + line);

  report.all_idle = rt.all_robots_idle();
  report.marketplace_converged = rt.marketplace_converged();

  if (a->status == iaas::AssignmentStatus::kDone) {
    if (!report.both_types)
      report.violations.push_back("coalition does not span both robot service types");
    if (!report.all_idle)
      report.violations.push_back("robots did not return to IDLE after completion");
    if (!report.marketplace_converged)
      report.violations.push_back("marketplace state did not converge with the repositories");
  }
  report.ok = report.violations.empty();
  report.event_log_json = rt.log().to_json_string();
  return report;
}

}  // namespace robocloud::bench
