#include "robocloud/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "robocloud/util.hpp"

namespace robocloud::senml {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using robocloud::util::normalize_tag;

const char* to_string(RobotState s) {
  switch (s) {
    case RobotState::kIdle: return "IDLE";
    case RobotState::kAssigned: return "ASSIGNED";
    case RobotState::kExecuting: return "EXECUTING";
    case RobotState::kFailed: return "FAILED";
    case RobotState::kOffline: return "OFFLINE";
  }
  return "IDLE";
}

RobotState robot_state_from_string(std::string_view s) {
  if (s == "IDLE") return RobotState::kIdle;
  if (s == "ASSIGNED") return RobotState::kAssigned;
  if (s == "EXECUTING") return RobotState::kExecuting;
  if (s == "FAILED") return RobotState::kFailed;
  if (s == "OFFLINE") return RobotState::kOffline;
  throw ValidationError("unknown robot state '" + std::string(s) + "'", "state");
}

std::optional<ValueRange> parse_value_range(std::string_view s, std::string_view label) {
  if (s.empty()) return std::nullopt;
  std::string t = util::trim(s);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')')
    throw RangeError(std::string(label) + " range '" + std::string(s) + "' is not of the form (min,max)");
  std::string inner = t.substr(1, t.size() - 2);
  auto comma = inner.find(',');
  if (comma == std::string::npos)
    throw RangeError(std::string(label) + " range '" + std::string(s) + "' is missing a comma");
  ValueRange r;
  try {
    r.min = std::stod(util::trim(inner.substr(0, comma)));
    r.max = std::stod(util::trim(inner.substr(comma + 1)));
  } catch (const std::exception&) {
    throw RangeError(std::string(label) + " range '" + std::string(s) + "' has non-numeric bounds");
  }
  if (!(std::isfinite(r.min) && std::isfinite(r.max)))
    throw RangeError(std::string(label) + " range '" + std::string(s) + "' has non-finite bounds");
  if (r.min > r.max)
    throw RangeError(std::string(label) + " range '" + std::string(s) + "' has min > max");
  return r;
}

// ---------------------------------------------------------------------------
// CapabilitySet

CapabilitySet::CapabilitySet(std::initializer_list<std::string_view> tags) {
  for (auto t : tags) insert(t);
}

std::string CapabilitySet::normalize(std::string_view tag) { return normalize_tag(tag); }

void CapabilitySet::insert(std::string_view tag) {
  auto n = normalize(tag);
  if (!n.empty()) tags_.insert(std::move(n));
}

void CapabilitySet::merge(const CapabilitySet& other) {
  tags_.insert(other.tags_.begin(), other.tags_.end());
}

bool CapabilitySet::contains(std::string_view tag) const {
  return tags_.count(normalize(tag)) > 0;
}

bool CapabilitySet::covers(const CapabilitySet& required) const {
  return std::includes(tags_.begin(), tags_.end(), required.tags_.begin(), required.tags_.end());
}

std::vector<std::string> CapabilitySet::missing_from(const CapabilitySet& required) const {
  std::vector<std::string> out;
  for (const auto& t : required.tags_)
    if (!tags_.count(t)) out.push_back(t);
  return out;
}

std::string CapabilitySet::to_string() const {
  std::string out;
  for (const auto& t : tags_) {
    if (!out.empty()) out += ',';
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void unknown_label(const std::string& label, const std::string& where) {
  throw ValidationError("unknown wire label '" + label + "' in " + where, label);
}

std::string need_string(const json& v, const std::string& label) {
  if (!v.is_string())
    throw ValidationError("wire label '" + label + "' must hold a string", label);
  return v.get<std::string>();
}

void parse_sensor_entry(const json& e, StaticCharacteristics& out) {
  if (!e.is_object()) throw ValidationError("entries of 'sen' must be objects", "sen");
  SensorSpec s;
  for (const auto& [k, v] : e.items()) {
    if (k == "sname") s.name = normalize_tag(need_string(v, k));
    else if (k == "sval") s.range = need_string(v, k);
    else if (k == "su") s.unit = need_string(v, k);
    else unknown_label(k, "'sen' entry");
  }
  parse_value_range(s.range, "sval");
  out.sensors.push_back(std::move(s));
}

void parse_actuator_entry(const json& e, StaticCharacteristics& out) {
  if (!e.is_object()) throw ValidationError("entries of 'act' must be objects", "act");
  ActuatorSpec a;
  for (const auto& [k, v] : e.items()) {
    if (k == "aname") a.name = normalize_tag(need_string(v, k));
    else if (k == "aval") a.range = need_string(v, k);
    else if (k == "au") a.unit = need_string(v, k);
    else unknown_label(k, "'act' entry");
  }
  if (a.name.empty()) throw ValidationError("'aname' must be non-empty", "aname");
  parse_value_range(a.range, "aval");
  out.actuators.push_back(std::move(a));
}

void parse_static_block(const json& doc, RobotDescriptor& d) {
  if (doc.contains("ph")) {
    const auto& ph = doc.at("ph");
    if (!ph.is_object()) throw ValidationError("'ph' must be an object of key/value properties", "ph");
    for (const auto& [k, v] : ph.items()) d.static_ch.physical[k] = need_string(v, "ph." + k);
  }
  if (doc.contains("sen")) {
    const auto& sen = doc.at("sen");
    if (!sen.is_array()) throw ValidationError("'sen' must serialize as an array", "sen");
    for (const auto& e : sen) parse_sensor_entry(e, d.static_ch);
  }
  if (doc.contains("act")) {
    const auto& act = doc.at("act");
    if (!act.is_array()) throw ValidationError("'act' must serialize as an array", "act");
    for (const auto& e : act) parse_actuator_entry(e, d.static_ch);
  }
  if (doc.contains("info")) {
    const auto& info = doc.at("info");
    if (!info.is_array()) throw ValidationError("'info' must serialize as an array", "info");
    for (const auto& e : info) {
      if (!e.is_object()) throw ValidationError("entries of 'info' must be objects", "info");
      std::string n, v;
      for (const auto& [k, val] : e.items()) {
        if (k == "n") n = need_string(val, "info.n");
        else if (k == "v") v = need_string(val, "info.v");
        else unknown_label(k, "'info' entry");
      }
      d.static_ch.info.emplace_back(std::move(n), std::move(v));
    }
  }
}

void parse_behavioral_block(const json& b, RobotDescriptor& d) {
  if (!b.is_object()) throw ValidationError("'behavioral' must be an object", "behavioral");
  for (const auto& [k, v] : b.items()) {
    if (k == "tasks") {
      if (!v.is_array()) throw ValidationError("'behavioral.tasks' must be an array", "tasks");
      for (const auto& t : v)
        d.behavioral.supported_tasks.push_back(normalize_tag(need_string(t, "tasks")));
    } else {
      unknown_label(k, "'behavioral'");
    }
  }
}

void parse_dynamic_block(const json& b, RobotDescriptor& d) {
  if (!b.is_object()) throw ValidationError("'dynamic' must be an object", "dynamic");
  for (const auto& [k, v] : b.items()) {
    if (k == "loc") {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ValidationError("'dynamic.loc' must be [x,y]", "loc");
      d.dynamic.x = v[0].get<double>();
      d.dynamic.y = v[1].get<double>();
    } else if (k == "battery") {
      if (!v.is_number()) throw ValidationError("'dynamic.battery' must be a number", "battery");
      d.dynamic.battery_pct = v.get<double>();
    } else if (k == "state") {
      d.dynamic.state = robot_state_from_string(need_string(v, "state"));
    } else {
      unknown_label(k, "'dynamic'");
    }
  }
}

void parse_interaction_block(const json& b, RobotDescriptor& d) {
  if (!b.is_object()) throw ValidationError("'interaction' must be an object", "interaction");
  for (const auto& [k, v] : b.items()) {
    if (k == "protocol") d.interaction.protocol = need_string(v, "protocol");
    else if (k == "endpoint") d.interaction.endpoint = need_string(v, "endpoint");
    else unknown_label(k, "'interaction'");
  }
}

constexpr const char* kTopLevelLabels[] = {"robotid", "ph",       "sen",     "act",
                                           "info",    "behavioral", "dynamic", "interaction"};

}  // namespace

RobotDescriptor parse_descriptor(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!doc.is_object())
    throw ValidationError("robot document must be a JSON object", "document");

  for (const auto& [k, v] : doc.items()) {
    (void)v;
    if (std::find(std::begin(kTopLevelLabels), std::end(kTopLevelLabels), k) ==
        std::end(kTopLevelLabels))
      unknown_label(k, "robot document");
  }

  RobotDescriptor d;
  if (doc.contains("robotid")) d.robot_id = need_string(doc.at("robotid"), "robotid");
  parse_static_block(doc, d);
  if (doc.contains("behavioral")) parse_behavioral_block(doc.at("behavioral"), d);
  if (doc.contains("dynamic")) parse_dynamic_block(doc.at("dynamic"), d);
  if (doc.contains("interaction")) parse_interaction_block(doc.at("interaction"), d);

  if (d.dynamic.battery_pct < 0 || d.dynamic.battery_pct > 100)
    throw ValidationError("battery must be within [0,100]", "battery");
  if (!util::is_valid_uri(d.interaction.endpoint))
    throw ValidationError("'interaction.endpoint' is not a valid URI", "endpoint");
  return d;
}

// ---------------------------------------------------------------------------
// Validation

void validate(const RobotDescriptor& d) {
  if (d.robot_id.empty())
    throw ValidationError("robot_id must be non-empty", "robotid");
  if (d.robot_id.rfind("sub-", 0) == 0)
    throw ValidationError("robot_id must not use the reserved 'sub-' prefix", "robotid");
  for (const auto& s : d.static_ch.sensors) {
    if (s.name.empty()) throw ValidationError("'sname' must be non-empty", "sname");
    if (s.name != normalize_tag(s.name))
      throw ValidationError("'sname' must be normalized (lowercase, trimmed)", "sname");
    parse_value_range(s.range, "sval");
  }
  for (const auto& a : d.static_ch.actuators) {
    if (a.name.empty()) throw ValidationError("'aname' must be non-empty", "aname");
    if (a.name != normalize_tag(a.name))
      throw ValidationError("'aname' must be normalized (lowercase, trimmed)", "aname");
    parse_value_range(a.range, "aval");
  }
  if (d.dynamic.battery_pct < 0 || d.dynamic.battery_pct > 100)
    throw ValidationError("battery must be within [0,100]", "battery");
  if (!(std::isfinite(d.dynamic.x) && std::isfinite(d.dynamic.y)))
    throw ValidationError("'dynamic.loc' must be finite", "loc");
  if (!util::is_valid_uri(d.interaction.endpoint))
    throw ValidationError("'interaction.endpoint' is not a valid URI", "endpoint");
}

bool is_publishable(const RobotDescriptor& d) { return !capability_set(d).empty(); }

CapabilitySet capability_set(const RobotDescriptor& d) {
  CapabilitySet caps;
  for (const auto& s : d.static_ch.sensors) caps.insert(s.name);
  for (const auto& a : d.static_ch.actuators) caps.insert(a.name);
  for (const auto& t : d.behavioral.supported_tasks) caps.insert(t);
  return caps;
}

// ---------------------------------------------------------------------------
// Serialization (canonical form)

std::string serialize_descriptor(const RobotDescriptor& d) {
  validate(d);

  ordered_json doc;
  doc["robotid"] = d.robot_id;

  ordered_json ph = ordered_json::object();
  for (const auto& [k, v] : d.static_ch.physical) ph[k] = v;  // std::map: sorted
  doc["ph"] = std::move(ph);

  ordered_json sen = ordered_json::array();
  for (const auto& s : d.static_ch.sensors) {
    ordered_json e;
    e["sname"] = normalize_tag(s.name);
    e["su"] = s.unit;
    e["sval"] = s.range;
    sen.push_back(std::move(e));
  }
  doc["sen"] = std::move(sen);

  ordered_json act = ordered_json::array();
  for (const auto& a : d.static_ch.actuators) {
    ordered_json e;
    e["aname"] = normalize_tag(a.name);
    e["au"] = a.unit;
    e["aval"] = a.range;
    act.push_back(std::move(e));
  }
  doc["act"] = std::move(act);

  ordered_json info = ordered_json::array();
  for (const auto& [n, v] : d.static_ch.info) {
    ordered_json e;
    e["n"] = n;
    e["v"] = v;
    info.push_back(std::move(e));
  }
  doc["info"] = std::move(info);

  ordered_json behavioral;
  ordered_json tasks = ordered_json::array();
  for (const auto& t : d.behavioral.supported_tasks) tasks.push_back(normalize_tag(t));
  behavioral["tasks"] = std::move(tasks);
  doc["behavioral"] = std::move(behavioral);

  ordered_json dynamic;
  dynamic["battery"] = d.dynamic.battery_pct;
  dynamic["loc"] = ordered_json::array({d.dynamic.x, d.dynamic.y});
  dynamic["state"] = to_string(d.dynamic.state);
  doc["dynamic"] = std::move(dynamic);

  ordered_json interaction;
  interaction["endpoint"] = d.interaction.endpoint;
  interaction["protocol"] = d.interaction.protocol;
  doc["interaction"] = std::move(interaction);

  return doc.dump();
}

// ---------------------------------------------------------------------------
// Merge

CompositeDescriptor merge_descriptors(std::span<const RobotDescriptor> ds) {
  if (ds.empty())
    throw std::invalid_argument("merge_descriptors requires a non-empty descriptor list");

  CompositeDescriptor out;
  std::set<std::string> seen;
  for (const auto& d : ds) {
    validate(d);
    if (!seen.insert(d.robot_id).second)
      throw ConflictError("duplicate robot_id '" + d.robot_id + "' in merge list");
    out.members.push_back(d.robot_id);
    out.caps.merge(capability_set(d));
    for (const auto& s : d.static_ch.sensors) out.sensors.emplace_back(d.robot_id, s);
    for (const auto& a : d.static_ch.actuators) out.actuators.emplace_back(d.robot_id, a);
  }
  return out;
}

std::string CompositeDescriptor::to_json_string() const {
  ordered_json j;
  j["members"] = members;
  j["caps"] = std::vector<std::string>(caps.begin(), caps.end());
  ordered_json sen = ordered_json::array();
  for (const auto& [src, s] : sensors) {
    ordered_json e;
    e["source"] = src;
    e["sname"] = s.name;
    e["su"] = s.unit;
    e["sval"] = s.range;
    sen.push_back(std::move(e));
  }
  j["sen"] = std::move(sen);
  ordered_json act = ordered_json::array();
  for (const auto& [src, a] : actuators) {
    ordered_json e;
    e["source"] = src;
    e["aname"] = a.name;
    e["au"] = a.unit;
    e["aval"] = a.range;
    act.push_back(std::move(e));
  }
  j["act"] = std::move(act);
  return j.dump();
}

}  // namespace robocloud::senml
