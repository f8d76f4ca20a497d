#pragma once

// Unified robot description model: an extended-SenML document that carries a
// robot's static, behavioral, dynamic and interaction characteristics in one
// self-contained record. This header owns the codec (parse/serialize with a
// canonical byte form), validation, capability extraction and the descriptor
// merge used for service composition.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace robocloud::senml {

enum class RobotState { kIdle, kAssigned, kExecuting, kFailed, kOffline };

const char* to_string(RobotState s);
RobotState robot_state_from_string(std::string_view s);  // throws ValidationError

// ---------------------------------------------------------------------------
// Errors

struct DescriptorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed document text. byte_offset points at the first offending byte.
struct ParseError : DescriptorError {
  ParseError(const std::string& msg, std::size_t offset)
      : DescriptorError(msg), byte_offset(offset) {}
  std::size_t byte_offset = 0;
};

/// Structurally well-formed but invalid content. label names the wire label
/// (or field) that violated its contract.
struct ValidationError : DescriptorError {
  ValidationError(const std::string& msg, std::string which)
      : DescriptorError(msg), label(std::move(which)) {}
  std::string label;
};

/// A "(min,max)" value range that is malformed or has min > max.
struct RangeError : DescriptorError {
  using DescriptorError::DescriptorError;
};

struct ConflictError : DescriptorError {
  using DescriptorError::DescriptorError;
};

// ---------------------------------------------------------------------------
// Domain types

struct ValueRange {
  double min = 0;
  double max = 0;
};

/// Parses "(min,max)". Empty input -> nullopt. Throws RangeError when the
/// pair is malformed or min > max. `label` is used in error messages.
std::optional<ValueRange> parse_value_range(std::string_view s, std::string_view label);

struct SensorSpec {
  std::string name;   // "sname", normalized tag
  std::string range;  // "sval", "(min,max)" or empty
  std::string unit;   // "su"
  bool operator==(const SensorSpec&) const = default;
};

struct ActuatorSpec {
  std::string name;   // "aname", normalized tag
  std::string range;  // "aval"
  std::string unit;   // "au"
  bool operator==(const ActuatorSpec&) const = default;
};

struct StaticCharacteristics {
  std::map<std::string, std::string> physical;               // "ph"
  std::vector<SensorSpec> sensors;                           // "sen"
  std::vector<ActuatorSpec> actuators;                       // "act"
  std::vector<std::pair<std::string, std::string>> info;     // "info", opaque n/v pairs
  bool operator==(const StaticCharacteristics&) const = default;
};

struct BehavioralCharacteristics {
  std::vector<std::string> supported_tasks;  // normalized capability tags
  bool operator==(const BehavioralCharacteristics&) const = default;
};

struct DynamicCharacteristics {
  double x = 0;  // meters
  double y = 0;
  double battery_pct = 100;
  RobotState state = RobotState::kIdle;
  bool operator==(const DynamicCharacteristics&) const = default;
};

struct InteractionCharacteristics {
  std::string protocol;
  std::string endpoint;  // URI
  bool operator==(const InteractionCharacteristics&) const = default;
};

struct RobotDescriptor {
  std::string robot_id;
  StaticCharacteristics static_ch;
  BehavioralCharacteristics behavioral;
  DynamicCharacteristics dynamic;
  InteractionCharacteristics interaction;
  bool operator==(const RobotDescriptor&) const = default;
};

/// Normalized capability tags: the matching key for discovery and coalition
/// formation. Set semantics, lowercase-trim normalization everywhere.
class CapabilitySet {
 public:
  CapabilitySet() = default;
  explicit CapabilitySet(std::initializer_list<std::string_view> tags);

  static std::string normalize(std::string_view tag);

  void insert(std::string_view tag);
  void merge(const CapabilitySet& other);
  bool contains(std::string_view tag) const;
  /// true when every tag of `required` is present here.
  bool covers(const CapabilitySet& required) const;
  bool empty() const { return tags_.empty(); }
  std::size_t size() const { return tags_.size(); }
  const std::set<std::string>& tags() const { return tags_; }
  /// Tags of `required` not present here.
  std::vector<std::string> missing_from(const CapabilitySet& required) const;
  std::string to_string() const;  // "a,b,c"

  bool operator==(const CapabilitySet&) const = default;

  auto begin() const { return tags_.begin(); }
  auto end() const { return tags_.end(); }

 private:
  std::set<std::string> tags_;
};

/// Result of merging several elementary descriptors: the pattern the
/// virtualization engine uses to form a matching coalition. Sensor and
/// actuator entries keep their source robot id.
struct CompositeDescriptor {
  std::vector<std::string> members;  // robot ids, input order
  CapabilitySet caps;
  std::vector<std::pair<std::string, SensorSpec>> sensors;
  std::vector<std::pair<std::string, ActuatorSpec>> actuators;
  bool operator==(const CompositeDescriptor&) const = default;

  std::string to_json_string() const;  // audit form, stable key order
};

// ---------------------------------------------------------------------------
// Operations

/// Parses one extended-SenML robot document. Missing blocks become empty
/// defaults; sname/aname/supported_tasks are normalized on intake.
/// Throws ParseError (malformed text, with byte offset), ValidationError
/// (unknown wire label or bad field type/value), RangeError (bad sval/aval).
RobotDescriptor parse_descriptor(std::string_view text);

/// Emits the canonical byte form: fixed block order (robotid, ph, sen, act,
/// info, behavioral, dynamic, interaction), sorted keys inside each object,
/// no insignificant whitespace. Structurally equal descriptors serialize to
/// identical bytes. Throws on the first violated invariant.
std::string serialize_descriptor(const RobotDescriptor& d);

/// Checks every per-type invariant, throwing on the first violation.
void validate(const RobotDescriptor& d);

/// Valid descriptors with an empty capability set are well-formed but cannot
/// be published to a marketplace.
bool is_publishable(const RobotDescriptor& d);

/// Union of normalized sensor names, actuator names and supported tasks.
CapabilitySet capability_set(const RobotDescriptor& d);

/// Merges descriptors in order. Throws std::invalid_argument on an empty
/// list and ConflictError on a duplicate robot_id.
CompositeDescriptor merge_descriptors(std::span<const RobotDescriptor> ds);

}  // namespace robocloud::senml
