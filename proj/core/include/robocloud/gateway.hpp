#pragma once

// The signaling plane: robot gateways translating infrastructure commands
// into a line-oriented robot wire protocol, and the simulated physical
// robots behind them.
//
// Wire grammar (newline-delimited, UTF-8, space-separated tokens):
//   CMD <taskid> MOVE <x> <y>
//   CMD <taskid> ACTUATE <tag>
//   CMD <taskid> SENSE <tag>
//   EVT <taskid> DONE
//   EVT <taskid> FAIL <reason>
//   EVT <taskid> SENSED <tag> <value>
// Every CMD sequence for a task id is answered by exactly one terminal EVT.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robocloud/descriptor.hpp"
#include "robocloud/transport.hpp"

namespace robocloud::gateway {

struct WireCommand {
  enum class Kind { kMove, kActuate, kSense };
  Kind kind = Kind::kActuate;
  std::string task_id;
  double x = 0, y = 0;  // kMove
  std::string tag;      // kActuate / kSense

  static WireCommand move(std::string task_id, double x, double y);
  static WireCommand actuate(std::string task_id, std::string tag);
  static WireCommand sense(std::string task_id, std::string tag);
};

struct WireEvent {
  enum class Kind { kDone, kFail, kSensed };
  Kind kind = Kind::kDone;
  std::string task_id;
  std::string reason;  // kFail
  std::string tag;     // kSensed
  double value = 0;    // kSensed
  bool terminal() const { return kind != Kind::kSensed; }
};

std::string frame(const WireCommand& c);
std::string frame(const WireEvent& e);
WireCommand parse_command_frame(const std::string& line);  // throws std::invalid_argument
WireEvent parse_event_frame(const std::string& line);

struct FaultModel {
  double fail_probability = 0.0;  // per task, rolled at completion
};

/// One simulated physical robot. Single-owner: exactly one execution
/// context feeds and steps it. Motion is linear at a fixed speed; a task's
/// non-movement work takes its nominal duration.
class SimRobot {
 public:
  static constexpr double kSpeedMps = 0.5;
  static constexpr double kDefaultTaskMs = 100.0;

  SimRobot(senml::RobotDescriptor descriptor, FaultModel fault, std::uint64_t seed);

  const std::string& id() const { return descriptor_.robot_id; }
  const senml::RobotDescriptor& descriptor() const { return descriptor_; }
  senml::RobotState state() const { return state_; }
  double x() const { return x_; }
  double y() const { return y_; }

  /// Accepts the command frames of one task (all same task id). The robot
  /// moves to ASSIGNED; execution starts on the next step.
  void feed(const std::vector<std::string>& command_frames, double now_ms,
            double task_duration_ms = kDefaultTaskMs);

  /// Advances execution to `now_ms`, returning emitted event frames.
  std::vector<std::string> step(double now_ms);

  /// Time of the next internal transition, or nullopt when quiescent.
  std::optional<double> next_due_ms() const;

  /// FAILED -> IDLE. The only way out of FAILED.
  void reset();

  void set_fault(FaultModel fault) { fault_ = fault; }
  const FaultModel& fault() const { return fault_; }

  std::size_t active_task_count() const { return tasks_.size(); }

 private:
  struct Segment {
    WireCommand cmd;
    double start_ms = 0;
    double end_ms = 0;
    double from_x = 0, from_y = 0;  // kMove interpolation
  };
  struct Task {
    std::string id;
    std::vector<Segment> segments;
    std::size_t next_segment = 0;
    double ends_at = 0;
  };

  void plan(Task& t, double now_ms, double duration_ms);
  WireEvent sensed_event(const std::string& task_id, const std::string& tag);

  senml::RobotDescriptor descriptor_;
  FaultModel fault_;
  std::mt19937_64 rng_;
  senml::RobotState state_ = senml::RobotState::kIdle;
  double x_ = 0, y_ = 0;
  std::vector<Task> tasks_;
};

/// A gateway event surfaced to the robot monitor: either "the robot began
/// executing" or a decoded wire event.
struct GatewayNotice {
  std::string robot_id;
  bool started = false;
  std::optional<WireEvent> event;
};
using NoticeSink = std::function<void(const GatewayNotice&)>;

enum class GatewayLifecycle { kUp, kDraining, kDown };
const char* to_string(GatewayLifecycle s);

/// One protocol-specific gateway instance relaying frames between the
/// infrastructure and its bound robots. The node side only ever sees
/// GatewayNotice values; raw frames stay in the gateway's frame log.
class Gateway {
 public:
  Gateway(std::string id, std::string protocol, net::Transport& transport, EventLog& log);

  const std::string& id() const { return id_; }
  const std::string& protocol() const { return protocol_; }
  GatewayLifecycle lifecycle() const { return lifecycle_; }

  void bind(std::shared_ptr<SimRobot> robot);
  void unbind(const std::string& robot_id);
  bool has_robot(const std::string& robot_id) const;
  std::size_t bound_count() const { return robots_.size(); }

  struct RoutingError : std::runtime_error {
    using std::runtime_error::runtime_error;
  };

  /// Frames and dispatches one task's commands. Throws RoutingError when
  /// the robot is unbound or FAILED; in that case no frames are emitted.
  void send(const std::string& robot_id, const std::vector<WireCommand>& commands,
            double task_duration_ms);

  void set_notice_sink(NoticeSink sink) { sink_ = std::move(sink); }

  /// Raw frame log, "<robot_id> <direction> <frame>" per line, in order.
  const std::vector<std::string>& frame_log() const { return frame_log_; }

  void mark(GatewayLifecycle lc) { lifecycle_ = lc; }

 private:
  void pump(const std::shared_ptr<SimRobot>& robot);

  std::string id_;
  std::string protocol_;
  net::Transport& transport_;
  EventLog& log_;
  GatewayLifecycle lifecycle_ = GatewayLifecycle::kUp;
  std::map<std::string, std::shared_ptr<SimRobot>> robots_;
  std::map<std::string, bool> started_;  // robot_id -> start notice sent for current burst
  NoticeSink sink_;
  std::vector<std::string> frame_log_;
};

/// Instantiates gateways on demand, one per protocol tag, and tears them
/// down after a drain timeout once their last robot unbinds.
class GatewayManager {
 public:
  static constexpr double kDrainTimeoutMs = 2000.0;

  GatewayManager(std::string owner_id, net::Transport& transport, EventLog& log);

  Gateway& ensure(const std::string& protocol);
  Gateway* find_for_robot(const std::string& robot_id);
  Gateway* find(const std::string& protocol);

  void bind_robot(const std::string& protocol, std::shared_ptr<SimRobot> robot);
  void unbind_robot(const std::string& robot_id);

  void set_notice_sink(NoticeSink sink);

  std::vector<const Gateway*> instances() const;

 private:
  void arm_drain_timer(const std::string& protocol);

  std::string owner_id_;
  net::Transport& transport_;
  EventLog& log_;
  NoticeSink sink_;
  std::map<std::string, std::unique_ptr<Gateway>> gateways_;  // by protocol
  std::uint64_t next_id_ = 1;
};

}  // namespace robocloud::gateway
