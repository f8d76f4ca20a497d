#pragma once

// Coalition formation: pick the minimum-cost set of robot services whose
// combined capabilities cover a task's requirements. Member cost is the
// euclidean distance from the robot to the task site plus a fixed
// engagement cost, plus a penalty for members hosted on a remote
// infrastructure. Instances with at most `exact_threshold` candidates are
// solved exactly by subset enumeration; larger ones fall back to a greedy
// max-new-coverage-per-cost heuristic. Ties break on the lexicographically
// smallest sorted member-id list.

#include <optional>
#include <string>
#include <vector>

#include "robocloud/descriptor.hpp"

namespace robocloud::coalition {

struct Candidate {
  std::string robot_id;
  std::string owner_uri;  // hosting IaaS endpoint
  senml::CapabilitySet caps;
  double x = 0;
  double y = 0;
  bool local = true;
};

struct Member {
  std::string robot_id;
  std::string owner_uri;
  senml::CapabilitySet assigned_tags;  // required tags this member contributes
  double cost = 0;
  bool local = true;
};

struct Coalition {
  std::vector<Member> members;  // sorted by robot_id
  double cost = 0;
  bool exact = true;  // solved by enumeration (vs. greedy)
};

struct CostParams {
  double engagement_cost = 0.5;  // per selected member
  double remote_penalty = 1.0;   // added when the member is not local
  int exact_threshold = 15;
};

struct Unsatisfiable : std::runtime_error {
  Unsatisfiable(std::string msg, std::vector<std::string> missing_tags)
      : std::runtime_error(std::move(msg)), missing(std::move(missing_tags)) {}
  std::vector<std::string> missing;
};

double member_cost(const Candidate& c, double site_x, double site_y, const CostParams& p);

/// Throws Unsatisfiable (listing missing tags) when no subset of the
/// candidates covers `required`. `required` must be non-empty.
Coalition form_coalition(const std::vector<Candidate>& candidates,
                         const senml::CapabilitySet& required, double site_x, double site_y,
                         const CostParams& params = {});

/// The heuristic on its own, any instance size. Same contract.
Coalition form_coalition_greedy(const std::vector<Candidate>& candidates,
                                const senml::CapabilitySet& required, double site_x,
                                double site_y, const CostParams& params = {});

}  // namespace robocloud::coalition
