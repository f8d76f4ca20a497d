#include "robocloud/coalition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

namespace robocloud::coalition {

namespace {

constexpr double kCostEps = 1e-9;

std::vector<std::string> sorted_ids(const std::vector<const Candidate*>& picked) {
  std::vector<std::string> ids;
  ids.reserve(picked.size());
  for (const auto* c : picked) ids.push_back(c->robot_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Coalition build_result(const std::vector<const Candidate*>& picked,
                       const senml::CapabilitySet& required, double site_x, double site_y,
                       const CostParams& params, bool exact) {
  std::vector<const Candidate*> ordered = picked;
  std::sort(ordered.begin(), ordered.end(),
            [](const Candidate* a, const Candidate* b) { return a->robot_id < b->robot_id; });
  Coalition out;
  out.exact = exact;
  for (const auto* c : ordered) {
    Member m;
    m.robot_id = c->robot_id;
    m.owner_uri = c->owner_uri;
    m.local = c->local;
    m.cost = member_cost(*c, site_x, site_y, params);
    for (const auto& t : required)
      if (c->caps.contains(t)) m.assigned_tags.insert(t);
    out.cost += m.cost;
    out.members.push_back(std::move(m));
  }
  return out;
}

[[noreturn]] void throw_unsatisfiable(const std::vector<Candidate>& candidates,
                                      const senml::CapabilitySet& required) {
  senml::CapabilitySet reachable;
  for (const auto& c : candidates) reachable.merge(c.caps);
  auto missing = reachable.missing_from(required);
  std::string msg = "no coalition covers the required capabilities; missing:";
  for (const auto& t : missing) msg += " " + t;
  throw Unsatisfiable(msg, missing);
}

}  // namespace

double member_cost(const Candidate& c, double site_x, double site_y, const CostParams& p) {
  double dx = c.x - site_x, dy = c.y - site_y;
  double cost = std::sqrt(dx * dx + dy * dy) + p.engagement_cost;
  if (!c.local) cost += p.remote_penalty;
  return cost;
}

Coalition form_coalition(const std::vector<Candidate>& candidates,
                         const senml::CapabilitySet& required, double site_x, double site_y,
                         const CostParams& params) {
  if (required.empty()) throw std::invalid_argument("required capability set is empty");
  if (candidates.empty()) throw_unsatisfiable(candidates, required);
  if (static_cast<int>(candidates.size()) > std::min(params.exact_threshold, 25))
    return form_coalition_greedy(candidates, required, site_x, site_y, params);

  // Map required tags to bit positions; candidates to coverage masks.
  std::map<std::string, int> bit;
  for (const auto& t : required) bit.emplace(t, static_cast<int>(bit.size()));
  const std::uint32_t full = (bit.size() >= 32) ? ~0u : ((1u << bit.size()) - 1);

  const std::size_t n = candidates.size();
  std::vector<std::uint32_t> mask(n, 0);
  std::vector<double> cost(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [tag, b] : bit)
      if (candidates[i].caps.contains(tag)) mask[i] |= 1u << b;
    cost[i] = member_cost(candidates[i], site_x, site_y, params);
  }

  double best_cost = 0;
  std::vector<std::string> best_ids;
  std::vector<const Candidate*> best_pick;
  bool found = false;

  for (std::uint32_t subset = 1; subset < (1u << n); ++subset) {
    std::uint32_t covered = 0;
    double c = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (subset & (1u << i)) {
        covered |= mask[i];
        c += cost[i];
      }
    if (covered != full) continue;
    if (found && c > best_cost + kCostEps) continue;

    std::vector<const Candidate*> pick;
    for (std::size_t i = 0; i < n; ++i)
      if (subset & (1u << i)) pick.push_back(&candidates[i]);
    auto ids = sorted_ids(pick);
    if (!found || c < best_cost - kCostEps ||
        (std::abs(c - best_cost) <= kCostEps && ids < best_ids)) {
      best_cost = c;
      best_ids = std::move(ids);
      best_pick = std::move(pick);
      found = true;
    }
  }

  if (!found) throw_unsatisfiable(candidates, required);
  return build_result(best_pick, required, site_x, site_y, params, /*exact=*/true);
}

Coalition form_coalition_greedy(const std::vector<Candidate>& candidates,
                                const senml::CapabilitySet& required, double site_x,
                                double site_y, const CostParams& params) {
  if (required.empty()) throw std::invalid_argument("required capability set is empty");

  senml::CapabilitySet covered;
  std::vector<const Candidate*> picked;
  std::vector<bool> used(candidates.size(), false);

  while (!covered.covers(required)) {
    int best = -1;
    double best_ratio = 0;
    std::size_t best_new = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      std::size_t fresh = 0;
      for (const auto& t : required)
        if (candidates[i].caps.contains(t) && !covered.contains(t)) ++fresh;
      if (fresh == 0) continue;
      double ratio =
          static_cast<double>(fresh) / member_cost(candidates[i], site_x, site_y, params);
      bool better = best < 0 || ratio > best_ratio + kCostEps ||
                    (std::abs(ratio - best_ratio) <= kCostEps &&
                     candidates[i].robot_id < candidates[static_cast<std::size_t>(best)].robot_id);
      if (better) {
        best = static_cast<int>(i);
        best_ratio = ratio;
        best_new = fresh;
      }
    }
    if (best < 0) throw_unsatisfiable(candidates, required);
    (void)best_new;
    used[static_cast<std::size_t>(best)] = true;
    picked.push_back(&candidates[static_cast<std::size_t>(best)]);
    for (const auto& t : required)
      if (candidates[static_cast<std::size_t>(best)].caps.contains(t)) covered.insert(t);
  }

  // Drop members made redundant by later picks.
  for (auto it = picked.begin(); it != picked.end();) {
    senml::CapabilitySet rest;
    for (const auto* c : picked)
      if (c != *it) rest.merge(c->caps);
    if (rest.covers(required)) it = picked.erase(it);
    else ++it;
  }

  return build_result(picked, required, site_x, site_y, params, /*exact=*/false);
}

}  // namespace robocloud::coalition
