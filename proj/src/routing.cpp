#include "hxalloc/routing.hpp"

namespace hxalloc {

std::string_view to_string(RoutingKind kind) {
  return kind == RoutingKind::MinAdaptive ? "min" : "omniwar";
}

RoutingKind parse_routing_kind(std::string_view name) {
  if (name == "min" || name == "min_adaptive" || name == "MIN") return RoutingKind::MinAdaptive;
  if (name == "omniwar" || name == "omni_war" || name == "omni-war" || name == "OmniWAR") return RoutingKind::OmniWAR;
  throw RoutingError("unknown routing kind '" + std::string(name) + "'");
}

void RoutingPolicy::validate() const {
  if (m < 0) throw RoutingError("deroute budget m must be non-negative");
  if (penalty_phits < 0) throw RoutingError("occupancy penalty must be non-negative");
}

std::vector<int> unaligned_dimensions(const SwitchCoord& current, const SwitchCoord& dest) {
  if (current.dimensions() != dest.dimensions()) throw ShapeError("mismatched coordinate dimensionality");
  std::vector<int> dims;
  for (int d = 0; d < current.dimensions(); ++d) {
    if (current[d] != dest[d]) dims.push_back(d);
  }
  return dims;
}

void append_candidates(const RouteState& state, const SwitchCoord& current, const RoutingPolicy& policy,
                       int side, std::vector<PortCandidate>& out) {
  const SwitchCoord& dest = state.destination;
  const bool may_deroute = state.deroutes_used < policy.deroute_budget();
  bool any = false;
  for (int d = 0; d < current.dimensions(); ++d) {
    if (current[d] == dest[d]) continue;
    any = true;
    out.push_back({d, dest[d], true, 0});
    if (!may_deroute) continue;
    for (int v = 0; v < side; ++v) {
      if (v != current[d] && v != dest[d]) out.push_back({d, v, false, 0});
    }
  }
  if (!any) throw RoutingError("route candidates requested at the destination switch");
}

std::vector<PortCandidate> candidates(const RouteState& state, const SwitchCoord& current,
                                      const RoutingPolicy& policy, const NetworkShape& shape) {
  if (!shape.contains(current) || !shape.contains(state.destination)) {
    throw ShapeError("route endpoints outside the network shape");
  }
  std::vector<PortCandidate> out;
  append_candidates(state, current, policy, shape.n, out);
  return out;
}

RouteState advance(const RouteState& state, const PortCandidate& hop) {
  RouteState next = state;
  ++next.hops_taken;
  if (!hop.is_minimal) ++next.deroutes_used;
  return next;
}

std::optional<Selection> select(std::vector<PortCandidate>& cands, const OccupancyLookup& occupancy,
                                const RouteState& state, const RoutingPolicy& policy, std::mt19937_64& rng) {
  int i = select_index(std::span<PortCandidate>(cands), occupancy, policy.penalty_phits, rng);
  if (i < 0) return std::nullopt;
  const PortCandidate& c = cands[static_cast<std::size_t>(i)];
  return Selection{c, advance(state, c)};
}

}  // namespace hxalloc
