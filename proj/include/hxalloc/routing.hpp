// Per-hop routing for HyperX: minimal adaptive (MIN) and Omni-WAR.
//
// Omni-WAR only moves a packet along unaligned dimensions. Within an
// unaligned dimension there is one minimal hop and n-2 deroutes; a global
// budget of m deroutes bounds every route to q+m hops. Selection picks the
// least occupied port, deroutes paying an extra penalty.

#ifndef HXALLOC_ROUTING_HPP
#define HXALLOC_ROUTING_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "hxalloc/topology.hpp"

namespace hxalloc {

class RoutingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class RoutingKind { MinAdaptive, OmniWAR };

std::string_view to_string(RoutingKind kind);
RoutingKind parse_routing_kind(std::string_view name);

struct RoutingPolicy {
  RoutingKind kind = RoutingKind::OmniWAR;
  int m = 2;               // deroute budget
  int penalty_phits = 64;  // occupancy penalty on deroutes

  static RoutingPolicy omni_war(int q, int penalty = 64) { return {RoutingKind::OmniWAR, q, penalty}; }
  static RoutingPolicy min_adaptive() { return {RoutingKind::MinAdaptive, 0, 0}; }

  int deroute_budget() const { return kind == RoutingKind::OmniWAR ? m : 0; }
  int hop_limit(int q) const { return q + deroute_budget(); }
  void validate() const;
};

struct RouteState {
  SwitchCoord destination;
  int hops_taken = 0;
  int deroutes_used = 0;
};

struct PortCandidate {
  int dimension = 0;
  int target = 0;  // coordinate value in that dimension after the hop
  bool is_minimal = true;
  std::int64_t effective_occupancy = 0;

  bool operator==(const PortCandidate&) const = default;
};

/// Dimensions where current and dest differ, ascending.
std::vector<int> unaligned_dimensions(const SwitchCoord& current, const SwitchCoord& dest);

/// Admissible next hops from `current`. Throws at the destination switch.
/// Effective occupancies are left at zero; select() fills them.
std::vector<PortCandidate> candidates(const RouteState& state, const SwitchCoord& current,
                                      const RoutingPolicy& policy, const NetworkShape& shape);

/// Allocation-free variant used by the simulator; appends into `out`.
void append_candidates(const RouteState& state, const SwitchCoord& current, const RoutingPolicy& policy,
                       int side, std::vector<PortCandidate>& out);

/// Measured queue occupancy (phits) of the port reached by a candidate, or
/// nullopt when that port cannot take the packet right now.
using OccupancyLookup = std::function<std::optional<std::int64_t>(const PortCandidate&)>;

struct Selection {
  PortCandidate chosen;
  RouteState next_state;
};

/// State after taking `hop` from `state`.
RouteState advance(const RouteState& state, const PortCandidate& hop);

/// Index of the candidate with the least occupancy plus penalty (deroutes
/// only), ties broken uniformly with `rng`; -1 when none is available.
/// Fills effective_occupancy of every available candidate.
template <typename Lookup>
int select_index(std::span<PortCandidate> cands, Lookup&& occupancy, int penalty, std::mt19937_64& rng) {
  if (cands.empty()) throw RoutingError("select called with no candidates");
  int best = -1;
  int ties = 0;
  std::int64_t best_occ = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    std::optional<std::int64_t> occ = occupancy(cands[i]);
    if (!occ) continue;
    std::int64_t eff = *occ + (cands[i].is_minimal ? 0 : penalty);
    cands[i].effective_occupancy = eff;
    if (best < 0 || eff < best_occ) {
      best = static_cast<int>(i);
      best_occ = eff;
      ties = 1;
    } else if (eff == best_occ) {
      // reservoir sampling keeps each tied candidate with equal probability
      ++ties;
      if (std::uniform_int_distribution<int>(0, ties - 1)(rng) == 0) best = static_cast<int>(i);
    }
  }
  return best;
}

/// Chooses the candidate with the least occupancy plus penalty (deroutes
/// only); ties are broken uniformly with `rng`. Returns nullopt when no
/// candidate is available. Throws on an empty candidate list.
std::optional<Selection> select(std::vector<PortCandidate>& cands, const OccupancyLookup& occupancy,
                                const RouteState& state, const RoutingPolicy& policy, std::mt19937_64& rng);

}  // namespace hxalloc

#endif  // HXALLOC_ROUTING_HPP
