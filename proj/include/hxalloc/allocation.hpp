// The seven allocation functions for a 2D HyperX of side n and concentration
// n. Each maps (partition p, logical row r_y, logical column r_x) to
// (switch row s_y, switch column s_x, local endpoint offset c).

#ifndef HXALLOC_ALLOCATION_HPP
#define HXALLOC_ALLOCATION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hxalloc/topology.hpp"

namespace hxalloc {

class AllocationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AllocationKind { Row, Diagonal, FullSpread, Rectangular, LShape, RandomEndpoint, RandomSwitch };

inline constexpr AllocationKind kAllAllocationKinds[] = {
    AllocationKind::Row,         AllocationKind::Diagonal, AllocationKind::FullSpread,
    AllocationKind::Rectangular, AllocationKind::LShape,   AllocationKind::RandomEndpoint,
    AllocationKind::RandomSwitch};

std::string_view to_string(AllocationKind kind);
AllocationKind parse_allocation_kind(std::string_view name);
bool is_random(AllocationKind kind);

/// Rank r decomposed as r = n * r_y + r_x.
struct LogicalRank {
  int r_y = 0;
  int r_x = 0;

  static LogicalRank from_rank(int r, int n) { return {r / n, r % n}; }
  int rank(int n) const { return n * r_y + r_x; }
};

/// Physical image (s_y, s_x, c) of an allocation function.
struct Slot {
  int s_y = 0;
  int s_x = 0;
  int c = 0;

  auto operator<=>(const Slot&) const = default;
};

/// Random bijections used by the randomized functions: one over the n^3
/// endpoint triples, one over the n^2 switch pairs. Both come from a seeded
/// Fisher-Yates shuffle of the row-major linearized domain.
class PermutationPair {
 public:
  static PermutationPair generate(int n, std::uint64_t seed);
  static PermutationPair identity(int n);

  int side() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  Slot endpoint_image(int a, int b, int c) const;
  std::pair<int, int> switch_image(int a, int b) const;
  bool is_bijection() const;

 private:
  int n_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<int> endpoint_perm_;  // over a*n*n + b*n + c
  std::vector<int> switch_perm_;    // over a*n + b
};

Slot alloc_row(int p, int r_y, int r_x, int n);
Slot alloc_diagonal(int p, int r_y, int r_x, int n);
Slot alloc_full_spread(int p, int r_y, int r_x, int n);
Slot alloc_rectangular(int p, int r_y, int r_x, int n);
Slot alloc_l_shape(int p, int r_y, int r_x, int n);
Slot alloc_random_endpoint(int p, int r_y, int r_x, const PermutationPair& perms);
Slot alloc_random_switch(int p, int r_y, int r_x, const PermutationPair& perms);

/// Dispatches on kind. Random kinds require perms.
Slot allocate(AllocationKind kind, int p, int r_y, int r_x, int n, const PermutationPair* perms = nullptr);

struct Partition {
  int id = 0;  // first block index p
  AllocationKind kind = AllocationKind::Row;
  std::optional<std::uint64_t> seed;
  NetworkShape shape;
  std::vector<EndpointId> placement;  // rank -> endpoint

  int size() const { return static_cast<int>(placement.size()); }
  EndpointId endpoint_of(int rank) const { return placement.at(static_cast<std::size_t>(rank)); }
  /// Distinct switches touched, ascending.
  std::vector<SwitchId> switches() const;
};

/// Partition of `size` ranks (a multiple of n^2) made of the consecutive
/// blocks p, p+1, ..., p+size/n^2-1 of the chosen kind. Rank r lands in
/// block r / n^2 with local rank r % n^2. Random kinds need a seed; all
/// partitions built with the same seed share one permutation pair and are
/// therefore disjoint.
Partition build_partition(AllocationKind kind, int p, const NetworkShape& shape, int size,
                          std::optional<std::uint64_t> seed = std::nullopt);

/// The rank-to-endpoint table as JSON, for audit and golden files.
nlohmann::json to_json(const Partition& partition);
Partition partition_from_json(const nlohmann::json& j);

}  // namespace hxalloc

#endif  // HXALLOC_ALLOCATION_HPP
