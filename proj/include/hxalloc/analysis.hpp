// Topological properties of partitions: distances, dilation, convexity,
// switch locality, convex hull and partition bandwidth.

#ifndef HXALLOC_ANALYSIS_HPP
#define HXALLOC_ANALYSIS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hxalloc/allocation.hpp"
#include "hxalloc/topology.hpp"

namespace hxalloc {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Convexity { Convex, WeaklyConvex, NonConvex };
std::string_view to_string(Convexity c);

/// Partition bandwidth in phits/cycle/endpoint. A partition whose traffic
/// never leaves a switch has no bound; that case is a distinct state rather
/// than a large number.
class PartitionBandwidth {
 public:
  static PartitionBandwidth bounded(double v) { return PartitionBandwidth(v); }
  static PartitionBandwidth unbounded() { return PartitionBandwidth(); }

  bool is_unbounded() const { return !value_.has_value(); }
  double value() const;
  std::string to_string() const;

 private:
  PartitionBandwidth() = default;
  explicit PartitionBandwidth(double v) : value_(v) {}
  std::optional<double> value_;
};

struct DistanceStats {
  double avg = 0.0;
  int max = 0;
};

/// Mean over ordered endpoint pairs (self-pairs included, |P|^2 pairs) of
/// switch-to-switch hops, and the maximum.
DistanceStats partition_distances(const NetworkShape& shape, std::span<const EndpointId> endpoints);
DistanceStats partition_distances(const Partition& partition);

/// Same quantities computed over the switch set alone.
DistanceStats switch_set_distances(const NetworkShape& shape, std::span<const SwitchId> switches);

/// Fraction of ordered endpoint pairs whose switches differ in each
/// dimension. Sums to the average distance.
std::vector<double> per_dimension_distance(const NetworkShape& shape, std::span<const EndpointId> endpoints);

int edge_dilation(const NetworkShape& shape, std::span<const EndpointId> embedding, int rank_a, int rank_b);

Convexity classify_convexity(const NetworkShape& shape, std::span<const SwitchId> switches);

bool has_switch_locality(const NetworkShape& shape, std::span<const EndpointId> endpoints);
bool has_switch_locality(const Partition& partition);

/// Links lying on at least one minimal path between two members of the set,
/// sorted.
std::vector<Link> convex_hull_links(const NetworkShape& shape, std::span<const SwitchId> switches);

/// Per-dimension bound: for every dimension d with nonzero distance
/// component, 2 L_d / (|P| D_d); the partition bandwidth is the minimum.
PartitionBandwidth partition_bandwidth(const NetworkShape& shape, std::span<const EndpointId> endpoints);
PartitionBandwidth partition_bandwidth(const Partition& partition);

/// Aggregate bound 2 L / (|P| D). Equal to the per-dimension value for
/// partitions that load every hull link equally.
PartitionBandwidth partition_bandwidth_aggregate(const NetworkShape& shape, std::span<const EndpointId> endpoints);

struct PartitionMetrics {
  double avg_distance = 0.0;
  int max_distance = 0;
  Convexity convexity = Convexity::Convex;
  bool switch_local = true;
  std::int64_t hull_links = 0;
  PartitionBandwidth pb = PartitionBandwidth::unbounded();
};

PartitionMetrics analyze_partition(const Partition& partition);

/// One row of the properties table. Random kinds aggregate several seeds.
struct MetricsRow {
  AllocationKind kind = AllocationKind::Row;
  int samples = 0;
  double avg_distance = 0.0;
  int max_distance = 0;
  std::optional<Convexity> convexity;  // empty when seeds disagree
  std::optional<bool> switch_local;    // empty when seeds disagree
  double hull_links = 0.0;
  double pb = 0.0;  // mean over samples; +inf never appears, see pb_unbounded
  double pb_stddev = 0.0;
  bool pb_unbounded = false;
};

/// Metrics of partition p=0 for every kind. Deterministic kinds are
/// evaluated once; random kinds once per seed, averaged with the sample
/// standard deviation of the bandwidth.
std::vector<MetricsRow> table1_report(const NetworkShape& shape, std::span<const AllocationKind> kinds,
                                      std::span<const std::uint64_t> seeds);

void write_table1_text(std::ostream& os, std::span<const MetricsRow> rows);
void write_table1_csv(std::ostream& os, std::span<const MetricsRow> rows);

}  // namespace hxalloc

#endif  // HXALLOC_ANALYSIS_HPP
