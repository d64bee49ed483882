#include "hxalloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace hxalloc {

namespace {

std::vector<int> switch_counts(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  std::vector<int> counts(static_cast<std::size_t>(shape.switch_count()), 0);
  for (EndpointId e : endpoints) {
    if (e < 0 || e >= shape.endpoint_count()) throw AnalysisError("endpoint id out of range");
    ++counts[static_cast<std::size_t>(endpoint_switch(shape, e))];
  }
  return counts;
}

std::vector<char> membership(const NetworkShape& shape, std::span<const SwitchId> switches) {
  std::vector<char> in(static_cast<std::size_t>(shape.switch_count()), 0);
  for (SwitchId s : switches) {
    if (s < 0 || s >= shape.switch_count()) throw AnalysisError("switch id out of range");
    in[static_cast<std::size_t>(s)] = 1;
  }
  return in;
}

std::vector<SwitchId> unique_switches(std::span<const SwitchId> switches) {
  std::vector<SwitchId> v(switches.begin(), switches.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Minimal paths between a and b visit exactly the switches obtained from a
// by moving some subset of the unaligned dimensions to b's value. Those
// switches form a subcube indexed by a bitmask over the unaligned dims.
class Subcube {
 public:
  Subcube(const NetworkShape& shape, SwitchId a, SwitchId b) {
    int stride = 1;
    SwitchId x = a, y = b;
    for (int d = 0; d < shape.q; ++d) {
      int ad = x % shape.n, bd = y % shape.n;
      if (ad != bd) {
        delta_.push_back((bd - ad) * stride);
        dims_.push_back(d);
      }
      x /= shape.n;
      y /= shape.n;
      stride *= shape.n;
    }
    origin_ = a;
  }

  int rank() const { return static_cast<int>(delta_.size()); }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  SwitchId node(unsigned mask) const {
    SwitchId s = origin_;
    for (int i = 0; i < rank(); ++i) {
      if (mask & (1u << i)) s += delta_[static_cast<std::size_t>(i)];
    }
    return s;
  }

 private:
  SwitchId origin_ = 0;
  std::vector<int> delta_;
  std::vector<int> dims_;
};

}  // namespace

std::string_view to_string(Convexity c) {
  switch (c) {
    case Convexity::Convex: return "convex";
    case Convexity::WeaklyConvex: return "weakly-convex";
    case Convexity::NonConvex: return "non-convex";
  }
  return "?";
}

double PartitionBandwidth::value() const {
  if (!value_) throw AnalysisError("partition bandwidth is unbounded");
  return *value_;
}

std::string PartitionBandwidth::to_string() const {
  if (!value_) return "unbounded";
  std::ostringstream os;
  os << *value_;
  return os.str();
}

DistanceStats partition_distances(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  if (endpoints.empty()) throw AnalysisError("empty partition");
  auto counts = switch_counts(shape, endpoints);
  std::vector<std::pair<SwitchId, int>> occupied;
  for (SwitchId s = 0; s < shape.switch_count(); ++s) {
    if (counts[static_cast<std::size_t>(s)] > 0) occupied.emplace_back(s, counts[static_cast<std::size_t>(s)]);
  }
  double total = 0.0;
  int max = 0;
  for (auto [a, ca] : occupied) {
    for (auto [b, cb] : occupied) {
      int d = hamming_distance(shape, a, b);
      total += static_cast<double>(ca) * cb * d;
      max = std::max(max, d);
    }
  }
  double n = static_cast<double>(endpoints.size());
  return {total / (n * n), max};
}

DistanceStats partition_distances(const Partition& partition) {
  return partition_distances(partition.shape, partition.placement);
}

DistanceStats switch_set_distances(const NetworkShape& shape, std::span<const SwitchId> switches) {
  auto set = unique_switches(switches);
  if (set.empty()) throw AnalysisError("empty switch set");
  double total = 0.0;
  int max = 0;
  for (SwitchId a : set) {
    for (SwitchId b : set) {
      int d = hamming_distance(shape, a, b);
      total += d;
      max = std::max(max, d);
    }
  }
  double n = static_cast<double>(set.size());
  return {total / (n * n), max};
}

std::vector<double> per_dimension_distance(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  if (endpoints.empty()) throw AnalysisError("empty partition");
  std::vector<double> out(static_cast<std::size_t>(shape.q), 0.0);
  const double total = static_cast<double>(endpoints.size()) * static_cast<double>(endpoints.size());
  int stride = 1;
  for (int d = 0; d < shape.q; ++d) {
    std::vector<double> per_value(static_cast<std::size_t>(shape.n), 0.0);
    for (EndpointId e : endpoints) per_value[static_cast<std::size_t>((endpoint_switch(shape, e) / stride) % shape.n)] += 1.0;
    double same = 0.0;
    for (double c : per_value) same += c * c;
    out[static_cast<std::size_t>(d)] = 1.0 - same / total;
    stride *= shape.n;
  }
  return out;
}

int edge_dilation(const NetworkShape& shape, std::span<const EndpointId> embedding, int rank_a, int rank_b) {
  const int size = static_cast<int>(embedding.size());
  if (rank_a < 0 || rank_a >= size || rank_b < 0 || rank_b >= size) throw AnalysisError("unmapped rank");
  return hamming_distance(shape, endpoint_switch(shape, embedding[static_cast<std::size_t>(rank_a)]),
                          endpoint_switch(shape, embedding[static_cast<std::size_t>(rank_b)]));
}

Convexity classify_convexity(const NetworkShape& shape, std::span<const SwitchId> switches) {
  auto set = unique_switches(switches);
  if (set.empty()) throw AnalysisError("empty switch set");
  auto in = membership(shape, set);
  bool convex = true;
  std::vector<char> reach;
  for (SwitchId a : set) {
    for (SwitchId b : set) {
      if (a >= b) continue;  // the relation is symmetric under path reversal
      Subcube cube(shape, a, b);
      const unsigned full = (1u << cube.rank()) - 1;
      bool all_inside = true;
      // reach[mask]: some monotone path from a to node(mask) stays inside.
      reach.assign(full + 1, 0);
      reach[0] = 1;
      for (unsigned mask = 1; mask <= full; ++mask) {
        bool inside = in[static_cast<std::size_t>(cube.node(mask))] != 0;
        all_inside = all_inside && inside;
        if (!inside) continue;
        for (int i = 0; i < cube.rank(); ++i) {
          if ((mask & (1u << i)) && reach[mask ^ (1u << i)]) {
            reach[mask] = 1;
            break;
          }
        }
      }
      if (!reach[full]) return Convexity::NonConvex;
      convex = convex && all_inside;
    }
  }
  return convex ? Convexity::Convex : Convexity::WeaklyConvex;
}

bool has_switch_locality(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  auto counts = switch_counts(shape, endpoints);
  std::set<EndpointId> distinct(endpoints.begin(), endpoints.end());
  if (distinct.size() != endpoints.size()) throw AnalysisError("partition lists an endpoint twice");
  return std::all_of(counts.begin(), counts.end(), [&](int c) { return c == 0 || c == shape.concentration; });
}

bool has_switch_locality(const Partition& partition) {
  return has_switch_locality(partition.shape, partition.placement);
}

std::vector<Link> convex_hull_links(const NetworkShape& shape, std::span<const SwitchId> switches) {
  auto set = unique_switches(switches);
  if (set.empty()) throw AnalysisError("empty switch set");
  membership(shape, set);  // range check
  std::set<Link> hull;
  for (SwitchId a : set) {
    for (SwitchId b : set) {
      if (a >= b) continue;
      Subcube cube(shape, a, b);
      const unsigned full = (1u << cube.rank()) - 1;
      for (unsigned mask = 0; mask <= full; ++mask) {
        for (int i = 0; i < cube.rank(); ++i) {
          if (mask & (1u << i)) continue;
          SwitchId u = cube.node(mask), v = cube.node(mask | (1u << i));
          hull.insert({std::min(u, v), std::max(u, v), cube.dim(i)});
        }
      }
    }
  }
  return {hull.begin(), hull.end()};
}

PartitionBandwidth partition_bandwidth(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  if (endpoints.empty()) throw AnalysisError("empty partition");
  auto dist = per_dimension_distance(shape, endpoints);
  std::vector<SwitchId> sw;
  for (EndpointId e : endpoints) sw.push_back(endpoint_switch(shape, e));
  auto hull = convex_hull_links(shape, sw);
  std::vector<double> links_per_dim(static_cast<std::size_t>(shape.q), 0.0);
  for (const Link& l : hull) links_per_dim[static_cast<std::size_t>(l.dimension)] += 1.0;

  const double size = static_cast<double>(endpoints.size());
  std::optional<double> best;
  for (int d = 0; d < shape.q; ++d) {
    double dd = dist[static_cast<std::size_t>(d)];
    if (dd <= 0.0) continue;
    double pb = 2.0 * links_per_dim[static_cast<std::size_t>(d)] / (size * dd);
    best = best ? std::min(*best, pb) : pb;
  }
  return best ? PartitionBandwidth::bounded(*best) : PartitionBandwidth::unbounded();
}

PartitionBandwidth partition_bandwidth(const Partition& partition) {
  return partition_bandwidth(partition.shape, partition.placement);
}

PartitionBandwidth partition_bandwidth_aggregate(const NetworkShape& shape, std::span<const EndpointId> endpoints) {
  DistanceStats ds = partition_distances(shape, endpoints);
  if (ds.avg <= 0.0) return PartitionBandwidth::unbounded();
  std::vector<SwitchId> sw;
  for (EndpointId e : endpoints) sw.push_back(endpoint_switch(shape, e));
  double links = static_cast<double>(convex_hull_links(shape, sw).size());
  return PartitionBandwidth::bounded(2.0 * links / (static_cast<double>(endpoints.size()) * ds.avg));
}

PartitionMetrics analyze_partition(const Partition& partition) {
  PartitionMetrics m;
  DistanceStats ds = partition_distances(partition);
  m.avg_distance = ds.avg;
  m.max_distance = ds.max;
  auto sw = partition.switches();
  m.convexity = classify_convexity(partition.shape, sw);
  m.switch_local = has_switch_locality(partition);
  m.hull_links = static_cast<std::int64_t>(convex_hull_links(partition.shape, sw).size());
  m.pb = partition_bandwidth(partition);
  return m;
}

std::vector<MetricsRow> table1_report(const NetworkShape& shape, std::span<const AllocationKind> kinds,
                                      std::span<const std::uint64_t> seeds) {
  std::vector<MetricsRow> rows;
  const int size = shape.n * shape.n;
  for (AllocationKind kind : kinds) {
    std::vector<PartitionMetrics> samples;
    if (is_random(kind)) {
      if (seeds.empty()) throw AnalysisError("random allocation kinds need at least one seed");
      for (std::uint64_t seed : seeds) samples.push_back(analyze_partition(build_partition(kind, 0, shape, size, seed)));
    } else {
      samples.push_back(analyze_partition(build_partition(kind, 0, shape, size)));
    }

    MetricsRow row;
    row.kind = kind;
    row.samples = static_cast<int>(samples.size());
    row.convexity = samples.front().convexity;
    row.switch_local = samples.front().switch_local;
    std::vector<double> pbs;
    for (const auto& m : samples) {
      row.avg_distance += m.avg_distance;
      row.max_distance = std::max(row.max_distance, m.max_distance);
      row.hull_links += static_cast<double>(m.hull_links);
      if (row.convexity != m.convexity) row.convexity.reset();
      if (row.switch_local != m.switch_local) row.switch_local.reset();
      if (m.pb.is_unbounded()) {
        row.pb_unbounded = true;
      } else {
        pbs.push_back(m.pb.value());
      }
    }
    const double k = static_cast<double>(samples.size());
    row.avg_distance /= k;
    row.hull_links /= k;
    if (!pbs.empty()) {
      double mean = 0.0;
      for (double v : pbs) mean += v;
      mean /= static_cast<double>(pbs.size());
      double var = 0.0;
      for (double v : pbs) var += (v - mean) * (v - mean);
      row.pb = mean;
      row.pb_stddev = pbs.size() > 1 ? std::sqrt(var / static_cast<double>(pbs.size() - 1)) : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string convexity_cell(const MetricsRow& r) {
  return r.convexity ? std::string(to_string(*r.convexity)) : "mixed";
}

std::string locality_cell(const MetricsRow& r) {
  if (!r.switch_local) return "mixed";
  return *r.switch_local ? "yes" : "no";
}

std::string pb_cell(const MetricsRow& r) {
  if (r.pb_unbounded) return "unbounded";
  std::ostringstream os;
  os << std::setprecision(10) << r.pb;
  return os.str();
}

}  // namespace

void write_table1_text(std::ostream& os, std::span<const MetricsRow> rows) {
  os << std::left << std::setw(17) << "kind" << std::right << std::setw(10) << "avg_dist" << std::setw(9)
     << "max_dist" << std::setw(15) << "convexity" << std::setw(9) << "locality" << std::setw(11) << "hull_links"
     << std::setw(11) << "pb" << std::setw(11) << "pb_stddev" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(17) << to_string(r.kind) << std::right << std::fixed << std::setprecision(4)
       << std::setw(10) << r.avg_distance << std::setw(9) << r.max_distance << std::setw(15) << convexity_cell(r)
       << std::setw(9) << locality_cell(r) << std::setprecision(1) << std::setw(11) << r.hull_links
       << std::setprecision(4) << std::setw(11);
    if (r.pb_unbounded) {
      os << "unbounded";
    } else {
      os << r.pb;
    }
    os << std::setw(11) << r.pb_stddev << '\n';
    os.unsetf(std::ios::fixed);
  }
}

void write_table1_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << "kind,avg_dist,max_dist,convexity,locality,hull_links,pb,pb_stddev\n";
  for (const auto& r : rows) {
    os << to_string(r.kind) << ',' << std::setprecision(10) << r.avg_distance << ',' << r.max_distance << ','
       << convexity_cell(r) << ',' << locality_cell(r) << ',' << r.hull_links << ',' << pb_cell(r) << ','
       << r.pb_stddev << '\n';
  }
}

}  // namespace hxalloc
