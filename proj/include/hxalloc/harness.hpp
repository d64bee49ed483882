// Experiment frameworks: scaling (replicas of one application), interference
// (one target against random-permutation background) and the normalized
// reports built from their records.

#ifndef HXALLOC_HARNESS_HPP
#define HXALLOC_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hxalloc/allocation.hpp"
#include "hxalloc/simcore.hpp"
#include "hxalloc/workloads.hpp"

namespace hxalloc {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Framework { Scaling, Interference };

std::string_view to_string(Framework f);
Framework parse_framework(std::string_view name);

struct ScenarioConfig {
  Framework framework = Framework::Scaling;
  std::vector<AllocationKind> allocations{AllocationKind::Diagonal};
  WorkloadSpec workload;
  int replicas_min = 1;
  int replicas_max = 1;
  bool fabric_partitioning = false;
  bool background_enabled = true;  // interference only
  AppKind background = AppKind::RandomPermutation;
  SimConfig sim;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int workers = 0;  // 0 = hardware concurrency

  /// Largest replica count that fits the system for the workload size.
  int max_replicas() const;
  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
/// Parses "a..b" or "a" into an inclusive range.
std::pair<int, int> parse_range(std::string_view text);

struct VcPlan {
  std::vector<int> partition_set;  // VC set of each partition
  int background_set = -1;         // -1 when there is no background
  int vc_sets = 1;
  int vcs_per_set = 4;

  int total_vcs() const { return vc_sets * vcs_per_set; }
  /// VC indices [first, last) owned by a set.
  std::pair<int, int> vcs_of(int set) const { return {set * vcs_per_set, (set + 1) * vcs_per_set}; }
};

VcPlan assign_vcs(bool fabric_partitioning, int partitions, bool background = false, int vcs_per_set = 4,
                  int max_vcs = 64);

struct RunRecord {
  Framework framework = Framework::Scaling;
  AllocationKind kind = AllocationKind::Diagonal;
  AppKind app = AppKind::All2All;
  int ranks = 0;
  int replicas = 0;
  std::uint64_t seed = 0;
  Cycle makespan = 0;               // scaling: all replicas; interference: interfered target
  std::optional<Cycle> isolated;    // interference only
  std::optional<Cycle> extra;       // interfered - isolated
  std::vector<Cycle> partition_makespan;
  SimMetrics metrics;               // of the (interfered) run
  nlohmann::json config;            // echo of the scenario that produced it

  double normalized = 0.0;          // filled by reports, 0 when unset
};

nlohmann::json to_json(const RunRecord& r);

/// One scaling point: `replicas` partitions p = 0..replicas-1 (each
/// size_ranks / n^2 blocks wide) of `kind`, all running the workload.
RunRecord run_scaling_point(const ScenarioConfig& config, AllocationKind kind, int replicas, std::uint64_t seed);
/// Every (kind, replica count, seed) of the config, fanned out over workers.
std::vector<RunRecord> run_scaling(const ScenarioConfig& config);

/// Target in partition 0 with the isolated baseline and the interfered run.
RunRecord run_interference_point(const ScenarioConfig& config, AllocationKind kind, std::uint64_t seed);
std::vector<RunRecord> run_interference(const ScenarioConfig& config);

std::vector<RunRecord> run_scenario(const ScenarioConfig& config);

/// Runs jobs[i]() for every i with up to `workers` threads; results keep
/// the job order.
std::vector<RunRecord> run_parallel(const std::vector<std::function<RunRecord()>>& jobs, int workers);

void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records_csv(std::istream& is);

enum class MeanKind { Arithmetic, Geometric };

struct ReportRow {
  AllocationKind kind = AllocationKind::Diagonal;
  std::string app;  // application name, or "all" for the cross-application mean
  int ranks = 0;
  int replicas = 0;
  int seeds = 0;
  double metric_mean = 0.0;  // makespan (scaling) or interfered makespan
  double metric_stddev = 0.0;
  double extra_mean = 0.0;
  double extra_stddev = 0.0;
  double normalized = 0.0;  // baseline metric / kind metric
};

/// Per (kind, app, ranks, replicas): seed means and the score against the
/// baseline kind, followed by one "all" row per (kind, ranks, replicas)
/// averaging the scores across applications. Throws ScenarioError when a
/// group has no baseline counterpart.
std::vector<ReportRow> report_normalized(const std::vector<RunRecord>& records,
                                         AllocationKind baseline = AllocationKind::Diagonal,
                                         MeanKind mean = MeanKind::Arithmetic);

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows);

}  // namespace hxalloc

#endif  // HXALLOC_HARNESS_HPP
