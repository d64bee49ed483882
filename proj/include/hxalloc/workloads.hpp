// Traffic generators: static patterns (pull-based, one packet per endpoint
// every packet_size cycles) and communication kernels expressed as per-rank
// step programs.

#ifndef HXALLOC_WORKLOADS_HPP
#define HXALLOC_WORKLOADS_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "hxalloc/allocation.hpp"
#include "hxalloc/simcore.hpp"

namespace hxalloc {

class WorkloadError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class StaticKind { Uniform, RandomPermutation, RandomSwitchPermutation };

struct StaticPattern {
  StaticKind kind = StaticKind::Uniform;
  std::uint64_t seed = 1;
  std::int64_t demand_packets = 500;  // per endpoint, ignored when non-terminating
  bool terminating = true;
  int group_size = 8;  // ranks per group for RandomSwitchPermutation
};

/// Rank-level destination map of a permutation pattern: dest[r] for each
/// rank. Uniform has no fixed map and is rejected.
std::vector<int> static_destinations(const StaticPattern& pattern, int ranks);

class StaticTrafficSource final : public TrafficSource {
 public:
  /// `endpoints` is the rank -> endpoint table of the partition.
  StaticTrafficSource(StaticPattern pattern, std::vector<EndpointId> endpoints, int packet_size);

  bool terminating() const override { return pattern_.terminating; }
  bool done() const override;
  std::vector<EndpointId> endpoints() const override { return endpoints_; }
  std::optional<PacketRequest> pull(EndpointId endpoint, Cycle now) override;
  void on_delivered(const Packet& p, Cycle at, Injector& out) override;

  const std::vector<int>& destinations() const { return dest_rank_; }

 private:
  StaticPattern pattern_;
  std::vector<EndpointId> endpoints_;
  std::vector<int> rank_of_;  // endpoint -> rank, -1 outside
  std::vector<int> dest_rank_;
  std::vector<std::int64_t> generated_;
  std::int64_t delivered_ = 0;
  int packet_size_;
  std::mt19937_64 rng_;
};

enum class KernelKind { All2All, AllReduce, StencilVonNeumann, StencilMoore, RandomInvolution };

std::string_view to_string(KernelKind kind);

struct Exchange {
  int peer = 0;
  int packets = 0;
};

struct KernelStep {
  std::vector<Exchange> sends;
  std::vector<Exchange> receives;
};

enum class StepRule {
  SendsInjected,         // next step released once this step's sends left the rank
  SendsAndReceivesDone,  // next step waits for own sends delivered and all receives
};

struct KernelSchedule {
  KernelKind kind = KernelKind::All2All;
  int ranks = 0;
  StepRule rule = StepRule::SendsAndReceivesDone;
  std::vector<std::vector<KernelStep>> steps;  // [rank][step]

  int step_count(int rank = 0) const { return static_cast<int>(steps.at(static_cast<std::size_t>(rank)).size()); }
  std::int64_t message_count() const;
  std::int64_t packet_count() const;
  /// Every send (r -> p, step i, size) has the receive (p <- r, step i, size).
  bool is_symmetric() const;
};

KernelSchedule gen_all2all(int k, int chunk_packets = 1);
/// Rabenseifner: recursive halving then recursive doubling. Payloads start
/// at message_packets/2 and halve per step with a floor of one packet.
KernelSchedule gen_allreduce(int k, int message_packets = 8);
KernelSchedule gen_stencil(int k, KernelKind neighborhood, int rounds = 4, int message_packets = 1);
KernelSchedule gen_random_involution(int k, int message_packets, std::mt19937_64& rng);
KernelSchedule gen_random_involution(int k, int message_packets, std::uint64_t seed);

class KernelTrafficSource final : public TrafficSource {
 public:
  KernelTrafficSource(KernelSchedule schedule, std::vector<EndpointId> endpoints);

  bool terminating() const override { return true; }
  bool done() const override { return ranks_done_ == schedule_.ranks; }
  std::vector<EndpointId> endpoints() const override { return {}; }
  void start(int source_index, Cycle now, Injector& out) override;
  void on_injected(const Packet& p, Cycle at, Injector& out) override;
  void on_delivered(const Packet& p, Cycle at, Injector& out) override;

  /// Cycle at which each rank finished its program (-1 while running).
  const std::vector<Cycle>& rank_finish() const { return finish_; }

 private:
  struct RankState {
    int step = 0;
    std::vector<std::int64_t> injected, delivered, received;  // per step
    std::vector<std::int64_t> send_total, recv_total;
  };

  void release(int rank, Cycle at, Injector& out);
  void try_advance(int rank, Cycle at, Injector& out);
  bool finished(int rank) const;

  KernelSchedule schedule_;
  std::vector<EndpointId> endpoints_;
  std::vector<int> rank_of_;
  std::vector<RankState> state_;
  std::vector<Cycle> finish_;
  int ranks_done_ = 0;
  int source_index_ = 0;
};

/// Everything a run can put on a partition.
enum class AppKind {
  Uniform,
  RandomPermutation,
  RandomSwitchPermutation,
  All2All,
  AllReduce,
  StencilVonNeumann,
  StencilMoore,
  RandomInvolution,
};

inline constexpr AppKind kKernelApps[] = {AppKind::All2All, AppKind::AllReduce, AppKind::StencilVonNeumann,
                                          AppKind::StencilMoore, AppKind::RandomInvolution};

std::string_view to_string(AppKind kind);
AppKind parse_app_kind(std::string_view name);
bool is_static(AppKind kind);

struct WorkloadSpec {
  AppKind kind = AppKind::All2All;
  int size_ranks = 64;
  std::optional<int> message_packets;  // kernel default when unset
  int rounds = 4;
  std::uint64_t seed = 1;
  std::int64_t demand_packets = 500;
  bool terminating = true;

  int effective_message_packets() const;
};

nlohmann::json to_json(const WorkloadSpec& w);
WorkloadSpec workload_from_json(const nlohmann::json& j, WorkloadSpec base = {});

/// A traffic source for `spec` on the given rank -> endpoint table.
/// `group_size` is the rank-group size of the switch permutation pattern.
std::shared_ptr<TrafficSource> make_source(const WorkloadSpec& spec, std::vector<EndpointId> endpoints,
                                           int packet_size, int group_size);

KernelSchedule make_schedule(const WorkloadSpec& spec);

}  // namespace hxalloc

#endif  // HXALLOC_WORKLOADS_HPP
