// Cycle-driven flit-level simulator of a HyperX fabric.
//
// Switches are input-queued with virtual channels and per-VC output buffers.
// Buffers are accounted in packets (virtual cut-through) while timing is at
// flit granularity: every link, injection channel and ejection channel moves
// one flit per cycle, and each crossbar port carries up to `internal_speedup`
// packet transfers at once. Flow control is credit based.
//
// Per cycle: (1) due credits, buffer releases and deliveries, (2) endpoint
// injection, (3) output buffer to link transmission, (4) route computation
// and random switch allocation from input VCs to output buffers.
//
// Deadlock freedom: a packet that has taken h network hops travels its next
// hop in VC min(h, vcs_per_partition - 1) of its partition's VC set.

#ifndef HXALLOC_SIMCORE_HPP
#define HXALLOC_SIMCORE_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hxalloc/routing.hpp"
#include "hxalloc/topology.hpp"

namespace hxalloc {

using Cycle = std::int64_t;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when no packet is delivered for `watchdog_cycles` while traffic is
/// pending. what() carries a dump of the stuck buffers.
class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AllocatorKind { Random };

struct SimConfig {
  NetworkShape shape = NetworkShape::hyperx2d(8);
  RoutingPolicy routing = RoutingPolicy::omni_war(2);
  int packet_size = 16;           // flits (1 flit = 1 phit)
  int input_buffer_packets = 8;   // per VC
  int output_buffer_packets = 4;  // per VC
  int vcs_per_partition = 4;
  int partition_count_for_vcs = 1;
  int internal_speedup = 2;
  AllocatorKind allocator = AllocatorKind::Random;
  int link_latency = 1;
  int credit_latency = 1;
  std::uint64_t seed = 1;
  Cycle watchdog_cycles = 50000;
  Cycle check_invariants_every = 0;  // 0 disables the periodic full scan
  std::ostream* utilization_trace = nullptr;

  int total_vcs() const { return vcs_per_partition * partition_count_for_vcs; }
  void validate() const;
};

nlohmann::json to_json(const SimConfig& config);
/// Overlays the fields present in `j` on `base`.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});

struct Packet {
  std::uint64_t id = 0;
  EndpointId source = 0;
  EndpointId dest = 0;
  SwitchId dest_switch = 0;
  int size = 0;
  int vc_set = 0;
  int source_index = 0;  // traffic source that created it
  std::int64_t tag = 0;  // opaque to the simulator
  RouteState route;
  Cycle birth_cycle = 0;
  Cycle inject_cycle = -1;
  Cycle delivery_cycle = -1;
  Cycle head_ready = 0;  // head flit present in the current buffer
  int max_vc_offset = 0;
};

struct PacketRequest {
  EndpointId source = 0;
  EndpointId dest = 0;
  std::int64_t tag = 0;
  Cycle birth_cycle = 0;
};

class Injector {
 public:
  virtual ~Injector() = default;
  /// Appends a packet to the source endpoint's unbounded injection queue.
  virtual void send(int source_index, const PacketRequest& request) = 0;
};

class TrafficSource {
 public:
  virtual ~TrafficSource() = default;

  /// Terminating sources have finite demand; the run ends when all of them
  /// are done. Non-terminating ones inject for as long as the run lasts.
  virtual bool terminating() const = 0;
  virtual bool done() const = 0;

  /// Endpoints that pull packets from this source when their queue is empty.
  virtual std::vector<EndpointId> endpoints() const = 0;

  virtual void start(int /*source_index*/, Cycle /*now*/, Injector& /*out*/) {}
  /// Next generated packet for `endpoint`, if one exists with birth <= now.
  virtual std::optional<PacketRequest> pull(EndpointId /*endpoint*/, Cycle /*now*/) { return std::nullopt; }
  /// The tail flit of `p` left its source endpoint at `at`.
  virtual void on_injected(const Packet& /*p*/, Cycle /*at*/, Injector& /*out*/) {}
  virtual void on_delivered(const Packet& p, Cycle at, Injector& out) = 0;
};

struct SimMetrics {
  Cycle makespan = 0;
  Cycle cycles_simulated = 0;
  std::int64_t injected_packets = 0;
  std::int64_t injected_flits = 0;
  std::int64_t delivered_packets = 0;
  std::int64_t delivered_flits = 0;
  double mean_latency = 0.0;
  int max_hops = 0;
  std::int64_t hop_limit_violations = 0;
  std::int64_t vc_set_violations = 0;
  std::int64_t invariant_checks = 0;
  std::vector<double> link_utilization;  // per directed network link
  std::vector<Cycle> source_completion;  // per source, -1 if never completed
  std::vector<std::int64_t> source_delivered_packets;
};

nlohmann::json to_json(const SimMetrics& m);

class Simulator final : private Injector {
 public:
  explicit Simulator(SimConfig config);
  ~Simulator() override;
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const SimConfig& config() const { return config_; }
  int switch_count() const { return switches_; }
  int ports_per_switch() const { return ports_; }
  int network_ports_per_switch() const { return net_ports_; }
  int vcs_per_port() const { return vcs_; }

  /// Registers a source whose packets travel on VC set `vc_set`. Returns its
  /// index. Sources must be added before the first step.
  int add_source(std::shared_ptr<TrafficSource> source, int vc_set);

  void step();
  Cycle now() const { return now_; }

  /// Steps until every terminating source is done. Throws DeadlockError if
  /// the watchdog fires.
  SimMetrics run_until_quiescent();

  /// Metrics accumulated so far.
  SimMetrics metrics() const;

  /// Full scan of buffers and credits; throws std::logic_error on any
  /// conservation or capacity violation.
  void check_invariants() const;

  std::int64_t packets_in_network() const;

 private:
  struct Event;
  struct Impl;

  void send(int source_index, const PacketRequest& request) override;

  SimConfig config_;
  int switches_ = 0;
  int ports_ = 0;
  int net_ports_ = 0;
  int vcs_ = 0;
  Cycle now_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hxalloc

#endif  // HXALLOC_SIMCORE_HPP
