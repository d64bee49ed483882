#include "hxalloc/simcore.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <ostream>
#include <sstream>

namespace hxalloc {

void SimConfig::validate() const {
  shape.validate();
  routing.validate();
  if (packet_size < 1) throw ConfigError("packet_size must be at least 1 flit");
  if (input_buffer_packets < 1) throw ConfigError("input_buffer_packets must be at least 1");
  if (output_buffer_packets < 1) throw ConfigError("output_buffer_packets must be at least 1");
  if (vcs_per_partition < 1) throw ConfigError("vcs_per_partition must be at least 1");
  if (partition_count_for_vcs < 1) throw ConfigError("partition_count_for_vcs must be at least 1");
  if (total_vcs() > 64) throw ConfigError("at most 64 virtual channels per port are supported");
  if (internal_speedup < 1) throw ConfigError("internal_speedup must be at least 1");
  if (link_latency < 1) throw ConfigError("link_latency must be at least 1 cycle");
  if (credit_latency < 1) throw ConfigError("credit_latency must be at least 1 cycle");
  if (watchdog_cycles < 1) throw ConfigError("watchdog_cycles must be positive");
  if (check_invariants_every < 0) throw ConfigError("check_invariants_every must be non-negative");
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n", c.shape.n},
          {"q", c.shape.q},
          {"concentration", c.shape.concentration},
          {"routing", {{"kind", to_string(c.routing.kind)}, {"m", c.routing.m}, {"penalty_phits", c.routing.penalty_phits}}},
          {"packet_size", c.packet_size},
          {"input_buffer_packets", c.input_buffer_packets},
          {"output_buffer_packets", c.output_buffer_packets},
          {"vcs_per_partition", c.vcs_per_partition},
          {"partition_count_for_vcs", c.partition_count_for_vcs},
          {"internal_speedup", c.internal_speedup},
          {"allocator", "random"},
          {"link_latency", c.link_latency},
          {"credit_latency", c.credit_latency},
          {"seed", c.seed},
          {"watchdog_cycles", c.watchdog_cycles}};
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  if (j.contains("n")) {
    int n = j.at("n").get<int>();
    c.shape = NetworkShape{2, n, n};
  }
  get("q", c.shape.q);
  get("concentration", c.shape.concentration);
  if (j.contains("routing")) {
    const auto& r = j.at("routing");
    if (r.contains("kind")) {
      c.routing.kind = parse_routing_kind(r.at("kind").get<std::string>());
      if (!r.contains("m")) c.routing.m = c.routing.kind == RoutingKind::OmniWAR ? c.shape.q : 0;
    }
    if (r.contains("m")) c.routing.m = r.at("m").get<int>();
    if (r.contains("penalty_phits")) c.routing.penalty_phits = r.at("penalty_phits").get<int>();
  }
  get("packet_size", c.packet_size);
  get("input_buffer_packets", c.input_buffer_packets);
  get("output_buffer_packets", c.output_buffer_packets);
  get("vcs_per_partition", c.vcs_per_partition);
  get("partition_count_for_vcs", c.partition_count_for_vcs);
  get("internal_speedup", c.internal_speedup);
  if (j.contains("allocator") && j.at("allocator").get<std::string>() != "random") {
    throw ConfigError("only the random allocator is available");
  }
  get("link_latency", c.link_latency);
  get("credit_latency", c.credit_latency);
  get("seed", c.seed);
  get("watchdog_cycles", c.watchdog_cycles);
  get("check_invariants_every", c.check_invariants_every);
  c.validate();
  return c;
}

nlohmann::json to_json(const SimMetrics& m) {
  double util_mean = 0.0, util_max = 0.0;
  for (double u : m.link_utilization) {
    util_mean += u;
    util_max = std::max(util_max, u);
  }
  if (!m.link_utilization.empty()) util_mean /= static_cast<double>(m.link_utilization.size());
  return {{"makespan", m.makespan},
          {"cycles_simulated", m.cycles_simulated},
          {"injected_packets", m.injected_packets},
          {"injected_flits", m.injected_flits},
          {"delivered_packets", m.delivered_packets},
          {"delivered_flits", m.delivered_flits},
          {"mean_latency", m.mean_latency},
          {"max_hops", m.max_hops},
          {"hop_limit_violations", m.hop_limit_violations},
          {"vc_set_violations", m.vc_set_violations},
          {"link_utilization_mean", util_mean},
          {"link_utilization_max", util_max},
          {"link_utilization", m.link_utilization},
          {"source_completion", m.source_completion},
          {"source_delivered_packets", m.source_delivered_packets}};
}

struct Simulator::Event {
  enum Kind : std::uint8_t { NetCredit, InjectCredit, OutRelease, Deliver };
  Kind kind;
  int index;
};

struct Simulator::Impl {
  struct Request {
    int in_port;
    int vc;
    int out_port;
    int out_vc;
    int cand;  // index into cands_ of the chosen hop, -1 for ejection
    std::int64_t packet;
  };

  struct SourceSlot {
    std::shared_ptr<TrafficSource> source;
    int vc_set = 0;
    Cycle completion = -1;
    std::int64_t delivered = 0;
  };

  // geometry
  int n = 0, q = 0, conc = 0, size = 0, cap_in = 0, cap_out = 0, vpp = 0, speedup = 0;
  std::vector<SwitchCoord> coord;
  std::vector<int> peer_switch;  // per (s, network port)
  std::vector<int> peer_port;

  // input side, indexed by (s * P + port) * V + v
  std::vector<std::int32_t> in_store;
  std::vector<std::int32_t> in_head, in_count;
  std::vector<std::uint64_t> in_mask;  // per (s * P + port)
  std::vector<Cycle> in_lane_end;      // per (s * P + port) * speedup

  // output side
  std::vector<std::int32_t> out_store;
  std::vector<std::int32_t> out_head, out_count, out_occupied;
  std::vector<std::int32_t> credits, pending_credits;
  std::vector<std::uint64_t> out_mask;
  std::vector<Cycle> out_lane_end;
  std::vector<Cycle> link_busy_until;
  std::vector<int> rr;
  std::vector<Cycle> link_busy_cycles;  // per (s * net_ports + port)

  // endpoints
  std::vector<std::deque<std::int32_t>> ep_queue;
  std::vector<Cycle> ep_busy_until;
  std::vector<std::int32_t> ep_credits, ep_pending;  // per e * V + v
  std::vector<int> ep_owner;

  // packets
  std::vector<Packet> pool;
  std::vector<std::int32_t> free_slots;
  std::uint64_t next_id = 0;

  std::vector<std::vector<Event>> wheel;
  Cycle wheel_mask = 0;
  std::int64_t pending_deliveries = 0;

  std::vector<std::mt19937_64> rng;
  std::vector<SourceSlot> sources;
  bool started = false;

  // occupancy cache for route selection, per (out port, vc set)
  std::vector<std::int64_t> occ_cache;
  std::vector<Cycle> occ_stamp;

  std::vector<PortCandidate> cands;
  std::vector<Request> reqs;

  // counters
  std::int64_t injected_packets = 0, delivered_packets = 0;
  std::int64_t latency_sum = 0;
  int max_hops = 0;
  std::int64_t hop_violations = 0, vc_violations = 0, invariant_checks = 0;
  Cycle last_progress = 0;

  std::int32_t alloc_packet() {
    if (!free_slots.empty()) {
      std::int32_t i = free_slots.back();
      free_slots.pop_back();
      return i;
    }
    pool.emplace_back();
    return static_cast<std::int32_t>(pool.size() - 1);
  }
};

Simulator::Simulator(SimConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  auto& I = *impl_;
  const NetworkShape& sh = config_.shape;
  I.n = sh.n;
  I.q = sh.q;
  I.conc = sh.concentration;
  I.size = config_.packet_size;
  I.cap_in = config_.input_buffer_packets;
  I.cap_out = config_.output_buffer_packets;
  I.vpp = config_.vcs_per_partition;
  I.speedup = config_.internal_speedup;
  switches_ = sh.switch_count();
  net_ports_ = sh.network_ports();
  ports_ = net_ports_ + sh.concentration;
  vcs_ = config_.total_vcs();

  const std::size_t SP = static_cast<std::size_t>(switches_) * static_cast<std::size_t>(ports_);
  const std::size_t SPV = SP * static_cast<std::size_t>(vcs_);

  I.coord.reserve(static_cast<std::size_t>(switches_));
  for (SwitchId s = 0; s < switches_; ++s) I.coord.push_back(sh.coord(s));
  I.peer_switch.assign(SP, -1);
  I.peer_port.assign(SP, -1);
  for (SwitchId s = 0; s < switches_; ++s) {
    const SwitchCoord& c = I.coord[static_cast<std::size_t>(s)];
    for (int d = 0; d < I.q; ++d) {
      for (int v = 0; v < I.n; ++v) {
        if (v == c[d]) continue;
        int port = d * (I.n - 1) + (v < c[d] ? v : v - 1);
        SwitchCoord t = c;
        t[d] = v;
        std::size_t k = static_cast<std::size_t>(s) * static_cast<std::size_t>(ports_) + static_cast<std::size_t>(port);
        I.peer_switch[k] = sh.switch_id(t);
        I.peer_port[k] = d * (I.n - 1) + (c[d] < v ? c[d] : c[d] - 1);
      }
    }
  }

  I.in_store.assign(SPV * static_cast<std::size_t>(I.cap_in), -1);
  I.in_head.assign(SPV, 0);
  I.in_count.assign(SPV, 0);
  I.in_mask.assign(SP, 0);
  I.in_lane_end.assign(SP * static_cast<std::size_t>(I.speedup), 0);
  I.out_store.assign(SPV * static_cast<std::size_t>(I.cap_out), -1);
  I.out_head.assign(SPV, 0);
  I.out_count.assign(SPV, 0);
  I.out_occupied.assign(SPV, 0);
  I.credits.assign(SPV, 0);
  I.pending_credits.assign(SPV, 0);
  for (std::size_t sp = 0; sp < SP; ++sp) {
    if (static_cast<int>(sp % static_cast<std::size_t>(ports_)) < net_ports_) {
      std::fill_n(I.credits.begin() + static_cast<std::ptrdiff_t>(sp * static_cast<std::size_t>(vcs_)), vcs_, I.cap_in);
    }
  }
  I.out_mask.assign(SP, 0);
  I.out_lane_end.assign(SP * static_cast<std::size_t>(I.speedup), 0);
  I.link_busy_until.assign(SP, 0);
  I.rr.assign(SP, 0);
  I.link_busy_cycles.assign(static_cast<std::size_t>(switches_) * static_cast<std::size_t>(net_ports_), 0);

  const std::size_t E = static_cast<std::size_t>(sh.endpoint_count());
  I.ep_queue.resize(E);
  I.ep_busy_until.assign(E, 0);
  I.ep_credits.assign(E * static_cast<std::size_t>(vcs_), I.cap_in);
  I.ep_pending.assign(E * static_cast<std::size_t>(vcs_), 0);
  I.ep_owner.assign(E, -1);

  const Cycle horizon = 2 * static_cast<Cycle>(I.size) + config_.link_latency + config_.credit_latency + 4;
  Cycle w = 1;
  while (w < horizon) w <<= 1;
  I.wheel.resize(static_cast<std::size_t>(w));
  I.wheel_mask = w - 1;

  I.rng.reserve(static_cast<std::size_t>(switches_));
  for (SwitchId s = 0; s < switches_; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(s), 0x5eedu};
    I.rng.emplace_back(seq);
  }
  const std::size_t sets = static_cast<std::size_t>(config_.partition_count_for_vcs);
  I.occ_cache.assign(SP * sets, 0);
  I.occ_stamp.assign(SP * sets, -1);
}

Simulator::~Simulator() = default;

int Simulator::add_source(std::shared_ptr<TrafficSource> source, int vc_set) {
  auto& I = *impl_;
  if (I.started) throw ConfigError("sources must be added before the simulation starts");
  if (!source) throw ConfigError("null traffic source");
  if (vc_set < 0 || vc_set >= config_.partition_count_for_vcs) {
    throw ConfigError("VC set " + std::to_string(vc_set) + " exceeds the VC budget");
  }
  const int index = static_cast<int>(I.sources.size());
  for (EndpointId e : source->endpoints()) {
    if (e < 0 || e >= config_.shape.endpoint_count()) throw ConfigError("source endpoint out of range");
    if (I.ep_owner[static_cast<std::size_t>(e)] >= 0) {
      throw ConfigError("endpoint " + std::to_string(e) + " claimed by two traffic sources");
    }
    I.ep_owner[static_cast<std::size_t>(e)] = index;
  }
  I.sources.push_back({std::move(source), vc_set, -1, 0});
  return index;
}

void Simulator::send(int source_index, const PacketRequest& req) {
  auto& I = *impl_;
  const NetworkShape& sh = config_.shape;
  if (req.source < 0 || req.source >= sh.endpoint_count() || req.dest < 0 || req.dest >= sh.endpoint_count()) {
    throw ConfigError("packet endpoint out of range");
  }
  std::int32_t idx = I.alloc_packet();
  Packet& p = I.pool[static_cast<std::size_t>(idx)];
  p = Packet{};
  p.id = I.next_id++;
  p.source = req.source;
  p.dest = req.dest;
  p.dest_switch = endpoint_switch(sh, req.dest);
  p.size = I.size;
  p.vc_set = I.sources[static_cast<std::size_t>(source_index)].vc_set;
  p.source_index = source_index;
  p.tag = req.tag;
  p.route.destination = I.coord[static_cast<std::size_t>(p.dest_switch)];
  p.birth_cycle = req.birth_cycle;
  I.ep_queue[static_cast<std::size_t>(req.source)].push_back(idx);
}

void Simulator::step() {
  auto& I = *impl_;
  const Cycle now = now_;
  const std::size_t P = static_cast<std::size_t>(ports_);
  const std::size_t V = static_cast<std::size_t>(vcs_);
  const std::size_t speedup = static_cast<std::size_t>(I.speedup);

  if (!I.started) {
    I.started = true;
    for (std::size_t i = 0; i < I.sources.size(); ++i) {
      I.sources[i].source->start(static_cast<int>(i), now, *this);
      if (I.sources[i].source->terminating() && I.sources[i].source->done()) I.sources[i].completion = now;
    }
  }

  auto schedule = [&](Cycle at, Event ev) {
    if (at - now > I.wheel_mask || at <= now) throw std::logic_error("event outside the timing wheel horizon");
    I.wheel[static_cast<std::size_t>(at & I.wheel_mask)].push_back(ev);
  };

  // (1) events due this cycle
  {
    auto& due = I.wheel[static_cast<std::size_t>(now & I.wheel_mask)];
    // delivery callbacks may schedule nothing on the wheel, so iterating by
    // index over a stable vector is safe
    for (std::size_t i = 0; i < due.size(); ++i) {
      Event ev = due[i];
      switch (ev.kind) {
        case Event::NetCredit:
          ++I.credits[static_cast<std::size_t>(ev.index)];
          --I.pending_credits[static_cast<std::size_t>(ev.index)];
          break;
        case Event::InjectCredit:
          ++I.ep_credits[static_cast<std::size_t>(ev.index)];
          --I.ep_pending[static_cast<std::size_t>(ev.index)];
          break;
        case Event::OutRelease:
          --I.out_occupied[static_cast<std::size_t>(ev.index)];
          break;
        case Event::Deliver: {
          --I.pending_deliveries;
          Packet p = I.pool[static_cast<std::size_t>(ev.index)];
          I.free_slots.push_back(ev.index);
          p.delivery_cycle = now;
          ++I.delivered_packets;
          I.latency_sum += now - p.birth_cycle;
          I.max_hops = std::max(I.max_hops, p.route.hops_taken);
          if (p.route.hops_taken > config_.routing.hop_limit(I.q)) ++I.hop_violations;
          if (p.max_vc_offset >= I.vpp) ++I.vc_violations;
          I.last_progress = now;
          auto& slot = I.sources[static_cast<std::size_t>(p.source_index)];
          ++slot.delivered;
          slot.source->on_delivered(p, now, *this);
          if (slot.completion < 0 && slot.source->terminating() && slot.source->done()) slot.completion = now;
          break;
        }
      }
    }
    due.clear();
  }

  // (2) injection
  const int endpoints = config_.shape.endpoint_count();
  for (int e = 0; e < endpoints; ++e) {
    const std::size_t eu = static_cast<std::size_t>(e);
    if (I.ep_busy_until[eu] > now) continue;
    auto& queue = I.ep_queue[eu];
    if (queue.empty()) {
      int owner = I.ep_owner[eu];
      if (owner < 0) continue;
      auto req = I.sources[static_cast<std::size_t>(owner)].source->pull(e, now);
      if (!req) continue;
      if (req->source != e) throw std::logic_error("pulled packet does not originate at the pulling endpoint");
      send(owner, *req);
    }
    std::int32_t pidx = queue.front();
    Packet& p = I.pool[static_cast<std::size_t>(pidx)];
    if (p.birth_cycle > now) continue;
    const int base = p.vc_set * I.vpp;
    int best = -1;
    for (int v = base; v < base + I.vpp; ++v) {
      int cr = I.ep_credits[eu * V + static_cast<std::size_t>(v)];
      if (cr > 0 && (best < 0 || cr > I.ep_credits[eu * V + static_cast<std::size_t>(best)])) best = v;
    }
    if (best < 0) continue;
    queue.pop_front();
    --I.ep_credits[eu * V + static_cast<std::size_t>(best)];
    I.ep_busy_until[eu] = now + I.size;
    const SwitchId s = e / I.conc;
    const std::size_t sp = static_cast<std::size_t>(s) * P + static_cast<std::size_t>(net_ports_ + e % I.conc);
    const std::size_t ivc = sp * V + static_cast<std::size_t>(best);
    if (I.in_count[ivc] >= I.cap_in) throw std::logic_error("injection overflowed an input buffer");
    I.in_store[ivc * static_cast<std::size_t>(I.cap_in) +
               static_cast<std::size_t>((I.in_head[ivc] + I.in_count[ivc]) % I.cap_in)] = pidx;
    ++I.in_count[ivc];
    I.in_mask[sp] |= std::uint64_t{1} << best;
    p.inject_cycle = now;
    p.head_ready = now + config_.link_latency;
    ++I.injected_packets;
    Packet copy = p;
    I.sources[static_cast<std::size_t>(copy.source_index)].source->on_injected(copy, now + I.size, *this);
  }

  // (3) output buffers to links
  for (SwitchId s = 0; s < switches_; ++s) {
    for (int port = 0; port < ports_; ++port) {
      const std::size_t sp = static_cast<std::size_t>(s) * P + static_cast<std::size_t>(port);
      std::uint64_t mask = I.out_mask[sp];
      if (mask == 0 || I.link_busy_until[sp] > now) continue;
      const bool network = port < net_ports_;
      int chosen = -1;
      for (int k = 0; k < vcs_; ++k) {
        int v = (I.rr[sp] + k) % vcs_;
        if (!(mask & (std::uint64_t{1} << v))) continue;
        const std::size_t ovc = sp * V + static_cast<std::size_t>(v);
        std::int32_t pidx = I.out_store[ovc * static_cast<std::size_t>(I.cap_out) + static_cast<std::size_t>(I.out_head[ovc])];
        if (I.pool[static_cast<std::size_t>(pidx)].head_ready > now) continue;
        if (network && I.credits[ovc] == 0) continue;
        chosen = v;
        break;
      }
      if (chosen < 0) continue;
      const std::size_t ovc = sp * V + static_cast<std::size_t>(chosen);
      std::int32_t pidx = I.out_store[ovc * static_cast<std::size_t>(I.cap_out) + static_cast<std::size_t>(I.out_head[ovc])];
      I.out_head[ovc] = (I.out_head[ovc] + 1) % I.cap_out;
      if (--I.out_count[ovc] == 0) I.out_mask[sp] &= ~(std::uint64_t{1} << chosen);
      I.rr[sp] = (chosen + 1) % vcs_;
      I.link_busy_until[sp] = now + I.size;
      schedule(now + I.size, {Event::OutRelease, static_cast<int>(ovc)});
      Packet& p = I.pool[static_cast<std::size_t>(pidx)];
      if (network) {
        I.link_busy_cycles[static_cast<std::size_t>(s) * static_cast<std::size_t>(net_ports_) + static_cast<std::size_t>(port)] += I.size;
        --I.credits[ovc];
        const std::size_t tsp = static_cast<std::size_t>(I.peer_switch[sp]) * P + static_cast<std::size_t>(I.peer_port[sp]);
        const std::size_t ivc = tsp * V + static_cast<std::size_t>(chosen);
        if (I.in_count[ivc] >= I.cap_in) throw std::logic_error("credit flow control let an input buffer overflow");
        I.in_store[ivc * static_cast<std::size_t>(I.cap_in) +
                   static_cast<std::size_t>((I.in_head[ivc] + I.in_count[ivc]) % I.cap_in)] = pidx;
        ++I.in_count[ivc];
        I.in_mask[tsp] |= std::uint64_t{1} << chosen;
        p.head_ready = now + config_.link_latency;
      } else {
        ++I.pending_deliveries;
        schedule(now + I.size - 1 + config_.link_latency, {Event::Deliver, pidx});
      }
    }
  }

  // (4) routing and switch allocation
  const RoutingPolicy& policy = config_.routing;
  const std::size_t sets = static_cast<std::size_t>(config_.partition_count_for_vcs);
  for (SwitchId s = 0; s < switches_; ++s) {
    const std::size_t s0 = static_cast<std::size_t>(s) * P;
    const SwitchCoord& here = I.coord[static_cast<std::size_t>(s)];
    auto& rng = I.rng[static_cast<std::size_t>(s)];
    I.reqs.clear();
    I.cands.clear();

    auto free_lanes = [&](const std::vector<Cycle>& lanes, std::size_t sp) {
      int f = 0;
      for (std::size_t l = 0; l < speedup; ++l) f += lanes[sp * speedup + l] <= now;
      return f;
    };

    for (int port = 0; port < ports_; ++port) {
      const std::size_t sp = s0 + static_cast<std::size_t>(port);
      std::uint64_t mask = I.in_mask[sp];
      if (mask == 0 || free_lanes(I.in_lane_end, sp) == 0) continue;
      while (mask) {
        const int v = std::countr_zero(mask);
        mask &= mask - 1;
        const std::size_t ivc = sp * V + static_cast<std::size_t>(v);
        const std::int32_t pidx = I.in_store[ivc * static_cast<std::size_t>(I.cap_in) + static_cast<std::size_t>(I.in_head[ivc])];
        const Packet& p = I.pool[static_cast<std::size_t>(pidx)];
        if (p.head_ready > now) continue;
        const int offset = std::min(p.route.hops_taken, I.vpp - 1);
        const int out_vc = p.vc_set * I.vpp + offset;
        if (p.dest_switch == s) {
          const int out = net_ports_ + p.dest % I.conc;
          if (I.out_occupied[(s0 + static_cast<std::size_t>(out)) * V + static_cast<std::size_t>(out_vc)] < I.cap_out) {
            I.reqs.push_back({port, v, out, out_vc, -1, pidx});
          }
          continue;
        }
        const std::size_t first = I.cands.size();
        append_candidates(p.route, here, policy, I.n, I.cands);
        std::span<PortCandidate> view(I.cands.data() + first, I.cands.size() - first);
        const std::size_t set = static_cast<std::size_t>(p.vc_set);
        auto lookup = [&](const PortCandidate& c) -> std::optional<std::int64_t> {
          const int cd = here[c.dimension];
          const int out = c.dimension * (I.n - 1) + (c.target < cd ? c.target : c.target - 1);
          const std::size_t osp = s0 + static_cast<std::size_t>(out);
          if (I.out_occupied[osp * V + static_cast<std::size_t>(out_vc)] >= I.cap_out) return std::nullopt;
          const std::size_t key = osp * sets + set;
          if (I.occ_stamp[key] != now) {
            std::int64_t occ = 0;
            for (int w = p.vc_set * I.vpp; w < (p.vc_set + 1) * I.vpp; ++w) {
              const std::size_t o = osp * V + static_cast<std::size_t>(w);
              occ += I.out_occupied[o] + (I.cap_in - I.credits[o]);
            }
            I.occ_cache[key] = occ * I.size;
            I.occ_stamp[key] = now;
          }
          return I.occ_cache[key];
        };
        const int pick = select_index(view, lookup, policy.penalty_phits, rng);
        if (pick < 0) continue;
        const PortCandidate& c = view[static_cast<std::size_t>(pick)];
        const int out = c.dimension * (I.n - 1) + (c.target < here[c.dimension] ? c.target : c.target - 1);
        I.reqs.push_back({port, v, out, out_vc, static_cast<int>(first) + pick, pidx});
      }
    }
    if (I.reqs.empty()) continue;

    std::shuffle(I.reqs.begin(), I.reqs.end(), rng);
    for (const auto& r : I.reqs) {
      const std::size_t isp = s0 + static_cast<std::size_t>(r.in_port);
      const std::size_t osp = s0 + static_cast<std::size_t>(r.out_port);
      const std::size_t ovc = osp * V + static_cast<std::size_t>(r.out_vc);
      if (I.out_occupied[ovc] >= I.cap_out) continue;
      auto lane_in = std::find_if(I.in_lane_end.begin() + static_cast<std::ptrdiff_t>(isp * speedup),
                                  I.in_lane_end.begin() + static_cast<std::ptrdiff_t>((isp + 1) * speedup),
                                  [&](Cycle end) { return end <= now; });
      if (lane_in == I.in_lane_end.begin() + static_cast<std::ptrdiff_t>((isp + 1) * speedup)) continue;
      auto lane_out = std::find_if(I.out_lane_end.begin() + static_cast<std::ptrdiff_t>(osp * speedup),
                                   I.out_lane_end.begin() + static_cast<std::ptrdiff_t>((osp + 1) * speedup),
                                   [&](Cycle end) { return end <= now; });
      if (lane_out == I.out_lane_end.begin() + static_cast<std::ptrdiff_t>((osp + 1) * speedup)) continue;

      *lane_in = now + I.size;
      *lane_out = now + I.size;

      const std::size_t ivc = isp * V + static_cast<std::size_t>(r.vc);
      I.in_head[ivc] = (I.in_head[ivc] + 1) % I.cap_in;
      if (--I.in_count[ivc] == 0) I.in_mask[isp] &= ~(std::uint64_t{1} << r.vc);
      const Cycle credit_at = now + I.size + config_.credit_latency;
      if (r.in_port < net_ports_) {
        const std::size_t usp = static_cast<std::size_t>(I.peer_switch[isp]) * P + static_cast<std::size_t>(I.peer_port[isp]);
        const std::size_t uvc = usp * V + static_cast<std::size_t>(r.vc);
        ++I.pending_credits[uvc];
        schedule(credit_at, {Event::NetCredit, static_cast<int>(uvc)});
      } else {
        const std::size_t e = static_cast<std::size_t>(s) * static_cast<std::size_t>(I.conc) +
                              static_cast<std::size_t>(r.in_port - net_ports_);
        const std::size_t evc = e * V + static_cast<std::size_t>(r.vc);
        ++I.ep_pending[evc];
        schedule(credit_at, {Event::InjectCredit, static_cast<int>(evc)});
      }

      Packet& p = I.pool[static_cast<std::size_t>(r.packet)];
      if (r.cand >= 0) p.route = advance(p.route, I.cands[static_cast<std::size_t>(r.cand)]);
      p.max_vc_offset = std::max(p.max_vc_offset, r.out_vc - p.vc_set * I.vpp);
      p.head_ready = now + 1;
      I.out_store[ovc * static_cast<std::size_t>(I.cap_out) +
                  static_cast<std::size_t>((I.out_head[ovc] + I.out_count[ovc]) % I.cap_out)] = static_cast<std::int32_t>(r.packet);
      ++I.out_count[ovc];
      ++I.out_occupied[ovc];
      I.out_mask[osp] |= std::uint64_t{1} << r.out_vc;
    }
  }

  if (config_.utilization_trace != nullptr) {
    std::ostream& os = *config_.utilization_trace;
    for (SwitchId s = 0; s < switches_; ++s) {
      for (int port = 0; port < net_ports_; ++port) {
        os << now << ',' << s * net_ports_ + port << ','
           << (I.link_busy_until[static_cast<std::size_t>(s) * P + static_cast<std::size_t>(port)] > now ? 1 : 0) << '\n';
      }
    }
  }

  ++now_;
  if (config_.check_invariants_every > 0 && now_ % config_.check_invariants_every == 0) check_invariants();
}

std::int64_t Simulator::packets_in_network() const {
  return impl_->injected_packets - impl_->delivered_packets;
}

void Simulator::check_invariants() const {
  const auto& I = *impl_;
  ++const_cast<Impl&>(I).invariant_checks;
  const std::size_t P = static_cast<std::size_t>(ports_);
  const std::size_t V = static_cast<std::size_t>(vcs_);
  std::int64_t buffered = 0;
  auto fail = [&](const std::string& what) {
    throw std::logic_error("invariant violated at cycle " + std::to_string(now_) + ": " + what);
  };
  for (SwitchId s = 0; s < switches_; ++s) {
    for (std::size_t port = 0; port < P; ++port) {
      const std::size_t sp = static_cast<std::size_t>(s) * P + port;
      for (std::size_t v = 0; v < V; ++v) {
        const std::size_t k = sp * V + v;
        if (I.in_count[k] < 0 || I.in_count[k] > I.cap_in) fail("input buffer over capacity");
        if (I.out_occupied[k] < 0 || I.out_occupied[k] > I.cap_out) fail("output buffer over capacity");
        if (I.out_count[k] > I.out_occupied[k]) fail("output queue larger than its reservation");
        if (((I.in_mask[sp] >> v) & 1u) != (I.in_count[k] > 0 ? 1u : 0u)) fail("stale input VC mask");
        if (((I.out_mask[sp] >> v) & 1u) != (I.out_count[k] > 0 ? 1u : 0u)) fail("stale output VC mask");
        buffered += I.in_count[k] + I.out_count[k];
        if (static_cast<int>(port) < net_ports_) {
          // upstream credits + downstream occupancy + credits in flight
          const std::size_t dsp = static_cast<std::size_t>(I.peer_switch[sp]) * P + static_cast<std::size_t>(I.peer_port[sp]);
          const std::size_t dk = dsp * V + v;
          if (I.credits[k] < 0) fail("negative credit count");
          if (I.credits[k] + I.in_count[dk] + I.pending_credits[k] != I.cap_in) fail("credit count out of balance");
        } else {
          const std::size_t e = static_cast<std::size_t>(s) * static_cast<std::size_t>(I.conc) + (port - static_cast<std::size_t>(net_ports_));
          if (I.ep_credits[e * V + v] + I.in_count[k] + I.ep_pending[e * V + v] != I.cap_in) {
            fail("injection credit count out of balance");
          }
        }
      }
    }
  }
  const std::int64_t live = I.injected_packets - I.delivered_packets;
  if (buffered + I.pending_deliveries != live) {
    fail("packet conservation: " + std::to_string(buffered) + " buffered + " + std::to_string(I.pending_deliveries) +
         " on ejection links != " + std::to_string(live) + " in network");
  }
  const std::int64_t injected_flits = I.injected_packets * I.size;
  const std::int64_t delivered_flits = I.delivered_packets * I.size;
  if (injected_flits != delivered_flits + live * I.size) fail("flit conservation");
}

SimMetrics Simulator::metrics() const {
  const auto& I = *impl_;
  SimMetrics m;
  m.cycles_simulated = now_;
  m.injected_packets = I.injected_packets;
  m.injected_flits = I.injected_packets * I.size;
  m.delivered_packets = I.delivered_packets;
  m.delivered_flits = I.delivered_packets * I.size;
  m.mean_latency = I.delivered_packets > 0 ? static_cast<double>(I.latency_sum) / static_cast<double>(I.delivered_packets) : 0.0;
  m.max_hops = I.max_hops;
  m.hop_limit_violations = I.hop_violations;
  m.vc_set_violations = I.vc_violations;
  m.invariant_checks = I.invariant_checks;
  m.link_utilization.reserve(I.link_busy_cycles.size());
  for (Cycle busy : I.link_busy_cycles) {
    double u = now_ > 0 ? static_cast<double>(std::min(busy, now_)) / static_cast<double>(now_) : 0.0;
    m.link_utilization.push_back(u);
  }
  for (const auto& src : I.sources) {
    m.source_completion.push_back(src.completion);
    m.source_delivered_packets.push_back(src.delivered);
    if (src.source->terminating()) m.makespan = std::max(m.makespan, std::max<Cycle>(src.completion, 0));
  }
  return m;
}

SimMetrics Simulator::run_until_quiescent() {
  auto& I = *impl_;
  auto pending = [&] {
    if (!I.started) return true;
    for (const auto& src : I.sources) {
      if (src.source->terminating() && !src.source->done()) return true;
    }
    return false;
  };
  I.last_progress = now_;
  while (pending()) {
    step();
    if (now_ - I.last_progress > config_.watchdog_cycles) {
      std::ostringstream os;
      os << "no packet delivered for " << config_.watchdog_cycles << " cycles (now " << now_ << ", "
         << packets_in_network() << " packets in network)\n";
      const std::size_t P = static_cast<std::size_t>(ports_);
      const std::size_t V = static_cast<std::size_t>(vcs_);
      int shown = 0;
      for (SwitchId s = 0; s < switches_ && shown < 40; ++s) {
        for (std::size_t port = 0; port < P && shown < 40; ++port) {
          for (std::size_t v = 0; v < V; ++v) {
            const std::size_t k = (static_cast<std::size_t>(s) * P + port) * V + v;
            if (I.in_count[k] > 0 || I.out_count[k] > 0) {
              os << "  switch " << s << " port " << port << " vc " << v << ": in " << I.in_count[k] << " out "
                 << I.out_count[k] << " credits " << I.credits[k] << '\n';
              ++shown;
            }
          }
        }
      }
      throw DeadlockError(os.str());
    }
  }
  return metrics();
}

}  // namespace hxalloc
