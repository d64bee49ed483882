#include "hxalloc/workloads.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>

namespace hxalloc {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

std::vector<int> rank_table(const std::vector<EndpointId>& endpoints) {
  EndpointId hi = -1;
  for (EndpointId e : endpoints) {
    if (e < 0) throw WorkloadError("negative endpoint id");
    hi = std::max(hi, e);
  }
  std::vector<int> rank_of(static_cast<std::size_t>(hi + 1), -1);
  for (std::size_t r = 0; r < endpoints.size(); ++r) {
    int& slot = rank_of[static_cast<std::size_t>(endpoints[r])];
    if (slot >= 0) throw WorkloadError("endpoint " + std::to_string(endpoints[r]) + " appears twice");
    slot = static_cast<int>(r);
  }
  return rank_of;
}

}  // namespace

std::vector<int> static_destinations(const StaticPattern& pattern, int ranks) {
  if (ranks < 1) throw WorkloadError("a pattern needs at least one rank");
  switch (pattern.kind) {
    case StaticKind::Uniform:
      throw WorkloadError("uniform traffic has no fixed destination map");
    case StaticKind::RandomPermutation: {
      std::vector<int> dest(static_cast<std::size_t>(ranks));
      std::iota(dest.begin(), dest.end(), 0);
      auto rng = seeded(pattern.seed, 10);
      std::shuffle(dest.begin(), dest.end(), rng);
      return dest;
    }
    case StaticKind::RandomSwitchPermutation: {
      const int g = pattern.group_size;
      if (g < 1 || ranks % g != 0) {
        throw WorkloadError("switch permutation needs a rank count that is a multiple of the group size " +
                            std::to_string(g));
      }
      std::vector<int> groups(static_cast<std::size_t>(ranks / g));
      std::iota(groups.begin(), groups.end(), 0);
      auto rng = seeded(pattern.seed, 11);
      std::shuffle(groups.begin(), groups.end(), rng);
      std::vector<int> dest(static_cast<std::size_t>(ranks));
      for (int r = 0; r < ranks; ++r) dest[static_cast<std::size_t>(r)] = groups[static_cast<std::size_t>(r / g)] * g + r % g;
      return dest;
    }
  }
  throw WorkloadError("unknown static pattern");
}

StaticTrafficSource::StaticTrafficSource(StaticPattern pattern, std::vector<EndpointId> endpoints, int packet_size)
    : pattern_(pattern),
      endpoints_(std::move(endpoints)),
      rank_of_(rank_table(endpoints_)),
      generated_(endpoints_.size(), 0),
      packet_size_(packet_size),
      rng_(seeded(pattern.seed, 12)) {
  if (endpoints_.empty()) throw WorkloadError("static traffic needs at least one endpoint");
  if (packet_size < 1) throw WorkloadError("packet size must be positive");
  if (pattern_.terminating && pattern_.demand_packets < 0) throw WorkloadError("negative demand");
  if (pattern_.kind != StaticKind::Uniform) dest_rank_ = static_destinations(pattern_, static_cast<int>(endpoints_.size()));
}

bool StaticTrafficSource::done() const {
  return pattern_.terminating &&
         delivered_ == pattern_.demand_packets * static_cast<std::int64_t>(endpoints_.size());
}

std::optional<PacketRequest> StaticTrafficSource::pull(EndpointId endpoint, Cycle now) {
  if (endpoint < 0 || static_cast<std::size_t>(endpoint) >= rank_of_.size()) return std::nullopt;
  const int r = rank_of_[static_cast<std::size_t>(endpoint)];
  if (r < 0) return std::nullopt;
  std::int64_t& made = generated_[static_cast<std::size_t>(r)];
  if (pattern_.terminating && made >= pattern_.demand_packets) return std::nullopt;
  const Cycle birth = made * packet_size_;
  if (birth > now) return std::nullopt;
  int dest;
  if (pattern_.kind == StaticKind::Uniform) {
    dest = std::uniform_int_distribution<int>(0, static_cast<int>(endpoints_.size()) - 1)(rng_);
  } else {
    dest = dest_rank_[static_cast<std::size_t>(r)];
  }
  ++made;
  return PacketRequest{endpoint, endpoints_[static_cast<std::size_t>(dest)], 0, birth};
}

void StaticTrafficSource::on_delivered(const Packet&, Cycle, Injector&) { ++delivered_; }

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::All2All: return "all2all";
    case KernelKind::AllReduce: return "allreduce";
    case KernelKind::StencilVonNeumann: return "stencil_vn";
    case KernelKind::StencilMoore: return "stencil_moore";
    case KernelKind::RandomInvolution: return "random_involution";
  }
  return "?";
}

std::int64_t KernelSchedule::message_count() const {
  std::int64_t total = 0;
  for (const auto& rank : steps) {
    for (const auto& st : rank) total += static_cast<std::int64_t>(st.sends.size());
  }
  return total;
}

std::int64_t KernelSchedule::packet_count() const {
  std::int64_t total = 0;
  for (const auto& rank : steps) {
    for (const auto& st : rank) {
      for (const auto& x : st.sends) total += x.packets;
    }
  }
  return total;
}

bool KernelSchedule::is_symmetric() const {
  // multiset of (from, to, step, packets) from the send side and the receive side
  std::map<std::tuple<int, int, int, int>, int> balance;
  for (int r = 0; r < ranks; ++r) {
    const auto& prog = steps[static_cast<std::size_t>(r)];
    for (int i = 0; i < static_cast<int>(prog.size()); ++i) {
      for (const auto& x : prog[static_cast<std::size_t>(i)].sends) {
        if (x.peer < 0 || x.peer >= ranks) return false;
        ++balance[{r, x.peer, i, x.packets}];
      }
      for (const auto& x : prog[static_cast<std::size_t>(i)].receives) {
        if (x.peer < 0 || x.peer >= ranks) return false;
        --balance[{x.peer, r, i, x.packets}];
      }
    }
  }
  return std::all_of(balance.begin(), balance.end(), [](const auto& kv) { return kv.second == 0; });
}

KernelSchedule gen_all2all(int k, int chunk_packets) {
  if (k < 2) throw WorkloadError("all-to-all needs at least 2 ranks");
  if (chunk_packets < 1) throw WorkloadError("chunk size must be at least one packet");
  KernelSchedule s{KernelKind::All2All, k, StepRule::SendsInjected, {}};
  s.steps.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    auto& prog = s.steps[static_cast<std::size_t>(r)];
    prog.resize(static_cast<std::size_t>(k - 1));
    for (int i = 1; i < k; ++i) {
      prog[static_cast<std::size_t>(i - 1)].sends.push_back({(r + i) % k, chunk_packets});
      prog[static_cast<std::size_t>(i - 1)].receives.push_back({(r - i + k) % k, chunk_packets});
    }
  }
  return s;
}

KernelSchedule gen_allreduce(int k, int message_packets) {
  if (k < 2 || !std::has_single_bit(static_cast<unsigned>(k))) {
    throw WorkloadError("Rabenseifner all-reduce needs a power-of-two rank count, got " + std::to_string(k));
  }
  if (message_packets < 1) throw WorkloadError("message size must be at least one packet");
  const int levels = std::countr_zero(static_cast<unsigned>(k));
  std::vector<int> payload(static_cast<std::size_t>(levels));
  int p = message_packets;
  for (int j = 0; j < levels; ++j) {
    p = std::max(1, p / 2);
    payload[static_cast<std::size_t>(j)] = p;
  }
  KernelSchedule s{KernelKind::AllReduce, k, StepRule::SendsAndReceivesDone, {}};
  s.steps.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    auto& prog = s.steps[static_cast<std::size_t>(r)];
    for (int j = 0; j < levels; ++j) {
      const int peer = r ^ (1 << j);
      const int size = payload[static_cast<std::size_t>(j)];
      prog.push_back({{{peer, size}}, {{peer, size}}});
    }
    for (int j = levels - 1; j >= 0; --j) {
      const int peer = r ^ (1 << j);
      const int size = payload[static_cast<std::size_t>(j)];
      prog.push_back({{{peer, size}}, {{peer, size}}});
    }
  }
  return s;
}

KernelSchedule gen_stencil(int k, KernelKind neighborhood, int rounds, int message_packets) {
  if (neighborhood != KernelKind::StencilVonNeumann && neighborhood != KernelKind::StencilMoore) {
    throw WorkloadError("stencil neighborhood must be von Neumann or Moore");
  }
  int side = 0;
  while ((side + 1) * (side + 1) <= k) ++side;
  if (k < 1 || side * side != k) throw WorkloadError("stencil needs a perfect-square rank count, got " + std::to_string(k));
  if (rounds < 1) throw WorkloadError("stencil needs at least one round");
  if (message_packets < 1) throw WorkloadError("message size must be at least one packet");
  KernelSchedule s{neighborhood, k, StepRule::SendsAndReceivesDone, {}};
  s.steps.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    const int y = r / side, x = r % side;
    std::set<int> peers;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        if (neighborhood == KernelKind::StencilVonNeumann && dy != 0 && dx != 0) continue;
        const int peer = ((y + dy + side) % side) * side + (x + dx + side) % side;
        if (peer != r) peers.insert(peer);
      }
    }
    KernelStep step;
    for (int peer : peers) {
      step.sends.push_back({peer, message_packets});
      step.receives.push_back({peer, message_packets});
    }
    s.steps[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(rounds), step);
  }
  return s;
}

KernelSchedule gen_random_involution(int k, int message_packets, std::mt19937_64& rng) {
  if (k < 2 || k % 2 != 0) throw WorkloadError("random involution needs an even rank count, got " + std::to_string(k));
  if (message_packets < 1) throw WorkloadError("message size must be at least one packet");
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> partner(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < order.size(); i += 2) {
    partner[static_cast<std::size_t>(order[i])] = order[i + 1];
    partner[static_cast<std::size_t>(order[i + 1])] = order[i];
  }
  KernelSchedule s{KernelKind::RandomInvolution, k, StepRule::SendsAndReceivesDone, {}};
  s.steps.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    const int peer = partner[static_cast<std::size_t>(r)];
    s.steps[static_cast<std::size_t>(r)].push_back({{{peer, message_packets}}, {{peer, message_packets}}});
  }
  return s;
}

KernelSchedule gen_random_involution(int k, int message_packets, std::uint64_t seed) {
  auto rng = seeded(seed, 13);
  return gen_random_involution(k, message_packets, rng);
}

KernelTrafficSource::KernelTrafficSource(KernelSchedule schedule, std::vector<EndpointId> endpoints)
    : schedule_(std::move(schedule)), endpoints_(std::move(endpoints)), rank_of_(rank_table(endpoints_)) {
  if (static_cast<int>(endpoints_.size()) != schedule_.ranks) {
    throw WorkloadError("schedule has " + std::to_string(schedule_.ranks) + " ranks but the partition has " +
                        std::to_string(endpoints_.size()) + " endpoints");
  }
  if (!schedule_.is_symmetric()) throw WorkloadError("kernel schedule sends and receives do not match");
  state_.resize(static_cast<std::size_t>(schedule_.ranks));
  finish_.assign(static_cast<std::size_t>(schedule_.ranks), -1);
  for (int r = 0; r < schedule_.ranks; ++r) {
    const auto& prog = schedule_.steps[static_cast<std::size_t>(r)];
    auto& st = state_[static_cast<std::size_t>(r)];
    const std::size_t n = prog.size();
    st.injected.assign(n, 0);
    st.delivered.assign(n, 0);
    st.received.assign(n, 0);
    st.send_total.assign(n, 0);
    st.recv_total.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& x : prog[i].sends) st.send_total[i] += x.packets;
      for (const auto& x : prog[i].receives) st.recv_total[i] += x.packets;
    }
  }
}

void KernelTrafficSource::start(int source_index, Cycle now, Injector& out) {
  source_index_ = source_index;
  for (int r = 0; r < schedule_.ranks; ++r) {
    release(r, now, out);
    try_advance(r, now, out);
  }
}

void KernelTrafficSource::release(int rank, Cycle at, Injector& out) {
  const auto& st = state_[static_cast<std::size_t>(rank)];
  const auto& prog = schedule_.steps[static_cast<std::size_t>(rank)];
  if (st.step >= static_cast<int>(prog.size())) return;
  const EndpointId src = endpoints_[static_cast<std::size_t>(rank)];
  for (const auto& x : prog[static_cast<std::size_t>(st.step)].sends) {
    const EndpointId dst = endpoints_[static_cast<std::size_t>(x.peer)];
    for (int i = 0; i < x.packets; ++i) out.send(source_index_, {src, dst, st.step, at});
  }
}

bool KernelTrafficSource::finished(int rank) const {
  const auto& st = state_[static_cast<std::size_t>(rank)];
  const std::size_t n = st.send_total.size();
  if (st.step < static_cast<int>(n)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (st.delivered[i] != st.send_total[i] || st.received[i] != st.recv_total[i]) return false;
  }
  return true;
}

void KernelTrafficSource::try_advance(int rank, Cycle at, Injector& out) {
  auto& st = state_[static_cast<std::size_t>(rank)];
  const int n = static_cast<int>(st.send_total.size());
  while (st.step < n) {
    const std::size_t i = static_cast<std::size_t>(st.step);
    const bool complete = schedule_.rule == StepRule::SendsInjected
                              ? st.injected[i] == st.send_total[i]
                              : st.delivered[i] == st.send_total[i] && st.received[i] == st.recv_total[i];
    if (!complete) break;
    ++st.step;
    release(rank, at, out);
  }
  if (finish_[static_cast<std::size_t>(rank)] < 0 && finished(rank)) {
    finish_[static_cast<std::size_t>(rank)] = at;
    ++ranks_done_;
  }
}

void KernelTrafficSource::on_injected(const Packet& p, Cycle at, Injector& out) {
  const int r = rank_of_.at(static_cast<std::size_t>(p.source));
  ++state_[static_cast<std::size_t>(r)].injected.at(static_cast<std::size_t>(p.tag));
  if (schedule_.rule == StepRule::SendsInjected) try_advance(r, at, out);
}

void KernelTrafficSource::on_delivered(const Packet& p, Cycle at, Injector& out) {
  const int from = rank_of_.at(static_cast<std::size_t>(p.source));
  const int to = rank_of_.at(static_cast<std::size_t>(p.dest));
  ++state_[static_cast<std::size_t>(from)].delivered.at(static_cast<std::size_t>(p.tag));
  ++state_[static_cast<std::size_t>(to)].received.at(static_cast<std::size_t>(p.tag));
  try_advance(from, at, out);
  if (to != from) try_advance(to, at, out);
}

std::string_view to_string(AppKind kind) {
  switch (kind) {
    case AppKind::Uniform: return "uniform";
    case AppKind::RandomPermutation: return "random_permutation";
    case AppKind::RandomSwitchPermutation: return "random_switch_permutation";
    case AppKind::All2All: return "all2all";
    case AppKind::AllReduce: return "allreduce";
    case AppKind::StencilVonNeumann: return "stencil_vn";
    case AppKind::StencilMoore: return "stencil_moore";
    case AppKind::RandomInvolution: return "random_involution";
  }
  return "?";
}

AppKind parse_app_kind(std::string_view name) {
  static constexpr AppKind all[] = {AppKind::Uniform,          AppKind::RandomPermutation, AppKind::RandomSwitchPermutation,
                                    AppKind::All2All,          AppKind::AllReduce,         AppKind::StencilVonNeumann,
                                    AppKind::StencilMoore,     AppKind::RandomInvolution};
  for (AppKind k : all) {
    if (to_string(k) == name) return k;
  }
  if (name == "un") return AppKind::Uniform;
  if (name == "rp") return AppKind::RandomPermutation;
  if (name == "rsp") return AppKind::RandomSwitchPermutation;
  throw WorkloadError("unknown application kind '" + std::string(name) + "'");
}

bool is_static(AppKind kind) {
  return kind == AppKind::Uniform || kind == AppKind::RandomPermutation || kind == AppKind::RandomSwitchPermutation;
}

int WorkloadSpec::effective_message_packets() const {
  if (message_packets) return *message_packets;
  return kind == AppKind::AllReduce ? 8 : 1;
}

nlohmann::json to_json(const WorkloadSpec& w) {
  nlohmann::json j = {{"kind", to_string(w.kind)},
                      {"size_ranks", w.size_ranks},
                      {"message_packets", w.effective_message_packets()},
                      {"rounds", w.rounds},
                      {"seed", w.seed},
                      {"demand_packets", w.demand_packets},
                      {"terminating", w.terminating}};
  return j;
}

WorkloadSpec workload_from_json(const nlohmann::json& j, WorkloadSpec w) {
  if (j.contains("kind")) w.kind = parse_app_kind(j.at("kind").get<std::string>());
  if (j.contains("size_ranks")) w.size_ranks = j.at("size_ranks").get<int>();
  if (j.contains("message_packets")) w.message_packets = j.at("message_packets").get<int>();
  if (j.contains("rounds")) w.rounds = j.at("rounds").get<int>();
  if (j.contains("seed")) w.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("demand_packets")) w.demand_packets = j.at("demand_packets").get<std::int64_t>();
  if (j.contains("terminating")) w.terminating = j.at("terminating").get<bool>();
  if (w.size_ranks < 1) throw WorkloadError("size_ranks must be positive");
  return w;
}

KernelSchedule make_schedule(const WorkloadSpec& spec) {
  const int k = spec.size_ranks;
  const int m = spec.effective_message_packets();
  switch (spec.kind) {
    case AppKind::All2All: return gen_all2all(k, m);
    case AppKind::AllReduce: return gen_allreduce(k, m);
    case AppKind::StencilVonNeumann: return gen_stencil(k, KernelKind::StencilVonNeumann, spec.rounds, m);
    case AppKind::StencilMoore: return gen_stencil(k, KernelKind::StencilMoore, spec.rounds, m);
    case AppKind::RandomInvolution: return gen_random_involution(k, m, spec.seed);
    default: throw WorkloadError(std::string(to_string(spec.kind)) + " is not a kernel");
  }
}

std::shared_ptr<TrafficSource> make_source(const WorkloadSpec& spec, std::vector<EndpointId> endpoints,
                                           int packet_size, int group_size) {
  if (static_cast<int>(endpoints.size()) != spec.size_ranks) {
    throw WorkloadError("workload expects " + std::to_string(spec.size_ranks) + " ranks, partition has " +
                        std::to_string(endpoints.size()));
  }
  if (is_static(spec.kind)) {
    StaticPattern pat;
    pat.kind = spec.kind == AppKind::Uniform             ? StaticKind::Uniform
               : spec.kind == AppKind::RandomPermutation ? StaticKind::RandomPermutation
                                                         : StaticKind::RandomSwitchPermutation;
    pat.seed = spec.seed;
    pat.demand_packets = spec.demand_packets;
    pat.terminating = spec.terminating;
    pat.group_size = group_size;
    return std::make_shared<StaticTrafficSource>(pat, std::move(endpoints), packet_size);
  }
  return std::make_shared<KernelTrafficSource>(make_schedule(spec), std::move(endpoints));
}

}  // namespace hxalloc
