#include "doctest.h"

#include <map>
#include <set>

#include "hxalloc/workloads.hpp"

using namespace hxalloc;

namespace {

std::vector<EndpointId> first_endpoints(int k) {
  std::vector<EndpointId> v;
  for (int i = 0; i < k; ++i) v.push_back(i);
  return v;
}

// peers of `rank` in step `step`, sends only
std::vector<int> send_peers(const KernelSchedule& s, int rank, int step) {
  std::vector<int> out;
  for (const auto& x : s.steps[static_cast<std::size_t>(rank)][static_cast<std::size_t>(step)].sends) out.push_back(x.peer);
  return out;
}

// Total flits sent and received per rank must match for exchange kernels.
void check_exchange_balance(const KernelSchedule& s) {
  for (int r = 0; r < s.ranks; ++r) {
    std::int64_t out = 0, in = 0;
    for (const auto& st : s.steps[static_cast<std::size_t>(r)]) {
      for (const auto& x : st.sends) out += x.packets;
      for (const auto& x : st.receives) in += x.packets;
    }
    REQUIRE(out == in);
  }
}

}  // namespace

TEST_CASE("all-to-all schedule") {
  auto s = gen_all2all(2);
  REQUIRE(s.step_count() == 1);
  CHECK(send_peers(s, 0, 0) == std::vector<int>{1});
  CHECK(send_peers(s, 1, 0) == std::vector<int>{0});

  s = gen_all2all(4);
  // step index 1 is the second step (i = 2)
  CHECK(send_peers(s, 1, 1) == std::vector<int>{3});
  CHECK(s.steps[1][1].receives.at(0).peer == 3);

  for (int k : {2, 3, 7, 64}) {
    s = gen_all2all(k);
    CHECK(s.step_count() == k - 1);
    CHECK(s.message_count() == static_cast<std::int64_t>(k) * (k - 1));
    CHECK(s.is_symmetric());
    CHECK(s.rule == StepRule::SendsInjected);
    for (int r = 0; r < k; ++r) {
      std::set<int> peers;
      for (int i = 0; i < k - 1; ++i) peers.insert(send_peers(s, r, i).at(0));
      REQUIRE(peers.size() == static_cast<std::size_t>(k - 1));
      REQUIRE(peers.count(r) == 0);
    }
  }
  CHECK_THROWS_AS(gen_all2all(1), WorkloadError);
}

TEST_CASE("Rabenseifner all-reduce schedule") {
  auto s = gen_allreduce(2);
  REQUIRE(s.step_count() == 2);
  for (int r = 0; r < 2; ++r) {
    CHECK(send_peers(s, r, 0) == std::vector<int>{r ^ 1});
    CHECK(send_peers(s, r, 1) == std::vector<int>{r ^ 1});
  }

  s = gen_allreduce(8, 8);
  REQUIRE(s.step_count() == 6);
  const int masks[] = {1, 2, 4, 4, 2, 1};
  const int sizes[] = {4, 2, 1, 1, 2, 4};
  for (int r = 0; r < 8; ++r) {
    for (int j = 0; j < 6; ++j) {
      REQUIRE(send_peers(s, r, j) == std::vector<int>{r ^ masks[j]});
      REQUIRE(s.steps[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)].sends[0].packets == sizes[j]);
    }
  }

  s = gen_allreduce(64);
  CHECK(s.step_count() == 12);
  CHECK(s.is_symmetric());
  check_exchange_balance(s);
  CHECK_THROWS_AS(gen_allreduce(12), WorkloadError);
  CHECK_THROWS_AS(gen_allreduce(1), WorkloadError);
}

TEST_CASE("stencil schedules") {
  auto s = gen_stencil(4, KernelKind::StencilVonNeumann, 1);
  for (int r = 0; r < 4; ++r) CHECK(s.steps[static_cast<std::size_t>(r)][0].sends.size() == 2);

  s = gen_stencil(64, KernelKind::StencilMoore, 4);
  CHECK(s.step_count() == 4);
  for (int r = 0; r < 64; ++r) REQUIRE(s.steps[static_cast<std::size_t>(r)][2].sends.size() == 8);
  CHECK(s.is_symmetric());
  check_exchange_balance(s);

  s = gen_stencil(64, KernelKind::StencilVonNeumann, 4);
  auto peers = send_peers(s, 0, 0);
  std::set<int> got(peers.begin(), peers.end());
  // (row, col): (0,1), (0,7), (1,0), (7,0)
  CHECK(got == std::set<int>{1, 7, 8, 56});
  CHECK(s.is_symmetric());

  CHECK_THROWS_AS(gen_stencil(12, KernelKind::StencilMoore), WorkloadError);
  CHECK_THROWS_AS(gen_stencil(16, KernelKind::All2All), WorkloadError);
}

TEST_CASE("random involution") {
  auto s = gen_random_involution(2, 1, std::uint64_t{5});
  CHECK(send_peers(s, 0, 0) == std::vector<int>{1});
  CHECK(send_peers(s, 1, 0) == std::vector<int>{0});

  for (int k = 2; k <= 512; k += 2) {
    s = gen_random_involution(k, 1, static_cast<std::uint64_t>(k));
    for (int r = 0; r < k; ++r) {
      const int p = send_peers(s, r, 0).at(0);
      REQUIRE(p != r);
      REQUIRE(send_peers(s, p, 0).at(0) == r);
    }
  }
  const auto a = gen_random_involution(64, 1, std::uint64_t{3});
  const auto b = gen_random_involution(64, 1, std::uint64_t{3});
  const auto c = gen_random_involution(64, 1, std::uint64_t{4});
  bool same = true, differs = false;
  for (int r = 0; r < 64; ++r) {
    same = same && send_peers(a, r, 0) == send_peers(b, r, 0);
    differs = differs || send_peers(a, r, 0) != send_peers(c, r, 0);
  }
  CHECK(same);
  CHECK(differs);
  CHECK_THROWS_AS(gen_random_involution(7, 1, std::uint64_t{1}), WorkloadError);
}

TEST_CASE("static permutations") {
  StaticPattern rp{StaticKind::RandomPermutation, 9, 10, true, 8};
  for (int k : {1, 5, 64, 512}) {
    auto d = static_destinations(rp, k);
    REQUIRE(std::set<int>(d.begin(), d.end()).size() == static_cast<std::size_t>(k));
  }
  CHECK(static_destinations(rp, 64) == static_destinations(rp, 64));

  StaticPattern rsp{StaticKind::RandomSwitchPermutation, 3, 10, true, 8};
  auto d = static_destinations(rsp, 64);
  CHECK(std::set<int>(d.begin(), d.end()).size() == 64);
  for (int r = 0; r < 64; ++r) {
    REQUIRE(d[static_cast<std::size_t>(r)] % 8 == r % 8);
    REQUIRE(d[static_cast<std::size_t>(r)] / 8 == d[static_cast<std::size_t>(r - r % 8)] / 8);
  }
  CHECK_THROWS_AS(static_destinations(rsp, 60), WorkloadError);
  CHECK_THROWS_AS(static_destinations(StaticPattern{}, 8), WorkloadError);
}

TEST_CASE("switch permutation under a switch-local mapping targets one remote switch per switch") {
  // ranks 8g..8g+7 live on switch g (Row allocation is linear and local)
  const auto shape = NetworkShape::hyperx2d(8);
  const Partition part = build_partition(AllocationKind::Row, 0, shape, 64);
  StaticPattern rsp{StaticKind::RandomSwitchPermutation, 21, 4, true, 8};
  StaticTrafficSource src(rsp, part.placement, 16);
  std::map<SwitchId, std::set<SwitchId>> targets;
  for (Cycle t = 0; t < 64; t += 16) {
    for (EndpointId e : part.placement) {
      auto req = src.pull(e, t);
      REQUIRE(req);
      targets[endpoint_switch(shape, e)].insert(endpoint_switch(shape, req->dest));
    }
  }
  for (const auto& [sw, dst] : targets) CHECK(dst.size() == 1);
}

TEST_CASE("static source pacing and demand") {
  StaticPattern un{StaticKind::Uniform, 1, 3, true, 8};
  StaticTrafficSource one(un, {42}, 16);
  for (int i = 0; i < 3; ++i) {
    CHECK_FALSE(one.pull(42, 16 * i - 1).has_value());
    auto r = one.pull(42, 16 * i);
    REQUIRE(r);
    CHECK(r->dest == 42);  // a one-endpoint partition only talks to itself
    CHECK(r->birth_cycle == 16 * i);
  }
  CHECK_FALSE(one.pull(42, 1000).has_value());
  CHECK_FALSE(one.pull(7, 1000).has_value());

  StaticPattern forever = un;
  forever.terminating = false;
  StaticTrafficSource bg(forever, first_endpoints(4), 16);
  CHECK_FALSE(bg.terminating());
  for (int i = 0; i < 100; ++i) REQUIRE(bg.pull(0, 16 * i).has_value());
}

TEST_CASE("kernels run to completion in the simulator") {
  const auto shape = NetworkShape::hyperx2d(4);
  SimConfig cfg;
  cfg.shape = shape;
  cfg.check_invariants_every = 25;
  for (AppKind app : kKernelApps) {
    WorkloadSpec w;
    w.kind = app;
    w.size_ranks = 16;
    w.rounds = 2;
    Simulator sim(cfg);
    const Partition part = build_partition(AllocationKind::Diagonal, 0, shape, 16);
    auto src = make_source(w, part.placement, cfg.packet_size, shape.n);
    sim.add_source(src, 0);
    const auto m = sim.run_until_quiescent();
    INFO(to_string(app));
    CHECK(src->done());
    CHECK(m.delivered_packets == make_schedule(w).packet_count());
    CHECK(m.makespan > 0);
    auto* k = dynamic_cast<KernelTrafficSource*>(src.get());
    REQUIRE(k != nullptr);
    Cycle last = 0;
    for (Cycle f : k->rank_finish()) {
      CHECK(f >= 0);
      last = std::max(last, f);
    }
    CHECK(last == m.makespan);
  }
}

TEST_CASE("all-reduce steps wait for the partner") {
  // rank 0's second step cannot start before its first exchange completes,
  // so two steps of one packet each take longer than one packet's latency twice
  const auto shape = NetworkShape::hyperx2d(4);
  SimConfig cfg;
  cfg.shape = shape;
  Simulator sim(cfg);
  WorkloadSpec w{AppKind::AllReduce, 2, 2, 4, 1, 0, true};
  // ranks on switches 0 and 1: 2 steps, one packet each, one link apart
  sim.add_source(make_source(w, {0, 4}, cfg.packet_size, shape.n), 0);
  const auto m = sim.run_until_quiescent();
  CHECK(m.makespan == 2 * 20);
}

TEST_CASE("workload spec json") {
  WorkloadSpec w;
  w.kind = AppKind::StencilMoore;
  w.size_ranks = 128;
  w.rounds = 3;
  const WorkloadSpec v = workload_from_json(to_json(w));
  CHECK(v.kind == AppKind::StencilMoore);
  CHECK(v.size_ranks == 128);
  CHECK(v.rounds == 3);
  CHECK(v.effective_message_packets() == 1);
  CHECK(WorkloadSpec{AppKind::AllReduce}.effective_message_packets() == 8);
  CHECK(parse_app_kind("rsp") == AppKind::RandomSwitchPermutation);
  CHECK_THROWS_AS(parse_app_kind("fft"), WorkloadError);
  CHECK_THROWS_AS(make_source(w, first_endpoints(64), 16, 8), WorkloadError);
}
