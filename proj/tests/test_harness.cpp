#include "doctest.h"

#include <atomic>
#include <set>
#include <sstream>

#include "hxalloc/harness.hpp"

using namespace hxalloc;

namespace {

// Small scaling scenario on the default 8x8 machine: cheap uniform traffic.
ScenarioConfig small_scaling(AllocationKind kind = AllocationKind::Diagonal) {
  ScenarioConfig c;
  c.allocations = {kind};
  c.workload.kind = AppKind::Uniform;
  c.workload.size_ranks = 64;
  c.workload.demand_packets = 4;
  c.seeds = {1};
  c.workers = 1;
  return c;
}

RunRecord record(AllocationKind kind, const std::string& app, std::uint64_t seed, Cycle makespan) {
  RunRecord r;
  r.kind = kind;
  r.app = parse_app_kind(app);
  r.ranks = 64;
  r.replicas = 1;
  r.seed = seed;
  r.makespan = makespan;
  return r;
}

}  // namespace

TEST_CASE("VC assignment") {
  auto plan = assign_vcs(true, 8);
  CHECK(plan.total_vcs() == 32);
  CHECK(plan.partition_set == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(plan.background_set == -1);

  plan = assign_vcs(false, 8);
  CHECK(plan.total_vcs() == 4);
  for (int s : plan.partition_set) CHECK(s == 0);

  const auto one_on = assign_vcs(true, 1);
  const auto one_off = assign_vcs(false, 1);
  CHECK(one_on.total_vcs() == one_off.total_vcs());
  CHECK(one_on.partition_set == one_off.partition_set);

  plan = assign_vcs(true, 1, true);
  CHECK(plan.vc_sets == 2);
  CHECK(plan.background_set != plan.partition_set[0]);
  CHECK(plan.vcs_of(1) == std::pair{4, 8});

  plan = assign_vcs(false, 1, true);
  CHECK(plan.total_vcs() == 4);
  CHECK(plan.background_set == 0);

  CHECK_THROWS_AS(assign_vcs(true, 17), ScenarioError);
  CHECK_THROWS_AS(assign_vcs(true, 0), ScenarioError);
}

TEST_CASE("scaling replicas occupy consecutive blocks") {
  auto c = small_scaling(AllocationKind::Row);
  const auto one = run_scaling_point(c, AllocationKind::Row, 1, 1);
  CHECK(one.metrics.delivered_packets == 64 * 4);
  CHECK(one.metrics.source_completion.size() == 1);

  const auto eight = run_scaling_point(c, AllocationKind::Row, 8, 1);
  CHECK(eight.metrics.delivered_packets == 512 * 4);
  REQUIRE(eight.partition_makespan.size() == 8);
  Cycle worst = 0;
  for (Cycle m : eight.partition_makespan) worst = std::max(worst, m);
  CHECK(eight.makespan == worst);

  CHECK(c.max_replicas() == 8);
  CHECK_THROWS_AS(run_scaling_point(c, AllocationKind::Row, 9, 1), ScenarioError);
  c.workload.size_ranks = 128;
  CHECK(c.max_replicas() == 4);
  CHECK_THROWS_AS(run_scaling_point(c, AllocationKind::Row, 5, 1), ScenarioError);
}

TEST_CASE("eight full-spread replicas cover every endpoint exactly once") {
  // disjointness is enforced by the simulator's endpoint claim check
  auto c = small_scaling(AllocationKind::FullSpread);
  c.workload.demand_packets = 1;
  c.fabric_partitioning = true;
  const auto r = run_scaling_point(c, AllocationKind::FullSpread, 8, 2);
  CHECK(r.metrics.delivered_packets == 512);
  CHECK(r.metrics.vc_set_violations == 0);
}

TEST_CASE("interference without background adds nothing") {
  auto c = small_scaling();
  c.framework = Framework::Interference;
  c.workload.kind = AppKind::AllReduce;
  c.background_enabled = false;
  const auto r = run_interference_point(c, AllocationKind::Diagonal, 3);
  REQUIRE(r.extra);
  CHECK(*r.extra == 0);
  CHECK(r.makespan == *r.isolated);
}

TEST_CASE("background traffic can only slow the target down on average") {
  auto c = small_scaling();
  c.framework = Framework::Interference;
  c.workload.kind = AppKind::All2All;
  c.workload.message_packets = 1;
  c.seeds = {1, 2};
  const auto recs = run_interference(c);
  REQUIRE(recs.size() == 2);
  double extra = 0;
  for (const auto& r : recs) {
    CHECK(r.isolated.value() > 0);
    extra += static_cast<double>(r.extra.value());
  }
  CHECK(extra > 0);
}

TEST_CASE("runs are deterministic") {
  auto c = small_scaling(AllocationKind::RandomEndpoint);
  const auto a = run_scaling_point(c, AllocationKind::RandomEndpoint, 2, 7);
  const auto b = run_scaling_point(c, AllocationKind::RandomEndpoint, 2, 7);
  CHECK(a.makespan == b.makespan);
  CHECK(to_json(a.metrics) == to_json(b.metrics));

  c.allocations = {AllocationKind::Diagonal, AllocationKind::Row};
  c.replicas_max = 2;
  c.seeds = {1, 2};
  c.workers = 1;
  const auto serial = run_scenario(c);
  c.workers = 3;
  const auto threaded = run_scenario(c);
  REQUIRE(serial.size() == 8);
  REQUIRE(threaded.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].kind == threaded[i].kind);
    CHECK(serial[i].replicas == threaded[i].replicas);
    CHECK(serial[i].makespan == threaded[i].makespan);
  }
}

TEST_CASE("run_parallel keeps job order") {
  std::vector<std::function<RunRecord()>> jobs;
  std::atomic<int> calls{0};
  for (int i = 0; i < 50; ++i) {
    jobs.emplace_back([i, &calls] {
      ++calls;
      RunRecord r;
      r.makespan = i;
      return r;
    });
  }
  const auto out = run_parallel(jobs, 4);
  CHECK(calls == 50);
  for (int i = 0; i < 50; ++i) REQUIRE(out[static_cast<std::size_t>(i)].makespan == i);
  CHECK(run_parallel({}, 2).empty());
}

TEST_CASE("normalized report") {
  std::vector<RunRecord> recs;
  for (std::uint64_t s : {1, 2}) {
    recs.push_back(record(AllocationKind::Diagonal, "all2all", s, 100));
    recs.push_back(record(AllocationKind::Row, "all2all", s, s == 1 ? 150 : 250));
    recs.push_back(record(AllocationKind::Diagonal, "allreduce", s, 80));
    recs.push_back(record(AllocationKind::Row, "allreduce", s, 40));
  }
  const auto rows = report_normalized(recs);
  auto find = [&](AllocationKind k, const std::string& app) {
    for (const auto& r : rows) {
      if (r.kind == k && r.app == app) return r;
    }
    FAIL("missing row");
    return ReportRow{};
  };
  CHECK(find(AllocationKind::Diagonal, "all2all").normalized == doctest::Approx(1.0));
  CHECK(find(AllocationKind::Diagonal, "all").normalized == doctest::Approx(1.0));
  const auto row = find(AllocationKind::Row, "all2all");
  CHECK(row.metric_mean == doctest::Approx(200));
  CHECK(row.metric_stddev == doctest::Approx(std::sqrt(5000.0)));
  CHECK(row.seeds == 2);
  CHECK(row.normalized == doctest::Approx(0.5));
  CHECK(find(AllocationKind::Row, "allreduce").normalized == doctest::Approx(2.0));
  CHECK(find(AllocationKind::Row, "all").normalized == doctest::Approx(1.25));

  const auto geo = report_normalized(recs, AllocationKind::Diagonal, MeanKind::Geometric);
  for (const auto& r : geo) {
    if (r.kind == AllocationKind::Row && r.app == "all") CHECK(r.normalized == doctest::Approx(1.0));
  }

  // a kind against itself is 1 everywhere
  for (const auto& r : report_normalized(recs, AllocationKind::Row)) {
    if (r.kind == AllocationKind::Row) CHECK(r.normalized == doctest::Approx(1.0));
  }

  recs.push_back(record(AllocationKind::Row, "stencil_moore", 1, 10));
  CHECK_THROWS_AS(report_normalized(recs), ScenarioError);
  CHECK_THROWS_AS(report_normalized(recs, AllocationKind::LShape), ScenarioError);
}

TEST_CASE("records csv round trip") {
  std::vector<RunRecord> recs{record(AllocationKind::LShape, "stencil_vn", 3, 1234),
                              record(AllocationKind::RandomSwitch, "rp", 4, 99)};
  recs[1].framework = Framework::Interference;
  recs[1].isolated = 90;
  recs[1].extra = 9;
  recs[1].normalized = 0.75;
  std::stringstream ss;
  write_records_csv(ss, recs);
  const auto back = read_records_csv(ss);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].kind == recs[i].kind);
    CHECK(back[i].app == recs[i].app);
    CHECK(back[i].ranks == recs[i].ranks);
    CHECK(back[i].replicas == recs[i].replicas);
    CHECK(back[i].seed == recs[i].seed);
    CHECK(back[i].makespan == recs[i].makespan);
    CHECK(back[i].extra == recs[i].extra);
  }
  CHECK(back[1].normalized == doctest::Approx(0.75));

  std::stringstream bad("kind,app\nrow,uniform\n");
  CHECK_THROWS_AS(read_records_csv(bad), ScenarioError);
  std::stringstream empty;
  CHECK_THROWS_AS(read_records_csv(empty), ScenarioError);
}

TEST_CASE("scenario json") {
  const nlohmann::json j = {
      {"framework", "interference"},
      {"allocations", {"row", "diagonal"}},
      {"workload", {{"kind", "stencil_moore"}, {"size_ranks", 128}, {"rounds", 2}}},
      {"fabric_partitioning", true},
      {"seeds", 3},
      {"routing", {{"kind", "min"}}},
  };
  const ScenarioConfig c = scenario_from_json(j);
  CHECK(c.framework == Framework::Interference);
  CHECK(c.allocations == std::vector<AllocationKind>{AllocationKind::Row, AllocationKind::Diagonal});
  CHECK(c.workload.kind == AppKind::StencilMoore);
  CHECK(c.workload.size_ranks == 128);
  CHECK(c.workload.rounds == 2);
  CHECK(c.fabric_partitioning);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.sim.routing.kind == RoutingKind::MinAdaptive);

  const ScenarioConfig again = scenario_from_json(to_json(c));
  CHECK(to_json(again) == to_json(c));

  nlohmann::json r = {{"replicas", "2..4"}, {"allocation", "all"}};
  const ScenarioConfig s = scenario_from_json(r);
  CHECK(s.replicas_min == 2);
  CHECK(s.replicas_max == 4);
  CHECK(s.allocations.size() == 7);

  CHECK(parse_range("3") == std::pair{3, 3});
  CHECK_THROWS_AS(parse_range("4..x"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json({{"framework", "chaos"}}), ScenarioError);
}

TEST_CASE("scenario validation") {
  auto c = small_scaling();
  c.workload.size_ranks = 100;
  CHECK_THROWS_AS(c.validate(), ScenarioError);
  c = small_scaling();
  c.replicas_max = 9;
  CHECK_THROWS_AS(c.validate(), ScenarioError);
  c = small_scaling();
  c.framework = Framework::Interference;
  c.workload.size_ranks = 512;
  CHECK_THROWS_AS(c.validate(), ScenarioError);
  c = small_scaling();
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ScenarioError);
  c = small_scaling();
  c.sim.shape = NetworkShape{2, 8, 4};
  CHECK_THROWS_AS(c.validate(), ScenarioError);
}
