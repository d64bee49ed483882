#include "hxalloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace hxalloc {

namespace {

// Independent per-purpose seeds derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), 0xa110cu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint64_t kBackgroundPurpose = 1u << 20;

int blocks_per_replica(const ScenarioConfig& c) {
  const int block = c.sim.shape.n * c.sim.shape.n;
  return c.workload.size_ranks / block;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string_view to_string(Framework f) { return f == Framework::Scaling ? "scaling" : "interference"; }

Framework parse_framework(std::string_view name) {
  if (name == "scaling") return Framework::Scaling;
  if (name == "interference") return Framework::Interference;
  throw ScenarioError("unknown framework '" + std::string(name) + "'");
}

int ScenarioConfig::max_replicas() const {
  return sim.shape.endpoint_count() / std::max(1, workload.size_ranks);
}

void ScenarioConfig::validate() const {
  sim.shape.validate();
  if (sim.shape.q != 2 || sim.shape.concentration != sim.shape.n) {
    throw ScenarioError("allocation functions need a 2D HyperX with concentration n");
  }
  const int block = sim.shape.n * sim.shape.n;
  if (workload.size_ranks < block || workload.size_ranks % block != 0) {
    throw ScenarioError("application size must be a multiple of n^2 = " + std::to_string(block));
  }
  if (allocations.empty()) throw ScenarioError("no allocation kind selected");
  if (seeds.empty()) throw ScenarioError("no seeds");
  if (framework == Framework::Scaling) {
    if (replicas_min < 1 || replicas_max < replicas_min) throw ScenarioError("empty replica range");
    if (replicas_max > max_replicas()) {
      throw ScenarioError("capacity exceeded: " + std::to_string(replicas_max) + " replicas of " +
                          std::to_string(workload.size_ranks) + " ranks need more than " +
                          std::to_string(sim.shape.endpoint_count()) + " endpoints");
    }
  } else if (workload.size_ranks >= sim.shape.endpoint_count()) {
    throw ScenarioError("interference target must leave endpoints for the background");
  }
  if (!is_static(background)) throw ScenarioError("background traffic must be a static pattern");
}

nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.allocations) kinds.push_back(to_string(k));
  nlohmann::json sim = to_json(c.sim);
  sim.erase("seed");
  return {{"framework", to_string(c.framework)},
          {"allocations", kinds},
          {"workload", to_json(c.workload)},
          {"replicas", {{"min", c.replicas_min}, {"max", c.replicas_max}}},
          {"fabric_partitioning", c.fabric_partitioning},
          {"background", {{"enabled", c.background_enabled}, {"kind", to_string(c.background)}}},
          {"sim", sim},
          {"seeds", c.seeds}};
}

std::pair<int, int> parse_range(std::string_view text) {
  auto to_int = [&](std::string_view s) {
    try {
      std::size_t used = 0;
      int v = std::stoi(std::string(s), &used);
      if (used != s.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ScenarioError("bad range '" + std::string(text) + "'");
    }
  };
  auto dots = text.find("..");
  if (dots == std::string_view::npos) {
    int v = to_int(text);
    return {v, v};
  }
  return {to_int(text.substr(0, dots)), to_int(text.substr(dots + 2))};
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  if (j.contains("framework")) c.framework = parse_framework(j.at("framework").get<std::string>());
  for (const char* key : {"allocation", "allocations"}) {
    if (!j.contains(key)) continue;
    const auto& a = j.at(key);
    c.allocations.clear();
    if (a.is_string() && a.get<std::string>() == "all") {
      c.allocations.assign(std::begin(kAllAllocationKinds), std::end(kAllAllocationKinds));
    } else if (a.is_string()) {
      c.allocations.push_back(parse_allocation_kind(a.get<std::string>()));
    } else {
      for (const auto& k : a) c.allocations.push_back(parse_allocation_kind(k.get<std::string>()));
    }
  }
  if (j.contains("workload")) c.workload = workload_from_json(j.at("workload"));
  if (j.contains("replicas")) {
    const auto& r = j.at("replicas");
    if (r.is_number_integer()) {
      c.replicas_min = c.replicas_max = r.get<int>();
    } else if (r.is_string()) {
      std::tie(c.replicas_min, c.replicas_max) = parse_range(r.get<std::string>());
    } else {
      c.replicas_min = r.value("min", 1);
      c.replicas_max = r.value("max", c.replicas_min);
    }
  }
  if (j.contains("fabric_partitioning")) c.fabric_partitioning = j.at("fabric_partitioning").get<bool>();
  if (j.contains("background")) {
    const auto& b = j.at("background");
    if (b.is_string()) {
      c.background = parse_app_kind(b.get<std::string>());
    } else {
      if (b.contains("enabled")) c.background_enabled = b.at("enabled").get<bool>();
      if (b.contains("kind")) c.background = parse_app_kind(b.at("kind").get<std::string>());
    }
  }
  if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim"));
  if (j.contains("routing")) c.sim = sim_config_from_json({{"routing", j.at("routing")}}, c.sim);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    c.seeds.clear();
    if (s.is_number_integer()) {
      for (int i = 1; i <= s.get<int>(); ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
    } else {
      for (const auto& v : s) c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  c.validate();
  return c;
}

VcPlan assign_vcs(bool fabric_partitioning, int partitions, bool background, int vcs_per_set, int max_vcs) {
  if (partitions < 1) throw ScenarioError("at least one partition is needed");
  if (vcs_per_set < 1) throw ScenarioError("a VC set needs at least one VC");
  VcPlan plan;
  plan.vcs_per_set = vcs_per_set;
  if (!fabric_partitioning) {
    plan.partition_set.assign(static_cast<std::size_t>(partitions), 0);
    plan.background_set = background ? 0 : -1;
    plan.vc_sets = 1;
  } else {
    for (int i = 0; i < partitions; ++i) plan.partition_set.push_back(i);
    plan.background_set = background ? partitions : -1;
    plan.vc_sets = partitions + (background ? 1 : 0);
  }
  if (plan.total_vcs() > max_vcs) {
    throw ScenarioError("VC budget exceeded: " + std::to_string(plan.total_vcs()) + " VCs per port, limit " +
                        std::to_string(max_vcs));
  }
  return plan;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j = {{"framework", to_string(r.framework)},
                      {"kind", to_string(r.kind)},
                      {"app", to_string(r.app)},
                      {"ranks", r.ranks},
                      {"replicas", r.replicas},
                      {"seed", r.seed},
                      {"makespan_cycles", r.makespan},
                      {"partition_makespan", r.partition_makespan},
                      {"metrics", to_json(r.metrics)},
                      {"config", r.config}};
  if (r.isolated) j["isolated_cycles"] = *r.isolated;
  if (r.extra) j["extra_cycles"] = *r.extra;
  return j;
}

RunRecord run_scaling_point(const ScenarioConfig& config, AllocationKind kind, int replicas, std::uint64_t seed) {
  config.validate();
  if (replicas < 1 || replicas > config.max_replicas()) throw ScenarioError("capacity exceeded");
  const VcPlan plan = assign_vcs(config.fabric_partitioning, replicas, false, config.sim.vcs_per_partition);
  SimConfig sim = config.sim;
  sim.seed = seed;
  sim.partition_count_for_vcs = plan.vc_sets;
  Simulator simulator(sim);
  const int width = blocks_per_replica(config);
  const std::optional<std::uint64_t> alloc_seed =
      is_random(kind) ? std::optional<std::uint64_t>(seed) : std::nullopt;
  for (int i = 0; i < replicas; ++i) {
    Partition part = build_partition(kind, i * width, sim.shape, config.workload.size_ranks, alloc_seed);
    WorkloadSpec w = config.workload;
    w.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    simulator.add_source(make_source(w, part.placement, sim.packet_size, sim.shape.n),
                         plan.partition_set[static_cast<std::size_t>(i)]);
  }
  RunRecord rec;
  rec.framework = Framework::Scaling;
  rec.kind = kind;
  rec.app = config.workload.kind;
  rec.ranks = config.workload.size_ranks;
  rec.replicas = replicas;
  rec.seed = seed;
  rec.metrics = simulator.run_until_quiescent();
  rec.makespan = rec.metrics.makespan;
  rec.partition_makespan = rec.metrics.source_completion;
  rec.config = to_json(config);
  return rec;
}

RunRecord run_interference_point(const ScenarioConfig& config, AllocationKind kind, std::uint64_t seed) {
  config.validate();
  const NetworkShape& shape = config.sim.shape;
  const std::optional<std::uint64_t> alloc_seed =
      is_random(kind) ? std::optional<std::uint64_t>(seed) : std::nullopt;
  const Partition target = build_partition(kind, 0, shape, config.workload.size_ranks, alloc_seed);
  WorkloadSpec w = config.workload;
  w.seed = derive_seed(seed, 0);

  std::vector<bool> used(static_cast<std::size_t>(shape.endpoint_count()), false);
  for (EndpointId e : target.placement) used[static_cast<std::size_t>(e)] = true;
  std::vector<EndpointId> rest;
  for (EndpointId e = 0; e < shape.endpoint_count(); ++e) {
    if (!used[static_cast<std::size_t>(e)]) rest.push_back(e);
  }

  auto run = [&](bool with_background) {
    const bool bg = with_background && !rest.empty();
    const VcPlan plan = assign_vcs(config.fabric_partitioning, 1, bg, config.sim.vcs_per_partition);
    SimConfig sim = config.sim;
    sim.seed = seed;
    sim.partition_count_for_vcs = plan.vc_sets;
    Simulator simulator(sim);
    simulator.add_source(make_source(w, target.placement, sim.packet_size, shape.n), plan.partition_set[0]);
    if (bg) {
      StaticPattern pat;
      pat.kind = config.background == AppKind::Uniform             ? StaticKind::Uniform
                 : config.background == AppKind::RandomPermutation ? StaticKind::RandomPermutation
                                                                   : StaticKind::RandomSwitchPermutation;
      pat.seed = derive_seed(seed, kBackgroundPurpose);
      pat.terminating = false;
      pat.group_size = shape.n;
      simulator.add_source(std::make_shared<StaticTrafficSource>(pat, rest, sim.packet_size), plan.background_set);
    }
    return simulator.run_until_quiescent();
  };

  RunRecord rec;
  rec.framework = Framework::Interference;
  rec.kind = kind;
  rec.app = config.workload.kind;
  rec.ranks = config.workload.size_ranks;
  rec.replicas = 1;
  rec.seed = seed;
  const SimMetrics isolated = run(false);
  if (config.background_enabled) {
    rec.metrics = run(true);
  } else {
    rec.metrics = isolated;
  }
  rec.isolated = isolated.source_completion.at(0);
  rec.makespan = rec.metrics.source_completion.at(0);
  rec.extra = rec.makespan - *rec.isolated;
  rec.partition_makespan = {rec.makespan};
  rec.config = to_json(config);
  return rec;
}

std::vector<RunRecord> run_parallel(const std::vector<std::function<RunRecord()>>& jobs, int workers) {
  std::vector<RunRecord> out(jobs.size());
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(1, jobs.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i] = jobs[i]();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<RunRecord> run_scaling(const ScenarioConfig& config) {
  config.validate();
  std::vector<std::function<RunRecord()>> jobs;
  for (AllocationKind kind : config.allocations) {
    for (int r = config.replicas_min; r <= config.replicas_max; ++r) {
      for (std::uint64_t seed : config.seeds) {
        jobs.emplace_back([&config, kind, r, seed] { return run_scaling_point(config, kind, r, seed); });
      }
    }
  }
  return run_parallel(jobs, config.workers);
}

std::vector<RunRecord> run_interference(const ScenarioConfig& config) {
  config.validate();
  std::vector<std::function<RunRecord()>> jobs;
  for (AllocationKind kind : config.allocations) {
    for (std::uint64_t seed : config.seeds) {
      jobs.emplace_back([&config, kind, seed] { return run_interference_point(config, kind, seed); });
    }
  }
  return run_parallel(jobs, config.workers);
}

std::vector<RunRecord> run_scenario(const ScenarioConfig& config) {
  return config.framework == Framework::Scaling ? run_scaling(config) : run_interference(config);
}

void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records) {
  os << "kind,app,ranks,replicas,seed,makespan_cycles,extra_cycles,normalized\n";
  for (const auto& r : records) {
    os << to_string(r.kind) << ',' << to_string(r.app) << ',' << r.ranks << ',' << r.replicas << ',' << r.seed << ','
       << r.makespan << ',';
    if (r.extra) os << *r.extra;
    os << ',';
    if (r.normalized != 0.0) os << r.normalized;
    os << '\n';
  }
}

std::vector<RunRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ScenarioError("empty records file");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"kind", "app", "ranks", "replicas", "seed", "makespan_cycles", "extra_cycles"}) {
    if (!col.count(need)) throw ScenarioError(std::string("records file lacks column ") + need);
  }
  std::vector<RunRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < header.size() - 1) throw ScenarioError("short row at line " + std::to_string(lineno));
    auto at = [&](const char* name) -> std::string {
      std::size_t i = col.at(name);
      return i < f.size() ? f[i] : std::string();
    };
    try {
      RunRecord r;
      r.kind = parse_allocation_kind(at("kind"));
      r.app = parse_app_kind(at("app"));
      r.ranks = std::stoi(at("ranks"));
      r.replicas = std::stoi(at("replicas"));
      r.seed = std::stoull(at("seed"));
      r.makespan = std::stoll(at("makespan_cycles"));
      const std::string extra = at("extra_cycles");
      if (!extra.empty()) {
        r.framework = Framework::Interference;
        r.extra = std::stoll(extra);
        r.isolated = r.makespan - *r.extra;
      }
      if (col.count("normalized")) {
        const std::string norm = at("normalized");
        if (!norm.empty()) r.normalized = std::stod(norm);
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ScenarioError("bad row at line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ReportRow> report_normalized(const std::vector<RunRecord>& records, AllocationKind baseline,
                                         MeanKind mean) {
  struct Acc {
    std::vector<double> metric, extra;
  };
  using Key = std::tuple<int, std::string, int, int>;  // kind, app, ranks, replicas
  std::map<Key, Acc> groups;
  for (const auto& r : records) {
    auto& g = groups[{static_cast<int>(r.kind), std::string(to_string(r.app)), r.ranks, r.replicas}];
    g.metric.push_back(static_cast<double>(r.makespan));
    g.extra.push_back(r.extra ? static_cast<double>(*r.extra) : 0.0);
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{m, sd};
  };

  std::vector<ReportRow> rows;
  std::map<std::tuple<int, int, int>, std::vector<double>> per_point;  // kind, ranks, replicas
  for (const auto& [key, acc] : groups) {
    const auto& [kind, app, ranks, replicas] = key;
    auto base = groups.find({static_cast<int>(baseline), app, ranks, replicas});
    if (base == groups.end()) {
      throw ScenarioError("missing baseline " + std::string(to_string(baseline)) + " for " + app + " at " +
                          std::to_string(ranks) + " ranks, " + std::to_string(replicas) + " replicas");
    }
    ReportRow row;
    row.kind = static_cast<AllocationKind>(kind);
    row.app = app;
    row.ranks = ranks;
    row.replicas = replicas;
    row.seeds = static_cast<int>(acc.metric.size());
    std::tie(row.metric_mean, row.metric_stddev) = stats(acc.metric);
    std::tie(row.extra_mean, row.extra_stddev) = stats(acc.extra);
    const double base_mean = stats(base->second.metric).first;
    row.normalized = row.metric_mean > 0.0 ? base_mean / row.metric_mean : 1.0;
    per_point[{kind, ranks, replicas}].push_back(row.normalized);
    rows.push_back(row);
  }
  for (const auto& [key, scores] : per_point) {
    const auto& [kind, ranks, replicas] = key;
    ReportRow row;
    row.kind = static_cast<AllocationKind>(kind);
    row.app = "all";
    row.ranks = ranks;
    row.replicas = replicas;
    row.seeds = 0;
    double agg = 0.0;
    if (mean == MeanKind::Arithmetic) {
      for (double s : scores) agg += s;
      agg /= static_cast<double>(scores.size());
    } else {
      for (double s : scores) agg += std::log(s);
      agg = std::exp(agg / static_cast<double>(scores.size()));
    }
    row.normalized = agg;
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "kind,app,ranks,replicas,seeds,makespan_mean,makespan_stddev,extra_mean,extra_stddev,normalized\n";
  for (const auto& r : rows) {
    os << to_string(r.kind) << ',' << r.app << ',' << r.ranks << ',' << r.replicas << ',' << r.seeds << ','
       << r.metric_mean << ',' << r.metric_stddev << ',' << r.extra_mean << ',' << r.extra_stddev << ','
       << r.normalized << '\n';
  }
}

}  // namespace hxalloc
