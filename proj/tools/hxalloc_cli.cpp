// hxalloc: allocation analysis, single scenarios, sweeps and reports.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hxalloc/analysis.hpp"
#include "hxalloc/harness.hpp"

using namespace hxalloc;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<AllocationKind> parse_kinds(const std::string& text) {
  if (text == "all") return {std::begin(kAllAllocationKinds), std::end(kAllAllocationKinds)};
  std::vector<AllocationKind> kinds;
  for (const auto& k : split_list(text)) kinds.push_back(parse_allocation_kind(k));
  return kinds;
}

std::vector<AppKind> parse_apps(const std::string& text) {
  if (text == "all") return {std::begin(kKernelApps), std::end(kKernelApps)};
  std::vector<AppKind> apps;
  for (const auto& a : split_list(text)) apps.push_back(parse_app_kind(a));
  return apps;
}

std::vector<std::uint64_t> seed_list(int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 1; i <= count; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  return seeds;
}

// Writes to `path`, or stdout for "" or "-".
template <typename F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write(os);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resource allocation analysis and simulation for 2D HyperX networks"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Topological properties of every allocation kind (partition 0)");
  int an_n = 8;
  std::string an_kinds = "all";
  int an_seeds = 20;
  std::string an_out;
  std::string an_format = "csv";
  analyze->add_option("--n", an_n, "HyperX side (even)")->capture_default_str();
  analyze->add_option("--kinds", an_kinds, "Comma-separated kinds or 'all'")->capture_default_str();
  analyze->add_option("--seeds", an_seeds, "Seeds for the random kinds")->capture_default_str();
  analyze->add_option("--out", an_out, "Output file (default stdout)");
  analyze->add_option("--format", an_format, "csv or text")->check(CLI::IsMember({"csv", "text"}))->capture_default_str();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a scenario described by a JSON config");
  std::string sim_config;
  std::string sim_out;
  std::string sim_trace;
  simulate->add_option("--config", sim_config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim_out, "Run records as JSON (default stdout)");
  simulate->add_option("--trace", sim_trace, "Per-cycle link utilization CSV (single-run scenarios only)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Sweep allocation kinds, applications and replica counts");
  std::string sw_framework = "scaling";
  std::string sw_kinds = "diagonal";
  std::string sw_apps = "all2all";
  int sw_ranks = 64;
  std::string sw_replicas = "1";
  int sw_seeds = 5;
  std::string sw_routing = "omniwar";
  bool sw_partitioning = false;
  std::string sw_background = "random_permutation";
  std::int64_t sw_demand = 500;
  int sw_message = 0;
  int sw_rounds = 4;
  int sw_workers = 0;
  int sw_n = 8;
  std::string sw_out;
  sweep->add_option("--framework", sw_framework, "scaling or interference")
      ->check(CLI::IsMember({"scaling", "interference"}))
      ->capture_default_str();
  sweep->add_option("--kind", sw_kinds, "Comma-separated kinds or 'all'")->capture_default_str();
  sweep->add_option("--app", sw_apps, "Comma-separated applications or 'all' (the five kernels)")->capture_default_str();
  sweep->add_option("--ranks", sw_ranks, "Ranks per application")->capture_default_str();
  sweep->add_option("--replicas", sw_replicas, "Replica count or range a..b (scaling)")->capture_default_str();
  sweep->add_option("--seeds", sw_seeds, "Number of seeds (1..N)")->capture_default_str();
  sweep->add_option("--routing", sw_routing, "omniwar or min")->check(CLI::IsMember({"omniwar", "min"}))->capture_default_str();
  sweep->add_flag("--fabric-partitioning", sw_partitioning, "Give each partition its own VC set");
  sweep->add_option("--background", sw_background, "Background pattern (interference)")->capture_default_str();
  sweep->add_option("--demand", sw_demand, "Packets per endpoint for static patterns")->capture_default_str();
  sweep->add_option("--message-packets", sw_message, "Kernel message size in packets (0 = kernel default)");
  sweep->add_option("--rounds", sw_rounds, "Stencil rounds")->capture_default_str();
  sweep->add_option("--workers", sw_workers, "Parallel simulations (0 = all cores)")->capture_default_str();
  sweep->add_option("--n", sw_n, "HyperX side")->capture_default_str();
  sweep->add_option("--out", sw_out, "Records CSV (default stdout)");

  // report
  auto* report = app.add_subcommand("report", "Normalize sweep records against a baseline kind");
  std::string rp_in;
  std::string rp_baseline = "diagonal";
  std::string rp_mean = "arithmetic";
  std::string rp_out;
  report->add_option("--in", rp_in, "Records CSV from sweep")->required()->check(CLI::ExistingFile);
  report->add_option("--baseline", rp_baseline, "Baseline allocation kind")->capture_default_str();
  report->add_option("--mean", rp_mean, "arithmetic or geometric")
      ->check(CLI::IsMember({"arithmetic", "geometric"}))
      ->capture_default_str();
  report->add_option("--out", rp_out, "Report CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      const NetworkShape shape = NetworkShape::hyperx2d(an_n);
      const auto kinds = parse_kinds(an_kinds);
      const auto seeds = seed_list(an_seeds);
      const auto rows = table1_report(shape, kinds, seeds);
      with_output(an_out, [&](std::ostream& os) {
        if (an_format == "text") {
          write_table1_text(os, rows);
        } else {
          write_table1_csv(os, rows);
        }
      });
    } else if (*simulate) {
      std::ifstream is(sim_config);
      const nlohmann::json j = nlohmann::json::parse(is);
      ScenarioConfig config = scenario_from_json(j);
      std::ofstream trace;
      if (!sim_trace.empty()) {
        const std::size_t runs = config.allocations.size() * config.seeds.size() *
                                 (config.framework == Framework::Scaling
                                      ? static_cast<std::size_t>(config.replicas_max - config.replicas_min + 1)
                                      : 2u);
        if (config.framework != Framework::Scaling || runs != 1) {
          throw ScenarioError("--trace needs a scaling scenario with one kind, one seed and one replica count");
        }
        trace.open(sim_trace);
        if (!trace) throw std::runtime_error("cannot open " + sim_trace);
        trace << "cycle,link,busy\n";
        config.sim.utilization_trace = &trace;
        config.workers = 1;
      }
      const auto records = run_scenario(config);
      nlohmann::json out = {{"scenario", to_json(config)}, {"runs", nlohmann::json::array()}};
      for (const auto& r : records) out["runs"].push_back(to_json(r));
      with_output(sim_out, [&](std::ostream& os) { os << out.dump(2) << '\n'; });
    } else if (*sweep) {
      std::vector<RunRecord> all;
      for (AppKind a : parse_apps(sw_apps)) {
        ScenarioConfig c;
        c.framework = parse_framework(sw_framework);
        c.allocations = parse_kinds(sw_kinds);
        c.workload.kind = a;
        c.workload.size_ranks = sw_ranks;
        if (sw_message > 0) c.workload.message_packets = sw_message;
        c.workload.rounds = sw_rounds;
        c.workload.demand_packets = sw_demand;
        std::tie(c.replicas_min, c.replicas_max) = parse_range(sw_replicas);
        c.fabric_partitioning = sw_partitioning;
        c.background = parse_app_kind(sw_background);
        c.sim.shape = NetworkShape::hyperx2d(sw_n);
        c.sim.routing = sw_routing == "min" ? RoutingPolicy::min_adaptive() : RoutingPolicy::omni_war(2);
        c.seeds = seed_list(sw_seeds);
        c.workers = sw_workers;
        auto recs = run_scenario(c);
        all.insert(all.end(), recs.begin(), recs.end());
      }
      with_output(sw_out, [&](std::ostream& os) { write_records_csv(os, all); });
    } else if (*report) {
      std::ifstream is(rp_in);
      const auto records = read_records_csv(is);
      const auto rows = report_normalized(records, parse_allocation_kind(rp_baseline),
                                          rp_mean == "geometric" ? MeanKind::Geometric : MeanKind::Arithmetic);
      with_output(rp_out, [&](std::ostream& os) { write_report_csv(os, rows); });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
