#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "mapfusion/config.hpp"
#include "mapfusion/eval.hpp"
#include "mapfusion/fusion.hpp"
#include "mapfusion/io.hpp"
#include "mapfusion/mapgraph.hpp"
#include "mapfusion/sim.hpp"

namespace {

using namespace mapfusion;

constexpr int kExitOk = 0;
constexpr int kExitDegraded = 1;
constexpr int kExitError = 2;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

config::ToolkitConfig load_config(const CommonOptions& common) {
  config::ToolkitConfig cfg;
  std::string path = common.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("MAPFUSION_CONFIG")) path = env;
  }
  if (!path.empty()) cfg.load_file(path);
  for (const auto& assignment : common.overrides) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw config::ConfigError("--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    auto strip = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(0, 1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    strip(key);
    strip(value);
    cfg.set(key, value);
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config_path,
                  "Config file (default: $MAPFUSION_CONFIG)");
  cmd->add_option("--set", common.overrides,
                  "Override one config key, e.g. --set fusion.window=200");
}

mapgraph::OsmFormat detect_format(const std::string& path, const std::string& forced) {
  if (forced == "xml") return mapgraph::OsmFormat::xml;
  if (forced == "json") return mapgraph::OsmFormat::overpass_json;
  const std::string content_head = io::read_file(path).substr(0, 64);
  for (const char c : content_head) {
    if (c == '<') return mapgraph::OsmFormat::xml;
    if (c == '{') return mapgraph::OsmFormat::overpass_json;
  }
  return mapgraph::OsmFormat::xml;
}

int cmd_map_build(const std::string& input, const std::string& output,
                  const std::string& format, const std::string& json_dump,
                  const config::ToolkitConfig& cfg) {
  const mapgraph::RawOsmExtract extract =
      mapgraph::parse_osm(io::read_file(input), detect_format(input, format));
  const mapgraph::MapGraph map = mapgraph::build_graph(extract, cfg.mapgraph);
  mapgraph::save_map_file(map, output);
  if (!json_dump.empty()) io::write_file(json_dump, mapgraph::map_debug_json(map));
  std::printf("map: %zu vertices, %zu edges, %zu waypoints",
              map.vertices().size(), map.edges().size(), map.waypoint_count());
  if (extract.dropped_ways > 0)
    std::printf(" (%u incomplete ways dropped)", extract.dropped_ways);
  if (map.dropped_degenerate() > 0)
    std::printf(" (%u degenerate ways dropped)", map.dropped_degenerate());
  std::printf("\n");
  return kExitOk;
}

int cmd_map_set_lanes(const std::string& map_path, std::uint32_t edge,
                      std::uint32_t lanes, const std::string& output) {
  mapgraph::MapGraph map = mapgraph::load_map_file(map_path);
  map.set_lane_count(edge, lanes);
  mapgraph::save_map_file(map, output.empty() ? map_path : output);
  std::printf("edge %u: %u lanes (road width %.1f m)\n", edge, lanes, 3.0 * lanes);
  return kExitOk;
}

double median_dt(const std::vector<double>& times) {
  if (times.size() < 2) return 0.0;
  std::vector<double> dts;
  dts.reserve(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) dts.push_back(times[i] - times[i - 1]);
  std::sort(dts.begin(), dts.end());
  return dts[dts.size() / 2];
}

void write_debug_csv(const std::string& path,
                     const std::vector<fusion::StepRecord>& records) {
  std::string content =
      "t,x,y,z,yaw,position_std,initialized,gps_prior,map_prior,cap_prior,degraded,"
      "match_edge,match_lateral_m,match_exceeds\n";
  char buf[400];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d,%d,%d,%d",
                  r.t, r.result.pose.x(), r.result.pose.y(), r.result.pose.z(),
                  r.result.pose.yaw(), r.result.position_std,
                  r.result.initialized ? 1 : 0, r.result.gps_prior_added ? 1 : 0,
                  r.result.map_prior_added ? 1 : 0, r.result.cap_prior_added ? 1 : 0,
                  r.result.degraded ? 1 : 0);
    content += buf;
    if (r.result.match) {
      std::snprintf(buf, sizeof(buf), ",%u,%.6f,%d\n", r.result.match->map_pose.edge_id,
                    r.result.match->lateral_m,
                    r.result.match->exceeds_road_width ? 1 : 0);
    } else {
      std::snprintf(buf, sizeof(buf), ",,,\n");
    }
    content += buf;
  }
  io::write_file(path, content);
}

void write_matches_csv(const std::string& path,
                       const std::vector<fusion::StepRecord>& records) {
  std::string content =
      "t,edge_id,index,reversed,euclidean_m,angular_deg,combined,lateral_m,"
      "road_width_m,exceeds_road_width\n";
  char buf[320];
  for (const auto& r : records) {
    if (!r.result.match) continue;
    const auto& m = *r.result.match;
    std::snprintf(buf, sizeof(buf), "%.6f,%u,%u,%d,%.6f,%.6f,%.6f,%.6f,%.2f,%d\n", r.t,
                  m.map_pose.edge_id, m.map_pose.index, m.reversed ? 1 : 0,
                  m.euclidean_m, m.angular_deg, m.combined, m.lateral_m,
                  m.road_width_m, m.exceeds_road_width ? 1 : 0);
    content += buf;
  }
  io::write_file(path, content);
}

int cmd_fuse(const std::string& map_path, const std::string& odometry_path,
             const std::string& odom_format, const std::string& gps_path,
             const std::string& output, bool no_map, bool require_gps_init,
             const std::string& debug_csv, const std::string& matches_csv,
             config::ToolkitConfig cfg) {
  if (gps_path.empty() && require_gps_init)
    throw std::runtime_error("--require-gps-init set but no --gps file given");

  const mapgraph::MapGraph map = mapgraph::load_map_file(map_path);
  if (no_map) cfg.fusion.map_priors_enabled = false;

  // Odometry: native deltas, or absolute poses converted to relative deltas.
  const std::vector<geom::TimedPose> odom_raw = io::read_trajectory(odometry_path);
  std::vector<geom::TimedPose> deltas;
  geom::Pose first_abs;
  if (odom_format == "absolute") {
    if (odom_raw.size() < 2)
      throw std::runtime_error("absolute odometry needs at least 2 poses");
    first_abs = odom_raw.front().pose;
    deltas.reserve(odom_raw.size() - 1);
    for (std::size_t i = 1; i < odom_raw.size(); ++i)
      deltas.push_back(
          {odom_raw[i].t, geom::relative(odom_raw[i - 1].pose, odom_raw[i].pose)});
  } else {
    deltas = odom_raw;
  }

  std::vector<sim::GpsFix> fixes;
  if (!gps_path.empty()) {
    for (const auto& row : io::read_gps_csv(gps_path)) {
      sim::GpsFix fix;
      fix.t = row.t;
      fix.enu = row.geodetic ? map.frame().to_enu(row.geo) : row.enu;
      fixes.push_back(fix);
    }
  }

  // Stream rates for the initializer's measurement budget, unless pinned in
  // the config file.
  {
    std::vector<double> odom_times;
    for (const auto& d : deltas) odom_times.push_back(d.t);
    const double vo_dt = median_dt(odom_times);
    if (vo_dt > 0.0) cfg.init.f_vo_hz = 1.0 / vo_dt;
    std::vector<double> gps_times;
    for (const auto& f : fixes) gps_times.push_back(f.t);
    const double gps_dt = median_dt(gps_times);
    if (gps_dt > 0.0) cfg.init.f_gps_hz = 1.0 / gps_dt;
  }

  fusion::FusionSession session(&map, cfg.fusion, cfg.init);
  if (fixes.empty()) {
    initializer::Initialization identity;
    identity.anchor_gps = first_abs.position;
    identity.yaw_offset = 0.0;
    identity.scale = 1.0;
    session.preset_initialization(identity);
  }

  // Replay both streams in timestamp order; a fix sharing an odometry
  // timestamp rides on that step.
  std::size_t gps_cursor = 0;
  const double eps = 1e-9;
  for (const auto& delta : deltas) {
    while (gps_cursor < fixes.size() && fixes[gps_cursor].t < delta.t - eps) {
      session.step(fixes[gps_cursor].t, std::nullopt, fixes[gps_cursor].enu);
      ++gps_cursor;
    }
    std::optional<Eigen::Vector3d> fix;
    if (gps_cursor < fixes.size() && std::abs(fixes[gps_cursor].t - delta.t) <= eps) {
      fix = fixes[gps_cursor].enu;
      ++gps_cursor;
    }
    session.step(delta.t, delta.pose, fix);
  }

  if (!session.initialized())
    throw std::runtime_error(
        "initialization never completed (insufficient GPS-covered distance)");

  io::write_trajectory(output, session.trajectory());
  if (!debug_csv.empty()) write_debug_csv(debug_csv, session.records());
  if (!matches_csv.empty()) write_matches_csv(matches_csv, session.records());

  std::printf("fused %zu poses, %zu map priors fired%s\n",
              session.trajectory().size(), session.map_priors_fired(),
              session.degraded() ? " (degraded)" : "");
  return session.degraded() ? kExitDegraded : kExitOk;
}

int cmd_simulate(const std::string& map_path,
                 const std::vector<std::string>& scenario_paths,
                 const std::string& out_dir, unsigned jobs) {
  const mapgraph::MapGraph map = mapgraph::load_map_file(map_path);
  std::filesystem::create_directories(out_dir);

  auto run_one = [&](const std::string& scenario_path, const std::string& dir) {
    const sim::Scenario scenario = io::read_scenario(scenario_path);
    const sim::Streams streams = sim::generate(map, scenario);
    std::filesystem::create_directories(dir);
    io::write_trajectory(dir + "/ground_truth.txt", streams.ground_truth);
    io::write_trajectory(dir + "/odometry_deltas.txt", streams.odometry_deltas);
    io::write_gps_csv_enu(dir + "/gps.csv", streams.gps);
  };

  if (scenario_paths.size() == 1) {
    run_one(scenario_paths.front(), out_dir);
    std::printf("wrote ground_truth.txt, odometry_deltas.txt, gps.csv to %s\n",
                out_dir.c_str());
    return kExitOk;
  }

  // Independent scenarios in parallel; no shared mutable state.
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  const unsigned thread_count = std::max(1u, std::min<unsigned>(jobs, scenario_paths.size()));
  for (unsigned w = 0; w < thread_count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < scenario_paths.size();
           i = next.fetch_add(1)) {
        const std::string stem =
            std::filesystem::path(scenario_paths[i]).stem().string();
        run_one(scenario_paths[i], out_dir + "/" + stem);
      }
    });
  }
  for (auto& worker : workers) worker.join();
  std::printf("wrote %zu scenario stream sets to %s\n", scenario_paths.size(),
              out_dir.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, bool no_align,
             const std::string& deloc_metric, double max_dt,
             const std::string& csv_path) {
  const auto est = io::read_trajectory(est_path);
  const auto gt = io::read_trajectory(gt_path);
  const eval::DelocMetric metric = deloc_metric == "rmse"
                                       ? eval::DelocMetric::rmse
                                       : eval::DelocMetric::max_error;
  const auto pairs = eval::associate(est, gt, max_dt);
  const eval::RigidTransform transform =
      no_align ? eval::RigidTransform{} : eval::align_6dof(pairs);
  const eval::AteReport report = eval::ate_2d(pairs, transform, metric);

  nlohmann::json doc;
  doc["rmse_m"] = report.rmse;
  doc["max_error_m"] = report.max_error;
  doc["delocalized"] = report.delocalized;
  doc["pairs"] = report.errors.size();
  doc["aligned"] = !no_align;
  doc["deloc_metric"] = deloc_metric;
  std::printf("%s\n", doc.dump(2).c_str());

  if (!csv_path.empty()) {
    std::string content = "t,error_m\n";
    char buf[96];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.9f\n", pairs[i].gt.t, report.errors[i]);
      content += buf;
    }
    io::write_file(csv_path, content);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Street-network-aided localization toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  // map build / map set-lanes
  auto* map_cmd = app.add_subcommand("map", "Build and edit road-network map files");
  map_cmd->require_subcommand(1);

  auto* build = map_cmd->add_subcommand("build", "Build a map file from OSM data");
  std::string build_input, build_output, build_format = "auto", build_json;
  build->add_option("--input", build_input, "OSM XML or Overpass JSON file")
      ->required();
  build->add_option("--output", build_output, "Map file to write")->required();
  build->add_option("--format", build_format, "xml|json|auto (default auto)")
      ->check(CLI::IsMember({"xml", "json", "auto"}));
  build->add_option("--json-dump", build_json, "Also write a debug JSON dump");
  double build_step = 0.0;
  int build_window = 0;
  build->add_option("--step", build_step, "Waypoint spacing in meters (default 1.0)");
  build->add_option("--window", build_window, "Smoothing window size (default 5)");
  add_common(build, common);

  auto* set_lanes = map_cmd->add_subcommand("set-lanes", "Override an edge's lane count");
  std::string lanes_map, lanes_output;
  std::uint32_t lanes_edge = 0, lanes_value = 0;
  set_lanes->add_option("--map", lanes_map, "Map file")->required();
  set_lanes->add_option("--edge", lanes_edge, "Edge id")->required();
  set_lanes->add_option("--lanes", lanes_value, "Lane count")->required();
  set_lanes->add_option("--output", lanes_output, "Output path (default in place)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse odometry, GPS and map information");
  std::string fuse_map, fuse_odom, fuse_odom_format = "absolute", fuse_gps, fuse_out;
  std::string fuse_debug, fuse_matches;
  bool fuse_no_map = false, fuse_require_gps = false;
  fuse->add_option("--map", fuse_map, "Map file")->required();
  fuse->add_option("--odometry", fuse_odom, "Odometry trajectory file")->required();
  fuse->add_option("--odom-format", fuse_odom_format,
                   "absolute|delta (default absolute)")
      ->check(CLI::IsMember({"absolute", "delta"}));
  fuse->add_option("--gps", fuse_gps, "GPS CSV file");
  fuse->add_option("--output", fuse_out, "Estimated trajectory to write")->required();
  fuse->add_flag("--no-map", fuse_no_map, "Disable map-alignment priors");
  fuse->add_flag("--require-gps-init", fuse_require_gps,
                 "Fail when no GPS file is provided");
  fuse->add_option("--debug", fuse_debug, "Write a per-step debug CSV");
  fuse->add_option("--debug-matches", fuse_matches, "Write a per-frame match CSV");
  add_common(fuse, common);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic drive streams");
  std::string sim_map, sim_out;
  std::vector<std::string> sim_scenarios;
  unsigned sim_jobs = 1;
  simulate->add_option("--map", sim_map, "Map file")->required();
  simulate->add_option("--scenario", sim_scenarios, "Scenario file (repeatable)")
      ->required();
  simulate->add_option("--out-dir", sim_out, "Output directory")->required();
  simulate->add_option("--jobs", sim_jobs, "Parallel scenarios (default 1)");

  // eval
  auto* evaluate = app.add_subcommand("eval", "Trajectory error against ground truth");
  std::string eval_est, eval_gt, eval_metric = "max", eval_csv;
  bool eval_no_align = false;
  double eval_max_dt = 0.05;
  evaluate->add_option("--est", eval_est, "Estimated trajectory")->required();
  evaluate->add_option("--gt", eval_gt, "Ground-truth trajectory")->required();
  evaluate->add_flag("--no-align", eval_no_align, "Skip rigid alignment");
  evaluate->add_option("--deloc-metric", eval_metric, "max|rmse (default max)")
      ->check(CLI::IsMember({"max", "rmse"}));
  evaluate->add_option("--max-dt", eval_max_dt, "Association tolerance in seconds");
  evaluate->add_option("--csv", eval_csv, "Write per-pose errors as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (build->parsed()) {
      config::ToolkitConfig cfg = load_config(common);
      if (build_step > 0.0) cfg.mapgraph.step_m = build_step;
      if (build_window > 0) {
        if (build_window % 2 == 0) throw config::ConfigError("--window must be odd");
        cfg.mapgraph.smoothing_window = static_cast<std::uint32_t>(build_window);
      }
      return cmd_map_build(build_input, build_output, build_format, build_json, cfg);
    }
    if (set_lanes->parsed())
      return cmd_map_set_lanes(lanes_map, lanes_edge, lanes_value, lanes_output);
    if (fuse->parsed())
      return cmd_fuse(fuse_map, fuse_odom, fuse_odom_format, fuse_gps, fuse_out,
                      fuse_no_map, fuse_require_gps, fuse_debug, fuse_matches,
                      load_config(common));
    if (simulate->parsed()) return cmd_simulate(sim_map, sim_scenarios, sim_out, sim_jobs);
    if (evaluate->parsed())
      return cmd_eval(eval_est, eval_gt, eval_no_align, eval_metric, eval_max_dt,
                      eval_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
