// l3gs: scene preprocessing, utility-lattice precomputation and trace-driven
// delivery simulation for layered Gaussian-splat scenes.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l3gs/common.hpp"
#include "l3gs/grid.hpp"
#include "l3gs/layering.hpp"
#include "l3gs/predict.hpp"
#include "l3gs/scene.hpp"
#include "l3gs/sched.hpp"
#include "l3gs/sim.hpp"

namespace fs = std::filesystem;
using namespace l3gs;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::vector<std::uint32_t> parse_targets(const std::string& s) {
  std::vector<std::uint32_t> out;
  for (const std::string& p : split(s, ','))
    out.push_back(std::uint32_t(std::stoul(p)));
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const std::string& p : split(s, ',')) out.push_back(std::stod(p));
  return out;
}

ClosenessMode parse_closeness(const std::string& s) {
  if (s == "camera") return ClosenessMode::camera_position;
  if (s == "ray") return ClosenessMode::view_ray;
  throw ValidationError("unknown closeness mode '" + s + "' (expected camera or ray)");
}

/// --vp accepts either a trace file or a synthetic kind name.
ViewportTrace load_or_generate_vp(const std::string& vp, double duration,
                                  std::uint64_t seed) {
  if (fs::exists(vp)) return load_viewport_trace(vp);
  return generate_synthetic_trace(vp, duration, seed);
}

std::string trace_label(const std::string& vp) {
  if (fs::exists(vp)) return fs::path(vp).stem().string();
  return vp;
}

void ensure_parent_dir(const std::string& file) {
  const fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Options shared by simulate and sweep.
struct SimArgs {
  std::string scene_path, grid_path, vp = "ellipse", bw, out = "runs";
  double bw_scale = 0.25;
  std::string offsets_arg;
  int num_offsets = 3;
  bool gt_viewport = false, gt_bandwidth = false;
  SimConfig cfg;
  std::string closeness = "camera";
};

void add_sim_options(CLI::App* sub, SimArgs& a) {
  sub->add_option("--scene", a.scene_path, "Scene file")->required();
  sub->add_option("--grid", a.grid_path, "Precomputed utility lattice; omit to evaluate directly");
  sub->add_option("--vp", a.vp, "Viewport trace file or synthetic kind (ellipse, circle, spiral, spin, testset_sequence)");
  sub->add_option("--bw", a.bw, "Bandwidth trace CSV")->required();
  sub->add_option("--bw-scale", a.bw_scale, "Throughput scale factor")->capture_default_str();
  sub->add_option("--offsets", a.offsets_arg, "Comma-separated bandwidth start offsets (seconds)");
  sub->add_option("--num-offsets", a.num_offsets, "Seeded offsets when --offsets is absent")->capture_default_str();
  sub->add_option("--hw", a.cfg.predictor.history_window, "Predictor history window, seconds")->capture_default_str();
  sub->add_option("--pw", a.cfg.predictor.prediction_window, "Pose prediction window, seconds")->capture_default_str();
  sub->add_option("--slot", a.cfg.slot_seconds, "Slot length, seconds")->capture_default_str();
  sub->add_option("--duration", a.cfg.duration, "Run length, seconds")->capture_default_str();
  sub->add_option("--horizon", a.cfg.horizon, "Value lookahead in slots (0 = rest of run)")->capture_default_str();
  sub->add_option("--seed", a.cfg.seed, "Seed for offsets and synthetic traces")->capture_default_str();
  sub->add_option("--dp-resolution", a.cfg.dp_resolution, "Knapsack budget cell size, bytes")->capture_default_str();
  sub->add_option("--lambda-compact", a.cfg.lambda_compact, "Value share of compact layers")->capture_default_str();
  sub->add_option("--fov-y", a.cfg.camera.fov_y, "Vertical field of view, degrees")->capture_default_str();
  sub->add_option("--aspect", a.cfg.camera.aspect, "Aspect ratio")->capture_default_str();
  sub->add_option("--width", a.cfg.camera.width, "Frame width, pixels")->capture_default_str();
  sub->add_option("--height", a.cfg.camera.height, "Frame height, pixels")->capture_default_str();
  sub->add_option("--near", a.cfg.utility.near_plane, "Near plane, meters")->capture_default_str();
  sub->add_option("--clip-samples", a.cfg.utility.clip_samples, "Clip lattice resolution")->capture_default_str();
  sub->add_option("--closeness", a.closeness, "Closeness distance: camera or ray")->capture_default_str();
  sub->add_flag("--gt-viewport", a.gt_viewport, "Schedule against the actual pose");
  sub->add_flag("--gt-bandwidth", a.gt_bandwidth, "Budget from the actual throughput");
  sub->add_option("--out", a.out, "Output directory")->capture_default_str();
}

/// Runs one scheduler over every offset, appending summary rows and writing
/// one metrics file per run.
void run_offsets(const Scene& scene, const ViewportTrace& vp_trace,
                 const BandwidthTrace& bw_trace, SchedulerKind kind, const SimArgs& a,
                 const UtilitySource& source, const std::vector<double>& offsets,
                 const std::string& label, std::vector<SummaryRow>& rows) {
  for (double off : offsets) {
    const SimResult r =
        run_simulation(scene, vp_trace, bw_trace, kind, a.cfg, source, off);
    const fs::path path = fs::path(a.out) / metrics_filename(label, kind, off);
    write_metrics_csv(path.string(), r);
    rows.push_back(make_summary_row(label, r));
    std::printf("%-18s %-18s offset %-12s utility %-14s bytes %llu\n", label.c_str(),
                scheduler_name(kind).c_str(), format_number(off).c_str(),
                format_number(r.total_utility).c_str(),
                (unsigned long long)r.total_bytes);
  }
}

int run_sim_command(const SimArgs& args_in, const std::vector<std::string>& schedulers) {
  SimArgs a = args_in;
  a.cfg.ground_truth_viewport = a.gt_viewport;
  a.cfg.ground_truth_bandwidth = a.gt_bandwidth;
  a.cfg.utility.closeness_mode = parse_closeness(a.closeness);
  if (!a.offsets_arg.empty()) a.cfg.offsets = parse_doubles(a.offsets_arg);
  a.cfg.num_offsets = a.num_offsets;

  const Scene scene = load_scene(a.scene_path);
  const ViewportTrace vp_trace = load_or_generate_vp(a.vp, a.cfg.duration, a.cfg.seed);
  const BandwidthTrace bw_trace = load_bandwidth_trace(a.bw, a.bw_scale);
  const std::string label = trace_label(a.vp);

  UtilityGrid grid;
  std::unique_ptr<UtilitySource> source;
  if (!a.grid_path.empty()) {
    grid = load_grid(a.grid_path);
    const GridSpec& gs = grid.spec();
    if (gs.fov_y != a.cfg.camera.fov_y || gs.aspect != a.cfg.camera.aspect ||
        gs.width != a.cfg.camera.width || gs.height != a.cfg.camera.height ||
        gs.closeness_mode != a.cfg.utility.closeness_mode)
      throw ValidationError(
          "lattice camera differs from the run's (lattice: fov_y=" +
          format_number(gs.fov_y) + " aspect=" + format_number(gs.aspect) + " " +
          std::to_string(gs.width) + "x" + std::to_string(gs.height) +
          "); pass matching --fov-y/--aspect/--width/--height/--closeness");
    source = std::make_unique<GridUtilitySource>(grid);
  } else {
    source = std::make_unique<DirectUtilitySource>(scene, a.cfg.utility);
  }

  const std::vector<double> offsets = make_offsets(bw_trace, a.cfg);
  fs::create_directories(a.out);
  std::vector<SummaryRow> rows;
  for (const std::string& s : schedulers)
    run_offsets(scene, vp_trace, bw_trace, parse_scheduler(s), a, *source, offsets,
                label, rows);
  write_summary_csv((fs::path(a.out) / "summary.csv").string(), rows);
  return 0;
}

int run_report(const std::string& dir) {
  const fs::path path = fs::path(dir) / "summary.csv";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string line;
  std::getline(in, line);  // header
  struct Acc {
    double utility = 0, bytes = 0, pred = 0, actual = 0;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() < 8) throw ParseError(path.string() + ": malformed row '" + line + "'");
    Acc& acc = groups[{f[0], f[1]}];
    acc.utility += std::stod(f[3]);
    acc.bytes += std::stod(f[4]);
    acc.pred += std::stod(f[6]);
    acc.actual += std::stod(f[7]);
    ++acc.n;
  }
  std::printf("%-18s %-18s %4s %14s %14s %10s %10s\n", "trace", "scheduler", "runs",
              "avg_utility", "avg_bytes", "pred_mbps", "mbps");
  for (const auto& [key, acc] : groups)
    std::printf("%-18s %-18s %4d %14.6g %14.6g %10.4g %10.4g\n", key.first.c_str(),
                key.second.c_str(), acc.n, acc.utility / acc.n, acc.bytes / acc.n,
                acc.pred / acc.n, acc.actual / acc.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered Gaussian-splat scene delivery toolkit"};
  app.set_config("--config", "", "Read options from a key=value file");
  app.require_subcommand(1);

  // --- preprocess -----------------------------------------------------------
  auto* pre = app.add_subcommand(
      "preprocess", "Prune a scene by significance and split it into layers");
  std::string pre_scene, pre_out = "scene.l3gs", pre_layers;
  bool pre_synth = false;
  std::uint32_t pre_target = 0;
  double pre_ratio = 0.2;
  int pre_objects = 4;
  std::uint64_t pre_seed = 1;
  pre->add_option("--scene", pre_scene, "Input scene file");
  pre->add_flag("--synthetic", pre_synth, "Generate a synthetic scene instead of loading one");
  pre->add_option("--objects", pre_objects, "Synthetic scene: number of objects")->capture_default_str();
  pre->add_option("--seed", pre_seed, "Synthetic scene seed")->capture_default_str();
  pre->add_option("--target", pre_target,
                  "Prune to this many splats (the scene size reorders without dropping)");
  pre->add_option("--ratio", pre_ratio, "Fraction pruned per round")->capture_default_str();
  pre->add_option("--layers", pre_layers,
                  "Cumulative layer targets, e.g. 45000,90000,135000,180000");
  pre->add_option("--out", pre_out, "Output scene file")->capture_default_str();

  // --- grid -----------------------------------------------------------------
  auto* gr = app.add_subcommand(
      "grid", "Precompute the utility lattice over positions and orientations");
  std::string gr_scene, gr_out = "scene.l3gg", gr_closeness = "camera";
  int gr_jobs = 0;
  GridSpec gr_spec;
  gr->add_option("--scene", gr_scene, "Scene file")->required();
  gr->add_option("--out", gr_out, "Output lattice file")->capture_default_str();
  gr->add_option("--jobs", gr_jobs, "Worker threads (0 = hardware count)")->capture_default_str();
  gr->add_option("--nx", gr_spec.nx, "Position cells along x")->capture_default_str();
  gr->add_option("--ny", gr_spec.ny, "Position cells along y")->capture_default_str();
  gr->add_option("--nz", gr_spec.nz, "Position cells along z")->capture_default_str();
  gr->add_option("--nyaw", gr_spec.nyaw, "Yaw cells")->capture_default_str();
  gr->add_option("--npitch", gr_spec.npitch, "Pitch cells")->capture_default_str();
  gr->add_option("--nroll", gr_spec.nroll, "Roll cells")->capture_default_str();
  gr->add_option("--fov-y", gr_spec.fov_y, "Vertical field of view, degrees")->capture_default_str();
  gr->add_option("--aspect", gr_spec.aspect, "Aspect ratio")->capture_default_str();
  gr->add_option("--width", gr_spec.width, "Frame width, pixels")->capture_default_str();
  gr->add_option("--height", gr_spec.height, "Frame height, pixels")->capture_default_str();
  gr->add_option("--near", gr_spec.near_plane, "Near plane, meters")->capture_default_str();
  gr->add_option("--clip-samples", gr_spec.clip_samples, "Clip lattice resolution")->capture_default_str();
  gr->add_option("--closeness", gr_closeness, "Closeness distance: camera or ray")->capture_default_str();

  // --- simulate / sweep -----------------------------------------------------
  auto* sim = app.add_subcommand(
      "simulate", "Run one scheduler over the traces and write per-slot metrics");
  SimArgs sim_args;
  std::string sim_sched = "knapsack";
  add_sim_options(sim, sim_args);
  sim->add_option("--scheduler", sim_sched,
                  "knapsack, progressive, progressive-whole, sort, distill, hierarchy or preload")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Run several schedulers side by side");
  SimArgs sweep_args;
  std::string sweep_scheds = "knapsack,progressive,progressive-whole,sort,distill,hierarchy,preload";
  add_sim_options(sweep, sweep_args);
  sweep->add_option("--schedulers", sweep_scheds, "Comma-separated scheduler list")->capture_default_str();

  // --- report ---------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Aggregate a run directory's summary.csv");
  std::string rep_dir = "runs";
  rep->add_option("--out", rep_dir, "Run directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit cleanly, usage errors with 2
  }

  try {
    if (pre->parsed()) {
      if (pre_synth == !pre_scene.empty())
        throw ValidationError("exactly one of --scene or --synthetic is required");
      Scene scene;
      if (pre_synth) {
        SyntheticSceneParams params;
        if (!pre_layers.empty()) params.layer_targets = parse_targets(pre_layers);
        params.num_objects = std::uint32_t(pre_objects);
        params.seed = pre_seed;
        scene = make_synthetic_scene(params);
        log(LogLevel::info, "generated synthetic scene with " +
                                std::to_string(scene.size()) + " splats");
      } else {
        scene = load_scene(pre_scene);
      }
      if (pre_target > 0) {
        PruneConfig pcfg;
        pcfg.round_fraction = pre_ratio;
        scene = prune_to_target(scene, pre_target, pcfg);
        log(LogLevel::info, "pruned to " + std::to_string(scene.size()) + " splats");
      }
      if (!pre_layers.empty() && (pre_target > 0 || !pre_synth))
        scene = partition_layers(scene, parse_targets(pre_layers));
      ensure_parent_dir(pre_out);
      save_scene(scene, pre_out);
      std::printf("wrote %s: %zu splats, %u layers\n", pre_out.c_str(), scene.size(),
                  unsigned(scene.num_layers));
    } else if (gr->parsed()) {
      const Scene scene = load_scene(gr_scene);
      GridSpec spec = default_grid_spec(scene);
      spec.nx = gr_spec.nx; spec.ny = gr_spec.ny; spec.nz = gr_spec.nz;
      spec.nyaw = gr_spec.nyaw; spec.npitch = gr_spec.npitch; spec.nroll = gr_spec.nroll;
      spec.fov_y = gr_spec.fov_y; spec.aspect = gr_spec.aspect;
      spec.width = gr_spec.width; spec.height = gr_spec.height;
      spec.near_plane = gr_spec.near_plane;
      spec.clip_samples = gr_spec.clip_samples;
      spec.closeness_mode = parse_closeness(gr_closeness);
      const UtilityGrid grid = precompute_grid(scene, spec, gr_jobs);
      ensure_parent_dir(gr_out);
      save_grid(grid, gr_out);
      std::printf("wrote %s: %zu positions x %zu orientations, %zu objects, %d layers\n",
                  gr_out.c_str(), std::size_t(spec.num_positions()),
                  std::size_t(spec.num_orientations()), grid.objects().size(),
                  grid.num_layers());
    } else if (sim->parsed()) {
      return run_sim_command(sim_args, {sim_sched});
    } else if (sweep->parsed()) {
      return run_sim_command(sweep_args, split(sweep_scheds, ','));
    } else if (rep->parsed()) {
      return run_report(rep_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "l3gs: %s\n", e.what());
    return 1;
  }
  return 0;
}
