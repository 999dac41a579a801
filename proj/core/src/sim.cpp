#include "l3gs/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <optional>

#include "io_util.hpp"
#include "l3gs/common.hpp"
#include "l3gs/layering.hpp"

namespace l3gs {

// ---------------------------------------------------------------------------
// Utility sources

DirectUtilitySource::DirectUtilitySource(const Scene& scene, const UtilityConfig& cfg)
    : eval_(scene, cfg) {}

const std::vector<ObjectId>& DirectUtilitySource::objects() const { return eval_.objects(); }
int DirectUtilitySource::num_layers() const { return eval_.num_layers(); }

namespace {

/// delta * remaining-slot count, the value of holding the layer from this
/// slot through the horizon.
void extend_deltas(SlotUtilities& util, int slot, int total_slots, int horizon) {
  int h = total_slots - slot;
  if (horizon > 0) h = std::min(h, horizon);
  util.cum_delta.resize(util.delta.size());
  for (std::size_t i = 0; i < util.delta.size(); ++i)
    util.cum_delta[i] = util.delta[i] * h;
}

}  // namespace

void DirectUtilitySource::fill(int slot, int total_slots, int horizon, const Viewport& pose,
                               SlotUtilities& util) const {
  util.objects = eval_.objects();
  util.num_layers = eval_.num_layers();
  eval_.evaluate(pose, util.delta);
  extend_deltas(util, slot, total_slots, horizon);
}

void GridUtilitySource::fill(int slot, int total_slots, int horizon, const Viewport& pose,
                             SlotUtilities& util) const {
  util.objects = grid_.objects();
  util.num_layers = grid_.num_layers();
  grid_.lookup_layers(pose, util.delta);
  extend_deltas(util, slot, total_slots, horizon);
}

void TableUtilitySource::fill(int slot, int total_slots, int horizon, const Viewport&,
                              SlotUtilities& util) const {
  (void)total_slots;
  (void)horizon;
  util.objects = table_.objects();
  util.num_layers = table_.num_layers();
  const std::size_t n = util.objects.size() * std::size_t(util.num_layers);
  util.delta.assign(n, 0.0);
  util.cum_delta.assign(n, 0.0);
  if (slot >= table_.num_slots()) return;
  for (std::size_t ji = 0; ji < util.objects.size(); ++ji)
    for (int l = 1; l <= util.num_layers; ++l) {
      const std::size_t i = ji * util.num_layers + (l - 1);
      util.delta[i] = table_.delta(slot, util.objects[ji], l);
      util.cum_delta[i] = table_.cum_delta(slot, util.objects[ji], l);
    }
}

// ---------------------------------------------------------------------------
// Simulation

std::vector<double> make_offsets(const BandwidthTrace& bw, const SimConfig& cfg) {
  if (!cfg.offsets.empty()) return cfg.offsets;
  double avail = 0.0;
  if (bw.samples.size() > 1)
    avail = std::max(0.0, bw.samples.back().t - bw.samples.front().t - cfg.duration);
  Rng rng(cfg.seed);
  std::vector<double> offsets;
  offsets.reserve(std::size_t(std::max(0, cfg.num_offsets)));
  for (int i = 0; i < cfg.num_offsets; ++i) offsets.push_back(rng.uniform(0.0, avail));
  return offsets;
}

namespace {

std::uint64_t mbps_to_bytes(double mbps, double seconds) {
  const double raw = mbps * seconds * 1e6 / 8.0;
  return raw > 0.0 ? std::uint64_t(std::llround(raw)) : 0;
}

struct PendingPick {
  Pick pick;
  std::uint64_t remaining = 0;
};

bool uses_picks(SchedulerKind kind) {
  return kind == SchedulerKind::knapsack || kind == SchedulerKind::distill ||
         kind == SchedulerKind::hierarchy;
}

}  // namespace

SimResult run_simulation(const Scene& scene, const ViewportTrace& vp_trace,
                         const BandwidthTrace& bw_trace, SchedulerKind kind,
                         const SimConfig& cfg, const UtilitySource& source,
                         double bw_offset) {
  if (!(cfg.slot_seconds > 0.0)) throw ValidationError("slot length must be positive");
  if (!(cfg.duration > 0.0)) throw ValidationError("run duration must be positive");
  if (vp_trace.samples.empty()) throw ValidationError("viewport trace is empty");
  if (bw_trace.samples.empty()) throw ValidationError("bandwidth trace is empty");
  const double T = cfg.slot_seconds;
  const int total_slots = std::max(1, int(std::llround(cfg.duration / T)));
  const double vp_t0 = vp_trace.samples.front().timestamp;
  const double vp_span = vp_trace.samples.back().timestamp - vp_t0;
  if (vp_span + 1e-6 < cfg.duration)
    throw ValidationError("viewport trace spans " + std::to_string(vp_span) +
                          " s but the run lasts " + std::to_string(cfg.duration) + " s");
  const double bw_t0 = bw_trace.samples.front().t + bw_offset;

  const CostTable costs = build_cost_table(scene);
  const SceneEvaluator eval(scene, cfg.utility);
  const std::vector<ObjectId>& objects = eval.objects();
  const int L = eval.num_layers();
  if (source.objects() != objects || source.num_layers() != L)
    throw ValidationError("utility source does not match the scene's objects and layers");

  // Cumulative splat counts per (object, version), for residency metrics.
  std::vector<std::vector<std::uint64_t>> ccount(objects.size());
  for (std::size_t ji = 0; ji < objects.size(); ++ji) {
    ccount[ji].assign(std::size_t(L) + 1, 0);
    for (int l = 1; l <= L; ++l)
      ccount[ji][l] = ccount[ji][l - 1] + costs.count(objects[ji], l);
  }

  DownloadState state = make_initial_state(kind);
  std::deque<PendingPick> pending;

  // Mode-specific setup.
  std::vector<std::uint32_t> sig_order;  // significance-ranked splat indices
  std::optional<HierarchyTree> tree;
  if (kind == SchedulerKind::sort) {
    SignificanceConfig scfg;
    scfg.utility = cfg.utility;
    scfg.fov_y = cfg.camera.fov_y;
    scfg.aspect = cfg.camera.aspect;
    scfg.width = cfg.camera.width;
    scfg.height = cfg.camera.height;
    const std::vector<double> scores = compute_significance(scene, scfg);
    sig_order.resize(scores.size());
    std::iota(sig_order.begin(), sig_order.end(), 0u);
    std::sort(sig_order.begin(), sig_order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
  } else if (kind == SchedulerKind::hierarchy) {
    tree = HierarchyTree::build(scene);
  } else if (kind == SchedulerKind::preload) {
    for (ObjectId j : objects) state.layer_of[j] = L;
  }

  const auto apply_camera = [&](Viewport vp) {
    vp.fov_y = cfg.camera.fov_y;
    vp.aspect = cfg.camera.aspect;
    vp.width = cfg.camera.width;
    vp.height = cfg.camera.height;
    return vp;
  };

  SimResult result;
  result.scheduler = kind;
  result.offset = bw_offset;
  result.slots.reserve(std::size_t(total_slots));

  SlotUtilities util;
  std::vector<double> u_actual;
  for (int t = 0; t < total_slots; ++t) {
    const double now_v = vp_t0 + t * T;
    const double now_b = bw_t0 + t * T;
    SlotMetrics m;
    m.slot = t;

    // Throughput: the schedule sees the prediction, the wire the truth.
    m.actual_mbps = average_mbps(bw_trace, now_b, now_b + T);
    m.pred_mbps = cfg.ground_truth_bandwidth
                      ? m.actual_mbps
                      : predict_bandwidth(bw_trace, now_b, cfg.predictor);
    const std::uint64_t budget = mbps_to_bytes(m.pred_mbps, T);
    const std::uint64_t capacity = mbps_to_bytes(m.actual_mbps, T);

    // Scheduling pose: the predicted frame nearest the slot midpoint.
    const Viewport actual_mid = apply_camera(interpolate(vp_trace, now_v + 0.5 * T));
    Viewport pose = actual_mid;
    if (!cfg.ground_truth_viewport) {
      const std::vector<Viewport> preds =
          predict_viewport(vp_trace, now_v, cfg.predictor);
      std::size_t k = std::size_t(std::clamp<long long>(
          std::llround(0.5 * T * cfg.predictor.sample_rate), 1,
          (long long)preds.size()));
      pose = apply_camera(preds[k - 1]);
      m.pose_mae[0] = std::abs(pose.position.x() - actual_mid.position.x());
      m.pose_mae[1] = std::abs(pose.position.y() - actual_mid.position.y());
      m.pose_mae[2] = std::abs(pose.position.z() - actual_mid.position.z());
      m.pose_mae[3] = angular_distance(pose.yaw, actual_mid.yaw);
      m.pose_mae[4] = std::abs(pose.pitch - actual_mid.pitch);
      m.pose_mae[5] = angular_distance(pose.roll, actual_mid.roll);
    }

    // Decide, then transfer at the wire rate.
    std::uint64_t consumed = 0;
    if (uses_picks(kind)) {
      DownloadState eff = state;
      for (const PendingPick& p : pending) apply_pick(eff, p.pick);
      SlotDecision dec;
      if (kind == SchedulerKind::knapsack) {
        source.fill(t, total_slots, cfg.horizon, pose, util);
        dec = schedule_knapsack(util, costs, eff, budget, cfg.dp_resolution);
      } else if (kind == SchedulerKind::distill) {
        source.fill(t, total_slots, cfg.horizon, pose, util);
        dec = schedule_distill(util, costs, scene, eff, budget, cfg.lambda_compact,
                               cfg.dp_resolution);
      } else {
        dec = tree->schedule(eff, pose, budget, cfg.utility);
      }
      for (const Pick& p : dec.picks) pending.push_back({p, p.cost_bytes});
      std::uint64_t cap = capacity;
      while (cap > 0 && !pending.empty()) {
        PendingPick& front = pending.front();
        const std::uint64_t take = std::min(cap, front.remaining);
        front.remaining -= take;
        cap -= take;
        consumed += take;
        if (front.remaining == 0) {
          apply_pick(state, front.pick);
          pending.pop_front();
        }
      }
    } else if (kind == SchedulerKind::progressive ||
               kind == SchedulerKind::progressive_whole) {
      consumed = advance_version_stream(state, costs, std::min(budget, capacity));
    } else if (kind == SchedulerKind::sort) {
      consumed = advance_splat_stream(state, scene.cost, scene.size(),
                                      std::min(budget, capacity));
    }
    m.bytes = consumed;

    // Score what the user actually sees at the end of the slot.
    const Viewport end_pose = apply_camera(interpolate(vp_trace, now_v + T));
    switch (state.mode) {
      case StateMode::layered: {
        eval.evaluate(end_pose, u_actual);
        for (std::size_t ji = 0; ji < objects.size(); ++ji) {
          const int lj = state.layer(objects[ji]);
          for (int l = 1; l <= lj; ++l) m.utility += u_actual[ji * L + (l - 1)];
          m.resident_splats += ccount[ji][lj];
        }
        break;
      }
      case StateMode::distill: {
        eval.evaluate(end_pose, u_actual);
        for (std::size_t ji = 0; ji < objects.size(); ++ji) {
          const int lj = state.layer(objects[ji]);
          for (int l = 1; l <= lj; ++l) {
            const double u = u_actual[ji * L + (l - 1)];
            m.utility += state.compact_layers.count({objects[ji], l})
                             ? cfg.lambda_compact * u
                             : u;
          }
          m.resident_splats += ccount[ji][lj];
        }
        break;
      }
      case StateMode::separate_segmented:
      case StateMode::separate_whole: {
        eval.evaluate(end_pose, u_actual);
        for (std::size_t ji = 0; ji < objects.size(); ++ji) {
          const int v = state.best_version(objects[ji]);
          for (int l = 1; l <= v; ++l) m.utility += u_actual[ji * L + (l - 1)];
          m.resident_splats += ccount[ji][v];
        }
        break;
      }
      case StateMode::splat_stream: {
        const std::size_t k =
            std::min<std::size_t>(std::size_t(state.splats_done), sig_order.size());
        m.utility = eval.subset_utility(end_pose, sig_order.data(), k);
        m.resident_splats = state.splats_done;
        break;
      }
      case StateMode::hierarchy: {
        m.utility = tree->active_utility(state, end_pose, cfg.utility);
        m.resident_splats = tree->active_nodes(state).size();
        break;
      }
    }

    result.total_utility += m.utility;
    result.total_bytes += m.bytes;
    result.mean_pred_mbps += m.pred_mbps;
    result.mean_actual_mbps += m.actual_mbps;
    result.slots.push_back(m);
  }

  if (kind == SchedulerKind::preload) {
    // Everything was resident before the session; charge the full scene.
    result.total_bytes = 0;
    for (std::size_t ji = 0; ji < objects.size(); ++ji)
      result.total_bytes += costs.cum(objects[ji], L);
  }
  result.mean_utility = result.total_utility / total_slots;
  result.mean_pred_mbps /= total_slots;
  result.mean_actual_mbps /= total_slots;
  return result;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_filename(const std::string& trace, SchedulerKind kind, double offset) {
  return "metrics_" + trace + "_" + scheduler_name(kind) + "_" + format_number(offset) +
         ".csv";
}

void write_metrics_csv(const std::string& path, const SimResult& result) {
  std::string out =
      "slot,utility,resident_splats,bytes,pred_mbps,actual_mbps,"
      "pose_mae_x,pose_mae_y,pose_mae_z,pose_mae_yaw,pose_mae_pitch,pose_mae_roll\n";
  for (const SlotMetrics& m : result.slots) {
    out += std::to_string(m.slot);
    out += ',';
    out += format_number(m.utility);
    out += ',';
    out += std::to_string(m.resident_splats);
    out += ',';
    out += std::to_string(m.bytes);
    out += ',';
    out += format_number(m.pred_mbps);
    out += ',';
    out += format_number(m.actual_mbps);
    for (double e : m.pose_mae) {
      out += ',';
      out += format_number(e);
    }
    out += '\n';
  }
  io::write_file(path, out);
}

SummaryRow make_summary_row(const std::string& trace, const SimResult& result) {
  SummaryRow row;
  row.trace = trace;
  row.scheduler = result.scheduler;
  row.offset = result.offset;
  row.total_utility = result.total_utility;
  row.total_bytes = result.total_bytes;
  row.mean_utility = result.mean_utility;
  row.mean_pred_mbps = result.mean_pred_mbps;
  row.mean_actual_mbps = result.mean_actual_mbps;
  return row;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::string out =
      "trace,scheduler,offset,total_utility,total_bytes,mean_utility,"
      "mean_pred_mbps,mean_actual_mbps\n";
  for (const SummaryRow& r : rows) {
    out += r.trace;
    out += ',';
    out += scheduler_name(r.scheduler);
    out += ',';
    out += format_number(r.offset);
    out += ',';
    out += format_number(r.total_utility);
    out += ',';
    out += std::to_string(r.total_bytes);
    out += ',';
    out += format_number(r.mean_utility);
    out += ',';
    out += format_number(r.mean_pred_mbps);
    out += ',';
    out += format_number(r.mean_actual_mbps);
    out += '\n';
  }
  io::write_file(path, out);
}

}  // namespace l3gs
