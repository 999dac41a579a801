#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "l3gs/grid.hpp"
#include "l3gs/predict.hpp"
#include "l3gs/scene.hpp"
#include "l3gs/sched.hpp"
#include "l3gs/utility.hpp"

namespace l3gs {

/// Intrinsics applied to every pose the simulator evaluates or schedules
/// against (trace files carry extrinsics only).
struct SimCamera {
  double fov_y = 90.0;
  double aspect = 1.0;
  int width = 1024;
  int height = 1024;
};

struct SimConfig {
  double slot_seconds = 1.0;
  double duration = 60.0;        // simulated wall time
  int num_offsets = 3;           // seeded bandwidth starting offsets per trace
  std::vector<double> offsets;   // explicit offsets; overrides num_offsets
  bool ground_truth_viewport = false;   // schedule against the actual pose
  bool ground_truth_bandwidth = false;  // budget from the actual throughput
  std::uint64_t seed = 1;
  int horizon = 0;               // slots of lookahead value; 0 = rest of session
  std::uint64_t dp_resolution = 1024;
  double lambda_compact = 0.8;
  SimCamera camera;
  PredictorConfig predictor;
  UtilityConfig utility;
};

/// Per-(object, layer) utility increments for one scheduling step. The
/// simulator asks the source once per slot at the scheduling pose.
class UtilitySource {
 public:
  virtual ~UtilitySource() = default;
  virtual const std::vector<ObjectId>& objects() const = 0;
  virtual int num_layers() const = 0;
  /// Fills util.delta and util.cum_delta for slot `slot` of `total_slots`.
  /// `horizon` caps how many future slots an increment keeps paying for
  /// (0 = through the end of the run).
  virtual void fill(int slot, int total_slots, int horizon, const Viewport& pose,
                    SlotUtilities& util) const = 0;
};

/// Evaluates the scene directly at the scheduling pose; the per-slot value
/// of a layer is its increment there times the remaining-slot count.
class DirectUtilitySource : public UtilitySource {
 public:
  explicit DirectUtilitySource(const Scene& scene, const UtilityConfig& cfg = {});
  const std::vector<ObjectId>& objects() const override;
  int num_layers() const override;
  void fill(int slot, int total_slots, int horizon, const Viewport& pose,
            SlotUtilities& util) const override;

 private:
  SceneEvaluator eval_;
};

/// Nearest-cell lookups from a precomputed utility lattice.
class GridUtilitySource : public UtilitySource {
 public:
  explicit GridUtilitySource(const UtilityGrid& grid) : grid_(grid) {}
  const std::vector<ObjectId>& objects() const override { return grid_.objects(); }
  int num_layers() const override { return grid_.num_layers(); }
  void fill(int slot, int total_slots, int horizon, const Viewport& pose,
            SlotUtilities& util) const override;

 private:
  const UtilityGrid& grid_;
};

/// Serves precomputed per-slot rows; the pose is ignored. Used by tests
/// that pin exact schedules.
class TableUtilitySource : public UtilitySource {
 public:
  explicit TableUtilitySource(const UtilityTable& table) : table_(table) {}
  const std::vector<ObjectId>& objects() const override { return table_.objects(); }
  int num_layers() const override { return table_.num_layers(); }
  void fill(int slot, int total_slots, int horizon, const Viewport& pose,
            SlotUtilities& util) const override;

 private:
  const UtilityTable& table_;
};

struct SlotMetrics {
  int slot = 0;
  double utility = 0.0;            // achieved at the end-of-slot actual pose
  std::uint64_t resident_splats = 0;
  std::uint64_t bytes = 0;         // transferred during the slot
  double pred_mbps = 0.0;
  double actual_mbps = 0.0;
  // Absolute scheduling-pose error at the slot midpoint, per feature
  // (angles on the circle). All zero under ground-truth scheduling.
  double pose_mae[6] = {0, 0, 0, 0, 0, 0};  // x, y, z, yaw, pitch, roll
};

struct SimResult {
  SchedulerKind scheduler = SchedulerKind::knapsack;
  double offset = 0.0;  // bandwidth-trace starting offset, seconds
  std::vector<SlotMetrics> slots;
  double total_utility = 0.0;
  std::uint64_t total_bytes = 0;
  double mean_utility = 0.0;
  double mean_pred_mbps = 0.0;
  double mean_actual_mbps = 0.0;
};

/// Bandwidth starting offsets for one run set: the explicit list when given,
/// otherwise `num_offsets` seeded draws from the playable range.
std::vector<double> make_offsets(const BandwidthTrace& bw, const SimConfig& cfg);

/// Drives one scheduler over the traces. Deterministic: identical inputs
/// produce identical results. The utility source only steers scheduling;
/// achieved utility always comes from evaluating the real scene at the
/// actual pose.
SimResult run_simulation(const Scene& scene, const ViewportTrace& vp_trace,
                         const BandwidthTrace& bw_trace, SchedulerKind kind,
                         const SimConfig& cfg, const UtilitySource& source,
                         double bw_offset);

// ---------------------------------------------------------------------------
// Reports

/// Shortest %g form with nine significant digits; round-trips doubles from
/// these runs and keeps files byte-stable across platforms.
std::string format_number(double v);

std::string metrics_filename(const std::string& trace, SchedulerKind kind, double offset);

void write_metrics_csv(const std::string& path, const SimResult& result);

struct SummaryRow {
  std::string trace;
  SchedulerKind scheduler = SchedulerKind::knapsack;
  double offset = 0.0;
  double total_utility = 0.0;
  std::uint64_t total_bytes = 0;
  double mean_utility = 0.0;
  double mean_pred_mbps = 0.0;
  double mean_actual_mbps = 0.0;
};

SummaryRow make_summary_row(const std::string& trace, const SimResult& result);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

}  // namespace l3gs
