#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "l3gs/scene.hpp"
#include "l3gs/utility.hpp"

namespace l3gs {

enum class SchedulerKind {
  knapsack,           // per-slot multiple-choice knapsack over layer upgrades
  progressive,        // separate versions per object, streamed in order
  progressive_whole,  // separate whole-scene versions, streamed in order
  sort,               // significance-ordered splat stream
  distill,            // compact-harmonics-first variant of knapsack
  hierarchy,          // coarse-to-fine tree expansion
  preload,            // everything resident before playback (no streaming)
};

SchedulerKind parse_scheduler(const std::string& name);
std::string scheduler_name(SchedulerKind kind);

/// Per-(object, layer) utility snapshot handed to a scheduler for one slot.
/// Layout: index = object_index * num_layers + (layer - 1).
struct SlotUtilities {
  std::vector<ObjectId> objects;
  int num_layers = 0;
  std::vector<double> delta;      // this slot's per-layer increments
  std::vector<double> cum_delta;  // value of holding the layer for the rest of the session

  std::size_t slot_of(ObjectId j, int l) const;
};

enum class PickForm : std::uint8_t {
  layer_full = 0,   // next layer, full harmonics
  layer_compact,    // next layer, compact harmonics (distill)
  sh_upgrade,       // refresh an owned compact layer to full harmonics
  node_expand,      // hierarchy: replace a node by its children
};

struct Pick {
  ObjectId object = 0;
  int layer = 0;  // target layer / version (unused for node expansions)
  PickForm form = PickForm::layer_full;
  int node_id = -1;
  std::uint64_t cost_bytes = 0;
  double value = 0.0;
};

/// What a scheduler commits to for one slot. Discrete schedulers enumerate
/// picks; streaming ones (progressive, sort) declare stream_bytes of intent
/// and the simulator advances their in-state progress cursor instead.
struct SlotDecision {
  std::vector<Pick> picks;
  std::uint64_t stream_bytes = 0;
  std::uint64_t bytes_used = 0;  // total committed, never above the budget
  std::uint64_t predicted_budget_bytes = 0;
};

enum class StateMode : std::uint8_t {
  layered = 0,
  separate_segmented,
  separate_whole,
  splat_stream,
  distill,
  hierarchy,
};

/// Version download in flight for the separate-version modes. A version is
/// worthless until complete (it renders blank), so progress must be tracked.
struct PartialVersion {
  ObjectId object = 0;  // ignored in whole-scene mode
  int version = 0;
  std::uint64_t bytes_done = 0;
};

/// Client-side residency bookkeeping. Only the fields of the active mode are
/// used; everything is value-semantic so the simulator can copy states.
struct DownloadState {
  StateMode mode = StateMode::layered;

  std::map<ObjectId, int> layer_of;                  // layered/distill: top contiguous layer
  std::set<std::pair<ObjectId, int>> compact_layers; // distill: layers held in compact form
  std::map<ObjectId, std::set<int>> versions_of;     // separate per-object versions
  std::set<int> whole_versions;                      // separate whole-scene versions
  std::optional<PartialVersion> partial;
  std::uint64_t splats_done = 0;                     // splat stream: whole splats resident
  std::uint64_t splat_partial_bytes = 0;
  std::set<int> expanded;                            // hierarchy: expanded node ids
  std::uint64_t total_bytes = 0;

  int layer(ObjectId j) const;
  int best_version(ObjectId j) const;  // separate modes; 0 when none complete
};

DownloadState make_initial_state(SchedulerKind kind);

/// Applies one completed pick. Enforces layer precedence (layer l needs l-1)
/// and rejects repeats; throws ValidationError otherwise.
void apply_pick(DownloadState& state, const Pick& pick);

/// Streams bytes into the separate-version sequence (versions ascending;
/// within one, objects ascending; whole-scene versions span all objects).
/// Completed versions enter the owned sets; returns bytes consumed (< budget
/// only when everything is already resident).
std::uint64_t advance_version_stream(DownloadState& state, const CostTable& costs,
                                     std::uint64_t budget_bytes);

/// Streams bytes into the significance-ordered splat sequence.
std::uint64_t advance_splat_stream(DownloadState& state, const CostModel& cost,
                                   std::uint64_t total_splats, std::uint64_t budget_bytes);

// ---------------------------------------------------------------------------
// Knapsack machinery

/// One candidate: jump object `object` from `from_layer` to `to_layer`,
/// paying the summed layer costs for the summed rest-of-session value.
struct KnapsackOption {
  ObjectId object = 0;
  int from_layer = 0;
  int to_layer = 0;
  PickForm form = PickForm::layer_full;
  std::uint64_t cost_bytes = 0;
  double value = 0.0;
};

struct KnapsackGroup {
  ObjectId object = 0;
  std::vector<KnapsackOption> options;  // at most one may be chosen
};

struct KnapsackInstance {
  std::vector<KnapsackGroup> groups;
  std::uint64_t budget_bytes = 0;
  std::uint64_t resolution = 1024;  // bytes per DP cell; costs round up
};

struct KnapsackSolution {
  std::vector<KnapsackOption> chosen;  // group order
  double value = 0.0;
  std::uint64_t cost_bytes = 0;
};

/// Upgrade options for every object from its current layer to each higher
/// one. Options whose value is not positive are dropped.
KnapsackInstance build_knapsack_instance(const SlotUtilities& util, const CostTable& costs,
                                         const DownloadState& state,
                                         std::uint64_t budget_bytes,
                                         std::uint64_t resolution = 1024);

/// Dynamic program over quantized budget cells, exact on cell-integral
/// instances. Ties prefer fewer bytes, then earlier (lower-id) groups, then
/// the earlier option within a group.
KnapsackSolution solve_knapsack(const KnapsackInstance& instance);

/// Exhaustive reference solver with identical tie-breaking. Feasible only
/// for small instances; used by tests as an oracle.
KnapsackSolution solve_knapsack_bruteforce(const KnapsackInstance& instance);

// ---------------------------------------------------------------------------
// Per-slot scheduler entry points

SlotDecision schedule_knapsack(const SlotUtilities& util, const CostTable& costs,
                               const DownloadState& state, std::uint64_t budget_bytes,
                               std::uint64_t resolution = 1024);

SlotDecision schedule_progressive(const DownloadState& state, std::uint64_t budget_bytes);

SlotDecision schedule_sort(const DownloadState& state, std::uint64_t budget_bytes);

/// Knapsack over distillation options: per object, the next layer in compact
/// form at `lambda_compact` of its value, the next layer in full form, or a
/// harmonics refresh of an owned compact layer for the withheld value share.
SlotDecision schedule_distill(const SlotUtilities& util, const CostTable& costs,
                              const Scene& scene, const DownloadState& state,
                              std::uint64_t budget_bytes, double lambda_compact = 0.8,
                              std::uint64_t resolution = 1024);

// ---------------------------------------------------------------------------
// Hierarchy baseline

/// Binary coarse-to-fine tree per object under one virtual super-root
/// (id 0, renders nothing). Every other node carries a proxy splat that
/// moment-matches the splats below it; leaves are the original splats.
class HierarchyTree {
 public:
  struct Node {
    int id = 0;
    int parent = -1;
    int child[2] = {-1, -1};
    std::uint32_t leaf_count = 0;
    std::uint64_t bytes = 0;  // transfer size of this node's proxy splat
  };

  static HierarchyTree build(const Scene& scene);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Scene& proxy_scene() const { return proxies_; }
  bool is_leaf(int id) const;

  /// Nodes that currently render: parent expanded, node itself not.
  std::vector<int> active_nodes(const DownloadState& state) const;
  /// Sum of proxy-splat utilities over the active set.
  double active_utility(const DownloadState& state, const Viewport& vp,
                        const UtilityConfig& cfg = {}) const;

  /// Greedy refinement: repeatedly expand the affordable candidate with the
  /// best (children value - node value) per byte until the budget is spent.
  SlotDecision schedule(const DownloadState& state, const Viewport& vp,
                        std::uint64_t budget_bytes, const UtilityConfig& cfg = {}) const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> roots_;  // children of the super-root, one per object
  Scene proxies_;           // proxy splat for node id k lives at splat index k-1
};

}  // namespace l3gs
