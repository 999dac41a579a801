#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "l3gs/scene.hpp"
#include "l3gs/utility.hpp"
#include "l3gs/viewport.hpp"

namespace l3gs {

/// Viewport sample set used to score splats. When `viewports` is empty a
/// lattice over the scene bounds is generated: 5x5x5 cell-center positions
/// crossed with 12 yaw headings, four near-level pitches and a single roll.
struct SignificanceConfig {
  std::vector<Viewport> viewports;
  UtilityConfig utility;
  double fov_y = 90.0;
  double aspect = 1.0;
  int width = 1024;
  int height = 1024;
};

/// Per-splat score: the splat's utility summed over the sample viewports.
/// Indexed by splat_index.
std::vector<double> compute_significance(const Scene& scene,
                                         const SignificanceConfig& cfg = {});

struct PruneConfig {
  double round_fraction = 0.2;  // share of survivors dropped per round
  SignificanceConfig significance;
  /// Optional model-update passes run between rounds (e.g. a short training
  /// recovery). When either is set, scores are recomputed every round;
  /// otherwise scoring happens once, since utilities are additive and
  /// removing splats cannot change the scores of the rest.
  std::function<void(Scene&)> recover;
  std::function<void(Scene&)> finetune;
};

/// Iteratively drops the lowest-scoring splats until `target` remain:
/// full-size rounds of floor(n * round_fraction) while that leaves more than
/// the target, then one final trimming round. The result is a single-layer
/// scene ordered most-significant first with densely renumbered indices.
Scene prune_to_target(const Scene& scene, std::uint32_t target,
                      const PruneConfig& cfg = {});

/// Reassigns layer ids by cumulative position: splats [0, targets[0]) form
/// layer 1, [targets[0], targets[1]) layer 2, and so on. The scene order is
/// preserved and is expected to already be most-significant first. Targets
/// must be positive, nondecreasing and end at scene.size().
Scene partition_layers(const Scene& scene, const std::vector<std::uint32_t>& targets);

}  // namespace l3gs
