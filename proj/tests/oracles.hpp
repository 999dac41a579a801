// Independent reference implementations used to cross-check the library.
// These deliberately avoid the code paths they validate: coverage is counted
// ray-by-ray instead of via the projected-covariance closed form, and the
// pruning interpreter re-scores every round instead of memoizing.
#pragma once

#include <cstdint>
#include <vector>

#include "l3gs/layering.hpp"
#include "l3gs/scene.hpp"
#include "l3gs/viewport.hpp"

namespace testutil {

/// Fraction of the frame covered by the splat's 1-sigma ellipsoid, measured
/// by testing `subsamples`^2 view rays per pixel for ellipsoid intersection
/// in front of the camera. Exact perspective, no linearization.
double pixel_overlap(const l3gs::Splat& splat, const l3gs::Viewport& vp,
                     int subsamples = 2);

/// Same count in pixel-equivalents (overlap * width * height).
double pixel_coverage(const l3gs::Splat& splat, const l3gs::Viewport& vp,
                      int subsamples = 2);

/// Literal transliteration of the iterative pruning loop: score, drop the
/// lowest batch, repeat; scores recomputed from scratch every round.
l3gs::Scene reference_prune(const l3gs::Scene& scene, std::uint32_t target,
                            double round_fraction,
                            const l3gs::SignificanceConfig& cfg);

/// One-shot oracle: keep the `target` best-scoring splats outright.
l3gs::Scene sort_and_take(const l3gs::Scene& scene, std::uint32_t target,
                          const l3gs::SignificanceConfig& cfg);

/// True when the two scenes hold the same splats in the same order
/// (geometry, object ids and layer ids; indices are positional anyway).
bool same_splats(const l3gs::Scene& a, const l3gs::Scene& b);

}  // namespace testutil
