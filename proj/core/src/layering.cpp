#include "l3gs/layering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "l3gs/common.hpp"

namespace l3gs {

namespace {

std::vector<Viewport> default_lattice(const Scene& scene, const SignificanceConfig& cfg) {
  std::vector<Viewport> vps;
  if (scene.splats.empty()) return vps;
  Eigen::Vector3f lo = scene.splats.front().position, hi = lo;
  for (const Splat& sp : scene.splats) {
    lo = lo.cwiseMin(sp.position);
    hi = hi.cwiseMax(sp.position);
  }
  constexpr int kPos = 5;
  constexpr double kPitches[] = {-22.5, -7.5, 7.5, 22.5};
  const Eigen::Vector3d lod = lo.cast<double>(), hid = hi.cast<double>();
  const Eigen::Vector3d step = (hid - lod) / kPos;
  vps.reserve(kPos * kPos * kPos * 12 * 4);
  for (int ix = 0; ix < kPos; ++ix)
    for (int iy = 0; iy < kPos; ++iy)
      for (int iz = 0; iz < kPos; ++iz)
        for (int yi = 0; yi < 12; ++yi)
          for (double pitch : kPitches) {
            Viewport vp;
            vp.position = lod + Eigen::Vector3d(ix + 0.5, iy + 0.5, iz + 0.5)
                                    .cwiseProduct(step);
            vp.yaw = -180.0 + (yi + 0.5) * 30.0;
            vp.pitch = pitch;
            vp.roll = 15.0;
            vp.fov_y = cfg.fov_y;
            vp.aspect = cfg.aspect;
            vp.width = cfg.width;
            vp.height = cfg.height;
            vps.push_back(vp);
          }
  return vps;
}

/// Index order: score descending, original position ascending on ties.
std::vector<std::uint32_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

/// Gathers the listed splats (in the given order) into a fresh single-layer
/// scene with dense indices.
Scene gather(const Scene& src, const std::vector<std::uint32_t>& order) {
  Scene out;
  out.num_layers = 1;
  out.sh_degree = src.sh_degree;
  out.cost = src.cost;
  out.splats.reserve(order.size());
  for (std::uint32_t i : order) {
    Splat sp = src.splats[i];
    sp.layer_id = 1;
    sp.splat_index = std::uint32_t(out.splats.size());
    out.splats.push_back(std::move(sp));
  }
  out.layer_targets = {std::uint32_t(out.splats.size())};
  return out;
}

}  // namespace

std::vector<double> compute_significance(const Scene& scene,
                                         const SignificanceConfig& cfg) {
  std::vector<double> scores(scene.splats.size(), 0.0);
  if (scene.splats.empty()) return scores;
  std::vector<Viewport> lattice;
  if (cfg.viewports.empty()) lattice = default_lattice(scene, cfg);
  const std::vector<Viewport>& samples = cfg.viewports.empty() ? lattice : cfg.viewports;
  const SceneEvaluator eval(scene, cfg.utility);
  for (const Viewport& vp : samples) eval.add_splat_values(vp, scores.data());
  return scores;
}

Scene prune_to_target(const Scene& scene, std::uint32_t target, const PruneConfig& cfg) {
  if (target == 0)
    throw ValidationError("prune target must be at least 1");
  if (target > scene.splats.size())
    throw ValidationError("prune target " + std::to_string(target) +
                          " exceeds the scene's " + std::to_string(scene.splats.size()) +
                          " splats");
  if (!(cfg.round_fraction > 0.0) || !(cfg.round_fraction < 1.0))
    throw ValidationError("round fraction must lie in (0, 1)");

  const bool hooks = bool(cfg.recover) || bool(cfg.finetune);
  Scene work = scene;
  std::vector<double> scores = compute_significance(work, cfg.significance);
  bool scores_fresh = true;

  while (work.splats.size() > target) {
    if (!scores_fresh) scores = compute_significance(work, cfg.significance);
    const std::size_t n = work.splats.size();
    std::size_t batch;
    const std::function<void(Scene&)>* hook;
    if (double(n) * (1.0 - cfg.round_fraction) > double(target)) {
      batch = std::max<std::size_t>(1, std::size_t(std::floor(double(n) * cfg.round_fraction)));
      hook = &cfg.recover;
    } else {
      batch = n - target;
      hook = &cfg.finetune;
    }
    std::vector<std::uint32_t> order = rank_by_score(scores);
    order.resize(n - batch);
    // Keep survivors in their current order so the hooks see a stable scene.
    std::sort(order.begin(), order.end());
    if (!hooks) {
      std::vector<double> kept(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) kept[i] = scores[order[i]];
      scores.swap(kept);
    } else {
      scores_fresh = false;
    }
    work = gather(work, order);
    if (*hook) (*hook)(work);
  }

  if (!scores_fresh) scores = compute_significance(work, cfg.significance);
  return gather(work, rank_by_score(scores));
}

Scene partition_layers(const Scene& scene, const std::vector<std::uint32_t>& targets) {
  if (targets.empty()) throw ValidationError("at least one layer target is required");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == 0)
      throw ValidationError("layer targets must be positive");
    if (i > 0 && targets[i] < targets[i - 1])
      throw ValidationError("layer targets must be nondecreasing (target " +
                            std::to_string(i + 1) + " is " + std::to_string(targets[i]) +
                            " after " + std::to_string(targets[i - 1]) + ")");
  }
  if (targets.back() != scene.splats.size())
    throw ValidationError("last layer target is " + std::to_string(targets.back()) +
                          " but the scene holds " + std::to_string(scene.splats.size()) +
                          " splats");
  Scene out = scene;
  out.num_layers = std::uint16_t(targets.size());
  out.layer_targets = targets;
  std::size_t layer = 0;
  for (std::size_t i = 0; i < out.splats.size(); ++i) {
    while (i >= targets[layer]) ++layer;
    out.splats[i].layer_id = std::uint16_t(layer + 1);
  }
  return out;
}

}  // namespace l3gs
