#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "l3gs/scene.hpp"
#include "l3gs/viewport.hpp"

namespace l3gs {

/// How the closeness factor treats distance: from the camera position, or
/// perpendicular distance from the central view ray.
enum class ClosenessMode : std::uint8_t { camera_position = 0, view_ray = 1 };

struct UtilityConfig {
  ClosenessMode closeness_mode = ClosenessMode::camera_position;
  double near_plane = 0.01;  // meters; splats at or behind it contribute nothing
  int clip_samples = 64;     // lattice resolution when an ellipse straddles the frame
};

/// Factors of one splat's utility: utility = closeness * overlap * opacity.
/// closeness = 1 / (1 + distance); overlap is the fraction of the frame
/// covered by the splat's projected 1-sigma ellipse, clipped to the frame.
struct UtilityTerms {
  double closeness = 0.0;
  double overlap = 0.0;
  double opacity = 0.0;
  double utility = 0.0;
};

UtilityTerms splat_utility(const Splat& splat, const Viewport& vp,
                           const UtilityConfig& cfg = {});

namespace detail {
/// Area of the 1-sigma ellipse with 2D covariance [[a,b],[b,c]] centered at
/// (u, v), clipped to the frame [0,w]x[0,h]. Shared by the scalar evaluator
/// and the grid precompute so both take identical branches.
double clipped_ellipse_area(double a, double b, double c, double u, double v,
                            double w, double h, int k_samples);
}  // namespace detail

/// Utility of object `j` rendered at version `version` (layers 1..version):
/// the sum of splat utilities over those layers. version 0 yields 0.
double object_utility(const Scene& scene, ObjectId j, int version, const Viewport& vp,
                      const UtilityConfig& cfg = {});

/// Per-slot utilities for every (object, layer) pair.
/// u(t, j, l) is the utility of object j at version l during slot t;
/// delta(t, j, l) = u(t,j,l) - u(t,j,l-1) is layer l's increment; and
/// cum_delta(t, j, l) = sum over t' >= t of delta(t',j,l) is the
/// rest-of-session value of having layer l from slot t onward.
class UtilityTable {
 public:
  UtilityTable() = default;
  UtilityTable(std::vector<ObjectId> objects, int num_layers, int num_slots);

  const std::vector<ObjectId>& objects() const { return objects_; }
  int num_layers() const { return num_layers_; }
  int num_slots() const { return num_slots_; }

  double u(int t, ObjectId j, int l) const;
  double delta(int t, ObjectId j, int l) const;
  double cum_delta(int t, ObjectId j, int l) const;

  void set_delta(int t, ObjectId j, int l, double v);

  /// Recomputes u (prefix sums over layers) and cum_delta (suffix sums over
  /// slots) from the delta entries. Call after the last set_delta.
  void finalize();

 private:
  std::size_t idx(int t, ObjectId j, int l) const;

  std::vector<ObjectId> objects_;
  std::map<ObjectId, int> object_index_;
  int num_layers_ = 0;
  int num_slots_ = 0;
  std::vector<double> delta_, u_, cum_delta_;
};

/// One scene pass per slot: evaluates every splat against that slot's
/// viewport and accumulates per-(object, layer) increments.
UtilityTable build_utility_table(const Scene& scene, const std::vector<Viewport>& slots,
                                 const UtilityConfig& cfg = {});

/// Reusable single-pass evaluator with per-scene caches (world covariance
/// adjugates, conservative view-cone culling radii). Returns per-(object,
/// layer) utility increments for one viewport; layout matches `slot_of`.
class SceneEvaluator {
 public:
  SceneEvaluator(const Scene& scene, const UtilityConfig& cfg = {});

  const std::vector<ObjectId>& objects() const { return objects_; }
  int num_layers() const { return num_layers_; }
  std::size_t slot_of(ObjectId j, int l) const;  // j must exist, 1 <= l <= L

  /// out[slot_of(j, l)] = sum of splat utilities in that (object, layer).
  void evaluate(const Viewport& vp, std::vector<double>& out) const;

  /// Utility of a single splat (by index) under this evaluator's config.
  double splat_value(std::uint32_t splat_index, const Viewport& vp) const;

  /// Adds every splat's utility into out[splat_index]; out must hold at
  /// least scene.size() entries. One camera setup serves the whole pass.
  void add_splat_values(const Viewport& vp, double* out) const;

  /// Total utility of the listed splats (indices into the scene).
  double subset_utility(const Viewport& vp, const std::uint32_t* indices,
                        std::size_t count) const;

 private:
  const Scene& scene_;
  UtilityConfig cfg_;
  std::vector<ObjectId> objects_;
  std::map<ObjectId, int> object_index_;
  int num_layers_ = 0;

  struct EvalFrame;  // camera quantities shared across one pass
  friend class GridBuilder;
  struct SplatCache {
    Eigen::Vector3d pos;
    Eigen::Matrix3d cov;      // world-frame covariance
    Eigen::Matrix3d adj_cov;  // its adjugate
    double sigma_max;         // largest axis standard deviation
    double opacity;
    std::uint32_t slot;
  };
  std::vector<SplatCache> cache_;

  double cached_value(const SplatCache& sc, const EvalFrame& f) const;
};

}  // namespace l3gs
