#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "l3gs/scene.hpp"
#include "l3gs/utility.hpp"
#include "l3gs/viewport.hpp"

namespace l3gs {

/// Sampling lattice for precomputed utilities: a regular nx*ny*nz grid of
/// camera positions (cell centers inside [min_corner, max_corner]) crossed
/// with nyaw*npitch*nroll orientations (cell centers of the angle ranges,
/// yaw/roll in [-180,180), pitch in [-90,90]). Defaults give 1,000 positions
/// and 1,728 orientations.
struct GridSpec {
  Eigen::Vector3d min_corner{-1, -1, -1};
  Eigen::Vector3d max_corner{1, 1, 1};
  int nx = 10, ny = 10, nz = 10;
  int nyaw = 12, npitch = 12, nroll = 12;
  double fov_y = 90.0, aspect = 1.0;
  int width = 1024, height = 1024;
  ClosenessMode closeness_mode = ClosenessMode::camera_position;
  double near_plane = 0.01;
  // Clip-sampling lattice for straddling ellipses. Coarser than the scalar
  // default on purpose: the grid trades a little clip resolution for build
  // throughput over ~1.7M pose samples.
  int clip_samples = 16;

  std::size_t num_positions() const { return std::size_t(nx) * ny * nz; }
  std::size_t num_orientations() const { return std::size_t(nyaw) * npitch * nroll; }
};

/// GridSpec with default lattice sizes over the scene's bounding box.
GridSpec default_grid_spec(const Scene& scene);

/// Per-(position, orientation, object, layer) utility increments, stored as
/// float32. Lookup snaps to the nearest position sample (Euclidean) and the
/// nearest orientation sample (per-angle distance with wraparound).
class UtilityGrid {
 public:
  UtilityGrid() = default;
  UtilityGrid(GridSpec spec, std::vector<ObjectId> objects, int num_layers);

  const GridSpec& spec() const { return spec_; }
  const std::vector<ObjectId>& objects() const { return objects_; }
  int num_layers() const { return num_layers_; }

  Eigen::Vector3d position_sample(int pi) const;
  /// (yaw, pitch, roll) in degrees for orientation sample oi.
  Eigen::Vector3d orientation_sample(int oi) const;
  Viewport sample_viewport(int pi, int oi) const;

  int nearest_position(const Eigen::Vector3d& p) const;
  int nearest_orientation(double yaw, double pitch, double roll) const;

  double value(int pi, int oi, ObjectId j, int l) const;
  double lookup(const Viewport& vp, ObjectId j, int l) const;
  /// out[j_index * num_layers + (l-1)] for all objects/layers at once.
  void lookup_layers(const Viewport& vp, std::vector<double>& out) const;

  std::vector<float>& raw_values() { return values_; }
  const std::vector<float>& raw_values() const { return values_; }
  std::size_t value_index(int pi, int oi, int j_index, int l) const;

 private:
  GridSpec spec_;
  std::vector<ObjectId> objects_;
  std::vector<std::uint32_t> object_lookup_;  // id -> index (small ids), else scan
  int num_layers_ = 0;
  std::vector<float> values_;

  int object_index(ObjectId j) const;
};

/// Evaluates the whole lattice. Threads split over position samples
/// (num_threads <= 0 uses the hardware count); output is identical for any
/// thread count. Work per orientation is shared: the twelve roll samples of
/// a yaw/pitch pair reuse one projection pass, since the 1-sigma area is
/// roll-invariant and only frame clipping depends on roll.
UtilityGrid precompute_grid(const Scene& scene, const GridSpec& spec, int num_threads = 0);

void save_grid(const UtilityGrid& grid, const std::string& path);
UtilityGrid load_grid(const std::string& path);

}  // namespace l3gs
