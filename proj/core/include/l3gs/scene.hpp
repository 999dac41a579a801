#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "l3gs/common.hpp"

namespace l3gs {

/// One 3D Gaussian. `scale` holds per-axis standard deviations along the
/// local frame given by `rotation` (unit quaternion, w first). Spherical
/// harmonics are stored coefficient-major with interleaved RGB:
/// sh[3*k + channel], k < (sh_degree+1)^2.
struct Splat {
  Eigen::Vector3f position;
  Eigen::Vector3f scale;
  Eigen::Vector4f rotation;  // (w, x, y, z)
  float opacity = 1.0f;
  std::vector<float> sh;
  ObjectId object_id = 0;
  std::uint16_t layer_id = 1;
  std::uint32_t splat_index = 0;
};

/// Transfer-size model. Full splats carry degree-3 harmonics
/// (3+3+4+1+48 = 59 floats); compact ones only the DC color
/// (3+3+4+1+3 = 14 floats).
struct CostModel {
  std::uint32_t bytes_full = 236;
  std::uint32_t bytes_compact = 56;
  std::uint32_t header_bytes_per_bundle = 0;
};

/// A layered scene. Version l is the union of layers 1..l and contains
/// `layer_targets[l-1]` splats; layers are deltas between versions.
/// Splats are kept sorted by splat_index (dense, 0-based).
struct Scene {
  std::uint16_t num_layers = 0;
  std::uint8_t sh_degree = 3;
  std::vector<std::uint32_t> layer_targets;  // cumulative counts d_1 <= ... <= d_L
  std::vector<Splat> splats;
  CostModel cost;

  std::size_t size() const { return splats.size(); }
};

/// Per-object transfer costs. Indexed by layer 0..L where layer 0 is the
/// empty prefix: cum(j, 0) == 0 and delta(j, l) = cum(j, l) - cum(j, l-1).
class CostTable {
 public:
  CostTable() = default;
  CostTable(std::uint16_t num_layers, std::vector<ObjectId> objects);

  std::uint16_t num_layers() const { return num_layers_; }
  const std::vector<ObjectId>& objects() const { return objects_; }

  std::uint64_t cum(ObjectId j, int layer) const { return row(j).cum.at(layer); }
  std::uint64_t delta(ObjectId j, int layer) const { return row(j).delta.at(layer); }
  std::uint32_t count(ObjectId j, int layer) const { return row(j).count.at(layer); }

  void set_layer(ObjectId j, int layer, std::uint32_t splat_count, std::uint64_t delta_bytes);

 private:
  struct Row {
    std::vector<std::uint64_t> cum;    // size L+1
    std::vector<std::uint64_t> delta;  // size L+1, [0] = 0
    std::vector<std::uint32_t> count;  // size L+1, [0] = 0
  };
  const Row& row(ObjectId j) const;

  std::uint16_t num_layers_ = 0;
  std::vector<ObjectId> objects_;
  std::map<ObjectId, Row> rows_;
};

/// Checks structural invariants: dense splat_index order, unit quaternions,
/// opacity in [0,1], positive scales, layer ids in [1, L], nondecreasing
/// layer targets matched by actual per-layer counts. Throws ValidationError
/// naming the offending splat or layer.
void validate_scene(const Scene& scene);

/// Loads a scene from `path`. Binary files are detected by the "L3GS" magic;
/// anything else is parsed as CSV with a header row
/// idx,x,y,z,sx,sy,sz,qw,qx,qy,qz,opacity,obj,layer,sh0r,sh0g,sh0b,...
/// and an optional leading comment "# layers=<L> targets=<d1,d2,...>".
/// The loaded scene is validated before being returned.
Scene load_scene(const std::string& path);

/// Writes a scene; format chosen by extension (".csv" => CSV, else binary).
void save_scene(const Scene& scene, const std::string& path);

/// Full-splat transfer costs per (object, layer) bundle:
/// delta = bytes_full * count + header_bytes_per_bundle (for non-empty bundles).
CostTable build_cost_table(const Scene& scene);

struct SyntheticSceneParams {
  std::vector<std::uint32_t> layer_targets = {45000, 90000, 135000, 180000};
  std::uint32_t num_objects = 4;
  std::uint8_t sh_degree = 3;
  double extent = 8.0;        // positions uniform in [-extent, extent]^3
  double min_scale = 0.01;
  double max_scale = 0.12;
  std::uint64_t seed = 1;
};

/// Deterministic random scene for tests and benchmarks. Objects are spatial
/// clusters; layer ids follow the cumulative targets; splat order is
/// grouped by layer so partitioning invariants hold by construction.
Scene make_synthetic_scene(const SyntheticSceneParams& params);

}  // namespace l3gs
