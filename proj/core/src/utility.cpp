#include "l3gs/utility.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>

#include <Eigen/Geometry>

namespace l3gs {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Matrix3d world_covariance(const Splat& sp) {
  const Eigen::Vector4d q = sp.rotation.cast<double>();
  const Eigen::Matrix3d r =
      Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
  const Eigen::Vector3d s2 = sp.scale.cast<double>().array().square();
  return r * s2.asDiagonal() * r.transpose();
}

Eigen::Matrix3d adjugate(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d a;
  a(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  a(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  a(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  a(1, 0) = a(0, 1);
  a(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  a(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  a(2, 0) = a(0, 2);
  a(2, 1) = a(1, 2);
  a(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return a;
}

double ray_distance(const Eigen::Vector3d& offset, const Eigen::Vector3d& forward) {
  const double along = std::max(0.0, offset.dot(forward));
  return (offset - along * forward).norm();
}

}  // namespace

namespace detail {

// Area of the 1-sigma ellipse with 2D covariance [[a, b], [b, c]] centered at
// (u, v), clipped to [0,w]x[0,h]. Fully inside: exact pi*sqrt(det). Fully
// outside (by bounding box): zero. Straddling: estimated with a deterministic
// k x k lattice over whichever region is smaller — the ellipse (mapped from
// the unit disk) or the frame — so the sample density always resolves the
// intersection.
double clipped_ellipse_area(double a, double b, double c, double u, double v,
                            double w, double h, int k) {
  const double det = a * c - b * b;
  if (!(det > 0.0) || !(a > 0.0) || !(c > 0.0)) return 0.0;
  const double rx = std::sqrt(a), ry = std::sqrt(c);
  const double full = kPi * std::sqrt(det);
  if (u - rx >= 0.0 && u + rx <= w && v - ry >= 0.0 && v + ry <= h) return full;
  if (u + rx <= 0.0 || u - rx >= w || v + ry <= 0.0 || v - ry >= h) return 0.0;

  if (full > w * h) {
    // The ellipse dwarfs the frame: walk the frame and test membership.
    long inside = 0;
    for (int i = 0; i < k; ++i) {
      const double dx = (w * (2.0 * i + 1.0)) / (2.0 * k) - u;
      for (int j = 0; j < k; ++j) {
        const double dy = (h * (2.0 * j + 1.0)) / (2.0 * k) - v;
        if (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy <= det) ++inside;
      }
    }
    return w * h * static_cast<double>(inside) / static_cast<double>(k) /
           static_cast<double>(k);
  }

  // Cholesky factor of the covariance maps the unit disk onto the ellipse.
  const double l11 = rx;
  const double l21 = b / l11;
  const double l22 = std::sqrt(std::max(0.0, c - l21 * l21));
  long in_disk = 0, in_frame = 0;
  for (int i = 0; i < k; ++i) {
    const double sx = (2.0 * i + 1.0) / k - 1.0;
    for (int j = 0; j < k; ++j) {
      const double sy = (2.0 * j + 1.0) / k - 1.0;
      if (sx * sx + sy * sy > 1.0) continue;
      ++in_disk;
      const double px = u + l11 * sx;
      const double py = v + l21 * sx + l22 * sy;
      if (px >= 0.0 && px <= w && py >= 0.0 && py <= h) ++in_frame;
    }
  }
  if (in_disk == 0) return 0.0;
  return full * static_cast<double>(in_frame) / static_cast<double>(in_disk);
}

}  // namespace detail

UtilityTerms splat_utility(const Splat& sp, const Viewport& vp, const UtilityConfig& cfg) {
  const Camera cam = make_camera(vp, cfg.near_plane);
  const Eigen::Vector3d pos = sp.position.cast<double>();
  const Eigen::Vector3d offset = pos - cam.origin;
  const Eigen::Vector3d forward = -cam.world_from_cam.col(2);

  UtilityTerms t;
  t.opacity = sp.opacity;
  const double dist = cfg.closeness_mode == ClosenessMode::camera_position
                          ? offset.norm()
                          : ray_distance(offset, forward);
  t.closeness = 1.0 / (1.0 + dist);

  const Eigen::Vector3d q = cam.to_camera(pos);
  const double depth = -q.z();
  if (depth > cam.near_plane) {
    const Eigen::Matrix3d cov = world_covariance(sp);
    // Perspective-linearized image of the covariance. The image y axis points
    // down, so the second row is negated.
    const Eigen::Vector3d w1 =
        (cam.world_from_cam.col(0) + (q.x() / depth) * cam.world_from_cam.col(2)) *
        (cam.fx / depth);
    const Eigen::Vector3d w2 =
        (cam.world_from_cam.col(1) + (q.y() / depth) * cam.world_from_cam.col(2)) *
        (-cam.fy / depth);
    const double a = w1.dot(cov * w1);
    const double b = w1.dot(cov * w2);
    const double c = w2.dot(cov * w2);
    const double u = cam.fx * q.x() / depth + 0.5 * cam.width;
    const double v = 0.5 * cam.height - cam.fy * q.y() / depth;
    const double area =
        detail::clipped_ellipse_area(a, b, c, u, v, cam.width, cam.height, cfg.clip_samples);
    t.overlap = area / (cam.width * cam.height);
  }
  t.utility = t.closeness * t.overlap * t.opacity;
  return t;
}

double object_utility(const Scene& scene, ObjectId j, int version, const Viewport& vp,
                      const UtilityConfig& cfg) {
  double sum = 0.0;
  for (const Splat& sp : scene.splats)
    if (sp.object_id == j && sp.layer_id <= version) sum += splat_utility(sp, vp, cfg).utility;
  return sum;
}

UtilityTable::UtilityTable(std::vector<ObjectId> objects, int num_layers, int num_slots)
    : objects_(std::move(objects)), num_layers_(num_layers), num_slots_(num_slots) {
  std::sort(objects_.begin(), objects_.end());
  objects_.erase(std::unique(objects_.begin(), objects_.end()), objects_.end());
  for (std::size_t i = 0; i < objects_.size(); ++i) object_index_[objects_[i]] = int(i);
  const std::size_t n = objects_.size() * std::size_t(num_layers_) * num_slots_;
  delta_.assign(n, 0.0);
  u_.assign(n, 0.0);
  cum_delta_.assign(n, 0.0);
}

std::size_t UtilityTable::idx(int t, ObjectId j, int l) const {
  assert(t >= 0 && t < num_slots_ && l >= 1 && l <= num_layers_);
  const int ji = object_index_.at(j);
  return (std::size_t(t) * objects_.size() + ji) * num_layers_ + (l - 1);
}

double UtilityTable::u(int t, ObjectId j, int l) const {
  if (l <= 0) return 0.0;
  return u_[idx(t, j, l)];
}

double UtilityTable::delta(int t, ObjectId j, int l) const { return delta_[idx(t, j, l)]; }

double UtilityTable::cum_delta(int t, ObjectId j, int l) const {
  if (t >= num_slots_) return 0.0;
  return cum_delta_[idx(t, j, l)];
}

void UtilityTable::set_delta(int t, ObjectId j, int l, double v) { delta_[idx(t, j, l)] = v; }

void UtilityTable::finalize() {
  for (int t = 0; t < num_slots_; ++t) {
    for (ObjectId j : objects_) {
      double acc = 0.0;
      for (int l = 1; l <= num_layers_; ++l) {
        acc += delta_[idx(t, j, l)];
        u_[idx(t, j, l)] = acc;
      }
    }
  }
  for (int t = num_slots_ - 1; t >= 0; --t) {
    for (ObjectId j : objects_) {
      for (int l = 1; l <= num_layers_; ++l) {
        const double next = t + 1 < num_slots_ ? cum_delta_[idx(t + 1, j, l)] : 0.0;
        cum_delta_[idx(t, j, l)] = delta_[idx(t, j, l)] + next;
      }
    }
  }
}

UtilityTable build_utility_table(const Scene& scene, const std::vector<Viewport>& slots,
                                 const UtilityConfig& cfg) {
  SceneEvaluator eval(scene, cfg);
  UtilityTable table(eval.objects(), eval.num_layers(), int(slots.size()));
  std::vector<double> out;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    eval.evaluate(slots[t], out);
    for (ObjectId j : eval.objects())
      for (int l = 1; l <= eval.num_layers(); ++l)
        table.set_delta(int(t), j, l, out[eval.slot_of(j, l)]);
  }
  table.finalize();
  return table;
}

SceneEvaluator::SceneEvaluator(const Scene& scene, const UtilityConfig& cfg)
    : scene_(scene), cfg_(cfg), num_layers_(scene.num_layers) {
  std::set<ObjectId> ids;
  for (const Splat& sp : scene.splats) ids.insert(sp.object_id);
  objects_.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < objects_.size(); ++i) object_index_[objects_[i]] = int(i);

  cache_.resize(scene.splats.size());
  for (std::size_t i = 0; i < scene.splats.size(); ++i) {
    const Splat& sp = scene.splats[i];
    SplatCache& c = cache_[i];
    c.pos = sp.position.cast<double>();
    c.cov = world_covariance(sp);
    c.adj_cov = adjugate(c.cov);
    c.sigma_max = sp.scale.cast<double>().maxCoeff();
    c.opacity = sp.opacity;
    c.slot = std::uint32_t(object_index_.at(sp.object_id) * num_layers_ + sp.layer_id - 1);
  }
}

std::size_t SceneEvaluator::slot_of(ObjectId j, int l) const {
  assert(l >= 1 && l <= num_layers_);
  return std::size_t(object_index_.at(j)) * num_layers_ + (l - 1);
}

struct SceneEvaluator::EvalFrame {
  Camera cam;
  Eigen::Vector3d forward, c0, c1, c2;
  double cos_tv = 0.0, sin_tv = 0.0;  // circumscribing view-cone half-angle
  double frame_area = 0.0;

  explicit EvalFrame(const Viewport& vp, double near_plane)
      : cam(make_camera(vp, near_plane)) {
    forward = -cam.world_from_cam.col(2);
    c0 = cam.world_from_cam.col(0);
    c1 = cam.world_from_cam.col(1);
    c2 = cam.world_from_cam.col(2);
    const double tan_hx = 0.5 * cam.width / cam.fx;
    const double tan_hy = 0.5 * cam.height / cam.fy;
    const double theta_view = std::atan(std::hypot(tan_hx, tan_hy));
    cos_tv = std::cos(theta_view);
    sin_tv = std::sin(theta_view);
    frame_area = cam.width * cam.height;
  }
};

double SceneEvaluator::cached_value(const SplatCache& sc, const EvalFrame& f) const {
  const Eigen::Vector3d offset = sc.pos - f.cam.origin;
  const double depth = offset.dot(f.forward);
  if (depth <= f.cam.near_plane) return 0.0;
  const double dist = offset.norm();
  // Cull when the angle to the splat's bounding sphere exceeds the view
  // cone: depth/dist = cos(angle) < cos(theta_view + beta).
  const double sin_b = std::min(1.0, sc.sigma_max / dist);
  const double cos_b = std::sqrt(1.0 - sin_b * sin_b);
  const double cos_cull = f.cos_tv * cos_b - f.sin_tv * sin_b;
  if (depth < dist * cos_cull) return 0.0;

  const double x = offset.dot(f.c0), y = offset.dot(f.c1);
  const Eigen::Vector3d w1 = (f.c0 + (x / depth) * f.c2) * (f.cam.fx / depth);
  const Eigen::Vector3d w2 = (f.c1 + (y / depth) * f.c2) * (-f.cam.fy / depth);
  const double a = w1.dot(sc.cov * w1);
  const double b = w1.dot(sc.cov * w2);
  const double c = w2.dot(sc.cov * w2);
  const double u = f.cam.fx * x / depth + 0.5 * f.cam.width;
  const double v = 0.5 * f.cam.height - f.cam.fy * y / depth;
  const double area = detail::clipped_ellipse_area(a, b, c, u, v, f.cam.width,
                                                   f.cam.height, cfg_.clip_samples);
  if (area <= 0.0) return 0.0;

  const double d_close = cfg_.closeness_mode == ClosenessMode::camera_position
                             ? dist
                             : ray_distance(offset, f.forward);
  return sc.opacity * area / f.frame_area / (1.0 + d_close);
}

void SceneEvaluator::evaluate(const Viewport& vp, std::vector<double>& out) const {
  out.assign(objects_.size() * std::size_t(num_layers_), 0.0);
  const EvalFrame frame(vp, cfg_.near_plane);
  for (const SplatCache& sc : cache_) out[sc.slot] += cached_value(sc, frame);
}

double SceneEvaluator::splat_value(std::uint32_t splat_index, const Viewport& vp) const {
  const EvalFrame frame(vp, cfg_.near_plane);
  return cached_value(cache_.at(splat_index), frame);
}

void SceneEvaluator::add_splat_values(const Viewport& vp, double* out) const {
  const EvalFrame frame(vp, cfg_.near_plane);
  for (std::size_t i = 0; i < cache_.size(); ++i) out[i] += cached_value(cache_[i], frame);
}

double SceneEvaluator::subset_utility(const Viewport& vp, const std::uint32_t* indices,
                                      std::size_t count) const {
  const EvalFrame frame(vp, cfg_.near_plane);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += cached_value(cache_.at(indices[i]), frame);
  return sum;
}

}  // namespace l3gs
