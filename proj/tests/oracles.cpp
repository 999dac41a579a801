#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace testutil {

using namespace l3gs;

namespace {

// Hit test: does the ray o + t*d (t > 0) meet the 1-sigma ellipsoid
// (x - mu)^T A (x - mu) <= 1?
bool ray_hits(const Eigen::Vector3d& rel, const Eigen::Matrix3d& A, double qAq,
              const Eigen::Vector3d& d) {
  const double a = d.dot(A * d);
  const double b = rel.dot(A * d);
  const double disc = b * b - a * (qAq - 1.0);
  if (disc < 0.0) return false;
  return (-b + std::sqrt(disc)) / a > 1e-9;
}

}  // namespace

double pixel_coverage(const Splat& splat, const Viewport& vp, int subsamples) {
  const Camera cam = make_camera(vp);
  Eigen::Quaterniond q(splat.rotation[0], splat.rotation[1], splat.rotation[2],
                       splat.rotation[3]);
  q.normalize();
  const Eigen::Matrix3d R = q.toRotationMatrix();
  Eigen::Vector3d inv_s2;
  for (int i = 0; i < 3; ++i) {
    const double s = double(splat.scale[i]);
    inv_s2[i] = 1.0 / (s * s);
  }
  const Eigen::Matrix3d A = R * inv_s2.asDiagonal() * R.transpose();
  const Eigen::Vector3d mu = splat.position.cast<double>();
  const Eigen::Vector3d rel = cam.origin - mu;
  const double qAq = rel.dot(A * rel);
  const double sigma_max = double(splat.scale.maxCoeff());

  // Conservative pixel bounds: the ellipsoid sits inside the axis-aligned box
  // mu +- sigma_max. With all eight corners in front of the camera the
  // silhouette lies inside the hull of the projected corners; otherwise fall
  // back to scanning the whole frame.
  int x0 = 0, x1 = vp.width, y0 = 0, y1 = vp.height;
  double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
  bool corners_ok = true;
  for (int c = 0; c < 8 && corners_ok; ++c) {
    Eigen::Vector3d corner = mu + sigma_max * Eigen::Vector3d((c & 1) ? 1 : -1,
                                                              (c & 2) ? 1 : -1,
                                                              (c & 4) ? 1 : -1);
    const Projection p = project_point(cam, corner);
    if (!p.in_front) {
      corners_ok = false;
      break;
    }
    ulo = std::min(ulo, p.u);
    uhi = std::max(uhi, p.u);
    vlo = std::min(vlo, p.v);
    vhi = std::max(vhi, p.v);
  }
  if (corners_ok) {
    x0 = std::clamp(int(std::floor(ulo)) - 1, 0, vp.width);
    x1 = std::clamp(int(std::ceil(uhi)) + 1, 0, vp.width);
    y0 = std::clamp(int(std::floor(vlo)) - 1, 0, vp.height);
    y1 = std::clamp(int(std::ceil(vhi)) + 1, 0, vp.height);
  }

  const int s = std::max(1, subsamples);
  long long hits = 0;
  for (int py = y0; py < y1; ++py)
    for (int px = x0; px < x1; ++px)
      for (int sy = 0; sy < s; ++sy)
        for (int sx = 0; sx < s; ++sx) {
          const double u = px + (sx + 0.5) / s;
          const double v = py + (sy + 0.5) / s;
          const Eigen::Vector3d dir_cam((u - 0.5 * vp.width) / cam.fx,
                                        (0.5 * vp.height - v) / cam.fy, -1.0);
          if (ray_hits(rel, A, qAq, cam.world_from_cam * dir_cam)) ++hits;
        }
  return double(hits) / (double(s) * double(s));
}

double pixel_overlap(const Splat& splat, const Viewport& vp, int subsamples) {
  return pixel_coverage(splat, vp, subsamples) /
         (double(vp.width) * double(vp.height));
}

Scene reference_prune(const Scene& scene, std::uint32_t target,
                      double round_fraction, const SignificanceConfig& cfg) {
  // Scores are recomputed from scratch every round, so with the default
  // bbox-derived viewport lattice the results can drift from the memoized
  // implementation as the bbox shrinks; callers pass explicit viewports.
  auto take = [&](const Scene& src, const std::vector<std::uint32_t>& order) {
    Scene out;
    out.num_layers = 1;
    out.sh_degree = src.sh_degree;
    out.cost = src.cost;
    for (std::uint32_t i : order) {
      Splat sp = src.splats[i];
      sp.layer_id = 1;
      sp.splat_index = std::uint32_t(out.splats.size());
      out.splats.push_back(std::move(sp));
    }
    out.layer_targets = {std::uint32_t(out.splats.size())};
    return out;
  };
  auto ranking = [](const std::vector<double>& sc) {
    std::vector<std::uint32_t> order(sc.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return sc[a] > sc[b]; });
    return order;
  };

  Scene work = scene;
  while (work.splats.size() > target) {
    const std::vector<double> scores = compute_significance(work, cfg);
    const std::size_t n = work.splats.size();
    std::size_t batch;
    if (double(n) * (1.0 - round_fraction) > double(target))
      batch = std::max<std::size_t>(1, std::size_t(std::floor(double(n) * round_fraction)));
    else
      batch = n - target;
    std::vector<std::uint32_t> order = ranking(scores);
    order.resize(n - batch);
    std::sort(order.begin(), order.end());
    work = take(work, order);
  }
  return take(work, ranking(compute_significance(work, cfg)));
}

Scene sort_and_take(const Scene& scene, std::uint32_t target,
                    const SignificanceConfig& cfg) {
  const std::vector<double> scores = compute_significance(scene, cfg);
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b];
  });
  order.resize(target);
  Scene out;
  out.num_layers = 1;
  out.sh_degree = scene.sh_degree;
  out.cost = scene.cost;
  for (std::uint32_t i : order) {
    Splat sp = scene.splats[i];
    sp.layer_id = 1;
    sp.splat_index = std::uint32_t(out.splats.size());
    out.splats.push_back(std::move(sp));
  }
  out.layer_targets = {std::uint32_t(out.splats.size())};
  return out;
}

bool same_splats(const Scene& a, const Scene& b) {
  if (a.splats.size() != b.splats.size()) return false;
  for (std::size_t i = 0; i < a.splats.size(); ++i) {
    const Splat& x = a.splats[i];
    const Splat& y = b.splats[i];
    if (x.position != y.position || x.scale != y.scale || x.rotation != y.rotation)
      return false;
    if (x.object_id != y.object_id || x.layer_id != y.layer_id) return false;
  }
  return true;
}

}  // namespace testutil
