#include "l3gs/viewport.hpp"

#include <algorithm>
#include <cmath>

namespace l3gs {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}

double wrap_angle(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0) r += 360.0;
  return r - 180.0;
}

double angular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

void normalize_angles(Viewport& vp) {
  vp.yaw = wrap_angle(vp.yaw);
  vp.roll = wrap_angle(vp.roll);
  vp.pitch = std::clamp(vp.pitch, -90.0, 90.0);
}

Eigen::Matrix3d rotation_world_from_camera(const Viewport& vp) {
  const double y = vp.yaw * kDegToRad;
  const double p = vp.pitch * kDegToRad;
  const double r = vp.roll * kDegToRad;
  Eigen::Matrix3d ry, rx, rz;
  ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
  rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
  return ry * rx * rz;
}

Camera make_camera(const Viewport& vp, double near_plane) {
  Camera cam;
  cam.world_from_cam = rotation_world_from_camera(vp);
  cam.origin = vp.position;
  cam.width = vp.width;
  cam.height = vp.height;
  cam.near_plane = near_plane;
  const double tan_half_y = std::tan(0.5 * vp.fov_y * kDegToRad);
  cam.fy = 0.5 * cam.height / tan_half_y;
  cam.fx = 0.5 * cam.width / (vp.aspect * tan_half_y);
  return cam;
}

Projection project_point(const Camera& cam, const Eigen::Vector3d& world) {
  const Eigen::Vector3d q = cam.to_camera(world);
  Projection pr;
  pr.depth = -q.z();
  pr.in_front = pr.depth > cam.near_plane;
  if (pr.in_front) {
    pr.u = cam.fx * q.x() / pr.depth + 0.5 * cam.width;
    pr.v = 0.5 * cam.height - cam.fy * q.y() / pr.depth;
  }
  return pr;
}

}  // namespace l3gs
