#pragma once

#include <Eigen/Core>

namespace l3gs {

/// 6DoF camera pose plus intrinsics. Angles are degrees; yaw rotates about
/// world +y, pitch about the camera's x (right) axis, roll about the view
/// axis, applied intrinsically in that order. The camera looks down its
/// local -z with +x right and +y up. Yaw/roll live in [-180, 180), pitch
/// in [-90, 90].
struct Viewport {
  Eigen::Vector3d position{0.0, 0.0, 0.0};
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double fov_y = 90.0;  // vertical field of view, degrees
  double aspect = 1.0;  // width / height
  int width = 1024;
  int height = 1024;
  double timestamp = 0.0;
};

/// Maps any angle in degrees to [-180, 180).
double wrap_angle(double deg);

/// |a - b| on the circle, in [0, 180].
double angular_distance(double a, double b);

/// Wraps yaw and roll to [-180, 180); pitch is clamped to [-90, 90].
void normalize_angles(Viewport& vp);

/// Camera-to-world rotation; forward direction is R * (0,0,-1).
Eigen::Matrix3d rotation_world_from_camera(const Viewport& vp);

struct Camera {
  Eigen::Matrix3d world_from_cam;  // column axes: right, up, -forward
  Eigen::Vector3d origin;
  double fx = 0.0, fy = 0.0;  // focal lengths in pixels
  double width = 0.0, height = 0.0;
  double near_plane = 0.01;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return world_from_cam.transpose() * (world - origin);
  }
};

Camera make_camera(const Viewport& vp, double near_plane = 0.01);

struct Projection {
  double u = 0.0, v = 0.0;  // pixel coordinates, origin top-left
  double depth = 0.0;       // distance along the view axis
  bool in_front = false;    // depth > near plane
};

/// Perspective projection of a world-space point.
Projection project_point(const Camera& cam, const Eigen::Vector3d& world);

}  // namespace l3gs
