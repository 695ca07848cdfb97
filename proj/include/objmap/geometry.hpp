#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace objmap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Rigid transform: x' = q * x + t. The quaternion is kept unit length with
/// w >= 0 so that two equal rotations always compare equal coefficient-wise.
class Pose {
 public:
  Pose() : t_(Vec3::Zero()), q_(Quat::Identity()) {}
  Pose(const Vec3& t, const Quat& q);

  /// Accepts an already normalized quaternion verbatim (only the sign is
  /// canonicalized). Used by decoders that must round-trip bit-exactly.
  static Pose from_raw(const Vec3& t, const Quat& q);

  static Pose identity() { return {}; }
  static Pose translation(double x, double y, double z);
  static Pose rot_z_deg(double deg);
  static Pose from_yaw(const Vec3& t, double yaw_rad);

  const Vec3& t() const { return t_; }
  const Quat& q() const { return q_; }
  Mat3 rotation() const { return q_.toRotationMatrix(); }

  /// Heading about world +z (ZYX convention).
  double yaw() const;

 private:
  Vec3 t_;
  Quat q_;
};

/// a * b: applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
Vec3 apply(const Pose& p, const Vec3& x);

/// Unit quaternion with w >= 0.
Quat canonical(const Quat& q);
Quat quat_rot_z_deg(double deg);

/// Rotation angle between two orientations, invariant to the quaternion sign.
/// Result in [0, 180].
double geodesic_deg(const Quat& a, const Quat& b);

/// Shortest-arc spherical interpolation; t = 0 gives a, t = 1 gives b (up to
/// sign when b lies in the opposite hemisphere).
Quat slerp(const Quat& a, const Quat& b, double t);

/// Incremental slerp chain: acc <- slerp(acc, q_i, w_i / W_i) with W_i the
/// running weight sum. Callers order the inputs (sensor id ascending).
Quat weighted_quat_mean(std::span<const Quat> qs, std::span<const double> ws);

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Undistorted pinhole camera. `extrinsic` maps camera coordinates to world
/// coordinates (the pose of the camera in the world).
struct CameraModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  Pose extrinsic;

  void validate() const;
  bool in_image(const Pixel& px) const;
  Pose world_to_camera() const { return inverse(extrinsic); }
};

Pixel project(const CameraModel& cam, const Vec3& x_cam);
Vec3 backproject(const CameraModel& cam, const Pixel& px, double depth);

/// Camera pose looking from `eye` toward `target` with image-down roughly
/// aligned to world -z.
Pose look_at(const Vec3& eye, const Vec3& target);

}  // namespace objmap
