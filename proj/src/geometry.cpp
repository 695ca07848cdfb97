#include "objmap/geometry.hpp"

#include "objmap/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace objmap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::NoSegments: return "NoSegments";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::BadQuaternion: return "BadQuaternion";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Quat sign_canonical(const Quat& q) {
  if (q.w() < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

}  // namespace

Quat canonical(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::InvalidArgument, "quaternion with zero or non-finite norm");
  }
  return sign_canonical(Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n));
}

Quat quat_rot_z_deg(double deg) {
  const double half = 0.5 * deg * kDegToRad;
  return Quat(std::cos(half), 0.0, 0.0, std::sin(half));
}

Pose::Pose(const Vec3& t, const Quat& q) : t_(t), q_(canonical(q)) {}

Pose Pose::from_raw(const Vec3& t, const Quat& q) {
  Pose p;
  p.t_ = t;
  p.q_ = sign_canonical(q);
  return p;
}

Pose Pose::translation(double x, double y, double z) { return {Vec3(x, y, z), Quat::Identity()}; }

Pose Pose::rot_z_deg(double deg) { return {Vec3::Zero(), quat_rot_z_deg(deg)}; }

Pose Pose::from_yaw(const Vec3& t, double yaw_rad) {
  return {t, Quat(std::cos(0.5 * yaw_rad), 0.0, 0.0, std::sin(0.5 * yaw_rad))};
}

double Pose::yaw() const {
  const Mat3 r = rotation();
  return std::atan2(r(1, 0), r(0, 0));
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.q() * b.t() + a.t(), a.q() * b.q()};
}

Pose inverse(const Pose& p) {
  const Quat qi = p.q().conjugate();
  return {-(qi * p.t()), qi};
}

Vec3 apply(const Pose& p, const Vec3& x) { return p.q() * x + p.t(); }

double geodesic_deg(const Quat& a, const Quat& b) {
  // Angle of the relative rotation, computed with atan2 for accuracy near 0.
  const Quat rel = a.conjugate() * b;
  const double s = rel.vec().norm();
  const double c = std::abs(rel.w());
  return 2.0 * std::atan2(s, c) * kRadToDeg;
}

Quat slerp(const Quat& a, const Quat& b, double t) {
  double dot = a.dot(b);
  Quat target = b;
  if (dot < 0.0) {
    dot = -dot;
    target = Quat(-b.w(), -b.x(), -b.y(), -b.z());
  }
  double wa = 1.0 - t;
  double wb = t;
  if (dot < 1.0 - 1e-12) {
    const double theta = std::acos(std::min(dot, 1.0));
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  Quat out(wa * a.w() + wb * target.w(), wa * a.x() + wb * target.x(),
           wa * a.y() + wb * target.y(), wa * a.z() + wb * target.z());
  out.normalize();
  return out;
}

Quat weighted_quat_mean(std::span<const Quat> qs, std::span<const double> ws) {
  if (qs.empty()) throw Error(ErrorCode::EmptyInput, "weighted_quat_mean needs at least one quaternion");
  if (qs.size() != ws.size()) {
    throw Error(ErrorCode::InvalidArgument, "quaternion and weight counts differ");
  }
  for (double w : ws) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be positive");
  }
  Quat acc = qs[0];
  double cumulative = ws[0];
  for (std::size_t i = 1; i < qs.size(); ++i) {
    cumulative += ws[i];
    acc = slerp(acc, qs[i], ws[i] / cumulative);
  }
  return acc;
}

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::ConfigError, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ConfigError, "image size must be positive");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::ConfigError, "principal point outside the image");
  }
}

bool CameraModel::in_image(const Pixel& px) const {
  return px.u >= 0.0 && px.v >= 0.0 && px.u < static_cast<double>(width) &&
         px.v < static_cast<double>(height);
}

Pixel project(const CameraModel& cam, const Vec3& x_cam) {
  if (!(x_cam.z() > 0.0)) throw Error(ErrorCode::BehindCamera, "point at z=" + std::to_string(x_cam.z()));
  return {cam.fx * x_cam.x() / x_cam.z() + cam.cx, cam.fy * x_cam.y() / x_cam.z() + cam.cy};
}

Vec3 backproject(const CameraModel& cam, const Pixel& px, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorCode::InvalidDepth, "depth " + std::to_string(depth));
  }
  return {(px.u - cam.cx) / cam.fx * depth, (px.v - cam.cy) / cam.fy * depth, depth};
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 down(0.0, 0.0, -1.0);
  Vec3 x = down.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {eye, Quat(r)};
}

}  // namespace objmap
