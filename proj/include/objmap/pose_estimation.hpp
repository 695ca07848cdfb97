#pragma once

#include "objmap/geometry.hpp"
#include "objmap/object_model.hpp"
#include "objmap/observation.hpp"
#include "objmap/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace objmap {

/// Detected 2D keypoints of one object instance, indexed like the model
/// keypoints.
struct KeypointSet2D {
  std::uint16_t class_id = 0;
  std::vector<Pixel> points;
  std::vector<double> confidences;
  std::vector<bool> valid;

  std::size_t valid_count() const;
};

/// Model keypoints placed by a pose estimate.
struct Skeleton3D {
  std::uint16_t class_id = 0;
  std::vector<Vec3> keypoints;
  Pose pose;
};

struct PoseConfig {
  double tau_dist = 0.30;
  int ransac_iters = 100;
  double ransac_reproj_thresh = 8.0;  // px
  int icp_max_iters = 50;
  double icp_corr_dist = 0.25;
  double icp_eps = 1e-6;
  std::uint64_t seed = 0;  // RANSAC sampling; callers vary it per frame
  bool snap_ground_height = true;

  void validate() const;
};

struct PnpResult {
  Pose pose;  // object in camera coordinates
  std::vector<std::size_t> inliers;
  double rms_reproj = 0.0;  // px, over inliers
};

/// Robust PnP from keypoint correspondences. Minimal samples of four points
/// are solved by Levenberg-Marquardt on the reprojection error from an
/// upright-object yaw sweep; the best consensus set is re-fitted jointly.
PnpResult pnp_ransac(const KeypointSet2D& kps, const ObjectModel& model, const CameraModel& cam,
                     const PoseConfig& cfg);

/// Reprojection residual norms (px) of every model keypoint under `cam_from_obj`;
/// +inf for points behind the camera.
std::vector<double> reprojection_errors(const KeypointSet2D& kps, const ObjectModel& model, const CameraModel& cam,
                                        const Pose& cam_from_obj);

/// Drops roll and pitch (keeps yaw) and optionally sets the height to the
/// model's resting offset.
Pose ground_project(const Pose& world_pose, const ObjectModel& model, bool snap_height = true);

Skeleton3D skeleton_from_pose(const ObjectModel& model, const Pose& pose);

/// Mean over skeleton keypoints of the distance to the nearest segment point.
double assoc_distance(const Skeleton3D& skeleton, const PointCloudSegment& segment);

struct Association {
  std::size_t segment = 0;
  std::size_t skeleton = 0;
  double distance = 0.0;
};

/// Segments in descending size order each claim the closest unclaimed
/// skeleton of their class; pairs farther than tau_dist are dropped.
std::vector<Association> greedy_associate(std::span<const Skeleton3D> skeletons,
                                          std::span<const PointCloudSegment> segments, double tau_dist);

struct IcpResult {
  Pose pose;
  double rmse = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t inliers = 0;
};

/// Point-to-point ICP of the model cloud (placed at the evolving pose) against
/// a world-frame segment. Every segment point is matched to its nearest model
/// point; matches farther than icp_corr_dist are ignored.
IcpResult icp_refine(const ObjectModel& model, const PointCloudSegment& segment, const Pose& init,
                     const PoseConfig& cfg);

/// Semi-axes of the covariance ellipsoid (square roots of the eigenvalues of
/// the population covariance), descending.
std::array<double, 3> ellipsoid_axes(std::span<const Vec3> points);

ObjectObservation build_observation(const Pose& pose, const PointCloudSegment& segment, double assoc_dist,
                                    std::uint16_t sensor_id, std::uint64_t timestamp_us, bool include_segment);

}  // namespace objmap
