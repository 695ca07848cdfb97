#pragma once

#include "objmap/geometry.hpp"
#include "objmap/point_cloud.hpp"

#include <cstdint>
#include <vector>

namespace objmap {

/// Depth image with a per-pixel semantic class mask. Depth 0 marks an invalid
/// pixel. `rgb` is optional (empty means no color).
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint16_t> class_mask;
  std::vector<std::uint32_t> rgb;
  std::uint64_t timestamp_us = 0;
  std::uint16_t sensor_id = 0;
};

struct SegmentationConfig {
  double cluster_tolerance = 0.10;
  std::size_t min_cluster_points = 50;
  std::size_t sor_k = 20;
  double sor_stddev_mult = 2.0;
};

/// One camera-frame point per pixel whose mask equals `class_id` and whose
/// depth is positive and finite.
PointCloudSegment depth_to_cloud(const DepthFrame& frame, const CameraModel& cam, std::uint16_t class_id);

/// Connected components of the "distance <= tol" graph, smaller than
/// `min_points` dropped, sorted by descending size. Points inside a cluster
/// keep their input order.
std::vector<PointCloudSegment> euclidean_cluster(const PointCloudSegment& cloud, double tol,
                                                 std::size_t min_points);

/// Statistical outlier removal over the mean distance to the k nearest
/// neighbors. Clouds with at most k points are returned unchanged.
PointCloudSegment sor_filter(const PointCloudSegment& cloud, std::size_t k, double stddev_mult);

/// Per-point mean k-nearest-neighbor distance (the statistic sor_filter
/// thresholds).
std::vector<double> mean_knn_distances(const PointCloudSegment& cloud, std::size_t k);

/// Cluster then filter each cluster; the sensor-side segmentation chain.
std::vector<PointCloudSegment> segment_instances(const PointCloudSegment& class_cloud,
                                                 const SegmentationConfig& cfg);

}  // namespace objmap
