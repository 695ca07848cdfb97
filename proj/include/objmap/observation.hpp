#pragma once

#include "objmap/geometry.hpp"
#include "objmap/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace objmap {

/// Per-sensor result for one object instance, in the world frame. The scalar
/// fields use the precision they travel with on the wire.
struct ObjectObservation {
  std::uint64_t timestamp_us = 0;
  std::uint16_t sensor_id = 0;
  std::uint16_t class_id = 0;
  Pose pose;
  float assoc_dist = 0.0f;                 // mean keypoint-to-segment distance (m)
  std::array<float, 3> ellipsoid{};        // semi-axes (m), descending
  std::optional<PointCloudSegment> segment;
};

}  // namespace objmap
