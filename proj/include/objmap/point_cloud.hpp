#pragma once

#include "objmap/geometry.hpp"

#include <cstdint>
#include <vector>

namespace objmap {

struct CloudPoint {
  Vec3 xyz = Vec3::Zero();
  std::uint32_t rgb = 0;
  float confidence = 1.0f;
  std::uint32_t class_id = 0;

  bool operator==(const CloudPoint&) const = default;
};

enum class CloudFrame : std::uint8_t { Camera, World };

/// One geometric cluster of points carrying a single semantic class.
struct PointCloudSegment {
  std::vector<CloudPoint> points;
  CloudFrame frame = CloudFrame::Camera;
  std::uint64_t timestamp_us = 0;
  std::uint16_t sensor_id = 0;
  std::uint16_t class_id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Same metadata, no points.
  PointCloudSegment empty_copy() const {
    PointCloudSegment s;
    s.frame = frame;
    s.timestamp_us = timestamp_us;
    s.sensor_id = sensor_id;
    s.class_id = class_id;
    return s;
  }
};

/// Rigidly transforms every point; `new_frame` tags the result.
PointCloudSegment transform_segment(const PointCloudSegment& seg, const Pose& pose, CloudFrame new_frame);

std::vector<Vec3> positions(const PointCloudSegment& seg);

}  // namespace objmap
