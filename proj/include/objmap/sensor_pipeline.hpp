#pragma once

#include "objmap/fusion.hpp"
#include "objmap/object_model.hpp"
#include "objmap/pose_estimation.hpp"
#include "objmap/segmentation.hpp"
#include "objmap/simulator.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace objmap {

enum class IcpMode { None, Local, Backend };

std::string to_string(IcpMode mode);
/// "none" | "local" | "backend"; ConfigError otherwise.
IcpMode parse_icp_mode(const std::string& text);

struct SensorConfig {
  PoseConfig pose;
  SegmentationConfig segmentation;
  IcpMode icp = IcpMode::Local;
  bool include_segments = false;
  std::size_t max_segment_points = 250;  // attached segments are thinned to this size
  std::uint64_t seed = 1;
};

/// Evenly strided subset of at most `max_points` points, in input order.
PointCloudSegment downsample(const PointCloudSegment& seg, std::size_t max_points);

/// Per-camera processing: class clouds -> instance segments, keypoints ->
/// PnP poses -> skeletons, greedy skeleton/segment association, optional
/// local ICP, observation assembly.
class SensorPipeline {
 public:
  SensorPipeline(std::uint16_t sensor_id, CameraModel cam, std::map<std::uint16_t, ObjectModel> models,
                 SensorConfig cfg);

  SensorFrame process(std::uint64_t frame_index, std::uint64_t timestamp_us,
                      std::span<const SimDetection> detections) const;

  std::uint16_t sensor_id() const { return sensor_id_; }

 private:
  std::uint16_t sensor_id_;
  CameraModel cam_;
  std::map<std::uint16_t, ObjectModel> models_;
  SensorConfig cfg_;
};

}  // namespace objmap
