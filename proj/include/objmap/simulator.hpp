#pragma once

#include "objmap/pose_estimation.hpp"
#include "objmap/scenario.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace objmap {

struct GroundTruthObject {
  std::uint32_t index = 0;  // position in ScenarioConfig::objects
  std::uint16_t class_id = 0;
  std::string model;
  Pose pose;  // world
};

struct CameraVisibility {
  std::uint16_t camera = 0;
  std::uint32_t object = 0;
  std::vector<std::size_t> visible_keypoints;  // in front, inside the image, unoccluded
  double fraction = 0.0;  // share of front-facing surface samples that are visible
};

struct GroundTruthFrame {
  std::size_t index = 0;
  std::uint64_t timestamp_us = 0;
  std::vector<GroundTruthObject> objects;
  std::vector<CameraVisibility> visibility;  // camera-major, then object
};

/// Object pose at time t: linear in position, shortest arc in yaw, clamped
/// to the first and last waypoint, resting on the ground plane.
Pose trajectory_pose(const ScenarioObject& obj, const ObjectModel& model, double t);

/// Ground truth at the scenario frame rate. ConfigError on invalid input.
std::vector<GroundTruthFrame> generate(const ScenarioConfig& cfg);

/// What one camera reports for one object: the raw keypoint detection (absent
/// when fewer than four keypoints are valid) and the visible surface samples
/// in camera coordinates.
struct SimDetection {
  std::uint32_t object = 0;
  std::uint16_t class_id = 0;
  std::optional<KeypointSet2D> keypoints;
  PointCloudSegment segment;
};

/// Noisy per-camera measurements of one ground-truth frame. Randomness is
/// drawn from streams derived from (seed, frame, camera, object), so the
/// result does not depend on call order.
std::vector<SimDetection> observe(const ScenarioConfig& cfg, const GroundTruthFrame& frame, std::size_t camera_index);

/// Whether the open segment a -> b crosses the box (touching the end points
/// does not count).
bool segment_hits_box(const Vec3& a, const Vec3& b, const Aabb& box);

}  // namespace objmap
