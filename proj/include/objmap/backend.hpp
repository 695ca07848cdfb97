#pragma once

#include "objmap/fusion.hpp"
#include "objmap/object_model.hpp"
#include "objmap/pose_estimation.hpp"
#include "objmap/sensor_pipeline.hpp"
#include "objmap/tracker.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace objmap {

struct BackendConfig {
  FusionConfig fusion;
  TrackerConfig tracker;
  PoseConfig pose;  // ICP parameters for backend refinement
  IcpMode icp = IcpMode::Local;
};

struct TrackSnapshot {
  std::uint64_t id = 0;
  std::uint16_t class_id = 0;
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  std::array<double, 3> ellipsoid{};
  std::uint32_t hits = 0;
  std::uint64_t last_seen_us = 0;
  std::vector<std::uint16_t> sensors;
  std::optional<VoxelSubMap> submap;
};

/// Confirmed tracks after one frame-set.
struct SceneSnapshot {
  std::size_t frame = 0;
  std::uint64_t reference_us = 0;
  std::vector<std::uint16_t> sensors;
  std::size_t observations = 0;
  std::size_t fused_objects = 0;
  std::vector<TrackSnapshot> tracks;
};

/// Fusion thread state: grouping and fusion of each frame-set, optional ICP
/// on the merged cluster, then tracking.
class Backend {
 public:
  Backend(BackendConfig cfg, std::map<std::uint16_t, ObjectModel> models);

  /// Fused objects of one frame-set (no tracker side effects).
  std::vector<FusedObject> fuse_frame(const FrameSet& fs) const;
  SceneSnapshot process(const FrameSet& fs);

  const Tracker& tracker() const { return tracker_; }

 private:
  BackendConfig cfg_;
  std::map<std::uint16_t, ObjectModel> models_;
  Tracker tracker_;
  std::size_t frames_ = 0;
};

/// `submap_path` (may be empty) is recorded as the sub-map reference of each
/// track that has one; "{track}" is replaced by the zero-padded track id.
nlohmann::json snapshot_to_json(const SceneSnapshot& snap, const std::map<std::uint16_t, ObjectModel>& models,
                                const std::string& submap_path = {});

}  // namespace objmap
