#pragma once

#include "objmap/geometry.hpp"
#include "objmap/observation.hpp"
#include "objmap/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace objmap {

/// Everything one sensor reported for one capture instant (possibly nothing).
struct SensorFrame {
  std::uint16_t sensor_id = 0;
  std::uint64_t timestamp_us = 0;
  std::vector<ObjectObservation> observations;
};

/// Observations from all sensors that belong to one synchronized instant.
struct FrameSet {
  std::uint64_t reference_us = 0;
  std::vector<std::uint16_t> sensors;  // sensors that contributed a frame
  std::vector<ObjectObservation> observations;
};

struct FusedObject {
  std::uint16_t class_id = 0;
  Pose pose;
  std::array<double, 3> ellipsoid{};
  std::vector<std::uint16_t> sensors;
  double total_weight = 0.0;
  std::optional<std::vector<CloudPoint>> merged_cluster;
};

struct FusionConfig {
  double sync_window_ms = 250.0;
  double gating_dist = 0.5;
  double weight_eps = 1e-3;
};

/// Streaming timestamp synchronizer. A frame-set is emitted once every
/// unfinished sensor has a queued frame, so arrival order across sensors does
/// not influence the grouping.
class FrameSynchronizer {
 public:
  FrameSynchronizer(std::span<const std::uint16_t> sensors, double window_ms);

  void push(SensorFrame frame);
  void finish(std::uint16_t sensor_id);

  /// Frame-sets that can no longer change, in reference-time order.
  std::vector<FrameSet> pop_ready();
  /// Everything still queued, regardless of missing sensors.
  std::vector<FrameSet> flush();

 private:
  struct Queue {
    std::deque<SensorFrame> frames;
    bool finished = false;
  };
  bool ready() const;
  FrameSet take_one();

  std::map<std::uint16_t, Queue> queues_;
  std::uint64_t window_us_;
};

/// Batch grouping of per-sensor observation streams (each sorted by time).
/// Observations sharing a sensor and timestamp form one sensor frame.
std::vector<FrameSet> synchronize(std::span<const std::vector<ObjectObservation>> streams, double window_ms);

/// Single-linkage grouping of same-class observations within gating_dist.
std::vector<std::vector<ObjectObservation>> group_by_instance(const FrameSet& fs, double gating_dist);

/// Weighted multi-view fusion with weights 1 / max(assoc_dist, eps).
FusedObject fuse(std::span<const ObjectObservation> group, double weight_eps = 1e-3);

/// Concatenation of the attached world-frame segments, ordered by sensor id.
std::vector<CloudPoint> merge_clusters(std::span<const ObjectObservation> group);

}  // namespace objmap
