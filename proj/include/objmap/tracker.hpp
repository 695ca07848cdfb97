#pragma once

#include "objmap/fusion.hpp"
#include "objmap/geometry.hpp"
#include "objmap/submap.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace objmap {

struct TrackerConfig {
  double tau_track = 0.75;      // m
  std::size_t window = 5;       // frames in the velocity window
  double max_unseen_s = 10.0;
  std::uint32_t min_hits_confirm = 2;
  bool integrate_submaps = false;
  double submap_resolution = 0.05;
  std::uint32_t tau_occ = 2;

  void validate() const;
};

struct TrackedObject {
  std::uint64_t id = 0;
  std::uint16_t class_id = 0;
  Pose pose;
  std::deque<std::pair<std::uint64_t, Vec3>> history;  // (timestamp us, position), oldest first
  Vec3 velocity = Vec3::Zero();                        // m/s
  std::uint64_t last_seen_us = 0;
  std::uint32_t hits = 0;
  std::array<double, 3> ellipsoid{};
  std::vector<std::uint16_t> sensors;  // contributors of the latest update
  std::optional<VoxelSubMap> submap;

  bool confirmed(std::uint32_t min_hits) const { return hits >= min_hits; }
};

/// Constant-velocity extrapolation from the last observation.
Vec3 predict(const TrackedObject& track, std::uint64_t t_now_us);

/// Velocity between the window endpoints; zero with fewer than two entries.
Vec3 window_velocity(const std::deque<std::pair<std::uint64_t, Vec3>>& history);

struct TrackAssociation {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track index, object index)
  std::vector<std::size_t> unmatched_objects;
  std::vector<std::size_t> unmatched_tracks;
};

/// One-to-one matching, globally smallest predicted distance first, same
/// class only, distances above tau_track rejected.
TrackAssociation associate(std::span<const TrackedObject> tracks, std::span<const FusedObject> objects,
                           std::uint64_t t_now_us, double tau_track);

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  void update(const TrackAssociation& assoc, std::span<const FusedObject> objects, std::uint64_t t_now_us);
  /// Drops tracks unseen for longer than max_unseen_s.
  void cleanup(std::uint64_t t_now_us);
  /// associate + update + cleanup for one frame-set.
  TrackAssociation step(std::span<const FusedObject> objects, std::uint64_t t_now_us);

  const std::vector<TrackedObject>& tracks() const { return tracks_; }
  std::vector<TrackedObject> confirmed_tracks() const;
  const TrackerConfig& config() const { return cfg_; }

 private:
  void integrate(TrackedObject& track, const FusedObject& obj) const;

  TrackerConfig cfg_;
  std::vector<TrackedObject> tracks_;
  std::uint64_t next_id_ = 1;
};

}  // namespace objmap
