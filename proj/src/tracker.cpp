#include "objmap/tracker.hpp"

#include "objmap/error.hpp"

#include <algorithm>
#include <tuple>

namespace objmap {

namespace {

double seconds_between(std::uint64_t from_us, std::uint64_t to_us) {
  return (static_cast<double>(to_us) - static_cast<double>(from_us)) * 1e-6;
}

}  // namespace

void TrackerConfig::validate() const {
  if (!(tau_track > 0.0) || window == 0 || !(max_unseen_s > 0.0) || min_hits_confirm == 0 ||
      !(submap_resolution > 0.0) || tau_occ == 0) {
    throw Error(ErrorCode::ConfigError, "tracker configuration values must be positive");
  }
}

Vec3 window_velocity(const std::deque<std::pair<std::uint64_t, Vec3>>& history) {
  if (history.size() < 2) return Vec3::Zero();
  const double dt = seconds_between(history.front().first, history.back().first);
  if (!(dt > 0.0)) return Vec3::Zero();
  return (history.back().second - history.front().second) / dt;
}

Vec3 predict(const TrackedObject& track, std::uint64_t t_now_us) {
  const double dt = std::max(0.0, seconds_between(track.last_seen_us, t_now_us));
  return track.pose.t() + track.velocity * dt;
}

TrackAssociation associate(std::span<const TrackedObject> tracks, std::span<const FusedObject> objects,
                           std::uint64_t t_now_us, double tau_track) {
  struct Candidate {
    double dist;
    std::size_t object;
    std::size_t track;
  };
  std::vector<Candidate> cands;
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    const Vec3 pred = predict(tracks[ti], t_now_us);
    for (std::size_t oi = 0; oi < objects.size(); ++oi) {
      if (objects[oi].class_id != tracks[ti].class_id) continue;
      const double d = (objects[oi].pose.t() - pred).norm();
      if (d <= tau_track) cands.push_back({d, oi, ti});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.object, a.track) < std::tie(b.dist, b.object, b.track);
  });
  std::vector<bool> track_used(tracks.size(), false);
  std::vector<bool> object_used(objects.size(), false);
  TrackAssociation out;
  for (const auto& c : cands) {
    if (track_used[c.track] || object_used[c.object]) continue;
    track_used[c.track] = true;
    object_used[c.object] = true;
    out.matches.emplace_back(c.track, c.object);
  }
  std::sort(out.matches.begin(), out.matches.end());
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    if (!object_used[oi]) out.unmatched_objects.push_back(oi);
  }
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    if (!track_used[ti]) out.unmatched_tracks.push_back(ti);
  }
  return out;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Tracker::integrate(TrackedObject& track, const FusedObject& obj) const {
  if (!cfg_.integrate_submaps || !obj.merged_cluster) return;
  if (!track.submap) track.submap.emplace(cfg_.submap_resolution, cfg_.tau_occ);
  track.submap->integrate(*obj.merged_cluster, obj.pose);
}

void Tracker::update(const TrackAssociation& assoc, std::span<const FusedObject> objects, std::uint64_t t_now_us) {
  for (const auto& [ti, oi] : assoc.matches) {
    TrackedObject& t = tracks_.at(ti);
    const FusedObject& o = objects[oi];
    t.pose = o.pose;
    t.history.emplace_back(t_now_us, o.pose.t());
    while (t.history.size() > cfg_.window) t.history.pop_front();
    t.velocity = window_velocity(t.history);
    t.last_seen_us = t_now_us;
    ++t.hits;
    t.ellipsoid = o.ellipsoid;
    t.sensors = o.sensors;
    integrate(t, o);
  }
  for (std::size_t oi : assoc.unmatched_objects) {
    const FusedObject& o = objects[oi];
    TrackedObject t;
    t.id = next_id_++;
    t.class_id = o.class_id;
    t.pose = o.pose;
    t.history.emplace_back(t_now_us, o.pose.t());
    t.last_seen_us = t_now_us;
    t.hits = 1;
    t.ellipsoid = o.ellipsoid;
    t.sensors = o.sensors;
    integrate(t, o);
    tracks_.push_back(std::move(t));
  }
}

void Tracker::cleanup(std::uint64_t t_now_us) {
  std::erase_if(tracks_, [&](const TrackedObject& t) {
    return seconds_between(t.last_seen_us, t_now_us) > cfg_.max_unseen_s;
  });
}

TrackAssociation Tracker::step(std::span<const FusedObject> objects, std::uint64_t t_now_us) {
  TrackAssociation assoc = associate(tracks_, objects, t_now_us, cfg_.tau_track);
  update(assoc, objects, t_now_us);
  cleanup(t_now_us);
  return assoc;
}

std::vector<TrackedObject> Tracker::confirmed_tracks() const {
  std::vector<TrackedObject> out;
  for (const auto& t : tracks_) {
    if (t.confirmed(cfg_.min_hits_confirm)) out.push_back(t);
  }
  return out;
}

}  // namespace objmap
