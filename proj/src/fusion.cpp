#include "objmap/fusion.hpp"

#include "objmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace objmap {

FrameSynchronizer::FrameSynchronizer(std::span<const std::uint16_t> sensors, double window_ms)
    : window_us_(static_cast<std::uint64_t>(std::llround(std::max(0.0, window_ms) * 1000.0))) {
  for (auto s : sensors) queues_[s];
}

void FrameSynchronizer::push(SensorFrame frame) {
  auto& q = queues_[frame.sensor_id];
  if (!q.frames.empty() && frame.timestamp_us < q.frames.back().timestamp_us) {
    throw Error(ErrorCode::InvalidArgument, "sensor frames must arrive in timestamp order");
  }
  q.frames.push_back(std::move(frame));
}

void FrameSynchronizer::finish(std::uint16_t sensor_id) { queues_[sensor_id].finished = true; }

bool FrameSynchronizer::ready() const {
  bool any = false;
  for (const auto& [id, q] : queues_) {
    if (q.frames.empty() && !q.finished) return false;
    any = any || !q.frames.empty();
  }
  return any;
}

FrameSet FrameSynchronizer::take_one() {
  std::uint64_t ref = UINT64_MAX;
  for (const auto& [id, q] : queues_) {
    if (!q.frames.empty()) ref = std::min(ref, q.frames.front().timestamp_us);
  }
  FrameSet fs;
  fs.reference_us = ref;
  // std::map iterates sensors in ascending id order.
  for (auto& [id, q] : queues_) {
    if (q.frames.empty() || q.frames.front().timestamp_us - ref > window_us_) continue;
    SensorFrame f = std::move(q.frames.front());
    q.frames.pop_front();
    fs.sensors.push_back(id);
    for (auto& o : f.observations) fs.observations.push_back(std::move(o));
  }
  return fs;
}

std::vector<FrameSet> FrameSynchronizer::pop_ready() {
  std::vector<FrameSet> out;
  while (ready()) out.push_back(take_one());
  return out;
}

std::vector<FrameSet> FrameSynchronizer::flush() {
  std::vector<FrameSet> out;
  auto pending = [&] {
    return std::any_of(queues_.begin(), queues_.end(), [](const auto& kv) { return !kv.second.frames.empty(); });
  };
  while (pending()) out.push_back(take_one());
  return out;
}

std::vector<FrameSet> synchronize(std::span<const std::vector<ObjectObservation>> streams, double window_ms) {
  std::vector<std::uint16_t> ids;
  std::vector<SensorFrame> frames;
  for (const auto& stream : streams) {
    for (const auto& obs : stream) {
      if (frames.empty() || frames.back().sensor_id != obs.sensor_id ||
          frames.back().timestamp_us != obs.timestamp_us) {
        frames.push_back({obs.sensor_id, obs.timestamp_us, {}});
        ids.push_back(obs.sensor_id);
      }
      frames.back().observations.push_back(obs);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  FrameSynchronizer sync(ids, window_ms);
  for (auto& f : frames) sync.push(std::move(f));
  return sync.flush();
}

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

std::vector<std::vector<ObjectObservation>> group_by_instance(const FrameSet& fs, double gating_dist) {
  const auto& obs = fs.observations;
  std::vector<std::size_t> parent(obs.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      if (obs[i].class_id != obs[j].class_id) continue;
      if ((obs[i].pose.t() - obs[j].pose.t()).norm() > gating_dist) continue;
      const std::size_t a = find_root(parent, i);
      const std::size_t b = find_root(parent, j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  // Groups ordered by their first member.
  std::vector<std::vector<ObjectObservation>> groups;
  std::vector<std::size_t> slot(obs.size(), SIZE_MAX);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::size_t r = find_root(parent, i);
    if (slot[r] == SIZE_MAX) {
      slot[r] = groups.size();
      groups.emplace_back();
    }
    groups[slot[r]].push_back(obs[i]);
  }
  return groups;
}

FusedObject fuse(std::span<const ObjectObservation> group, double weight_eps) {
  if (group.empty()) throw Error(ErrorCode::EmptyGroup, "fuse needs at least one observation");
  for (const auto& o : group) {
    if (o.class_id != group.front().class_id) throw Error(ErrorCode::InvalidArgument, "mixed classes in one group");
  }
  std::vector<const ObjectObservation*> sorted;
  for (const auto& o : group) sorted.push_back(&o);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->sensor_id < b->sensor_id; });

  FusedObject out;
  out.class_id = group.front().class_id;
  for (const auto* o : sorted) out.sensors.push_back(o->sensor_id);
  auto weight_of = [&](const ObjectObservation& o) {
    return 1.0 / std::max(static_cast<double>(o.assoc_dist), weight_eps);
  };
  if (sorted.size() == 1) {
    const auto& o = *sorted.front();
    out.pose = o.pose;
    for (std::size_t i = 0; i < 3; ++i) out.ellipsoid[i] = o.ellipsoid[i];
    out.total_weight = weight_of(o);
    return out;
  }

  std::vector<Quat> qs;
  std::vector<double> ws;
  Vec3 pos = Vec3::Zero();
  std::array<double, 3> ell{};
  double total = 0.0;
  for (const auto* o : sorted) {
    const double w = weight_of(*o);
    total += w;
    pos += w * o->pose.t();
    for (std::size_t i = 0; i < 3; ++i) ell[i] += w * o->ellipsoid[i];
    qs.push_back(o->pose.q());
    ws.push_back(w);
  }
  out.pose = Pose(pos / total, weighted_quat_mean(qs, ws));
  for (std::size_t i = 0; i < 3; ++i) out.ellipsoid[i] = ell[i] / total;
  out.total_weight = total;
  return out;
}

std::vector<CloudPoint> merge_clusters(std::span<const ObjectObservation> group) {
  std::vector<const ObjectObservation*> sorted;
  for (const auto& o : group) {
    if (o.segment) sorted.push_back(&o);
  }
  if (sorted.empty()) throw Error(ErrorCode::NoSegments, "no observation in the group carries a segment");
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->sensor_id < b->sensor_id; });
  std::vector<CloudPoint> out;
  for (const auto* o : sorted) out.insert(out.end(), o->segment->points.begin(), o->segment->points.end());
  return out;
}

}  // namespace objmap
