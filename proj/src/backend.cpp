#include "objmap/backend.hpp"

#include "objmap/error.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace objmap {

using json = nlohmann::json;

Backend::Backend(BackendConfig cfg, std::map<std::uint16_t, ObjectModel> models)
    : cfg_(cfg), models_(std::move(models)), tracker_(cfg.tracker) {}

std::vector<FusedObject> Backend::fuse_frame(const FrameSet& fs) const {
  std::vector<FusedObject> fused;
  for (const auto& group : group_by_instance(fs, cfg_.fusion.gating_dist)) {
    FusedObject f = fuse(group, cfg_.fusion.weight_eps);
    bool has_segment = false;
    for (const auto& o : group) has_segment = has_segment || o.segment.has_value();
    if (has_segment) f.merged_cluster = merge_clusters(group);
    if (cfg_.icp == IcpMode::Backend && f.merged_cluster && f.merged_cluster->size() >= 10) {
      const auto mit = models_.find(f.class_id);
      if (mit != models_.end()) {
        PointCloudSegment seg;
        seg.frame = CloudFrame::World;
        seg.class_id = f.class_id;
        seg.points = *f.merged_cluster;
        const IcpResult icp = icp_refine(mit->second, seg, f.pose, cfg_.pose);
        f.pose = ground_project(icp.pose, mit->second, cfg_.pose.snap_ground_height);
      }
    }
    fused.push_back(std::move(f));
  }
  return fused;
}

SceneSnapshot Backend::process(const FrameSet& fs) {
  const std::vector<FusedObject> fused = fuse_frame(fs);
  tracker_.step(fused, fs.reference_us);

  SceneSnapshot snap;
  snap.frame = frames_++;
  snap.reference_us = fs.reference_us;
  snap.sensors = fs.sensors;
  snap.observations = fs.observations.size();
  snap.fused_objects = fused.size();
  for (const auto& t : tracker_.tracks()) {
    if (!t.confirmed(cfg_.tracker.min_hits_confirm)) continue;
    snap.tracks.push_back({t.id, t.class_id, t.pose, t.velocity, t.ellipsoid, t.hits, t.last_seen_us, t.sensors,
                           t.submap});
  }
  return snap;
}

json snapshot_to_json(const SceneSnapshot& snap, const std::map<std::uint16_t, ObjectModel>& models,
                      const std::string& submap_path) {
  json j;
  j["frame"] = snap.frame;
  j["timestamp_us"] = snap.reference_us;
  j["sensors"] = snap.sensors;
  j["observations"] = snap.observations;
  j["fused_objects"] = snap.fused_objects;
  j["objects"] = json::array();
  for (const auto& t : snap.tracks) {
    const auto mit = models.find(t.class_id);
    const Vec3& p = t.pose.t();
    const Quat& q = t.pose.q();
    json o = {{"track_id", t.id},
              {"class_id", t.class_id},
              {"class", mit == models.end() ? std::string("unknown") : mit->second.name},
              {"position", {p.x(), p.y(), p.z()}},
              {"orientation", {q.w(), q.x(), q.y(), q.z()}},
              {"yaw_deg", t.pose.yaw() * 180.0 / std::numbers::pi},
              {"velocity", {t.velocity.x(), t.velocity.y(), t.velocity.z()}},
              {"ellipsoid", t.ellipsoid},
              {"hits", t.hits},
              {"last_seen_us", t.last_seen_us},
              {"sensors", t.sensors}};
    if (t.submap && !submap_path.empty()) {
      char id[32];
      std::snprintf(id, sizeof(id), "%06llu", static_cast<unsigned long long>(t.id));
      std::string ref = submap_path;
      const auto at = ref.find("{track}");
      if (at != std::string::npos) ref.replace(at, 7, id);
      o["submap"] = {{"path", ref}, {"occupied_voxels", t.submap->occupied_indices().size()}};
    }
    j["objects"].push_back(std::move(o));
  }
  return j;
}

}  // namespace objmap
