#include "objmap/sensor_pipeline.hpp"

#include "objmap/error.hpp"
#include "objmap/rng.hpp"

namespace objmap {

std::string to_string(IcpMode mode) {
  switch (mode) {
    case IcpMode::None:
      return "none";
    case IcpMode::Local:
      return "local";
    case IcpMode::Backend:
      return "backend";
  }
  return "none";
}

IcpMode parse_icp_mode(const std::string& text) {
  if (text == "none" || text == "pnp") return IcpMode::None;
  if (text == "local" || text == "icp_local") return IcpMode::Local;
  if (text == "backend" || text == "icp_backend") return IcpMode::Backend;
  throw Error(ErrorCode::ConfigError, "unknown ICP mode '" + text + "' (expected none, local or backend)");
}

PointCloudSegment downsample(const PointCloudSegment& seg, std::size_t max_points) {
  if (seg.size() <= max_points) return seg;
  PointCloudSegment out = seg.empty_copy();
  out.points.reserve(max_points);
  for (std::size_t i = 0; i < max_points; ++i) out.points.push_back(seg.points[i * seg.size() / max_points]);
  return out;
}

SensorPipeline::SensorPipeline(std::uint16_t sensor_id, CameraModel cam, std::map<std::uint16_t, ObjectModel> models,
                               SensorConfig cfg)
    : sensor_id_(sensor_id), cam_(std::move(cam)), models_(std::move(models)), cfg_(cfg) {
  cam_.validate();
  cfg_.pose.validate();
}

SensorFrame SensorPipeline::process(std::uint64_t frame_index, std::uint64_t timestamp_us,
                                    std::span<const SimDetection> detections) const {
  SensorFrame frame;
  frame.sensor_id = sensor_id_;
  frame.timestamp_us = timestamp_us;

  // Depth evidence carries no instance identity: pool it per class, then
  // split it again geometrically.
  std::map<std::uint16_t, PointCloudSegment> class_clouds;
  for (const auto& det : detections) {
    if (det.segment.empty()) continue;
    auto [it, inserted] = class_clouds.try_emplace(det.class_id);
    PointCloudSegment& cloud = it->second;
    if (inserted) {
      cloud.frame = CloudFrame::World;
      cloud.timestamp_us = timestamp_us;
      cloud.sensor_id = sensor_id_;
      cloud.class_id = det.class_id;
    }
    const PointCloudSegment world = transform_segment(det.segment, cam_.extrinsic, CloudFrame::World);
    cloud.points.insert(cloud.points.end(), world.points.begin(), world.points.end());
  }
  std::vector<PointCloudSegment> segments;
  for (const auto& [cls, cloud] : class_clouds) {
    for (auto& s : segment_instances(cloud, cfg_.segmentation)) segments.push_back(std::move(s));
  }

  std::vector<Skeleton3D> skeletons;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const SimDetection& det = detections[d];
    if (!det.keypoints) continue;
    const auto mit = models_.find(det.class_id);
    if (mit == models_.end()) continue;
    PoseConfig pc = cfg_.pose;
    pc.seed = derive_seed(cfg_.seed, {sensor_id_, frame_index, d});
    try {
      const PnpResult pnp = pnp_ransac(*det.keypoints, mit->second, cam_, pc);
      const Pose world = ground_project(compose(cam_.extrinsic, pnp.pose), mit->second, pc.snap_ground_height);
      skeletons.push_back(skeleton_from_pose(mit->second, world));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::TooFewKeypoints) throw;
    }
  }

  for (const Association& a : greedy_associate(skeletons, segments, cfg_.pose.tau_dist)) {
    const Skeleton3D& sk = skeletons[a.skeleton];
    const PointCloudSegment& seg = segments[a.segment];
    const ObjectModel& model = models_.at(sk.class_id);
    Pose pose = sk.pose;
    if (cfg_.icp == IcpMode::Local && seg.size() >= 10) {
      const IcpResult icp = icp_refine(model, seg, pose, cfg_.pose);
      pose = ground_project(icp.pose, model, cfg_.pose.snap_ground_height);
    }
    ObjectObservation obs = build_observation(pose, seg, a.distance, sensor_id_, timestamp_us, false);
    if (cfg_.include_segments) obs.segment = downsample(seg, cfg_.max_segment_points);
    frame.observations.push_back(std::move(obs));
  }
  return frame;
}

}  // namespace objmap
