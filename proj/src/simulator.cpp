#include "objmap/simulator.hpp"

#include "objmap/error.hpp"
#include "objmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace objmap {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_deg(double a) {
  a = std::fmod(a + 180.0, 360.0);
  if (a < 0) a += 360.0;
  return a - 180.0;
}

std::uint32_t class_color(std::uint16_t class_id) {
  switch (class_id) {
    case kChairClass:
      return 0x8B4513;
    case kTableClass:
      return 0xDEB887;
    default:
      return 0x808080;
  }
}

// Everything that can block a line of sight at one instant.
class Scene {
 public:
  Scene(const ScenarioConfig& cfg, const GroundTruthFrame& frame) {
    const double t = static_cast<double>(frame.timestamp_us) * 1e-6;
    for (const auto& occ : cfg.occluders) {
      if (occ.active(t)) occluders_.push_back(occ.box);
    }
    for (const auto& o : frame.objects) {
      poses_.push_back(o.pose);
      inverses_.push_back(inverse(o.pose));
      extents_.push_back(cfg.model(o.model).extent);
    }
  }

  bool occluded(const Vec3& eye, const Vec3& p, std::size_t self) const {
    for (const auto& box : occluders_) {
      if (segment_hits_box(eye, p, box)) return true;
    }
    for (std::size_t j = 0; j < poses_.size(); ++j) {
      if (j == self) continue;
      if (segment_hits_box(apply(inverses_[j], eye), apply(inverses_[j], p), extents_[j])) return true;
    }
    return false;
  }

 private:
  std::vector<Aabb> occluders_;
  std::vector<Pose> poses_;
  std::vector<Pose> inverses_;
  std::vector<Aabb> extents_;
};

bool point_visible(const CameraModel& cam, const Pose& w2c, const Vec3& p_world, Vec3& p_cam) {
  p_cam = apply(w2c, p_world);
  if (p_cam.z() <= 1e-9) return false;
  return cam.in_image(project(cam, p_cam));
}

bool front_facing(const Vec3& eye, const Vec3& p_world, const Vec3& n_world) {
  return n_world.dot(eye - p_world) > 0.0;
}

}  // namespace

bool segment_hits_box(const Vec3& a, const Vec3& b, const Aabb& box) {
  constexpr double kEps = 1e-9;
  double t0 = 0.0;
  double t1 = 1.0;
  const Vec3 d = b - a;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (a[i] < box.min[i] || a[i] > box.max[i]) return false;
      continue;
    }
    double ta = (box.min[i] - a[i]) / d[i];
    double tb = (box.max[i] - a[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return t1 > kEps && t0 < 1.0 - kEps && t1 - t0 > kEps;
}

Pose trajectory_pose(const ScenarioObject& obj, const ObjectModel& model, double t) {
  const auto& w = obj.waypoints;
  if (w.empty()) throw Error(ErrorCode::ConfigError, "trajectory without waypoints");
  double x = w.front().x;
  double y = w.front().y;
  double yaw = w.front().yaw_deg;
  if (t >= w.back().t) {
    x = w.back().x;
    y = w.back().y;
    yaw = w.back().yaw_deg;
  } else if (t > w.front().t) {
    const auto hi = std::upper_bound(w.begin(), w.end(), t, [](double v, const Waypoint& p) { return v < p.t; });
    const Waypoint& b = *hi;
    const Waypoint& a = *(hi - 1);
    const double s = (t - a.t) / (b.t - a.t);
    x = a.x + s * (b.x - a.x);
    y = a.y + s * (b.y - a.y);
    yaw = a.yaw_deg + s * wrap_deg(b.yaw_deg - a.yaw_deg);
  }
  return Pose::from_yaw(Vec3(x, y, model.ground_offset), yaw * kDeg);
}

std::vector<GroundTruthFrame> generate(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<GroundTruthFrame> frames(cfg.frame_count());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    GroundTruthFrame& f = frames[k];
    f.index = k;
    f.timestamp_us = cfg.frame_time_us(k);
    const double t = static_cast<double>(f.timestamp_us) * 1e-6;
    for (std::size_t i = 0; i < cfg.objects.size(); ++i) {
      const ObjectModel& m = cfg.model(cfg.objects[i].model);
      f.objects.push_back({static_cast<std::uint32_t>(i), m.class_id, cfg.objects[i].model,
                           trajectory_pose(cfg.objects[i], m, t)});
    }
    const Scene scene(cfg, f);
    for (const auto& cam : cfg.cameras) {
      const Pose w2c = cam.model.world_to_camera();
      const Vec3 eye = cam.model.extrinsic.t();
      for (std::size_t i = 0; i < f.objects.size(); ++i) {
        const GroundTruthObject& o = f.objects[i];
        const ObjectModel& m = cfg.model(o.model);
        CameraVisibility vis;
        vis.camera = cam.id;
        vis.object = o.index;
        Vec3 pc;
        for (std::size_t l = 0; l < m.keypoints.size(); ++l) {
          const Vec3 pw = apply(o.pose, m.keypoints[l]);
          if (point_visible(cam.model, w2c, pw, pc) && !scene.occluded(eye, pw, i)) vis.visible_keypoints.push_back(l);
        }
        std::size_t facing = 0;
        std::size_t seen = 0;
        const Mat3 R = o.pose.rotation();
        for (std::size_t s = 0; s < m.cloud.size(); ++s) {
          const Vec3 pw = apply(o.pose, m.cloud[s]);
          if (!m.normals.empty() && !front_facing(eye, pw, R * m.normals[s])) continue;
          ++facing;
          if (point_visible(cam.model, w2c, pw, pc) && !scene.occluded(eye, pw, i)) ++seen;
        }
        vis.fraction = facing == 0 ? 0.0 : static_cast<double>(seen) / static_cast<double>(facing);
        f.visibility.push_back(std::move(vis));
      }
    }
  }
  return frames;
}

std::vector<SimDetection> observe(const ScenarioConfig& cfg, const GroundTruthFrame& frame, std::size_t camera_index) {
  const ScenarioCamera& cam = cfg.cameras.at(camera_index);
  const Pose w2c = cam.model.world_to_camera();
  const Vec3 eye = cam.model.extrinsic.t();
  const NoiseConfig& noise = cfg.noise;
  const Scene scene(cfg, frame);
  std::vector<SimDetection> out;

  for (std::size_t i = 0; i < frame.objects.size(); ++i) {
    const GroundTruthObject& o = frame.objects[i];
    const ObjectModel& m = cfg.model(o.model);
    SimDetection det;
    det.object = o.index;
    det.class_id = m.class_id;

    Rng kp_rng(derive_seed(cfg.seed, {frame.index, cam.id, o.index, 1}));
    KeypointSet2D kps;
    kps.class_id = m.class_id;
    for (const auto& kp : m.keypoints) {
      // Fixed number of draws per keypoint keeps the streams aligned.
      const double nu = kp_rng.normal(noise.keypoint_px);
      const double nv = kp_rng.normal(noise.keypoint_px);
      const bool drop = kp_rng.bernoulli(noise.dropout);
      const bool outlier = kp_rng.bernoulli(noise.outlier_prob);
      const double angle = kp_rng.uniform(0.0, 2.0 * std::numbers::pi);

      const Vec3 pw = apply(o.pose, kp);
      Vec3 pc;
      const bool visible = point_visible(cam.model, w2c, pw, pc) && !scene.occluded(eye, pw, i);
      Pixel px;
      if (pc.z() > 1e-9) {
        px = project(cam.model, pc);
        px.u += nu;
        px.v += nv;
        if (outlier) {
          px.u += noise.outlier_px * std::cos(angle);
          px.v += noise.outlier_px * std::sin(angle);
        }
      }
      const bool valid = visible && !drop;
      kps.points.push_back(px);
      kps.confidences.push_back(valid ? 1.0 : 0.0);
      kps.valid.push_back(valid);
    }
    if (kps.valid_count() >= 4) det.keypoints = std::move(kps);

    Rng depth_rng(derive_seed(cfg.seed, {frame.index, cam.id, o.index, 2}));
    PointCloudSegment& seg = det.segment;
    seg.frame = CloudFrame::Camera;
    seg.timestamp_us = frame.timestamp_us;
    seg.sensor_id = cam.id;
    seg.class_id = m.class_id;
    const Mat3 R = o.pose.rotation();
    for (std::size_t s = 0; s < m.cloud.size(); ++s) {
      const Vec3 pw = apply(o.pose, m.cloud[s]);
      if (!m.normals.empty() && !front_facing(eye, pw, R * m.normals[s])) continue;
      Vec3 pc;
      if (!point_visible(cam.model, w2c, pw, pc) || scene.occluded(eye, pw, i)) continue;
      if (noise.depth_m > 0.0) {
        const double r = pc.norm();
        pc *= (r + depth_rng.normal(noise.depth_m)) / r;
        if (pc.z() <= 0.0) continue;
      }
      seg.points.push_back({pc, class_color(m.class_id), 1.0f, m.class_id});
    }

    if (det.keypoints || !seg.empty()) out.push_back(std::move(det));
  }
  return out;
}

}  // namespace objmap
