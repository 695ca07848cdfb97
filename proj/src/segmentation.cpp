#include "objmap/segmentation.hpp"

#include "objmap/error.hpp"
#include "objmap/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace objmap {

PointCloudSegment transform_segment(const PointCloudSegment& seg, const Pose& pose, CloudFrame new_frame) {
  PointCloudSegment out = seg;
  out.frame = new_frame;
  for (auto& p : out.points) p.xyz = apply(pose, p.xyz);
  return out;
}

std::vector<Vec3> positions(const PointCloudSegment& seg) {
  std::vector<Vec3> out;
  out.reserve(seg.points.size());
  for (const auto& p : seg.points) out.push_back(p.xyz);
  return out;
}

PointCloudSegment depth_to_cloud(const DepthFrame& frame, const CameraModel& cam, std::uint16_t class_id) {
  const auto n = static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height);
  if (frame.depth.size() != n || frame.class_mask.size() != n || (!frame.rgb.empty() && frame.rgb.size() != n)) {
    throw Error(ErrorCode::DimensionMismatch, "depth frame buffers do not match width*height");
  }
  if (frame.width != cam.width || frame.height != cam.height) {
    throw Error(ErrorCode::DimensionMismatch, "depth frame size differs from camera model");
  }
  PointCloudSegment seg;
  seg.frame = CloudFrame::Camera;
  seg.timestamp_us = frame.timestamp_us;
  seg.sensor_id = frame.sensor_id;
  seg.class_id = class_id;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * frame.width + u;
      const double d = frame.depth[i];
      if (frame.class_mask[i] != class_id || !(d > 0.0) || !std::isfinite(d)) continue;
      CloudPoint p;
      p.xyz = backproject(cam, {static_cast<double>(u), static_cast<double>(v)}, d);
      p.rgb = frame.rgb.empty() ? 0u : frame.rgb[i];
      p.class_id = class_id;
      seg.points.push_back(p);
    }
  }
  return seg;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)), static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

}  // namespace

std::vector<PointCloudSegment> euclidean_cluster(const PointCloudSegment& cloud, double tol,
                                                 std::size_t min_points) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "cluster tolerance must be positive");
  const auto& pts = cloud.points;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  grid.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) grid[cell_of(pts[i].xyz, tol)].push_back(i);

  const double tol_sq = tol * tol;
  std::vector<bool> visited(pts.size(), false);
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> frontier;
  for (std::size_t seed = 0; seed < pts.size(); ++seed) {
    if (visited[seed]) continue;
    std::vector<std::size_t> members{seed};
    visited[seed] = true;
    frontier.assign(1, seed);
    while (!frontier.empty()) {
      const std::size_t cur = frontier.back();
      frontier.pop_back();
      const CellKey c = cell_of(pts[cur].xyz, tol);
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
            if (it == grid.end()) continue;
            for (std::size_t j : it->second) {
              if (visited[j] || squared_distance(pts[cur].xyz, pts[j].xyz) > tol_sq) continue;
              visited[j] = true;
              members.push_back(j);
              frontier.push_back(j);
            }
          }
        }
      }
    }
    if (members.size() < min_points) continue;
    std::sort(members.begin(), members.end());
    components.push_back(std::move(members));
  }
  std::stable_sort(components.begin(), components.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::vector<PointCloudSegment> out;
  out.reserve(components.size());
  for (const auto& comp : components) {
    PointCloudSegment seg = cloud.empty_copy();
    seg.points.reserve(comp.size());
    for (std::size_t i : comp) seg.points.push_back(pts[i]);
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<double> mean_knn_distances(const PointCloudSegment& cloud, std::size_t k) {
  const std::vector<Vec3> xyz = positions(cloud);
  const KdTree tree(xyz);
  std::vector<double> means(xyz.size(), 0.0);
  for (std::size_t i = 0; i < xyz.size(); ++i) {
    const auto nn = tree.knn(xyz[i], k, i);
    double sum = 0.0;
    for (const auto& n : nn) sum += std::sqrt(n.sq_dist);
    means[i] = nn.empty() ? 0.0 : sum / static_cast<double>(nn.size());
  }
  return means;
}

PointCloudSegment sor_filter(const PointCloudSegment& cloud, std::size_t k, double stddev_mult) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "sor_filter needs k >= 1");
  if (cloud.points.size() <= k) return cloud;
  const std::vector<double> means = mean_knn_distances(cloud, k);
  const double n = static_cast<double>(means.size());
  double sum = 0.0;
  double sq_sum = 0.0;
  for (double m : means) {
    sum += m;
    sq_sum += m * m;
  }
  const double mu = sum / n;
  const double var = std::max(0.0, (sq_sum - sum * sum / n) / (n - 1.0));
  const double threshold = mu + stddev_mult * std::sqrt(var);

  PointCloudSegment out = cloud.empty_copy();
  out.points.reserve(cloud.points.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i] <= threshold) out.points.push_back(cloud.points[i]);
  }
  return out;
}

std::vector<PointCloudSegment> segment_instances(const PointCloudSegment& class_cloud,
                                                 const SegmentationConfig& cfg) {
  std::vector<PointCloudSegment> out;
  for (auto& cluster : euclidean_cluster(class_cloud, cfg.cluster_tolerance, cfg.min_cluster_points)) {
    PointCloudSegment filtered = sor_filter(cluster, cfg.sor_k, cfg.sor_stddev_mult);
    if (!filtered.empty()) out.push_back(std::move(filtered));
  }
  // SOR can reorder sizes; keep the largest-first contract for association.
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return out;
}

}  // namespace objmap
