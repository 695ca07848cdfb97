#include "objmap/submap.hpp"

#include "objmap/error.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace objmap {

VoxelSubMap::VoxelSubMap(double resolution, std::uint32_t tau_occ) : resolution_(resolution), tau_occ_(tau_occ) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "sub-map resolution must be positive");
  if (tau_occ == 0) throw Error(ErrorCode::InvalidArgument, "tau_occ must be at least 1");
}

VoxelIndex VoxelSubMap::index_of(const Vec3& p, double res) {
  // Model surfaces often lie exactly on a voxel face (feet at z = 0). The
  // world round trip leaves them a few ulps to either side; the slack keeps
  // them in the voxel they would get without the round trip.
  constexpr double kFaceSlack = 1e-9;
  auto idx = [&](double v) { return static_cast<std::int32_t>(std::floor(v / res + kFaceSlack)); };
  return {idx(p.x()), idx(p.y()), idx(p.z())};
}

void VoxelSubMap::integrate(std::span<const Vec3> world_points, const Pose& object_pose) {
  const Pose obj_from_world = inverse(object_pose);
  for (const auto& p : world_points) ++counts_[index_of(apply(obj_from_world, p), resolution_)];
}

void VoxelSubMap::integrate(std::span<const CloudPoint> world_points, const Pose& object_pose) {
  const Pose obj_from_world = inverse(object_pose);
  for (const auto& p : world_points) ++counts_[index_of(apply(obj_from_world, p.xyz), resolution_)];
}

std::vector<VoxelIndex> VoxelSubMap::occupied_indices() const {
  std::vector<VoxelIndex> out;
  for (const auto& [idx, n] : counts_) {
    if (n >= tau_occ_) out.push_back(idx);
  }
  return out;
}

std::vector<Vec3> VoxelSubMap::occupied() const {
  std::vector<Vec3> out;
  for (const auto& idx : occupied_indices()) {
    out.emplace_back((idx.x + 0.5) * resolution_, (idx.y + 0.5) * resolution_, (idx.z + 0.5) * resolution_);
  }
  return out;
}

void VoxelSubMap::set_count(const VoxelIndex& idx, std::uint32_t count) {
  if (count == 0) {
    counts_.erase(idx);
  } else {
    counts_[idx] = count;
  }
}

Mask render_mask(const VoxelSubMap& map, const Pose& object_pose, const CameraModel& cam) {
  Mask mask(cam.width, cam.height);
  const Pose cam_from_obj = compose(cam.world_to_camera(), object_pose);
  const double r = map.resolution();
  std::array<Pixel, 8> corners;
  for (const auto& idx : map.occupied_indices()) {
    bool visible = true;
    for (int c = 0; c < 8 && visible; ++c) {
      const Vec3 p_obj((idx.x + (c & 1)) * r, (idx.y + ((c >> 1) & 1)) * r, (idx.z + ((c >> 2) & 1)) * r);
      const Vec3 p = apply(cam_from_obj, p_obj);
      if (p.z() <= 1e-6) {
        visible = false;
        break;
      }
      corners[static_cast<std::size_t>(c)] = project(cam, p);
    }
    if (visible) fill_convex_hull(mask, corners);
  }
  return mask;
}

void export_submap(std::ostream& out, const VoxelSubMap& map, const Pose& pose) {
  char buf[256];
  out << "# objmap submap v1\n";
  std::snprintf(buf, sizeof(buf), "resolution %.17g\n", map.resolution());
  out << buf;
  out << "tau_occ " << map.tau_occ() << '\n';
  std::snprintf(buf, sizeof(buf), "pose %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", pose.t().x(), pose.t().y(),
                pose.t().z(), pose.q().w(), pose.q().x(), pose.q().y(), pose.q().z());
  out << buf;
  const auto occ = map.occupied_indices();
  out << "voxels " << occ.size() << '\n';
  for (const auto& idx : occ) {
    out << idx.x << ' ' << idx.y << ' ' << idx.z << ' ' << map.counts().at(idx) << '\n';
  }
}

SubMapSnapshot import_submap(std::istream& in) {
  std::string line;
  double res = 0.0;
  std::uint32_t tau = 0;
  std::array<double, 7> p{};
  std::size_t n = 0;
  bool have_voxels = false;
  while (!have_voxels && std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "resolution") {
      ls >> res;
    } else if (key == "tau_occ") {
      ls >> tau;
    } else if (key == "pose") {
      for (auto& v : p) ls >> v;
    } else if (key == "voxels") {
      ls >> n;
      have_voxels = true;
    }
    if (ls.fail()) throw Error(ErrorCode::CorruptFile, "bad sub-map header line: " + line);
  }
  if (!have_voxels) throw Error(ErrorCode::CorruptFile, "sub-map snapshot without voxel section");
  SubMapSnapshot snap{VoxelSubMap(res, tau), Pose(Vec3(p[0], p[1], p[2]), Quat(p[3], p[4], p[5], p[6]))};
  for (std::size_t i = 0; i < n; ++i) {
    VoxelIndex idx;
    std::uint32_t count = 0;
    if (!(in >> idx.x >> idx.y >> idx.z >> count)) throw Error(ErrorCode::CorruptFile, "truncated voxel list");
    snap.map.set_count(idx, count);
  }
  return snap;
}

}  // namespace objmap
