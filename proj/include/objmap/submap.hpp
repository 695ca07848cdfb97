#pragma once

#include "objmap/geometry.hpp"
#include "objmap/image.hpp"
#include "objmap/point_cloud.hpp"

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace objmap {

struct VoxelIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

/// Object-centric sparse occupancy counts. Voxel index = floor(coord / res)
/// per axis in the object frame; a voxel is occupied once its hit count
/// reaches tau_occ. Counts never decay.
class VoxelSubMap {
 public:
  explicit VoxelSubMap(double resolution = 0.05, std::uint32_t tau_occ = 2);

  static VoxelIndex index_of(const Vec3& p_obj, double resolution);

  /// Adds one hit per world point, mapped through inverse(object_pose).
  void integrate(std::span<const Vec3> world_points, const Pose& object_pose);
  void integrate(std::span<const CloudPoint> world_points, const Pose& object_pose);

  std::vector<VoxelIndex> occupied_indices() const;
  /// Voxel centers (idx + 0.5) * res in the object frame.
  std::vector<Vec3> occupied() const;

  double resolution() const { return resolution_; }
  std::uint32_t tau_occ() const { return tau_occ_; }
  const std::map<VoxelIndex, std::uint32_t>& counts() const { return counts_; }

  void set_count(const VoxelIndex& idx, std::uint32_t count);

 private:
  double resolution_;
  std::uint32_t tau_occ_;
  std::map<VoxelIndex, std::uint32_t> counts_;
};

/// Union of the filled convex hulls of every occupied voxel's projected cube;
/// voxels with a corner behind the camera are skipped.
Mask render_mask(const VoxelSubMap& map, const Pose& object_pose, const CameraModel& cam);

/// Text snapshot: header lines, then one "ix iy iz count" line per occupied
/// voxel in index order.
void export_submap(std::ostream& out, const VoxelSubMap& map, const Pose& object_pose);

struct SubMapSnapshot {
  VoxelSubMap map;
  Pose pose;
};
SubMapSnapshot import_submap(std::istream& in);

}  // namespace objmap
