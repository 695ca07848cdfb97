#pragma once

#include "objmap/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace objmap {

inline constexpr std::uint16_t kChairClass = 1;
inline constexpr std::uint16_t kTableClass = 2;

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
  }
};

/// Prior object knowledge shared by sensors and backend. Coordinates are in
/// the object frame: z up, origin on the ground plane below the object when
/// ground_offset is 0.
struct ObjectModel {
  std::uint16_t class_id = 0;
  std::string name;
  std::vector<Vec3> keypoints;
  std::vector<Vec3> cloud;    // sampled from the surface
  std::vector<Vec3> normals;  // outward, one per cloud point (may be empty)
  double ground_offset = 0.0;
  Aabb extent;
  double splat_radius = 0.02;  // disc radius for mask rendering (m)

  void validate() const;
};

/// Six keypoints: four seat corners, two at the top of the backrest.
ObjectModel make_chair_model(std::size_t cloud_points = 2000);
/// Eight keypoints: four tabletop corners, four leg feet.
ObjectModel make_table_model(std::size_t cloud_points = 2500);

ObjectModel builtin_model(const std::string& name);

/// Model description file (JSON) plus a sibling point file with one
/// "x y z nx ny nz" line per sample.
ObjectModel load_object_model(const std::filesystem::path& path);
void save_object_model(const ObjectModel& model, const std::filesystem::path& path);

}  // namespace objmap
