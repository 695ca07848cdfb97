#pragma once

#include "objmap/geometry.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace objmap {

/// Static 3-d tree over a copy of a point set for exact nearest-neighbor
/// queries. Returned indices refer to the input order.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  struct Neighbor {
    std::size_t index = 0;
    double sq_dist = std::numeric_limits<double>::infinity();
  };

  /// Nearest point; ties resolved toward the lower index.
  Neighbor nearest(const Vec3& query) const;

  /// k nearest points sorted by (distance, index). `skip` excludes one index
  /// (used to leave out the query point itself).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k,
                            std::size_t skip = std::numeric_limits<std::size_t>::max()) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search_nearest(std::size_t node, const Vec3& q, Neighbor& best) const;
  void search_knn(std::size_t node, const Vec3& q, std::size_t k, std::size_t skip,
                  std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace objmap
