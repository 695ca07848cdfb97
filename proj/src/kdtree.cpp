#include "objmap/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace objmap {

namespace {

constexpr std::size_t kLeafSize = 8;

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  Neighbor best;
  if (!nodes_.empty()) search_nearest(0, query, best);
  return best;
}

void KdTree::search_nearest(std::size_t node_id, const Vec3& q, Neighbor& best) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const Neighbor cand{order_[i], squared_distance(q, points_[order_[i]])};
      if (closer(cand, best)) best = cand;
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::size_t near_side = diff < 0.0 ? n.left : n.right;
  const std::size_t far_side = diff < 0.0 ? n.right : n.left;
  search_nearest(near_side, q, best);
  if (diff * diff <= best.sq_dist) search_nearest(far_side, q, best);
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec3& query, std::size_t k, std::size_t skip) const {
  std::vector<Neighbor> heap;
  if (k == 0 || nodes_.empty()) return heap;
  heap.reserve(k + 1);
  search_knn(0, query, k, skip, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

void KdTree::search_knn(std::size_t node_id, const Vec3& q, std::size_t k, std::size_t skip,
                        std::vector<Neighbor>& heap) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      if (idx == skip) continue;
      const Neighbor cand{idx, squared_distance(q, points_[idx])};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::size_t near_side = diff < 0.0 ? n.left : n.right;
  const std::size_t far_side = diff < 0.0 ? n.right : n.left;
  search_knn(near_side, q, k, skip, heap);
  if (heap.size() < k || diff * diff <= heap.front().sq_dist) search_knn(far_side, q, k, skip, heap);
}

}  // namespace objmap
