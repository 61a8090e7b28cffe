#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

// Static k-d tree for exact Euclidean nearest-neighbour queries. Among points at
// the same squared distance the lowest input index is returned, which makes the
// answer identical to a brute-force scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Point3> points);

  Neighbor nearest(const Point3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t begin = 0, end = 0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Point3& q, Neighbor& best) const;

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

// Brute-force reference with the same tie rule.
Neighbor nearest_brute_force(std::span<const Point3> points, const Point3& q);

}  // namespace patchrd
