#pragma once

#include <span>
#include <vector>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// Mean squared nearest-neighbour distance from A to B plus from B to A.
double chamfer_l2(std::span<const Point3> a, std::span<const Point3> b, int threads = 1);

// |A and B| / |A or B| after thresholding; 1 when both are empty.
double iou(const VoxelGrid& a, const VoxelGrid& b, double threshold = kOccupancyThreshold);

// Rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace patchrd
