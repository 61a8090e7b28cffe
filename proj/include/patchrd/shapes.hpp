#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// Procedural furniture-like solids with thin repeated parts (slats, legs, rails), used as
// synthetic ground truth. Dimensions are drawn from the seed and scale with `size`.
const std::vector<std::string>& shape_categories();

VoxelGrid make_shape(const std::string& category, int size, std::uint64_t seed);

// Shape `index` of a synthetic set: categories cycle in order, each with its own seed.
struct SyntheticShape {
  std::string id;
  std::string category;
  VoxelGrid grid;
};
SyntheticShape synthetic_shape(int index, int size, std::uint64_t seed);

}  // namespace patchrd
