#pragma once

#include <cstdint>

#include "patchrd/rng.hpp"
#include "patchrd/voxel_grid.hpp"

namespace patchrd::test {

inline VoxelGrid random_grid(int size, double density, std::uint64_t seed) {
  VoxelGrid g(size);
  Rng rng(seed);
  for (auto& v : g.values()) v = rng.uniform() < density ? 1.0f : 0.0f;
  return g;
}

inline Patch random_patch(int extent, double density, std::uint64_t seed) {
  Patch p;
  p.extent = extent;
  p.occupancy.assign(static_cast<std::size_t>(extent) * extent * extent, 0);
  Rng rng(seed);
  while (p.occupied_count == 0) {
    for (auto& o : p.occupancy) {
      o = rng.uniform() < density ? 1 : 0;
      p.occupied_count += o;
    }
  }
  return p;
}

inline void fill_box(VoxelGrid& g, Index3 lo, Index3 hi, float v = 1.0f) {
  for (int x = lo[0]; x < hi[0]; ++x)
    for (int y = lo[1]; y < hi[1]; ++y)
      for (int z = lo[2]; z < hi[2]; ++z) g.set(x, y, z, v);
}

}  // namespace patchrd::test
