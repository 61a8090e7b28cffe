#pragma once

#include <cstdint>
#include <string>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

enum class CropKind { cuboid, plane };

std::string to_string(CropKind kind);
CropKind crop_kind_from_string(const std::string& name);

struct CropSpec {
  CropKind kind = CropKind::cuboid;
  double ratio_lo = 0.1;
  double ratio_hi = 0.3;
  std::uint64_t seed = 0;

  // Filled in by the crop functions.
  bool realized = false;
  Index3 box_lo{0, 0, 0};  // cuboid, inclusive
  Index3 box_hi{0, 0, 0};  // cuboid, exclusive
  Point3 normal = Point3::Zero();  // plane: voxels with normal . center > offset are deleted
  double offset = 0.0;
  double deleted_fraction = 0.0;
  int attempts = 0;
};

struct CropResult {
  VoxelGrid partial;
  CropSpec spec;
};

// Rejection-samples axis-aligned boxes (extent uniform in [size/8, size/2] per axis, corner
// uniform) until the deleted fraction of occupied voxels lies in [ratio_lo, ratio_hi].
CropResult crop_cuboid(const VoxelGrid& grid, double ratio_lo, double ratio_hi, std::uint64_t seed);

// Random plane through a random occupied voxel center with a uniformly distributed normal.
CropResult crop_plane(const VoxelGrid& grid, std::uint64_t seed);

// Deletes occupied voxels whose center c satisfies normal . c > offset.
CropResult crop_plane_at(const VoxelGrid& grid, const Point3& normal, double offset);

}  // namespace patchrd
