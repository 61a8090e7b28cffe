#pragma once

#include <filesystem>
#include <string>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

inline constexpr int kCoarseFactor = 4;

enum class CoarseKind { gt_downsample, heuristic, external_file };

std::string to_string(CoarseKind kind);
CoarseKind coarse_kind_from_string(const std::string& name);

VoxelGrid coarse_from_gt(const VoxelGrid& gt);

// Morphological closing with a (2r+1)^3 cube, cells outside the grid count as
// foreground during erosion so closing never removes voxels.
VoxelGrid morphological_closing(const VoxelGrid& grid, int radius);

// Mirror axis (0, 1, 2) whose reflection through the grid center overlaps the
// shape most; ties go to the lower axis.
int best_mirror_axis(const VoxelGrid& grid);
VoxelGrid mirrored(const VoxelGrid& grid, int axis);

// downsample(S, 4), closed with the given radius, optionally unioned with its best mirror image.
VoxelGrid coarse_heuristic(const VoxelGrid& partial, int closing_radius, bool symmetry);

// Reads a coarse grid produced elsewhere; its size must be shape_size / 4.
VoxelGrid load_external_coarse(const std::filesystem::path& path, int shape_size);

}  // namespace patchrd
