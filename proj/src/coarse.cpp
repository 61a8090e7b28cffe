#include "patchrd/coarse.hpp"

#include <algorithm>

#include "patchrd/errors.hpp"
#include "patchrd/grid_io.hpp"

namespace patchrd {

std::string to_string(CoarseKind kind) {
  switch (kind) {
    case CoarseKind::gt_downsample: return "gt_downsample";
    case CoarseKind::heuristic: return "heuristic";
    case CoarseKind::external_file: return "external_file";
  }
  return "unknown";
}

CoarseKind coarse_kind_from_string(const std::string& name) {
  if (name == "gt_downsample" || name == "gt") return CoarseKind::gt_downsample;
  if (name == "heuristic") return CoarseKind::heuristic;
  if (name == "external_file" || name == "external") return CoarseKind::external_file;
  throw InvalidArgument("unknown coarse provider '" + name + "'");
}

VoxelGrid coarse_from_gt(const VoxelGrid& gt) {
  if (gt.size() % kCoarseFactor != 0) {
    throw InvalidArgument("coarse_from_gt: grid size " + std::to_string(gt.size()) + " is not divisible by 4");
  }
  return downsample(gt, kCoarseFactor);
}

namespace {

// Separable cube dilation/erosion; `outside` is the value assumed beyond the border.
VoxelGrid cube_filter(const VoxelGrid& in, int radius, bool dilate) {
  const int n = in.size();
  VoxelGrid cur = in.binarized();
  for (int axis = 0; axis < 3; ++axis) {
    VoxelGrid next(n, GridKind::binary, in.pitch());
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        for (int z = 0; z < n; ++z) {
          Index3 p{x, y, z};
          bool acc = !dilate;
          for (int d = -radius; d <= radius; ++d) {
            Index3 q = p;
            q[axis] += d;
            const bool v = cur.contains(q[0], q[1], q[2]) ? cur.at(q) >= 0.5f : !dilate;
            acc = dilate ? (acc || v) : (acc && v);
          }
          next.set(p, acc ? 1.0f : 0.0f);
        }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

VoxelGrid morphological_closing(const VoxelGrid& grid, int radius) {
  if (radius < 0) throw InvalidArgument("closing radius must be >= 0, got " + std::to_string(radius));
  if (radius == 0) return grid.binarized();
  return cube_filter(cube_filter(grid, radius, true), radius, false);
}

VoxelGrid mirrored(const VoxelGrid& grid, int axis) {
  const int n = grid.size();
  VoxelGrid out(n, grid.kind(), grid.pitch());
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        Index3 p{x, y, z};
        p[axis] = n - 1 - p[axis];
        out.set(p, grid.at(x, y, z));
      }
  return out;
}

int best_mirror_axis(const VoxelGrid& grid) {
  int best_axis = 0;
  long best = -1;
  for (int axis = 0; axis < 3; ++axis) {
    const VoxelGrid m = mirrored(grid, axis);
    long overlap = 0;
    for (std::size_t i = 0; i < grid.voxel_count(); ++i)
      overlap += (grid.values()[i] >= 0.5f && m.values()[i] >= 0.5f) ? 1 : 0;
    if (overlap > best) {
      best = overlap;
      best_axis = axis;
    }
  }
  return best_axis;
}

VoxelGrid coarse_heuristic(const VoxelGrid& partial, int closing_radius, bool symmetry) {
  if (closing_radius < 0) throw InvalidArgument("closing radius must be >= 0, got " + std::to_string(closing_radius));
  VoxelGrid coarse = morphological_closing(coarse_from_gt(partial), closing_radius);
  if (symmetry && !coarse.empty()) {
    const VoxelGrid m = mirrored(coarse, best_mirror_axis(coarse));
    for (std::size_t i = 0; i < coarse.voxel_count(); ++i)
      coarse.values()[i] = std::max(coarse.values()[i], m.values()[i]);
  }
  return coarse;
}

VoxelGrid load_external_coarse(const std::filesystem::path& path, int shape_size) {
  VoxelGrid c = read_grid(path);
  const int expected = shape_size / kCoarseFactor;
  if (c.size() != expected) {
    throw InvalidArgument("external coarse grid " + path.string() + " has size " + std::to_string(c.size()) +
                          ", expected " + std::to_string(expected));
  }
  return c.binarized();
}

}  // namespace patchrd
