#include "patchrd/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchrd/errors.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {

VoxelGrid::VoxelGrid(int size, GridKind kind, double pitch) : size_(size), kind_(kind), pitch_(pitch) {
  if (size < 1) throw InvalidArgument("grid size must be >= 1, got " + std::to_string(size));
  values_.assign(static_cast<std::size_t>(size) * size * size, 0.0f);
}

VoxelGrid::VoxelGrid(int size, GridKind kind, std::vector<float> values, double pitch)
    : size_(size), kind_(kind), pitch_(pitch), values_(std::move(values)) {
  if (size < 1) throw InvalidArgument("grid size must be >= 1, got " + std::to_string(size));
  const std::size_t expected = static_cast<std::size_t>(size) * size * size;
  if (values_.size() != expected) {
    throw InvalidArgument("grid of size " + std::to_string(size) + " needs " + std::to_string(expected) +
                          " values, got " + std::to_string(values_.size()));
  }
}

std::size_t VoxelGrid::count_occupied(double threshold) const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [threshold](float v) { return v >= threshold; }));
}

VoxelGrid VoxelGrid::binarized(double threshold) const {
  VoxelGrid out(size_, GridKind::binary, pitch_);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

Patch extract_patch(const VoxelGrid& grid, const Index3& corner, int extent, double threshold) {
  for (int a = 0; a < 3; ++a) {
    if (corner[a] < 0 || corner[a] + extent > grid.size()) {
      throw InvalidArgument("patch window exceeds grid bounds on axis " + std::to_string(a));
    }
  }
  Patch p;
  p.corner = corner;
  p.extent = extent;
  p.occupancy.assign(static_cast<std::size_t>(extent) * extent * extent, 0);
  for (int x = 0; x < extent; ++x)
    for (int y = 0; y < extent; ++y)
      for (int z = 0; z < extent; ++z) {
        if (grid.at(corner[0] + x, corner[1] + y, corner[2] + z) >= threshold) {
          p.occupancy[p.index(x, y, z)] = 1;
          ++p.occupied_count;
        }
      }
  return p;
}

std::vector<Index3> window_corners(int size, int extent, int stride) {
  if (extent < 1 || extent > size) {
    throw InvalidArgument("window extent " + std::to_string(extent) + " must lie in [1, " + std::to_string(size) + "]");
  }
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  const int per_axis = (size - extent) / stride + 1;
  std::vector<Index3> corners;
  corners.reserve(static_cast<std::size_t>(per_axis) * per_axis * per_axis);
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j)
      for (int k = 0; k < per_axis; ++k) corners.push_back({i * stride, j * stride, k * stride});
  return corners;
}

std::vector<Patch> sample_patches(const VoxelGrid& grid, int extent, int stride, bool keep_empty) {
  std::vector<Patch> patches;
  for (const auto& c : window_corners(grid.size(), extent, stride)) {
    Patch p = extract_patch(grid, c, extent);
    if (keep_empty || p.occupied_count > 0) patches.push_back(std::move(p));
  }
  return patches;
}

VoxelGrid downsample(const VoxelGrid& grid, int factor) {
  if (factor < 1 || grid.size() % factor != 0) {
    throw InvalidArgument("downsample factor " + std::to_string(factor) + " does not divide grid size " +
                          std::to_string(grid.size()));
  }
  const int n = grid.size() / factor;
  VoxelGrid out(n, GridKind::binary, grid.pitch() * factor);
  for (int x = 0; x < grid.size(); ++x)
    for (int y = 0; y < grid.size(); ++y)
      for (int z = 0; z < grid.size(); ++z)
        if (grid.occupied(x, y, z)) out.set(x / factor, y / factor, z / factor, 1.0f);
  return out;
}

VoxelGrid upsample_nearest(const VoxelGrid& grid, int factor) {
  if (factor < 1) throw InvalidArgument("upsample factor must be >= 1, got " + std::to_string(factor));
  const int n = grid.size() * factor;
  VoxelGrid out(n, grid.kind(), grid.pitch() / factor);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) out.set(x, y, z, grid.at(x / factor, y / factor, z / factor));
  return out;
}

PointSet to_point_set(const Patch& patch, OriginMode origin) {
  PointSet ps;
  ps.origin = origin;
  ps.points.reserve(static_cast<std::size_t>(patch.occupied_count));
  const double shift = origin == OriginMode::patch_center ? patch.extent / 2.0 : 0.0;
  for (int x = 0; x < patch.extent; ++x)
    for (int y = 0; y < patch.extent; ++y)
      for (int z = 0; z < patch.extent; ++z)
        if (patch.at(x, y, z)) ps.points.emplace_back(x + 0.5 - shift, y + 0.5 - shift, z + 0.5 - shift);
  return ps;
}

VoxelGrid voxelize_points(std::span<const Point3> points, int size) {
  if (points.empty()) throw InvalidArgument("voxelize_points: empty point list");
  constexpr int kMargin = 2;
  Point3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvalidArgument("voxelize_points: non-finite coordinate");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  // Usable span keeps the outermost voxel centers kMargin cells from each face.
  const double span = std::max(0.0, static_cast<double>(size - 2 * kMargin - 1));
  const double scale = extent > 0.0 ? span / extent : 0.0;
  const Point3 mid = 0.5 * (lo + hi);
  VoxelGrid out(size);
  for (const auto& p : points) {
    Index3 v;
    for (int a = 0; a < 3; ++a) {
      const double c = (p[a] - mid[a]) * scale + size / 2.0;
      v[a] = std::clamp(static_cast<int>(std::floor(c)), 0, size - 1);
    }
    out.set(v, 1.0f);
  }
  return out;
}

std::vector<ExposedFace> exposed_faces(const VoxelGrid& grid, double threshold) {
  std::vector<ExposedFace> faces;
  const int n = grid.size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        if (grid.at(x, y, z) < threshold) continue;
        const Index3 v{x, y, z};
        for (int axis = 0; axis < 3; ++axis)
          for (int dir : {-1, 1}) {
            Index3 nb = v;
            nb[axis] += dir;
            if (!grid.contains(nb[0], nb[1], nb[2]) || grid.at(nb) < threshold) faces.push_back({v, axis, dir});
          }
      }
  return faces;
}

std::vector<Point3> surface_points(const VoxelGrid& grid, int n, std::uint64_t seed, double threshold) {
  const auto faces = exposed_faces(grid, threshold);
  if (faces.empty()) throw InvalidArgument("surface_points: grid has no occupied voxels");
  if (n < 0) throw InvalidArgument("surface_points: negative sample count");
  Rng rng(seed);
  std::vector<Point3> out;
  out.reserve(static_cast<std::size_t>(n));
  // All faces have unit area, so uniform-over-area is uniform-over-faces.
  for (int i = 0; i < n; ++i) {
    const auto& f = faces[rng.index(faces.size())];
    const double u = rng.uniform(), w = rng.uniform();
    Point3 p(f.voxel[0], f.voxel[1], f.voxel[2]);
    const int a1 = (f.axis + 1) % 3, a2 = (f.axis + 2) % 3;
    p[f.axis] += f.direction > 0 ? 1.0 : 0.0;
    p[a1] += u;
    p[a2] += w;
    out.push_back(p);
  }
  return out;
}

}  // namespace patchrd
