#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace patchrd {

using Index3 = std::array<int, 3>;
using Point3 = Eigen::Vector3d;

// Default binarization threshold for scalar (blended) grids.
inline constexpr double kOccupancyThreshold = 0.5;

enum class GridKind : std::uint8_t { binary, scalar };

// Dense cubic occupancy grid. Values are linearized x-major: index = (x*size + y)*size + z.
// Binary grids hold exactly 0/1; scalar grids hold values in [0,1].
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(int size, GridKind kind = GridKind::binary, double pitch = 1.0);
  VoxelGrid(int size, GridKind kind, std::vector<float> values, double pitch = 1.0);

  int size() const { return size_; }
  GridKind kind() const { return kind_; }
  double pitch() const { return pitch_; }
  std::size_t voxel_count() const { return values_.size(); }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * size_ + y) * size_ + z;
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < size_ && y < size_ && z < size_;
  }

  float at(int x, int y, int z) const { return values_[index(x, y, z)]; }
  float at(const Index3& p) const { return at(p[0], p[1], p[2]); }
  void set(int x, int y, int z, float v) { values_[index(x, y, z)] = v; }
  void set(const Index3& p, float v) { set(p[0], p[1], p[2], v); }

  bool occupied(int x, int y, int z, double threshold = kOccupancyThreshold) const {
    return at(x, y, z) >= threshold;
  }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  std::size_t count_occupied(double threshold = kOccupancyThreshold) const;
  bool empty(double threshold = kOccupancyThreshold) const { return count_occupied(threshold) == 0; }

  // Thresholded copy with kind() == binary.
  VoxelGrid binarized(double threshold = kOccupancyThreshold) const;

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.size_ == b.size_ && a.kind_ == b.kind_ && a.values_ == b.values_;
  }

 private:
  int size_ = 0;
  GridKind kind_ = GridKind::binary;
  double pitch_ = 1.0;
  std::vector<float> values_;
};

// An extent^3 binary block copied out of a parent grid at lattice corner `corner`.
struct Patch {
  Index3 corner{0, 0, 0};
  int extent = 0;
  std::vector<std::uint8_t> occupancy;
  int occupied_count = 0;

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * extent + y) * extent + z;
  }
  bool at(int x, int y, int z) const { return occupancy[index(x, y, z)] != 0; }

  friend bool operator==(const Patch& a, const Patch& b) {
    return a.corner == b.corner && a.extent == b.extent && a.occupancy == b.occupancy;
  }
};

// Subvolumes share the patch layout; only their extent (s_subv) differs.
using Subvolume = Patch;

enum class OriginMode : std::uint8_t { patch_center, grid_corner };

struct PointSet {
  std::vector<Point3> points;
  OriginMode origin = OriginMode::patch_center;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

Patch extract_patch(const VoxelGrid& grid, const Index3& corner, int extent,
                    double threshold = kOccupancyThreshold);

// Corners (i*stride, j*stride, k*stride) with the window fully inside the grid, x then y then z.
std::vector<Index3> window_corners(int size, int extent, int stride);

std::vector<Patch> sample_patches(const VoxelGrid& grid, int extent, int stride, bool keep_empty);

// Max-pool: a coarse voxel is occupied iff any voxel of its factor^3 block is.
VoxelGrid downsample(const VoxelGrid& grid, int factor);

VoxelGrid upsample_nearest(const VoxelGrid& grid, int factor);

// Occupied voxel centers (i+0.5, j+0.5, k+0.5), shifted so the chosen origin is 0.
PointSet to_point_set(const Patch& patch, OriginMode origin);

// Uniform scale of the points' bounding box into the grid with a 2-voxel margin.
VoxelGrid voxelize_points(std::span<const Point3> points, int size);

// Faces of occupied voxels whose neighbour is empty or outside the grid.
struct ExposedFace {
  Index3 voxel;
  int axis;       // 0, 1, 2
  int direction;  // -1 or +1
};
std::vector<ExposedFace> exposed_faces(const VoxelGrid& grid, double threshold = kOccupancyThreshold);

// n points uniform over the exposed faces, in grid (voxel) coordinates.
std::vector<Point3> surface_points(const VoxelGrid& grid, int n, std::uint64_t seed,
                                   double threshold = kOccupancyThreshold);

}  // namespace patchrd
