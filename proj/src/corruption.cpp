#include "patchrd/corruption.hpp"

#include <algorithm>
#include <vector>

#include "patchrd/errors.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {
namespace {

constexpr int kMaxBoxAttempts = 1000;
constexpr int kMaxPlaneAttempts = 100;

// Inclusive 3D prefix sums of occupancy, padded by one on each axis.
class PrefixCount {
 public:
  explicit PrefixCount(const VoxelGrid& g) : n_(g.size() + 1), sum_(static_cast<std::size_t>(n_) * n_ * n_, 0) {
    for (int x = 1; x < n_; ++x)
      for (int y = 1; y < n_; ++y)
        for (int z = 1; z < n_; ++z)
          at(x, y, z) = (g.occupied(x - 1, y - 1, z - 1) ? 1 : 0) + at(x - 1, y, z) + at(x, y - 1, z) +
                        at(x, y, z - 1) - at(x - 1, y - 1, z) - at(x - 1, y, z - 1) - at(x, y - 1, z - 1) +
                        at(x - 1, y - 1, z - 1);
  }

  // Occupied voxels in [lo, hi).
  long count(const Index3& lo, const Index3& hi) const {
    return get(hi[0], hi[1], hi[2]) - get(lo[0], hi[1], hi[2]) - get(hi[0], lo[1], hi[2]) - get(hi[0], hi[1], lo[2]) +
           get(lo[0], lo[1], hi[2]) + get(lo[0], hi[1], lo[2]) + get(hi[0], lo[1], lo[2]) - get(lo[0], lo[1], lo[2]);
  }

 private:
  long& at(int x, int y, int z) { return sum_[(static_cast<std::size_t>(x) * n_ + y) * n_ + z]; }
  long get(int x, int y, int z) const { return sum_[(static_cast<std::size_t>(x) * n_ + y) * n_ + z]; }
  int n_;
  std::vector<long> sum_;
};

Point3 center(int x, int y, int z) { return {x + 0.5, y + 0.5, z + 0.5}; }

// Deletes the voxels on the positive side; returns the number deleted.
std::size_t cut(const VoxelGrid& grid, const Point3& normal, double offset, VoxelGrid* out) {
  std::size_t deleted = 0;
  const int n = grid.size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        if (!grid.occupied(x, y, z) || normal.dot(center(x, y, z)) <= offset) continue;
        ++deleted;
        if (out) out->set(x, y, z, 0.0f);
      }
  return deleted;
}

}  // namespace

std::string to_string(CropKind kind) { return kind == CropKind::cuboid ? "cuboid" : "plane"; }

CropKind crop_kind_from_string(const std::string& name) {
  if (name == "cuboid") return CropKind::cuboid;
  if (name == "plane") return CropKind::plane;
  throw InvalidArgument("unknown crop kind '" + name + "' (expected cuboid or plane)");
}

CropResult crop_cuboid(const VoxelGrid& grid, double ratio_lo, double ratio_hi, std::uint64_t seed) {
  if (!(ratio_lo > 0.0 && ratio_lo <= ratio_hi && ratio_hi < 1.0)) {
    throw InvalidArgument("crop ratio range must satisfy 0 < lo <= hi < 1");
  }
  const VoxelGrid binary = grid.binarized();
  const auto total = static_cast<long>(binary.count_occupied());
  if (total == 0) throw GenerationError("crop_cuboid: shape has no occupied voxels");
  const PrefixCount prefix(binary);
  const int n = grid.size();
  const int min_extent = std::max(1, n / 8), max_extent = std::max(min_extent, n / 2);
  Rng rng(seed);
  for (int attempt = 1; attempt <= kMaxBoxAttempts; ++attempt) {
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
      const int e = static_cast<int>(rng.uniform_int(min_extent, max_extent));
      lo[a] = static_cast<int>(rng.uniform_int(0, n - e));
      hi[a] = lo[a] + e;
    }
    const double fraction = static_cast<double>(prefix.count(lo, hi)) / static_cast<double>(total);
    if (fraction < ratio_lo || fraction > ratio_hi) continue;
    CropResult r{binary, {}};
    for (int x = lo[0]; x < hi[0]; ++x)
      for (int y = lo[1]; y < hi[1]; ++y)
        for (int z = lo[2]; z < hi[2]; ++z) r.partial.set(x, y, z, 0.0f);
    r.spec = {CropKind::cuboid, ratio_lo, ratio_hi, seed, true, lo, hi, Point3::Zero(), 0.0, fraction, attempt};
    return r;
  }
  throw GenerationError("crop_cuboid: no box deleting " + std::to_string(ratio_lo) + ".." + std::to_string(ratio_hi) +
                        " of the shape found in " + std::to_string(kMaxBoxAttempts) + " attempts");
}

CropResult crop_plane_at(const VoxelGrid& grid, const Point3& normal, double offset) {
  if (!normal.allFinite() || normal.norm() == 0.0) throw InvalidArgument("crop plane normal must be non-zero");
  const VoxelGrid binary = grid.binarized();
  const auto total = binary.count_occupied();
  if (total == 0) throw GenerationError("crop_plane: shape has no occupied voxels");
  CropResult r{binary, {}};
  const std::size_t deleted = cut(binary, normal, offset, &r.partial);
  r.spec.kind = CropKind::plane;
  r.spec.realized = true;
  r.spec.normal = normal;
  r.spec.offset = offset;
  r.spec.deleted_fraction = static_cast<double>(deleted) / static_cast<double>(total);
  r.spec.ratio_lo = r.spec.ratio_hi = r.spec.deleted_fraction;
  r.spec.attempts = 1;
  return r;
}

CropResult crop_plane(const VoxelGrid& grid, std::uint64_t seed) {
  const VoxelGrid binary = grid.binarized();
  std::vector<Index3> occupied;
  const int n = grid.size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        if (binary.occupied(x, y, z)) occupied.push_back({x, y, z});
  if (occupied.empty()) throw GenerationError("crop_plane: shape has no occupied voxels");
  Rng rng(seed);
  for (int attempt = 1; attempt <= kMaxPlaneAttempts; ++attempt) {
    const Index3 v = occupied[rng.index(occupied.size())];
    Point3 normal;
    do {
      normal = Point3(rng.normal(), rng.normal(), rng.normal());
    } while (normal.norm() < 1e-12);
    normal.normalize();
    const double offset = normal.dot(center(v[0], v[1], v[2]));
    const std::size_t deleted = cut(binary, normal, offset, nullptr);
    if (deleted == 0 || deleted == occupied.size()) continue;
    CropResult r = crop_plane_at(binary, normal, offset);
    r.spec.seed = seed;
    r.spec.attempts = attempt;
    return r;
  }
  throw GenerationError("crop_plane: every sampled plane deleted all or none of the shape");
}

}  // namespace patchrd
