#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// x -> R * mirror_f(x) + t, where mirror negates the x coordinate of the source frame.
// Reflection is carried by the flag; `rotation` stays a proper rotation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Point3 translation = Point3::Zero();
  bool reflect = false;

  static RigidTransform identity() { return {}; }

  Point3 apply(const Point3& p) const {
    Point3 m = p;
    if (reflect) m.x() = -m.x();
    return rotation * m + translation;
  }

  // The combined linear part R * diag(f ? -1 : 1, 1, 1).
  Eigen::Matrix3d linear() const;
};

Point3 mirror(const Point3& p, bool reflect);

PointSet apply_transform(const PointSet& points, const RigidTransform& transform);

// Transforms the occupied-voxel centers of `source` (patch-center frame), re-centers them
// on a target_extent window, and marks the containing cells. Cells outside are dropped.
Patch resample_patch(const Patch& source, const RigidTransform& transform, int target_extent);

// Least-squares rigid fit dst ~ R*src + t with det(R) = +1 (Kabsch). Inputs are paired.
RigidTransform fit_rigid(std::span<const Point3> src, std::span<const Point3> dst);

struct AlignmentResult {
  RigidTransform transform;
  double distance = 0.0;  // pose-invariant patch distance at `transform`
  int iterations = 0;
  bool converged = false;
};

struct IcpOptions {
  int max_iters = 50;
  double tol = 1e-6;
};

// Point-to-point ICP from `init`. The reflection flag is taken from init and never changed.
// `distance` in the result is the symmetric L1 matching score evaluated at the final pose.
AlignmentResult icp_align(const PointSet& source, const PointSet& target, const RigidTransform& init,
                          const IcpOptions& options = {});

// Translation that maps the centroid of R*mirror_f(source) onto the centroid of target.
RigidTransform centroid_init(std::span<const Point3> source, std::span<const Point3> target,
                             const Eigen::Matrix3d& rotation, bool reflect);

// Symmetric nearest-neighbour L1 sum normalized by the L1 position mass of both sets:
//   (sum_x |x - NN_B(x)|_1 + sum_y |y - NN_A(y)|_1) / (sum_x |x|_1 + sum_y |y|_1)
// with A the already-transformed source and B the target (both relative to patch centers).
double matching_distance(std::span<const Point3> transformed_source, std::span<const Point3> target);

// The 24 proper axis-aligned rotations (signed permutation matrices), identity first.
const std::array<Eigen::Matrix3d, 24>& axis_rotations();

// Per-patch data reused across many geometric_distance calls: occupied voxels, their
// doubled centered coordinates 2v + 1 - e, and optionally a table holding, for every cell
// of the box [-e, 2e)^3, the L1 length to the Euclidean-nearest voxel (lowest index on ties).
struct PatchGeometry {
  explicit PatchGeometry(const Patch& patch, bool build_table = true);

  int extent = 0;
  std::vector<Index3> voxels;
  std::vector<Index3> doubled;
  std::array<long, 3> sum{0, 0, 0};
  long mass = 0;
  PointSet points;  // patch-center frame
  std::vector<std::int16_t> table;
  // Doubled coordinates under each of the 48 axis-aligned maps (24 * reflect + rotation),
  // pose-major, and their per-pose sums.
  std::vector<Index3> pose_images;
  std::array<std::array<long, 3>, 48> pose_sums{};

  bool has_table() const { return !table.empty(); }
  int nearest_l1(const Index3& q) const {
    const int e = extent, dim = 3 * e;
    if (!table.empty() && q[0] >= -e && q[1] >= -e && q[2] >= -e && q[0] < 2 * e && q[1] < 2 * e && q[2] < 2 * e)
      return table[(static_cast<std::size_t>(q[0] + e) * dim + (q[1] + e)) * dim + (q[2] + e)];
    return nearest_l1_scan(q);
  }

 private:
  int nearest_l1_scan(const Index3& q) const;
};

// Rigid-invariant distance between two equally sized non-empty patches. All 48
// axis-aligned orthogonal maps are screened with centroid-aligned lattice
// translations, then ICP refines the best screening pose of each reflection flag.
// The smallest distance found (and its pose) is returned.
AlignmentResult geometric_distance(const Patch& p1, const Patch& p2, const IcpOptions& options = {});
AlignmentResult geometric_distance(const PatchGeometry& p1, const PatchGeometry& p2, const IcpOptions& options = {});

}  // namespace patchrd
