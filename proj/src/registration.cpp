#include "patchrd/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include <Eigen/SVD>
#include <Eigen/LU>

#include "patchrd/errors.hpp"
#include "patchrd/kdtree.hpp"

namespace patchrd {
namespace {

constexpr std::size_t kBruteForceLimit = 64;

// Exact nearest neighbour over a fixed point set; brute force for small sets, k-d tree otherwise.
class NearestIndex {
 public:
  explicit NearestIndex(std::span<const Point3> points) : points_(points) {
    if (points.size() > kBruteForceLimit) tree_.emplace(points);
  }
  Neighbor nearest(const Point3& q) const {
    return tree_ ? tree_->nearest(q) : nearest_brute_force(points_, q);
  }

 private:
  std::span<const Point3> points_;
  std::optional<KdTree> tree_;
};

double l1(const Point3& p) { return std::abs(p.x()) + std::abs(p.y()) + std::abs(p.z()); }

double matching_distance_with(std::span<const Point3> a, const NearestIndex& index_b, std::span<const Point3> b) {
  double numerator = 0.0, denominator = 0.0;
  for (const auto& x : a) {
    numerator += l1(x - b[index_b.nearest(x).index]);
    denominator += l1(x);
  }
  const NearestIndex index_a(a);
  for (const auto& y : b) {
    numerator += l1(y - a[index_a.nearest(y).index]);
    denominator += l1(y);
  }
  if (denominator == 0.0) return numerator == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return numerator / denominator;
}

// ---- lattice screening --------------------------------------------------------------

using IMat3 = std::array<std::array<int, 3>, 3>;

struct Offset {
  int dx, dy, dz, norm2;
};

// Integer offsets inside the ball of radius `radius`, ordered by squared length.
std::shared_ptr<const std::vector<Offset>> offset_table(int radius) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const std::vector<Offset>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[radius];
  if (!slot) {
    auto table = std::make_shared<std::vector<Offset>>();
    const int r2 = radius * radius;
    for (int dx = -radius; dx <= radius; ++dx)
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dz = -radius; dz <= radius; ++dz) {
          const int n2 = dx * dx + dy * dy + dz * dz;
          if (n2 <= r2) table->push_back({dx, dy, dz, n2});
        }
    std::stable_sort(table->begin(), table->end(), [](const Offset& a, const Offset& b) { return a.norm2 < b.norm2; });
    slot = std::move(table);
  }
  return slot;
}

struct LatticeHit {
  int index;
  int l1;
};

// Sparse lookup of integer points inside a cubic box; nearest queries walk offset
// shells and fall back to a scan when the ball is exhausted.
class LatticeIndex {
 public:
  LatticeIndex(int lo, int dim, std::shared_ptr<const std::vector<Offset>> offsets)
      : lo_(lo), dim_(dim), ids_(static_cast<std::size_t>(dim) * dim * dim, -1),
        stamps_(ids_.size(), 0), offsets_(std::move(offsets)) {}

  void reset(std::span<const Index3> points) {
    ++stamp_;
    points_ = points;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = cell(points[i]);
      if (stamps_[c] != stamp_) {
        stamps_[c] = stamp_;
        ids_[c] = static_cast<int>(i);
      }
    }
  }

  bool inside(const Index3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo_ || p[a] >= lo_ + dim_) return false;
    return true;
  }

  LatticeHit nearest(const Index3& q) const {
    const auto& table = *offsets_;
    std::size_t i = 0;
    while (i < table.size()) {
      const int n2 = table[i].norm2;
      int best = -1, best_l1 = 0;
      for (; i < table.size() && table[i].norm2 == n2; ++i) {
        const Index3 p{q[0] + table[i].dx, q[1] + table[i].dy, q[2] + table[i].dz};
        if (!inside(p)) continue;
        const std::size_t c = cell(p);
        if (stamps_[c] != stamp_) continue;
        if (best < 0 || ids_[c] < best) {
          best = ids_[c];
          best_l1 = std::abs(table[i].dx) + std::abs(table[i].dy) + std::abs(table[i].dz);
        }
      }
      if (best >= 0) return {best, best_l1};
    }
    long best_n2 = std::numeric_limits<long>::max();
    LatticeHit hit{-1, 0};
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const long dx = points_[k][0] - q[0], dy = points_[k][1] - q[1], dz = points_[k][2] - q[2];
      const long n2 = dx * dx + dy * dy + dz * dz;
      if (n2 < best_n2) {
        best_n2 = n2;
        hit = {static_cast<int>(k), static_cast<int>(std::abs(dx) + std::abs(dy) + std::abs(dz))};
      }
    }
    return hit;
  }

 private:
  std::size_t cell(const Index3& p) const {
    return (static_cast<std::size_t>(p[0] - lo_) * dim_ + (p[1] - lo_)) * dim_ + (p[2] - lo_);
  }

  int lo_, dim_;
  std::vector<int> ids_;
  std::vector<std::uint32_t> stamps_;
  std::uint32_t stamp_ = 0;
  std::span<const Index3> points_;
  std::shared_ptr<const std::vector<Offset>> offsets_;
};

IMat3 to_int(const Eigen::Matrix3d& m) {
  IMat3 out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r][c] = static_cast<int>(std::lround(m(r, c)));
  return out;
}

std::vector<Index3> occupied_indices(const Patch& p) {
  std::vector<Index3> out;
  out.reserve(static_cast<std::size_t>(p.occupied_count));
  for (int x = 0; x < p.extent; ++x)
    for (int y = 0; y < p.extent; ++y)
      for (int z = 0; z < p.extent; ++z)
        if (p.at(x, y, z)) out.push_back({x, y, z});
  return out;
}

// L1 length to the Euclidean-nearest point, lowest index on ties.
long brute_l1(std::span<const Index3> points, const Index3& q) {
  long best_n2 = std::numeric_limits<long>::max(), l1v = 0;
  for (const auto& m : points) {
    const long dx = m[0] - q[0], dy = m[1] - q[1], dz = m[2] - q[2];
    const long n2v = dx * dx + dy * dy + dz * dz;
    if (n2v < best_n2) best_n2 = n2v, l1v = std::abs(dx) + std::abs(dy) + std::abs(dz);
  }
  return l1v;
}

struct LatticePose {
  double distance = std::numeric_limits<double>::infinity();
  int rotation = 0;
  bool reflect = false;
  Index3 shift{0, 0, 0};  // in voxel units
};

}  // namespace

Eigen::Matrix3d RigidTransform::linear() const {
  Eigen::Matrix3d m = rotation;
  if (reflect) m.col(0) = -m.col(0);
  return m;
}

Point3 mirror(const Point3& p, bool reflect) {
  Point3 m = p;
  if (reflect) m.x() = -m.x();
  return m;
}

PointSet apply_transform(const PointSet& points, const RigidTransform& transform) {
  PointSet out;
  out.origin = points.origin;
  out.points.reserve(points.size());
  for (const auto& p : points.points) out.points.push_back(transform.apply(p));
  return out;
}

Patch resample_patch(const Patch& source, const RigidTransform& transform, int target_extent) {
  if (target_extent < 1) throw InvalidArgument("resample_patch: target extent must be >= 1");
  Patch out;
  out.corner = source.corner;
  out.extent = target_extent;
  out.occupancy.assign(static_cast<std::size_t>(target_extent) * target_extent * target_extent, 0);
  const double half = target_extent / 2.0;
  for (const auto& p : to_point_set(source, OriginMode::patch_center).points) {
    const Point3 y = transform.apply(p);
    Index3 cell;
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double c = std::floor(y[a] + half);
      if (c < 0 || c >= target_extent) {
        inside = false;
        break;
      }
      cell[a] = static_cast<int>(c);
    }
    if (!inside) continue;
    auto& v = out.occupancy[out.index(cell[0], cell[1], cell[2])];
    if (!v) {
      v = 1;
      ++out.occupied_count;
    }
  }
  return out;
}

RigidTransform fit_rigid(std::span<const Point3> src, std::span<const Point3> dst) {
  if (src.size() != dst.size() || src.empty()) throw InvalidArgument("fit_rigid: need equal, non-empty pairs");
  Point3 cs = Point3::Zero(), cd = Point3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

RigidTransform centroid_init(std::span<const Point3> source, std::span<const Point3> target,
                             const Eigen::Matrix3d& rotation, bool reflect) {
  if (source.empty() || target.empty()) throw InvalidArgument("centroid_init: empty point set");
  RigidTransform t;
  t.rotation = rotation;
  t.reflect = reflect;
  Point3 cs = Point3::Zero(), ct = Point3::Zero();
  for (const auto& p : source) cs += mirror(p, reflect);
  for (const auto& p : target) ct += p;
  cs /= static_cast<double>(source.size());
  ct /= static_cast<double>(target.size());
  t.translation = ct - rotation * cs;
  return t;
}

double matching_distance(std::span<const Point3> transformed_source, std::span<const Point3> target) {
  if (transformed_source.empty() || target.empty()) throw InvalidArgument("matching_distance: empty point set");
  return matching_distance_with(transformed_source, NearestIndex(target), target);
}

AlignmentResult icp_align(const PointSet& source, const PointSet& target, const RigidTransform& init,
                          const IcpOptions& options) {
  if (source.empty() || target.empty()) throw InvalidArgument("icp_align: source and target must be non-empty");
  const NearestIndex index(target.points);
  std::vector<Point3> mirrored;
  mirrored.reserve(source.size());
  for (const auto& p : source.points) mirrored.push_back(mirror(p, init.reflect));

  std::vector<Point3> matched(source.size());
  auto correspond = [&](const RigidTransform& t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < mirrored.size(); ++i) {
      const Neighbor nb = index.nearest(t.rotation * mirrored[i] + t.translation);
      matched[i] = target.points[nb.index];
      sq += nb.squared_distance;
    }
    return std::sqrt(sq / static_cast<double>(mirrored.size()));
  };
  auto residual = [&](const RigidTransform& t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < mirrored.size(); ++i)
      sq += (t.rotation * mirrored[i] + t.translation - matched[i]).squaredNorm();
    return std::sqrt(sq / static_cast<double>(mirrored.size()));
  };

  AlignmentResult result;
  result.transform = init;
  double previous = correspond(init);
  for (int it = 1; it <= options.max_iters; ++it) {
    if (it > 1) correspond(result.transform);
    RigidTransform next = fit_rigid(mirrored, matched);
    next.reflect = init.reflect;
    const double rms = residual(next);
    result.transform = next;
    result.iterations = it;
    if (std::abs(previous - rms) < options.tol) {
      result.converged = true;
      break;
    }
    previous = rms;
  }
  const PointSet moved = apply_transform(source, result.transform);
  result.distance = matching_distance(moved.points, target.points);
  return result;
}

const std::array<Eigen::Matrix3d, 24>& axis_rotations() {
  static const std::array<Eigen::Matrix3d, 24> rotations = [] {
    std::array<Eigen::Matrix3d, 24> out;
    std::size_t n = 0;
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto& perm : perms)
      for (int signs = 0; signs < 8; ++signs) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r) & 1 ? -1.0 : 1.0;
        if (m.determinant() > 0) out[n++] = m;
      }
    return out;
  }();
  return rotations;
}

namespace {

struct Screening {
  LatticePose best;
  std::array<LatticePose, 2> per_flag;
};

// Voxel coordinates of the doubled centered point c = 2v + 1 - e.
Index3 undouble(const Index3& c, int e) { return {(c[0] + e - 1) / 2, (c[1] + e - 1) / 2, (c[2] + e - 1) / 2}; }

IMat3 pose_matrix(int rotation, bool reflect) {
  IMat3 g = to_int(axis_rotations()[rotation]);
  if (reflect) g[0][0] = -g[0][0], g[1][0] = -g[1][0], g[2][0] = -g[2][0];
  return g;
}

struct ShiftList {
  std::array<Index3, 8> shift;
  int count = 0;
};

// Integer shifts bracketing the centroid offset: floor and ceiling on every axis where
// the offset is fractional, nearest first.
ShiftList candidate_shifts(const std::array<long, 3>& target_sum, double n_target,
                           const std::array<long, 3>& source_sum, double n_source) {
  std::array<std::array<int, 2>, 3> choices;
  std::array<int, 3> counts;
  for (int k = 0; k < 3; ++k) {
    const double offset = (static_cast<double>(target_sum[k]) / n_target - source_sum[k] / n_source) / 2.0;
    const int near = static_cast<int>(std::lround(offset));
    choices[k] = {near, offset > near ? near + 1 : near - 1};
    counts[k] = std::abs(offset - near) < 1e-9 ? 1 : 2;
  }
  ShiftList out;
  for (int i = 0; i < counts[0]; ++i)
    for (int j = 0; j < counts[1]; ++j)
      for (int l = 0; l < counts[2]; ++l) out.shift[out.count++] = {choices[0][i], choices[1][j], choices[2][l]};
  return out;
}

const std::array<IMat3, 48>& pose_matrices() {
  static const std::array<IMat3, 48> table = [] {
    std::array<IMat3, 48> out;
    for (int pose = 0; pose < 48; ++pose) out[pose] = pose_matrix(pose % 24, pose >= 24);
    return out;
  }();
  return table;
}

std::span<const Index3> pose_image(const PatchGeometry& a, int pose) {
  return std::span<const Index3>(a.pose_images).subspan(static_cast<std::size_t>(pose) * a.doubled.size(),
                                                          a.doubled.size());
}

// Shell-walk evaluation: works for any extent without per-patch tables.
class ShellEvaluator {
 public:
  ShellEvaluator(const PatchGeometry& a, const PatchGeometry& b)
      : a_(a), b_(b), offsets_(offset_table(a.extent)), tgt_index_(0, a.extent, offsets_),
        src_index_(-a.extent, 3 * a.extent, offsets_), moved_(a.voxels.size()) {
    tgt_index_.reset(b.voxels);
  }

  // Distance at the pose, or infinity once it provably exceeds `bound`.
  double operator()(int pose, const Index3& shift, double bound) {
    const int e = a_.extent;
    const auto rotated = pose_image(a_, pose);
    long src_mass = 0;
    bool boxed = true;
    for (std::size_t i = 0; i < rotated.size(); ++i) {
      Index3 q;
      for (int k = 0; k < 3; ++k) {
        q[k] = rotated[i][k] + 2 * shift[k];
        src_mass += std::abs(q[k]);
      }
      moved_[i] = undouble(q, e);
      boxed = boxed && src_index_.inside(moved_[i]);
    }
    // Masses are in doubled units; the numerator is in voxel units.
    const double denominator = 0.5 * static_cast<double>(src_mass + b_.mass);
    const double limit = bound * denominator * (1.0 + 1e-12);
    long numerator = 0;
    for (const auto& m : moved_) {
      numerator += tgt_index_.nearest(m).l1;
      if (numerator > limit) return kPruned;
    }
    if (boxed) {
      src_index_.reset(moved_);
      for (const auto& w : b_.voxels) {
        numerator += src_index_.nearest(w).l1;
        if (numerator > limit) return kPruned;
      }
    } else {
      for (const auto& w : b_.voxels) {
        numerator += brute_l1(moved_, w);
        if (numerator > limit) return kPruned;
      }
    }
    return denominator > 0 ? numerator / denominator : (numerator == 0 ? 0.0 : 1e300);
  }

  static constexpr double kPruned = std::numeric_limits<double>::infinity();

 private:
  const PatchGeometry& a_;
  const PatchGeometry& b_;
  std::shared_ptr<const std::vector<Offset>> offsets_;
  LatticeIndex tgt_index_, src_index_;
  std::vector<Index3> moved_;
};

// Table evaluation: both directions become lookups. The target-to-source direction maps
// target voxels back through the inverse pose, which preserves L1 and L2 lengths.
class TableEvaluator {
 public:
  TableEvaluator(const PatchGeometry& a, const PatchGeometry& b) : a_(a), b_(b) {}

  double operator()(int pose, const Index3& shift, double bound) const {
    const int e = a_.extent;
    const auto rotated = pose_image(a_, pose);
    const IMat3& g = pose_matrices()[pose];
    long src_mass = 0;
    for (const auto& q : rotated)
      for (int k = 0; k < 3; ++k) src_mass += std::abs(q[k] + 2 * shift[k]);
    const double denominator = 0.5 * static_cast<double>(src_mass + b_.mass);
    const double limit = bound * denominator * (1.0 + 1e-12);
    long numerator = 0;
    for (const auto& q : rotated) {
      numerator += b_.nearest_l1(undouble({q[0] + 2 * shift[0], q[1] + 2 * shift[1], q[2] + 2 * shift[2]}, e));
      if (numerator > limit) return ShellEvaluator::kPruned;
    }
    for (const auto& c : b_.doubled) {
      const Index3 d{c[0] - 2 * shift[0], c[1] - 2 * shift[1], c[2] - 2 * shift[2]};
      Index3 back;
      for (int k = 0; k < 3; ++k) back[k] = g[0][k] * d[0] + g[1][k] * d[1] + g[2][k] * d[2];
      numerator += a_.nearest_l1(undouble(back, e));
      if (numerator > limit) return ShellEvaluator::kPruned;
    }
    return denominator > 0 ? numerator / denominator : (numerator == 0 ? 0.0 : 1e300);
  }

 private:
  const PatchGeometry& a_;
  const PatchGeometry& b_;
};

// Every map at its nearest centroid shift first, then the remaining bracketing shifts
// for maps that came within kShiftSlack of the best, then a unit-step descent on the translation of each flag's best
// pose. A pose that cannot beat the best one of its flag is abandoned early; the
// numerator only grows, so pruning never changes the result.
constexpr double kShiftSlack = 1.5;

template <typename Evaluator>
Screening screen(const PatchGeometry& a, const PatchGeometry& b, Evaluator& eval) {
  const auto n1 = static_cast<double>(a.voxels.size()), n2 = static_cast<double>(b.voxels.size());
  Screening out;
  auto consider = [&](int pose, const Index3& shift) {
    const int flag = pose / 24;
    const double d = eval(pose, shift, out.per_flag[flag].distance);
    if (!(d < out.per_flag[flag].distance)) return false;
    out.per_flag[flag] = LatticePose{d, pose % 24, flag == 1, shift};
    if (d < out.best.distance) out.best = out.per_flag[flag];
    return true;
  };
  std::array<ShiftList, 48> shifts;
  std::array<double, 48> first{};
  for (int pose = 0; pose < 48; ++pose) {
    shifts[pose] = candidate_shifts(b.sum, n2, a.pose_sums[pose], n1);
    const int flag = pose / 24;
    first[pose] = eval(pose, shifts[pose].shift[0], kShiftSlack * out.per_flag[flag].distance);
    if (first[pose] < out.per_flag[flag].distance) {
      out.per_flag[flag] = LatticePose{first[pose], pose % 24, flag == 1, shifts[pose].shift[0]};
      if (first[pose] < out.best.distance) out.best = out.per_flag[flag];
    }
  }
  // Only maps whose nearest shift came close to the best try the other shifts.
  for (int pose = 0; pose < 48; ++pose) {
    if (!(first[pose] <= kShiftSlack * out.per_flag[pose / 24].distance)) continue;
    for (int i = 1; i < shifts[pose].count; ++i) consider(pose, shifts[pose].shift[i]);
  }
  for (int flag = 0; flag < 2; ++flag) {
    for (int step = 0; step < 3 * a.extent; ++step) {
      const LatticePose start = out.per_flag[flag];
      if (!(start.distance > 0.0 && start.distance < 1e300)) break;
      const int pose = 24 * flag + start.rotation;
      for (int k = 0; k < 3; ++k)
        for (int dir : {-1, 1}) {
          Index3 shift = start.shift;
          shift[k] += dir;
          consider(pose, shift);
        }
      if (out.per_flag[flag].shift == start.shift) break;
    }
  }
  return out;
}

Screening screen_poses(const PatchGeometry& a, const PatchGeometry& b) {
  if (a.has_table() && b.has_table()) {
    TableEvaluator eval(a, b);
    return screen(a, b, eval);
  }
  ShellEvaluator eval(a, b);
  return screen(a, b, eval);
}

}  // namespace

PatchGeometry::PatchGeometry(const Patch& p, bool build_table) : extent(p.extent) {
  if (p.occupied_count < 1) throw InvalidArgument("geometric_distance: both patches must contain occupied voxels");
  voxels = occupied_indices(p);
  const int e = extent;
  for (const auto& v : voxels) {
    const Index3 c{2 * v[0] + 1 - e, 2 * v[1] + 1 - e, 2 * v[2] + 1 - e};
    doubled.push_back(c);
    for (int k = 0; k < 3; ++k) {
      sum[k] += c[k];
      mass += std::abs(c[k]);
    }
  }
  points = to_point_set(p, OriginMode::patch_center);
  pose_images.resize(48 * doubled.size());
  for (int pose = 0; pose < 48; ++pose) {
    const IMat3& g = pose_matrices()[pose];
    auto& psum = pose_sums[pose];
    psum = {0, 0, 0};
    for (std::size_t i = 0; i < doubled.size(); ++i) {
      const Index3& c = doubled[i];
      Index3& out = pose_images[pose * doubled.size() + i];
      for (int k = 0; k < 3; ++k) {
        out[k] = g[k][0] * c[0] + g[k][1] * c[1] + g[k][2] * c[2];
        psum[k] += out[k];
      }
    }
  }
  if (!build_table) return;
  const int dim = 3 * e;
  const std::size_t cells = static_cast<std::size_t>(dim) * dim * dim;
  std::vector<int> best(cells, std::numeric_limits<int>::max());
  table.assign(cells, 0);
  // Points in index order with a strict comparison: the lowest index wins ties.
  for (const auto& v : voxels) {
    std::size_t cell = 0;
    for (int x = -e; x < 2 * e; ++x) {
      const int dx = x - v[0];
      for (int y = -e; y < 2 * e; ++y) {
        const int dy = y - v[1];
        const int dxy2 = dx * dx + dy * dy, dxy1 = std::abs(dx) + std::abs(dy);
        for (int z = -e; z < 2 * e; ++z, ++cell) {
          const int dz = z - v[2];
          const int d2 = dxy2 + dz * dz;
          if (d2 < best[cell]) {
            best[cell] = d2;
            table[cell] = static_cast<std::int16_t>(dxy1 + std::abs(dz));
          }
        }
      }
    }
  }
}

int PatchGeometry::nearest_l1_scan(const Index3& q) const { return static_cast<int>(brute_l1(voxels, q)); }

AlignmentResult geometric_distance(const PatchGeometry& p1, const PatchGeometry& p2, const IcpOptions& options) {
  if (p1.extent != p2.extent) throw InvalidArgument("geometric_distance: patch extents differ");
  const Screening s = screen_poses(p1, p2);

  auto to_transform = [](const LatticePose& pose) {
    RigidTransform t;
    t.rotation = axis_rotations()[pose.rotation];
    t.reflect = pose.reflect;
    t.translation = Point3(pose.shift[0], pose.shift[1], pose.shift[2]);
    return t;
  };

  AlignmentResult result;
  result.transform = to_transform(s.best);
  result.distance = s.best.distance;
  result.iterations = 0;
  result.converged = true;
  if (s.best.distance == 0.0) return result;
  for (const auto& pose : s.per_flag) {
    const AlignmentResult refined = icp_align(p1.points, p2.points, to_transform(pose), options);
    if (refined.distance < result.distance) result = refined;
  }
  return result;
}

AlignmentResult geometric_distance(const Patch& p1, const Patch& p2, const IcpOptions& options) {
  if (p1.occupied_count < 1 || p2.occupied_count < 1) {
    throw InvalidArgument("geometric_distance: both patches must contain occupied voxels");
  }
  if (p1.extent != p2.extent) throw InvalidArgument("geometric_distance: patch extents differ");
  // A single pair does not amortize the tables.
  return geometric_distance(PatchGeometry(p1, false), PatchGeometry(p2, false), options);
}

}  // namespace patchrd
