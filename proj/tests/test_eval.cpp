#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "patchrd/benchmark.hpp"
#include "patchrd/corruption.hpp"
#include "patchrd/errors.hpp"
#include "patchrd/metrics.hpp"
#include "patchrd/rng.hpp"
#include "patchrd/shapes.hpp"
#include "test_util.hpp"

using namespace patchrd;
using patchrd::test::fill_box;

namespace {

VoxelGrid solid(int size, int lo, int hi) {
  VoxelGrid g(size);
  fill_box(g, {lo, lo, lo}, {hi, hi, hi});
  return g;
}

std::size_t deleted(const VoxelGrid& before, const VoxelGrid& after) {
  return before.count_occupied() - after.count_occupied();
}

std::vector<Point3> random_points(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> p(static_cast<std::size_t>(n));
  for (auto& q : p) q = {rng.uniform(), rng.uniform(), rng.uniform()};
  return p;
}

double brute_chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  auto one_way = [](const std::vector<Point3>& from, const std::vector<Point3>& to) {
    double s = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

}  // namespace

TEST(CropCuboid, SolidCubeWithinRange) {
  const VoxelGrid cube = solid(64, 8, 56);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CropResult r = crop_cuboid(cube, 0.10, 0.30, seed);
    const double frac = static_cast<double>(deleted(cube, r.partial)) / static_cast<double>(cube.count_occupied());
    EXPECT_GE(frac, 0.10);
    EXPECT_LE(frac, 0.30);
    EXPECT_DOUBLE_EQ(frac, r.spec.deleted_fraction);
    EXPECT_TRUE(r.spec.realized);
    for (int a = 0; a < 3; ++a) EXPECT_LT(r.spec.box_lo[a], r.spec.box_hi[a]);
  }
}

TEST(CropCuboid, DeletesOnlyInsideTheBox) {
  const VoxelGrid cube = solid(32, 4, 28);
  const CropResult r = crop_cuboid(cube, 0.1, 0.3, 4);
  for (int x = 0; x < 32; ++x)
    for (int y = 0; y < 32; ++y)
      for (int z = 0; z < 32; ++z) {
        bool in = true;
        const Index3 p{x, y, z};
        for (int a = 0; a < 3; ++a) in = in && p[a] >= r.spec.box_lo[a] && p[a] < r.spec.box_hi[a];
        ASSERT_EQ(r.partial.occupied(x, y, z), cube.occupied(x, y, z) && !in);
      }
}

TEST(CropCuboid, Deterministic) {
  const VoxelGrid s = synthetic_shape(1, 32, 0).grid;
  const CropResult a = crop_cuboid(s, 0.1, 0.3, 77), b = crop_cuboid(s, 0.1, 0.3, 77);
  EXPECT_EQ(a.partial, b.partial);
  EXPECT_EQ(a.spec.box_lo, b.spec.box_lo);
  EXPECT_EQ(a.spec.attempts, b.spec.attempts);
}

TEST(CropCuboid, InfeasibleRangeIsGenerationError) {
  VoxelGrid two(32);
  two.set(3, 3, 3, 1.0f);
  two.set(20, 20, 20, 1.0f);
  EXPECT_THROW(crop_cuboid(two, 0.99, 0.999, 0), GenerationError);
}

TEST(CropCuboid, BadRangeRejected) {
  const VoxelGrid cube = solid(16, 2, 14);
  EXPECT_THROW(crop_cuboid(cube, 0.0, 0.3, 0), InvalidArgument);
  EXPECT_THROW(crop_cuboid(cube, 0.4, 0.3, 0), InvalidArgument);
  EXPECT_THROW(crop_cuboid(cube, 0.4, 1.0, 0), InvalidArgument);
}

TEST(CropPlane, AxisPlaneThroughCenterHalvesSymmetricShape) {
  const VoxelGrid cube = solid(64, 10, 54);
  const CropResult r = crop_plane_at(cube, {1, 0, 0}, 32.0);
  EXPECT_NEAR(r.spec.deleted_fraction, 0.5, 0.05);
  const CropResult d = crop_plane_at(cube, Point3(1, 1, 0).normalized(), 32.0 * std::sqrt(2.0));
  EXPECT_NEAR(d.spec.deleted_fraction, 0.5, 0.05);
}

TEST(CropPlane, DeterministicAndSometimesMoreThanHalf) {
  const VoxelGrid s = synthetic_shape(0, 32, 0).grid;
  bool over_half = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const CropResult a = crop_plane(s, seed), b = crop_plane(s, seed);
    ASSERT_EQ(a.partial, b.partial);
    EXPECT_GT(a.spec.deleted_fraction, 0.0);
    EXPECT_LT(a.spec.deleted_fraction, 1.0);
    EXPECT_NEAR(a.spec.normal.norm(), 1.0, 1e-12);
    over_half = over_half || a.spec.deleted_fraction > 0.5;
  }
  EXPECT_TRUE(over_half);
}

TEST(CropPlane, EmptyShapeIsGenerationError) { EXPECT_THROW(crop_plane(VoxelGrid(16), 0), GenerationError); }

TEST(Chamfer, IdentityAndClosedForm) {
  const auto a = random_points(50, 1);
  EXPECT_EQ(chamfer_l2(a, a), 0.0);
  const std::vector<Point3> o{Point3::Zero()}, d{Point3(0.3, 0, 0)};
  EXPECT_NEAR(chamfer_l2(o, d), 2 * 0.09, 1e-15);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric) {
  const auto a = random_points(1000, 2), b = random_points(1000, 3);
  const double expect = brute_chamfer(a, b);
  EXPECT_NEAR(chamfer_l2(a, b), expect, 1e-9);
  EXPECT_EQ(chamfer_l2(a, b), chamfer_l2(b, a));
  EXPECT_EQ(chamfer_l2(a, b, 4), chamfer_l2(a, b, 1));
}

TEST(Chamfer, EmptyRejected) {
  const auto a = random_points(5, 1);
  EXPECT_THROW(chamfer_l2(a, {}), InvalidArgument);
  EXPECT_THROW(chamfer_l2({}, a), InvalidArgument);
}

TEST(Iou, ClosedForms) {
  const VoxelGrid a = solid(16, 2, 10);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(VoxelGrid(16), VoxelGrid(16)), 1.0);
  VoxelGrid far(16);
  fill_box(far, {12, 12, 12}, {16, 16, 16});
  EXPECT_EQ(iou(a, far), 0.0);
  VoxelGrid b(16), c(16);
  fill_box(b, {0, 0, 0}, {8, 4, 4});
  fill_box(c, {4, 0, 0}, {12, 4, 4});
  EXPECT_DOUBLE_EQ(iou(b, c), 1.0 / 3.0);
  EXPECT_THROW(iou(a, VoxelGrid(8)), InvalidArgument);
}

TEST(Spearman, RanksWithTies) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{10, 20, 30, 40, 50}, z{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(x, y), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, z), -1.0);
  const std::vector<double> t{1, 1, 2, 2};
  const std::vector<double> u{1, 2, 3, 4};
  // Average ranks 1.5,1.5,3.5,3.5 against 1..4: Pearson of the rank vectors.
  EXPECT_NEAR(spearman(t, u), 2.0 / std::sqrt(5.0), 1e-12);
}

TEST(ShapeChamfer, IdenticalGridsAreZero) {
  const VoxelGrid s = synthetic_shape(2, 32, 0).grid;
  EXPECT_EQ(shape_chamfer_x1000(s, s, 2048, 1), 0.0);
  EXPECT_GT(shape_chamfer_x1000(s, solid(32, 0, 32), 2048, 1), 0.0);
}

TEST(Benchmark, ZeroCropControlAndDeterministicCsv) {
  PipelineConfig cfg = preset_config("small");
  std::vector<BenchmarkShape> shapes;
  const auto s = synthetic_shape(0, 32, 0);
  shapes.push_back({s.id, s.category, s.grid});
  BenchmarkOptions opt;
  opt.ratios = {0.0, 0.2};
  opt.surface_samples = 4096;
  const EvalReport a = run_benchmark(shapes, cfg, opt);
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.rows[0].status, "coarse_only");
  EXPECT_EQ(a.rows[1].status, "ok");
  EXPECT_EQ(a.rows[1].crop_kind, "none");
  EXPECT_LT(a.rows[1].cd_l2_x1000, 0.05);
  EXPECT_GE(a.rows[1].iou, 0.95);
  for (const auto& r : a.rows) {
    EXPECT_GE(r.cd_l2_x1000, 0.0);
    EXPECT_GE(r.iou, 0.0);
    EXPECT_LE(r.iou, 1.0);
  }
  const std::string csv = report_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kReportHeader);
  EXPECT_EQ(csv, report_csv(run_benchmark(shapes, cfg, opt)));
}

TEST(Benchmark, FailuresBecomeRows) {
  PipelineConfig cfg = preset_config("small");
  VoxelGrid two(32);
  two.set(3, 3, 3, 1.0f);
  two.set(20, 20, 20, 1.0f);
  std::vector<BenchmarkShape> shapes{{"tiny", "none", two}};
  BenchmarkOptions opt;
  opt.ratios = {0.2};
  const EvalReport r = run_benchmark(shapes, cfg, opt);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].status.rfind("error:", 0), 0u);
}
