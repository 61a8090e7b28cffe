#include "patchrd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchrd/errors.hpp"
#include "patchrd/kdtree.hpp"
#include "patchrd/parallel.hpp"

namespace patchrd {
namespace {

double one_sided(std::span<const Point3> from, std::span<const Point3> to, int threads) {
  const KdTree tree(to);
  std::vector<double> d(from.size());
  parallel_for(from.size(), threads, [&](std::size_t i) { d[i] = tree.nearest(from[i]).squared_distance; });
  // Fixed summation order keeps the result independent of the thread count.
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double chamfer_l2(std::span<const Point3> a, std::span<const Point3> b, int threads) {
  if (a.empty() || b.empty()) throw InvalidArgument("chamfer_l2: point sets must be non-empty");
  return one_sided(a, b, threads) + one_sided(b, a, threads);
}

double iou(const VoxelGrid& a, const VoxelGrid& b, double threshold) {
  if (a.size() != b.size()) throw InvalidArgument("iou: grid sizes differ");
  std::size_t inter = 0, uni = 0;
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool x = va[i] >= threshold, y = vb[i] >= threshold;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman: need two equal-length samples of size >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace patchrd
