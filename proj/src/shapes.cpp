#include "patchrd/shapes.hpp"

#include <algorithm>
#include <cmath>

#include "patchrd/errors.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {
namespace {

// Drawing happens on a 32-unit canvas; coordinates scale to the grid size.
class Canvas {
 public:
  explicit Canvas(int size) : grid_(size), scale_(size / 32.0) {}

  int map(double u) const { return std::clamp(static_cast<int>(std::lround(u * scale_)), 0, grid_.size()); }

  // Box [lo, hi) in canvas units; always at least one voxel thick.
  void box(double x0, double y0, double z0, double x1, double y1, double z1) {
    int lo[3] = {map(x0), map(y0), map(z0)};
    int hi[3] = {map(x1), map(y1), map(z1)};
    for (int a = 0; a < 3; ++a) hi[a] = std::min(grid_.size(), std::max(hi[a], lo[a] + 1));
    for (int x = lo[0]; x < hi[0]; ++x)
      for (int y = lo[1]; y < hi[1]; ++y)
        for (int z = lo[2]; z < hi[2]; ++z) grid_.set(x, y, z, 1.0f);
  }

  // Vertical (along z) cylinder shell or solid disc.
  void cylinder(double cx, double cy, double z0, double z1, double r_out, double r_in) {
    const int n = grid_.size();
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) {
        const double dx = (x + 0.5) / scale_ - cx, dy = (y + 0.5) / scale_ - cy;
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r > r_out || r < r_in) continue;
        for (int z = map(z0); z < std::max(map(z1), map(z0) + 1) && z < n; ++z) grid_.set(x, y, z, 1.0f);
      }
  }

  VoxelGrid take() { return std::move(grid_); }

 private:
  VoxelGrid grid_;
  double scale_;
};

// z is up throughout.
void legs(Canvas& c, double x0, double y0, double x1, double y1, double z1, double t) {
  c.box(x0, y0, 2, x0 + t, y0 + t, z1);
  c.box(x1 - t, y0, 2, x1, y0 + t, z1);
  c.box(x0, y1 - t, 2, x0 + t, y1, z1);
  c.box(x1 - t, y1 - t, 2, x1, y1, z1);
}

void chair(Canvas& c, Rng& rng) {
  const double w = rng.uniform(14, 20), d = rng.uniform(12, 18), seat = rng.uniform(11, 15);
  const double t = 2, x0 = 16 - w / 2, x1 = 16 + w / 2, y0 = 16 - d / 2, y1 = 16 + d / 2;
  legs(c, x0, y0, x1, y1, seat, t);
  c.box(x0, y0, seat, x1, y1, seat + 2);
  const double top = std::min(30.0, seat + rng.uniform(11, 15));
  c.box(x0, y1 - 2, top - 2, x1, y1, top);  // top rail
  const int slats = 2 + static_cast<int>(rng.uniform_int(1, 3));
  for (int i = 0; i <= slats; ++i) {
    const double sx = x0 + (w - 1.5) * i / slats;
    c.box(sx, y1 - 1.5, seat + 2, sx + 1.5, y1, top - 2);
  }
  if (rng.uniform() < 0.5) {  // arms
    const double ah = seat + rng.uniform(5, 7);
    c.box(x0, y0 + 1, ah, x0 + 1.5, y1, ah + 1.5);
    c.box(x1 - 1.5, y0 + 1, ah, x1, y1, ah + 1.5);
    c.box(x0, y0 + 1, seat + 2, x0 + 1.5, y0 + 2.5, ah);
    c.box(x1 - 1.5, y0 + 1, seat + 2, x1, y0 + 2.5, ah);
  }
}

void table(Canvas& c, Rng& rng) {
  const double w = rng.uniform(20, 26), d = rng.uniform(14, 20), h = rng.uniform(14, 20);
  const double x0 = 16 - w / 2, x1 = 16 + w / 2, y0 = 16 - d / 2, y1 = 16 + d / 2;
  legs(c, x0 + 1, y0 + 1, x1 - 1, y1 - 1, h, 2);
  c.box(x0, y0, h, x1, y1, h + 2);
  const double rail = rng.uniform(4, 7);
  c.box(x0 + 1, y0 + 1.5, rail, x1 - 1, y0 + 2.5, rail + 1.5);
  c.box(x0 + 1, y1 - 2.5, rail, x1 - 1, y1 - 1.5, rail + 1.5);
}

void shelf(Canvas& c, Rng& rng) {
  const double w = rng.uniform(16, 24), d = rng.uniform(8, 12), h = rng.uniform(20, 27);
  const double x0 = 16 - w / 2, x1 = 16 + w / 2, y0 = 16 - d / 2, y1 = 16 + d / 2;
  c.box(x0, y0, 2, x0 + 2, y1, 2 + h);
  c.box(x1 - 2, y0, 2, x1, y1, 2 + h);
  const int boards = 3 + static_cast<int>(rng.uniform_int(0, 2));
  for (int i = 0; i < boards; ++i) {
    const double z = 2 + (h - 1.5) * i / (boards - 1);
    c.box(x0, y0, z, x1, y1, z + 1.5);
  }
  for (double x = x0 + 4; x < x1 - 3; x += 4) c.box(x, y1 - 1, 2, x + 1, y1, 2 + h);  // back battens
}

void bench(Canvas& c, Rng& rng) {
  const double w = rng.uniform(22, 27), d = rng.uniform(9, 13), h = rng.uniform(9, 13);
  const double x0 = 16 - w / 2, x1 = 16 + w / 2, y0 = 16 - d / 2, y1 = 16 + d / 2;
  for (double x : {x0 + 1, x1 - 3}) {
    c.box(x, y0, 2, x + 2, y0 + 2, h);
    c.box(x, y1 - 2, 2, x + 2, y1, h);
    c.box(x, y0, 4, x + 2, y1, 5.5);
  }
  const int slats = 3 + static_cast<int>(rng.uniform_int(0, 2));
  const double pitch = d / slats;
  for (int i = 0; i < slats; ++i) c.box(x0, y0 + i * pitch, h, x1, y0 + i * pitch + pitch - 1, h + 1.5);
}

void lamp(Canvas& c, Rng& rng) {
  const double base = rng.uniform(5, 8), h = rng.uniform(16, 21), shade = rng.uniform(6, 9);
  c.cylinder(16, 16, 2, 4, base, 0);
  c.box(15, 15, 4, 17, 17, 2 + h);
  c.cylinder(16, 16, 2 + h - 2, std::min(30.0, 2 + h + shade * 0.9), shade, shade - 1.5);
  c.box(15, 10.5, 2 + h, 17, 21.5, 2 + h + 1.5);  // shade spokes
  c.box(10.5, 15, 2 + h, 21.5, 17, 2 + h + 1.5);
}

}  // namespace

const std::vector<std::string>& shape_categories() {
  static const std::vector<std::string> names = {"chair", "table", "shelf", "bench", "lamp"};
  return names;
}

VoxelGrid make_shape(const std::string& category, int size, std::uint64_t seed) {
  if (size < 16) throw InvalidArgument("procedural shapes need a grid of at least 16");
  Canvas c(size);
  Rng rng(seed);
  if (category == "chair") chair(c, rng);
  else if (category == "table") table(c, rng);
  else if (category == "shelf") shelf(c, rng);
  else if (category == "bench") bench(c, rng);
  else if (category == "lamp") lamp(c, rng);
  else throw InvalidArgument("unknown shape category '" + category + "'");
  return c.take();
}

SyntheticShape synthetic_shape(int index, int size, std::uint64_t seed) {
  const auto& cats = shape_categories();
  SyntheticShape s;
  s.category = cats[static_cast<std::size_t>(index) % cats.size()];
  s.id = s.category + "_" + std::to_string(index);
  s.grid = make_shape(s.category, size, derive_seed(seed, {index}));
  return s;
}

}  // namespace patchrd
