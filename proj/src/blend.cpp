#include "patchrd/blend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "patchrd/errors.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {

double softplus(double theta) { return theta > 30.0 ? theta : std::log1p(std::exp(theta)); }

double inverse_softplus(double omega) {
  if (omega <= 0.0) return -std::numeric_limits<double>::infinity();
  return omega > 30.0 ? omega : std::log(std::expm1(omega));
}

namespace {

constexpr double kThetaLimit = 20.0;
constexpr double kBeta1 = 0.9, kBeta2 = 0.999;

// d softplus / d theta written in terms of omega = softplus(theta).
double softplus_slope(double omega) { return -std::expm1(-omega); }

struct SlotLayout {
  std::vector<std::uint32_t> voxel;  // flat index in V
  std::vector<std::uint32_t> block;
  std::vector<std::uint8_t> value;
};

SlotLayout layout_for(const Patch& content, const Index3& placement, int extent, int s_blend) {
  SlotLayout l;
  const int e = content.extent;
  const int nb = extent / s_blend;
  l.voxel.reserve(content.occupancy.size());
  for (int x = 0; x < e; ++x)
    for (int y = 0; y < e; ++y)
      for (int z = 0; z < e; ++z) {
        const int gx = placement[0] + x, gy = placement[1] + y, gz = placement[2] + z;
        l.voxel.push_back(static_cast<std::uint32_t>((gx * extent + gy) * extent + gz));
        l.block.push_back(static_cast<std::uint32_t>(((gx / s_blend) * nb + gy / s_blend) * nb + gz / s_blend));
        l.value.push_back(content.at(x, y, z) ? 1 : 0);
      }
  return l;
}

struct Problem {
  int extent = 0;
  int blocks = 0;
  double alpha = 0.0;
  std::span<const float> target;
  std::span<const float> coarse;
  std::vector<std::uint8_t> boundary;
  std::vector<SlotLayout> layouts;
};

struct Field {
  std::vector<double> xi, n;
};

Problem make_problem(const BlendState& state, std::span<const Patch> codebook, const VoxelGrid& target,
                     const VoxelGrid& coarse) {
  if (state.extent < 1 || state.s_blend < 1 || state.extent % state.s_blend != 0) {
    throw InvalidArgument("blend state: s_blend must divide the subvolume extent");
  }
  if (target.size() != state.extent || coarse.size() != state.extent) {
    throw InvalidArgument("blend target/coarse grids must match the subvolume extent");
  }
  Problem p;
  p.extent = state.extent;
  p.blocks = state.block_count();
  p.alpha = state.alpha;
  p.target = target.values();
  p.coarse = coarse.values();
  p.boundary.resize(target.voxel_count());
  for (int x = 0; x < p.extent; ++x)
    for (int y = 0; y < p.extent; ++y)
      for (int z = 0; z < p.extent; ++z)
        p.boundary[target.index(x, y, z)] = on_block_boundary({x, y, z}, state.s_blend) ? 1 : 0;
  for (const auto& slot : state.slots) {
    if (static_cast<int>(slot.weight_blocks.size()) != p.blocks) throw InvalidArgument("slot weight grid has wrong size");
    p.layouts.push_back(layout_for(slot_content(slot, codebook, state.s_patch), slot.placement, p.extent, state.s_blend));
  }
  return p;
}

Field accumulate(const Problem& p, std::span<const double> w) {
  Field f;
  f.xi.assign(p.target.size(), 0.0);
  f.n.assign(p.target.size(), 0.0);
  for (std::size_t m = 0; m < p.layouts.size(); ++m) {
    const auto& l = p.layouts[m];
    const double* wm = w.data() + m * static_cast<std::size_t>(p.blocks);
    for (std::size_t k = 0; k < l.voxel.size(); ++k) {
      const double omega = wm[l.block[k]];
      f.xi[l.voxel[k]] += omega;
      if (l.value[k]) f.n[l.voxel[k]] += omega;
    }
  }
  return f;
}

double voxel_value(const Problem& p, const Field& f, std::size_t i) {
  return f.xi[i] > 0.0 ? f.n[i] / f.xi[i] : static_cast<double>(p.coarse[i]);
}

struct Sums {
  double rec2 = 0.0;
  double smooth = 0.0;
};

Sums sums(const Problem& p, const Field& f) {
  Sums s;
  for (std::size_t i = 0; i < p.target.size(); ++i) {
    const double d = voxel_value(p, f, i) - p.target[i];
    s.rec2 += d * d;
    if (p.boundary[i]) s.smooth += f.n[i] * (f.xi[i] - f.n[i]);
  }
  return s;
}

BlendLosses to_losses(const Sums& s, double alpha) {
  BlendLosses l;
  l.rec = std::sqrt(s.rec2);
  l.smooth = s.smooth;
  l.total = l.rec + alpha * l.smooth;
  return l;
}

// Loss and gradient with respect to the weights themselves (omega), slot-major.
BlendLosses evaluate(const Problem& p, std::span<const double> w, std::vector<double>* grad_omega) {
  const Field f = accumulate(p, w);
  const BlendLosses losses = to_losses(sums(p, f), p.alpha);
  if (!grad_omega) return losses;
  grad_omega->assign(w.size(), 0.0);
  // Per-voxel derivative for a contributing slot whose content there is 0 (g[0]) or 1 (g[1]).
  std::vector<std::array<double, 2>> g(p.target.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < p.target.size(); ++i) {
    if (f.xi[i] <= 0.0) continue;
    const double v = f.n[i] / f.xi[i];
    const double rec = losses.rec > 0.0 ? (v - p.target[i]) / losses.rec / f.xi[i] : 0.0;
    g[i] = {-rec * v, rec * (1.0 - v)};
    if (p.boundary[i]) {
      g[i][0] += p.alpha * f.n[i];
      g[i][1] += p.alpha * (f.xi[i] - f.n[i]);
    }
  }
  for (std::size_t m = 0; m < p.layouts.size(); ++m) {
    const auto& l = p.layouts[m];
    double* gm = grad_omega->data() + m * static_cast<std::size_t>(p.blocks);
    for (std::size_t k = 0; k < l.voxel.size(); ++k) gm[l.block[k]] += g[l.voxel[k]][l.value[k]];
  }
  return losses;
}

void check_finite(const BlendLosses& l, std::span<const double> w, int blocks, int iteration) {
  if (std::isfinite(l.total)) return;
  int slot = -1;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!std::isfinite(w[i])) {
      slot = static_cast<int>(i / static_cast<std::size_t>(blocks));
      break;
    }
  throw NumericError("blend optimization: non-finite loss at slot " + std::to_string(slot) + ", iteration " +
                     std::to_string(iteration));
}

}  // namespace

std::vector<int> axis_corners(int size, int extent, int stride) {
  if (extent < 1 || extent > size) throw InvalidArgument("subvolume extent must lie in [1, shape size]");
  if (stride < 1 || stride > extent) throw InvalidArgument("subvolume stride must lie in [1, extent] to cover the shape");
  std::vector<int> out;
  for (int c = 0;; c += stride) {
    if (c + extent >= size) {
      out.push_back(size - extent);
      break;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<Index3> subvolume_corners(int shape_size, int s_subv, int stride) {
  const auto axis = axis_corners(shape_size, s_subv, stride);
  std::vector<Index3> out;
  for (int x : axis)
    for (int y : axis)
      for (int z : axis) out.push_back({x, y, z});
  return out;
}

std::vector<CandidateSlot> select_candidates(std::span<const RetrievalSet> retrievals, const Index3& v_corner,
                                             int s_subv, int s_patch, const BlendParams& params) {
  if (params.M < 1) throw InvalidArgument("M must be >= 1");
  if (params.s_blend < 1 || s_subv % params.s_blend != 0) throw InvalidArgument("s_blend must divide s_subv");
  const int nb = s_subv / params.s_blend;
  std::vector<CandidateSlot> slots;
  for (const auto& set : retrievals) {
    bool inside = true;
    for (int a = 0; a < 3; ++a)
      inside = inside && set.location[a] >= v_corner[a] && set.location[a] + s_patch <= v_corner[a] + s_subv;
    if (!inside) continue;
    const std::size_t take = params.ablation.no_blend ? std::min<std::size_t>(1, set.candidates.size())
                                                      : set.candidates.size();
    for (std::size_t r = 0; r < take; ++r) {
      CandidateSlot s;
      s.patch_id = set.candidates[r].patch_id;
      s.location = set.location;
      s.rank = static_cast<int>(r);
      for (int a = 0; a < 3; ++a) s.placement[a] = set.location[a] - v_corner[a];
      s.transform = set.candidates[r].transform_hint;
      s.weight_blocks.assign(static_cast<std::size_t>(nb) * nb * nb, 1.0);
      slots.push_back(std::move(s));
    }
  }
  std::stable_sort(slots.begin(), slots.end(), [](const CandidateSlot& a, const CandidateSlot& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.location < b.location;
  });
  if (slots.size() > static_cast<std::size_t>(params.M)) slots.resize(static_cast<std::size_t>(params.M));
  return slots;
}

BlendState make_state(const Index3& v_corner, int s_subv, int s_patch, const BlendParams& params,
                      std::vector<CandidateSlot> slots) {
  BlendState s;
  s.subvolume_corner = v_corner;
  s.extent = s_subv;
  s.s_patch = s_patch;
  s.s_blend = params.s_blend;
  s.alpha = params.effective_alpha();
  s.slots = std::move(slots);
  return s;
}

VoxelGrid window_grid(const VoxelGrid& grid, const Index3& corner, int extent) {
  for (int a = 0; a < 3; ++a)
    if (corner[a] < 0 || corner[a] + extent > grid.size()) throw InvalidArgument("window exceeds grid bounds");
  VoxelGrid out(extent, grid.kind(), grid.pitch());
  for (int x = 0; x < extent; ++x)
    for (int y = 0; y < extent; ++y)
      for (int z = 0; z < extent; ++z) out.set(x, y, z, grid.at(corner[0] + x, corner[1] + y, corner[2] + z));
  return out;
}

Patch slot_content(const CandidateSlot& slot, std::span<const Patch> codebook, int s_patch) {
  if (slot.patch_id < 0 || static_cast<std::size_t>(slot.patch_id) >= codebook.size()) {
    throw InvalidArgument("slot references patch " + std::to_string(slot.patch_id) + " outside the codebook");
  }
  return resample_patch(codebook[static_cast<std::size_t>(slot.patch_id)], slot.transform, s_patch);
}

bool on_block_boundary(const Index3& local, int s_blend) {
  for (int c : local) {
    const int r = c % s_blend;
    if (r == 0 || r == s_blend - 1) return true;
  }
  return false;
}

VoxelGrid blend_eval(const BlendState& state, std::span<const Patch> codebook, const VoxelGrid& coarse) {
  const Problem p = make_problem(state, codebook, coarse, coarse);
  std::vector<double> w;
  for (const auto& s : state.slots) w.insert(w.end(), s.weight_blocks.begin(), s.weight_blocks.end());
  const Field f = accumulate(p, w);
  VoxelGrid out(state.extent, GridKind::scalar);
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(voxel_value(p, f, i));
  return out;
}

double loss_rec(const VoxelGrid& v, const VoxelGrid& v_gt) {
  if (v.size() != v_gt.size()) throw InvalidArgument("loss_rec: grid sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < v.voxel_count(); ++i) {
    const double d = static_cast<double>(v.values()[i]) - v_gt.values()[i];
    total += d * d;
  }
  return std::sqrt(total);
}

double loss_smooth(const BlendState& state, std::span<const Patch> codebook) {
  const VoxelGrid zero(state.extent);
  const Problem p = make_problem(state, codebook, zero, zero);
  std::vector<double> w;
  for (const auto& s : state.slots) w.insert(w.end(), s.weight_blocks.begin(), s.weight_blocks.end());
  return sums(p, accumulate(p, w)).smooth;
}

std::vector<double> weight_params(const BlendState& state) {
  std::vector<double> theta;
  for (const auto& s : state.slots)
    for (double w : s.weight_blocks) theta.push_back(inverse_softplus(w));
  return theta;
}

void set_weight_params(BlendState& state, std::span<const double> theta) {
  std::size_t i = 0;
  for (auto& s : state.slots)
    for (double& w : s.weight_blocks) {
      if (i >= theta.size()) throw InvalidArgument("set_weight_params: too few parameters");
      w = softplus(theta[i++]);
    }
  if (i != theta.size()) throw InvalidArgument("set_weight_params: too many parameters");
}

BlendLosses blend_objective(const BlendState& state, std::span<const Patch> codebook, const VoxelGrid& target,
                            const VoxelGrid& coarse, std::vector<double>* grad) {
  const Problem p = make_problem(state, codebook, target, coarse);
  std::vector<double> w;
  for (const auto& s : state.slots) w.insert(w.end(), s.weight_blocks.begin(), s.weight_blocks.end());
  const BlendLosses losses = evaluate(p, w, grad);
  if (grad)
    for (std::size_t i = 0; i < w.size(); ++i) (*grad)[i] *= softplus_slope(w[i]);
  return losses;
}

BlendState optimize_subvolume(BlendState state, std::span<const Patch> codebook, const VoxelGrid& target,
                              const VoxelGrid& coarse, const BlendParams& params) {
  state.iterations = 0;
  if (state.slots.empty()) {
    state.losses = blend_objective(state, codebook, target, coarse);
    return state;
  }
  if (params.ablation.no_blend) {
    for (auto& s : state.slots) std::fill(s.weight_blocks.begin(), s.weight_blocks.end(), 1.0);
    state.losses = blend_objective(state, codebook, target, coarse);
    return state;
  }

  Problem p = make_problem(state, codebook, target, coarse);
  const std::size_t slots = state.slots.size();
  const auto blocks = static_cast<std::size_t>(p.blocks);

  // covers[m*blocks + b]: slot m has voxels in block b.
  std::vector<std::uint8_t> covers(slots * blocks, 0);
  for (std::size_t m = 0; m < slots; ++m)
    for (auto b : p.layouts[m].block) covers[m * blocks + b] = 1;

  // Parameters that touch the loss, grouped by block for the projection.
  std::vector<std::vector<std::size_t>> block_members(blocks);
  std::vector<std::size_t> active;
  for (std::size_t m = 0; m < slots; ++m)
    for (std::size_t b = 0; b < blocks; ++b)
      if (covers[m * blocks + b]) {
        block_members[b].push_back(m * blocks + b);
        active.push_back(m * blocks + b);
      }

  auto project = [&](std::vector<double>& w) {
    for (const auto& members : block_members) {
      double mx = 0.0;
      for (std::size_t i : members) mx = std::max(mx, w[i]);
      if (mx <= 0.0 || mx == 1.0) continue;
      for (std::size_t i : members) w[i] /= mx;
    }
  };

  std::vector<double> w0;
  for (const auto& s : state.slots) w0.insert(w0.end(), s.weight_blocks.begin(), s.weight_blocks.end());
  project(w0);
  const std::vector<SlotLayout> initial_layouts = p.layouts;
  std::vector<RigidTransform> initial_transforms;
  for (const auto& s : state.slots) initial_transforms.push_back(s.transform);

  const BlendLosses initial = evaluate(p, w0, nullptr);
  check_finite(initial, w0, p.blocks, 0);

  double best_total = initial.total;
  std::vector<double> best_w = w0;
  std::vector<RigidTransform> best_transforms = initial_transforms;

  // ICP proposals depend only on the slot's patch and its target window, so they are
  // computed once and reused by every pass and restart.
  struct Proposal {
    RigidTransform transform;
    SlotLayout layout;
  };
  std::vector<std::optional<Proposal>> proposals(slots);
  std::vector<std::uint8_t> proposal_ready(slots, 0);
  const bool refine = !params.ablation.no_deform && params.refine_every > 0;
  const int e = state.s_patch;

  auto proposal_for = [&](std::size_t m) -> const std::optional<Proposal>& {
    if (proposal_ready[m]) return proposals[m];
    proposal_ready[m] = 1;
    const CandidateSlot& slot = state.slots[m];
    const SlotLayout& current = initial_layouts[m];
    Patch window;
    window.extent = e;
    window.occupancy.resize(current.voxel.size());
    bool differs = false;
    for (std::size_t k = 0; k < current.voxel.size(); ++k) {
      const bool occ = p.target[current.voxel[k]] >= kOccupancyThreshold;
      window.occupancy[k] = occ ? 1 : 0;
      window.occupied_count += occ ? 1 : 0;
      differs = differs || (occ != (current.value[k] != 0));
    }
    if (!differs || window.occupied_count == 0) return proposals[m];
    const Patch& source = codebook[static_cast<std::size_t>(slot.patch_id)];
    const AlignmentResult a = icp_align(to_point_set(source, OriginMode::patch_center),
                                        to_point_set(window, OriginMode::patch_center), slot.transform, params.icp);
    const Patch content = resample_patch(source, a.transform, e);
    SlotLayout layout = layout_for(content, slot.placement, p.extent, state.s_blend);
    if (layout.value == current.value) return proposals[m];
    proposals[m] = Proposal{a.transform, std::move(layout)};
    return proposals[m];
  };

  const std::uint64_t base_seed =
      derive_seed(params.seed, {state.subvolume_corner[0], state.subvolume_corner[1], state.subvolume_corner[2]});

  std::vector<double> grad;
  for (int restart = 0; restart < std::max(1, params.restarts); ++restart) {
    if (best_total == 0.0) break;
    std::vector<double> w = w0;
    p.layouts = initial_layouts;
    std::vector<RigidTransform> transforms = initial_transforms;
    std::vector<std::uint8_t> tried(slots, 0);
    std::vector<double> m1(w.size(), 0.0), m2(w.size(), 0.0);
    if (restart > 0) {
      Rng rng(derive_seed(base_seed, {restart}));
      for (double& omega : w)
        omega = softplus(std::clamp(inverse_softplus(omega) + rng.normal(), -kThetaLimit, kThetaLimit));
      project(w);
    }

    for (int it = 0; it <= params.opt_iters; ++it) {
      if (refine && it % params.refine_every == 0) {
        Field f = accumulate(p, w);
        Sums s = sums(p, f);
        double current = to_losses(s, p.alpha).total;
        for (std::size_t m = 0; m < slots; ++m) {
          if (tried[m]) continue;
          const auto& prop = proposal_for(m);
          if (!prop) {
            tried[m] = 1;
            continue;
          }
          // Change in the loss sums from swapping slot m's content, over its window only.
          const SlotLayout& old_layout = p.layouts[m];
          const double* wm = w.data() + m * blocks;
          Sums next = s;
          for (std::size_t k = 0; k < old_layout.voxel.size(); ++k) {
            const int delta = prop->layout.value[k] - old_layout.value[k];
            if (delta == 0) continue;
            const std::size_t i = old_layout.voxel[k];
            const double xi = f.xi[i];
            const double n_old = f.n[i], n_new = n_old + delta * wm[old_layout.block[k]];
            const double d_old = n_old / xi - p.target[i], d_new = n_new / xi - p.target[i];
            next.rec2 += d_new * d_new - d_old * d_old;
            if (p.boundary[i]) next.smooth += n_new * (xi - n_new) - n_old * (xi - n_old);
          }
          next.rec2 = std::max(0.0, next.rec2);
          const double candidate = to_losses(next, p.alpha).total;
          if (candidate < current - 1e-12) {
            for (std::size_t k = 0; k < old_layout.voxel.size(); ++k) {
              const int delta = prop->layout.value[k] - old_layout.value[k];
              if (delta != 0) f.n[old_layout.voxel[k]] += delta * wm[old_layout.block[k]];
            }
            p.layouts[m] = prop->layout;
            transforms[m] = prop->transform;
            tried[m] = 1;
            s = next;
            current = candidate;
          }
        }
      }

      const BlendLosses l = evaluate(p, w, it < params.opt_iters ? &grad : nullptr);
      check_finite(l, w, p.blocks, it);
      ++state.iterations;
      if (l.total < best_total) {
        best_total = l.total;
        best_w = w;
        best_transforms = transforms;
      }
      if (it == params.opt_iters || l.total == 0.0) break;

      double gmax = 0.0;
      for (std::size_t i : active) {
        grad[i] *= softplus_slope(w[i]);
        gmax = std::max(gmax, std::abs(grad[i]));
      }
      if (gmax == 0.0) break;
      const double bias1 = 1.0 - std::pow(kBeta1, it + 1), bias2 = 1.0 - std::pow(kBeta2, it + 1);
      for (std::size_t i : active) {
        if (grad[i] == 0.0) continue;
        double delta = 0.0;
        switch (params.step) {
          case StepRule::adam:
            m1[i] = kBeta1 * m1[i] + (1 - kBeta1) * grad[i];
            m2[i] = kBeta2 * m2[i] + (1 - kBeta2) * grad[i] * grad[i];
            delta = params.lr * (m1[i] / bias1) / (std::sqrt(m2[i] / bias2) + 1e-12);
            break;
          case StepRule::max_normalized: delta = params.lr * grad[i] / gmax; break;
          case StepRule::plain: delta = params.lr * grad[i]; break;
        }
        w[i] = softplus(std::clamp(inverse_softplus(w[i]) - delta, -kThetaLimit, kThetaLimit));
      }
      project(w);
    }
  }

  for (std::size_t m = 0; m < slots; ++m) {
    state.slots[m].transform = best_transforms[m];
    state.slots[m].weight_blocks.assign(best_w.begin() + static_cast<std::ptrdiff_t>(m * blocks),
                                        best_w.begin() + static_cast<std::ptrdiff_t>((m + 1) * blocks));
  }
  state.losses = blend_objective(state, codebook, target, coarse);
  return state;
}

VoxelGrid assemble(int shape_size, std::span<const SubvolumeValues> subvolumes) {
  if (shape_size < 1) throw InvalidArgument("assemble: shape size must be >= 1");
  const std::size_t n = static_cast<std::size_t>(shape_size) * shape_size * shape_size;
  std::vector<double> sum(n, 0.0);
  std::vector<std::uint32_t> count(n, 0);
  VoxelGrid out(shape_size, GridKind::scalar);
  for (const auto& sv : subvolumes) {
    const int e = sv.values.size();
    for (int a = 0; a < 3; ++a)
      if (sv.corner[a] < 0 || sv.corner[a] + e > shape_size) throw InvalidArgument("assemble: subvolume outside shape");
    for (int x = 0; x < e; ++x)
      for (int y = 0; y < e; ++y)
        for (int z = 0; z < e; ++z) {
          const std::size_t i = out.index(sv.corner[0] + x, sv.corner[1] + y, sv.corner[2] + z);
          sum[i] += sv.values.at(x, y, z);
          ++count[i];
        }
  }
  auto values = out.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) throw InvalidArgument("assemble: subvolumes leave voxel " + std::to_string(i) + " uncovered");
    values[i] = static_cast<float>(std::clamp(sum[i] / count[i], 0.0, 1.0));
  }
  return out;
}

Discontinuity block_discontinuity(const VoxelGrid& v, int s_blend) {
  if (s_blend < 1) throw InvalidArgument("s_blend must be >= 1");
  Discontinuity d;
  const int n = v.size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        const Index3 p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          if ((p[a] + 1) % s_blend != 0 || p[a] + 1 >= n) continue;
          Index3 q = p;
          ++q[a];
          const double va = v.at(p), vb = v.at(q);
          if (std::max(va, vb) <= 0.0) continue;
          d.sum += std::abs(va - vb);
          ++d.pairs;
        }
      }
  return d;
}

}  // namespace patchrd
