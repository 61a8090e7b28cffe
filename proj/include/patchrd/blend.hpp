#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchrd/registration.hpp"
#include "patchrd/retrieval.hpp"
#include "patchrd/voxel_grid.hpp"

namespace patchrd {

struct Ablation {
  bool no_deform = false;  // keep retrieval transforms, skip ICP refinement
  bool no_blend = false;   // paste the top-1 candidate per location with weight 1
  bool no_smooth = false;  // alpha = 0
};

// Update rule for the weight parameters. adam rescales each coordinate by running moment
// estimates; max_normalized moves the largest coordinate by lr; plain is lr * gradient.
enum class StepRule { adam, max_normalized, plain };

struct BlendParams {
  int M = 400;
  double alpha = 10.0;
  int s_blend = 8;
  int opt_iters = 100;
  int restarts = 3;
  double lr = 0.05;
  int refine_every = 25;     // iterations between ICP refinement passes
  StepRule step = StepRule::adam;
  Ablation ablation{};
  std::uint64_t seed = 0;
  IcpOptions icp{};

  double effective_alpha() const { return ablation.no_smooth ? 0.0 : alpha; }
};

struct CandidateSlot {
  int patch_id = 0;
  Index3 location{0, 0, 0};   // retrieval location l in shape coordinates
  int rank = 0;               // position in R_l
  Index3 placement{0, 0, 0};  // l relative to the subvolume corner
  RigidTransform transform;
  // (s_subv/s_blend)^3 block weights, x-major. A slot only contributes inside its own window.
  std::vector<double> weight_blocks;
};

struct BlendLosses {
  double rec = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

struct BlendState {
  Index3 subvolume_corner{0, 0, 0};
  int extent = 0;   // s_subv
  int s_patch = 0;
  int s_blend = 0;
  double alpha = 0.0;
  std::vector<CandidateSlot> slots;
  BlendLosses losses{};
  int iterations = 0;

  int blocks_per_axis() const { return extent / s_blend; }
  int block_count() const { return blocks_per_axis() * blocks_per_axis() * blocks_per_axis(); }
};

double softplus(double theta);
double inverse_softplus(double omega);

// Corners stepping by `stride` with the last one clamped to size - extent.
std::vector<int> axis_corners(int size, int extent, int stride);
std::vector<Index3> subvolume_corners(int shape_size, int s_subv, int stride);

// Candidates at locations whose window lies inside V, sorted by (rank, x, y, z of l) and
// truncated to M. Weights start uniform at 1. An empty result means no candidate covers V.
std::vector<CandidateSlot> select_candidates(std::span<const RetrievalSet> retrievals, const Index3& v_corner,
                                             int s_subv, int s_patch, const BlendParams& params);

BlendState make_state(const Index3& v_corner, int s_subv, int s_patch, const BlendParams& params,
                      std::vector<CandidateSlot> slots);

// Sub-grid [corner, corner + extent)^3 as its own grid.
VoxelGrid window_grid(const VoxelGrid& grid, const Index3& corner, int extent);

// Slot content T_m(r_m): the codebook patch resampled into its placement window.
Patch slot_content(const CandidateSlot& slot, std::span<const Patch> codebook, int s_patch);

// Blended output over the subvolume; voxels with xi = 0 take `coarse` (a subvolume-sized grid).
VoxelGrid blend_eval(const BlendState& state, std::span<const Patch> codebook, const VoxelGrid& coarse);

// Root of the summed squared difference.
double loss_rec(const VoxelGrid& v, const VoxelGrid& v_gt);

// Sum over block-boundary voxels of w_m w_n |P_m - P_n| over unordered slot pairs.
double loss_smooth(const BlendState& state, std::span<const Patch> codebook);

// A voxel lies on a block boundary if any local coordinate c has c % s_blend in {0, s_blend-1}.
bool on_block_boundary(const Index3& local, int s_blend);

// L_rec + alpha * L_sm at the state's weights. If `grad` is given it receives dL/dtheta with
// weight = softplus(theta), laid out slot-major then block.
BlendLosses blend_objective(const BlendState& state, std::span<const Patch> codebook, const VoxelGrid& target,
                            const VoxelGrid& coarse, std::vector<double>* grad = nullptr);

std::vector<double> weight_params(const BlendState& state);
void set_weight_params(BlendState& state, std::span<const double> theta);

// Direct minimization of L over block weights and slot transforms. Returned losses are
// recomputed from scratch and never exceed those of the initial state.
BlendState optimize_subvolume(BlendState state, std::span<const Patch> codebook, const VoxelGrid& target,
                              const VoxelGrid& coarse, const BlendParams& params);

struct SubvolumeValues {
  Index3 corner{0, 0, 0};
  VoxelGrid values;
};

// Averages overlapping subvolumes; every voxel of the shape must be covered.
VoxelGrid assemble(int shape_size, std::span<const SubvolumeValues> subvolumes);

struct Discontinuity {
  double sum = 0.0;
  std::size_t pairs = 0;
  double mean() const { return pairs ? sum / static_cast<double>(pairs) : 0.0; }
};

// |V[x] - V[x']| over neighbours straddling an s_blend block face, counting pairs where
// either side is positive.
Discontinuity block_discontinuity(const VoxelGrid& v, int s_blend);

}  // namespace patchrd
