#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "patchrd/blend.hpp"
#include "patchrd/config.hpp"
#include "patchrd/embedding_io.hpp"
#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// Coarse shape from the configured provider. `gt` is required for gt_downsample.
VoxelGrid make_coarse(const PipelineConfig& config, const VoxelGrid& partial, const VoxelGrid* gt);

// Detailed target: S inside coarse cells where S has any occupied voxel, upsampled C elsewhere.
VoxelGrid compose_target(const VoxelGrid& partial, const VoxelGrid& coarse);

// Upsampled coarse shape, the no-retrieval baseline.
VoxelGrid coarse_only(const VoxelGrid& coarse, int shape_size);

struct SubvolumeReport {
  Index3 corner{0, 0, 0};
  std::size_t slots = 0;
  BlendLosses initial{};
  BlendLosses final{};
  int iterations = 0;
  std::optional<BlendState> state;  // kept only when requested
};

struct StageTimes {
  double coarse_s = 0.0;
  double retrieval_s = 0.0;
  double blend_s = 0.0;
  double assemble_s = 0.0;
};

struct CompletionResult {
  VoxelGrid coarse;
  VoxelGrid target;
  VoxelGrid scalar;  // assembled blend output in [0,1]
  VoxelGrid binary;  // scalar thresholded at 0.5
  std::size_t codebook_size = 0;
  std::size_t retrieval_sets = 0;
  bool truncated = false;
  std::vector<SubvolumeReport> subvolumes;
  StageTimes times{};
};

struct CompletionOptions {
  const EmbeddingBundle* embedder = nullptr;  // required in embedding mode
  bool keep_states = false;
};

// Retrieval, blending and assembly for a partial shape given its coarse completion.
CompletionResult complete_shape(const VoxelGrid& partial, const VoxelGrid& coarse, const PipelineConfig& config,
                                const CompletionOptions& options = {});

nlohmann::json diagnostics_json(const CompletionResult& result, bool include_times);

}  // namespace patchrd
