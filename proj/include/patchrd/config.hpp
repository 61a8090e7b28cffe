#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "patchrd/blend.hpp"
#include "patchrd/coarse.hpp"

namespace patchrd {

enum class RetrievalMode { exact, embedding };

std::string to_string(RetrievalMode mode);
RetrievalMode retrieval_mode_from_string(const std::string& name);

// One schema shared by every subcommand. Defaults are the full-resolution constants.
struct PipelineConfig {
  std::string preset = "paper";
  int s_shape = 128;
  int s_patch = 18;
  int s_subv = 40;
  int s_blend = 8;
  int gamma_patch = 4;
  int gamma_subv = 32;
  int K = 10;
  int M = 400;
  double alpha = 10.0;
  std::uint64_t seed = 0;

  CoarseKind coarse = CoarseKind::gt_downsample;
  int closing_radius = 1;
  bool symmetry = true;
  std::string coarse_path;

  RetrievalMode retrieval = RetrievalMode::exact;
  int shortlist = 64;
  std::string embedder_path;

  int opt_iters = 100;
  int restarts = 3;
  double blend_lr = 0.05;
  int refine_every = 25;
  Ablation ablation{};

  int icp_max_iters = 50;
  double icp_tol = 1e-6;

  int n_rnd = 800;
  int n_true = 400;
  int epochs = 200;
  double train_lr = 1e-3;
  int batch = 32;
  int code_dim = 128;

  int threads = 1;  // execution only; never changes results

  BlendParams blend_params() const;
  IcpOptions icp() const;
  // Throws InvalidArgument naming the first violated constraint.
  void validate() const;
};

PipelineConfig preset_config(const std::string& name);

nlohmann::json to_json(const PipelineConfig& config);
// Keys absent from `j` keep the value in `base`; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
void write_config(const PipelineConfig& config, const std::filesystem::path& path);

}  // namespace patchrd
