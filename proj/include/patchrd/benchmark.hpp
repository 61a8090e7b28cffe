#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchrd/config.hpp"
#include "patchrd/corruption.hpp"
#include "patchrd/voxel_grid.hpp"

namespace patchrd {

struct BenchmarkShape {
  std::string id;
  std::string category;
  VoxelGrid gt;
};

struct BenchmarkOptions {
  CropKind kind = CropKind::cuboid;
  // Crop ratios; r > 0 accepts deleted fractions in [r - band, r + band], r = 0 means no crop.
  std::vector<double> ratios{0.1, 0.2, 0.4, 0.6};
  double band = 0.05;
  std::vector<std::uint64_t> seeds{0};
  bool baseline_rows = true;
  bool pipeline_rows = true;
  int surface_samples = 16384;
  bool record_runtime = false;  // runtime_s is 0 unless set, keeping the CSV deterministic
};

struct BenchmarkRow {
  std::string shape_id;
  std::string category;
  std::string crop_kind;
  double crop_ratio = 0.0;  // requested ratio (cuboid) or realized fraction (plane)
  std::uint64_t seed = 0;
  double cd_l2_x1000 = 0.0;
  double iou = 0.0;
  double runtime_s = 0.0;
  std::string status;  // ok | coarse_only | error:<reason>
};

struct EvalReport {
  std::vector<BenchmarkRow> rows;
};

// Surface-sample Chamfer-L2 (x1000) between grids in unit-cube coordinates.
double shape_chamfer_x1000(const VoxelGrid& output, const VoxelGrid& gt, int samples, std::uint64_t seed,
                           int threads = 1);

// Rows are ordered by (shape, ratio, seed), baseline row first. Failures become error rows.
EvalReport run_benchmark(const std::vector<BenchmarkShape>& shapes, const PipelineConfig& config,
                         const BenchmarkOptions& options);

inline constexpr const char* kReportHeader =
    "shape_id,category,crop_kind,crop_ratio,seed,cd_l2_x1000,iou,runtime_s,status";

std::string report_csv(const EvalReport& report);

// Mean CD and IoU per crop ratio, one line per row kind.
std::string summary_table(const EvalReport& report);

}  // namespace patchrd
