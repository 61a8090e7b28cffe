#include "patchrd/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "patchrd/errors.hpp"
#include "patchrd/metrics.hpp"
#include "patchrd/pipeline.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {
namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string clean(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::int64_t ratio_key(double r) { return std::llround(r * 1000.0); }

}  // namespace

double shape_chamfer_x1000(const VoxelGrid& output, const VoxelGrid& gt, int samples, std::uint64_t seed, int threads) {
  if (output.size() != gt.size()) throw InvalidArgument("chamfer: grid sizes differ");
  // Same seed on both sides: identical surfaces give identical samples.
  auto a = surface_points(output, samples, seed);
  auto b = surface_points(gt, samples, seed);
  const double inv = 1.0 / gt.size();
  for (auto& p : a) p *= inv;
  for (auto& p : b) p *= inv;
  return 1000.0 * chamfer_l2(a, b, threads);
}

EvalReport run_benchmark(const std::vector<BenchmarkShape>& shapes, const PipelineConfig& config,
                         const BenchmarkOptions& options) {
  config.validate();
  if (shapes.empty()) throw InvalidArgument("benchmark needs at least one shape");
  EvalReport report;
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    const auto& shape = shapes[si];
    const std::vector<double> ratios = options.kind == CropKind::plane ? std::vector<double>{0.0} : options.ratios;
    for (double ratio : ratios) {
      for (std::uint64_t seed : options.seeds) {
        BenchmarkRow base;
        base.shape_id = shape.id;
        base.category = shape.category;
        base.crop_kind = ratio > 0.0 || options.kind == CropKind::plane ? to_string(options.kind) : "none";
        base.crop_ratio = ratio;
        base.seed = seed;
        const std::uint64_t row_seed = derive_seed(seed, {static_cast<std::int64_t>(si), ratio_key(ratio)});
        const std::uint64_t metric_seed = derive_seed(row_seed, {7});

        VoxelGrid partial, coarse;
        try {
          if (shape.gt.size() != config.s_shape) throw InvalidArgument("shape size does not match s_shape");
          if (options.kind == CropKind::plane) {
            const auto crop = crop_plane(shape.gt, row_seed);
            partial = crop.partial;
            base.crop_ratio = crop.spec.deleted_fraction;
          } else if (ratio > 0.0) {
            partial = crop_cuboid(shape.gt, std::max(1e-9, ratio - options.band), std::min(0.999, ratio + options.band),
                                  row_seed)
                          .partial;
          } else {
            partial = shape.gt.binarized();
          }
          coarse = make_coarse(config, partial, &shape.gt);
        } catch (const std::exception& e) {
          BenchmarkRow row = base;
          row.cd_l2_x1000 = row.iou = std::nan("");
          row.status = "error:" + clean(e.what());
          report.rows.push_back(row);
          continue;
        }

        if (options.baseline_rows) {
          BenchmarkRow row = base;
          try {
            const auto t0 = std::chrono::steady_clock::now();
            const VoxelGrid up = coarse_only(coarse, config.s_shape);
            row.cd_l2_x1000 = shape_chamfer_x1000(up, shape.gt, options.surface_samples, metric_seed, config.threads);
            row.iou = iou(up, shape.gt);
            if (options.record_runtime)
              row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.status = "coarse_only";
          } catch (const std::exception& e) {
            row.cd_l2_x1000 = row.iou = std::nan("");
            row.status = "error:" + clean(e.what());
          }
          report.rows.push_back(row);
        }
        if (options.pipeline_rows) {
          BenchmarkRow row = base;
          try {
            const auto t0 = std::chrono::steady_clock::now();
            PipelineConfig run = config;
            run.seed = row_seed;
            const CompletionResult r = complete_shape(partial, coarse, run);
            row.cd_l2_x1000 =
                shape_chamfer_x1000(r.binary, shape.gt, options.surface_samples, metric_seed, config.threads);
            row.iou = iou(r.binary, shape.gt);
            if (options.record_runtime)
              row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.status = "ok";
          } catch (const std::exception& e) {
            row.cd_l2_x1000 = row.iou = std::nan("");
            row.status = "error:" + clean(e.what());
          }
          report.rows.push_back(row);
        }
      }
    }
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.shape_id << ',' << r.category << ',' << r.crop_kind << ',' << fmt(r.crop_ratio) << ',' << r.seed << ','
        << fmt(r.cd_l2_x1000) << ',' << fmt(r.iou) << ',' << fmt(r.runtime_s) << ',' << r.status << '\n';
  }
  return out.str();
}

std::string summary_table(const EvalReport& report) {
  struct Acc {
    double cd = 0, iou = 0;
    int n = 0, errors = 0;
  };
  std::map<std::string, std::map<std::int64_t, Acc>> table;
  for (const auto& r : report.rows) {
    const std::string kind = r.status.rfind("error:", 0) == 0 ? "error" : r.status;
    auto& acc = table[kind == "error" ? "ok" : kind][ratio_key(r.crop_kind == "plane" ? 0.0 : r.crop_ratio)];
    if (kind == "error") {
      ++acc.errors;
      continue;
    }
    acc.cd += r.cd_l2_x1000;
    acc.iou += r.iou;
    ++acc.n;
  }
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %8s %12s %8s %6s %6s\n", "rows", "ratio", "CDx1e3", "IoU", "n", "err");
  out << buf;
  for (const auto& [kind, by_ratio] : table)
    for (const auto& [key, acc] : by_ratio) {
      const double n = acc.n ? acc.n : 1;
      std::snprintf(buf, sizeof buf, "%-12s %7.0f%% %12.4f %8.4f %6d %6d\n", kind == "ok" ? "pipeline" : kind.c_str(),
                    key / 10.0, acc.cd / n, acc.iou / n, acc.n, acc.errors);
      out << buf;
    }
  return out.str();
}

}  // namespace patchrd
