#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchrd/benchmark.hpp"
#include "patchrd/config.hpp"
#include "patchrd/corruption.hpp"
#include "patchrd/embedding_io.hpp"
#include "patchrd/errors.hpp"
#include "patchrd/grid_io.hpp"
#include "patchrd/metrics.hpp"
#include "patchrd/pipeline.hpp"
#include "patchrd/retrieval.hpp"
#include "patchrd/shapes.hpp"

namespace fs = std::filesystem;
using namespace patchrd;

namespace {

enum ExitCode { kOk = 0, kInputError = 2, kNumericError = 3, kPrecondition = 4 };

// Options shared by every subcommand that runs part of the pipeline. Unset flags leave
// the preset/config value alone.
struct ConfigFlags {
  std::string preset;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> K, M, opt_iters, restarts, shortlist, epochs, n_rnd, n_true, batch, code_dim, closing_radius;
  std::optional<double> alpha, train_lr, blend_lr;
  std::optional<std::string> coarse, retrieval, coarse_file, embedder;
  std::vector<std::string> ablate;
  bool no_symmetry = false;

  void add_to(CLI::App* app, bool training) {
    app->add_option("--preset", preset, "paper or small");
    app->add_option("--config", config_file, "JSON config; flags override its values");
    app->add_option("--seed", seed);
    app->add_option("--coarse", coarse, "gt_downsample | heuristic | external_file");
    app->add_option("--coarse-file", coarse_file, "coarse grid for the external_file provider");
    app->add_option("--closing-radius", closing_radius);
    app->add_flag("--no-symmetry", no_symmetry, "heuristic coarse: skip the mirror fill");
    if (training) {
      app->add_option("--epochs", epochs);
      app->add_option("--lr", train_lr);
      app->add_option("--batch", batch);
      app->add_option("--code-dim", code_dim);
      app->add_option("--n-rnd", n_rnd);
      app->add_option("--n-true", n_true);
      return;
    }
    app->add_option("--K", K);
    app->add_option("--M", M);
    app->add_option("--alpha", alpha);
    app->add_option("--opt-iters", opt_iters);
    app->add_option("--restarts", restarts);
    app->add_option("--blend-lr", blend_lr);
    app->add_option("--shortlist", shortlist, "exact retrieval pre-rank size, 0 = whole codebook");
    app->add_option("--retrieval", retrieval, "exact | embedding");
    app->add_option("--embedder", embedder, "PRDB1 file for embedding retrieval");
    app->add_option("--ablate", ablate, "no-deform, no-blend, no-smooth")->delimiter(',');
  }

  PipelineConfig resolve(int threads) const {
    PipelineConfig c = config_file.empty() ? PipelineConfig{} : load_config(config_file);
    if (!preset.empty()) {
      // An explicit preset on the command line replaces the file's geometry.
      const PipelineConfig p = preset_config(preset);
      c.preset = p.preset;
      c.s_shape = p.s_shape;
      c.s_patch = p.s_patch;
      c.s_subv = p.s_subv;
      c.s_blend = p.s_blend;
      c.gamma_patch = p.gamma_patch;
      c.gamma_subv = p.gamma_subv;
    }
    if (seed) c.seed = *seed;
    if (K) c.K = *K;
    if (M) c.M = *M;
    if (alpha) c.alpha = *alpha;
    if (opt_iters) c.opt_iters = *opt_iters;
    if (restarts) c.restarts = *restarts;
    if (blend_lr) c.blend_lr = *blend_lr;
    if (shortlist) c.shortlist = *shortlist;
    if (epochs) c.epochs = *epochs;
    if (train_lr) c.train_lr = *train_lr;
    if (batch) c.batch = *batch;
    if (code_dim) c.code_dim = *code_dim;
    if (n_rnd) c.n_rnd = *n_rnd;
    if (n_true) c.n_true = *n_true;
    if (closing_radius) c.closing_radius = *closing_radius;
    if (no_symmetry) c.symmetry = false;
    if (coarse) c.coarse = coarse_kind_from_string(*coarse);
    if (coarse_file) {
      c.coarse_path = *coarse_file;
      if (!coarse) c.coarse = CoarseKind::external_file;
    }
    if (retrieval) c.retrieval = retrieval_mode_from_string(*retrieval);
    if (embedder) {
      c.embedder_path = *embedder;
      if (!retrieval) c.retrieval = RetrievalMode::embedding;
    }
    for (const auto& a : ablate) {
      if (a == "no-deform" || a == "no_deform") c.ablation.no_deform = true;
      else if (a == "no-blend" || a == "no_blend") c.ablation.no_blend = true;
      else if (a == "no-smooth" || a == "no_smooth") c.ablation.no_smooth = true;
      else throw InvalidArgument("unknown ablation '" + a + "' (expected no-deform, no-blend or no-smooth)");
    }
    c.threads = threads;
    c.validate();
    return c;
  }
};

int threads_from_env(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("PATCHRD_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string("PATCHRD_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

std::pair<double, double> parse_ratio_range(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const double r = std::stod(text);
      return {r, r};
    }
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw InvalidArgument("--ratio expects lo:hi, got '" + text + "'");
  }
}

nlohmann::json crop_json(const CropSpec& s, const std::string& input) {
  nlohmann::json j = {{"input", input},         {"kind", to_string(s.kind)},
                      {"seed", s.seed},         {"ratio_range", {s.ratio_lo, s.ratio_hi}},
                      {"deleted_fraction", s.deleted_fraction}, {"attempts", s.attempts}};
  if (s.kind == CropKind::cuboid) {
    j["box_lo"] = s.box_lo;
    j["box_hi"] = s.box_hi;
  } else {
    j["normal"] = {s.normal.x(), s.normal.y(), s.normal.z()};
    j["offset"] = s.offset;
  }
  return j;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

std::vector<BenchmarkShape> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pvox" || ext == ".txt")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<BenchmarkShape> shapes;
  for (const auto& f : files) {
    // A "<category>_<rest>" file name supplies the category.
    const std::string stem = stem_of(f);
    const auto us = stem.find('_');
    shapes.push_back({stem, us == std::string::npos ? "unknown" : stem.substr(0, us), read_grid(f)});
  }
  return shapes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchrd: voxel shape completion by patch retrieval, deformation and blending"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (also PATCHRD_THREADS); results do not depend on it");

  // crop
  auto* crop = app.add_subcommand("crop", "delete a random cuboid or half-space from grids");
  std::vector<std::string> crop_inputs;
  std::string crop_out, crop_kind = "cuboid", crop_ratio = "0.1:0.3";
  std::uint64_t crop_seed = 0;
  crop->add_option("inputs", crop_inputs, "input grids")->required();
  crop->add_option("outdir", crop_out, "output directory")->required();
  crop->add_option("--kind", crop_kind, "cuboid | plane");
  crop->add_option("--ratio", crop_ratio, "accepted deleted-volume fraction lo:hi (cuboid)");
  crop->add_option("--seed", crop_seed);
  // The last positional is the output directory.
  crop->positionals_at_end();

  // train-embed
  auto* train = app.add_subcommand("train-embed", "train coarse/detailed patch encoders on one shape pair");
  std::string train_partial, train_gt, train_out;
  ConfigFlags train_flags;
  train->add_option("--partial", train_partial, "partial grid S")->required();
  train->add_option("--gt", train_gt, "ground-truth grid")->required();
  train->add_option("--out", train_out, "PRDB1 output file")->required();
  train_flags.add_to(train, true);

  // complete
  auto* complete = app.add_subcommand("complete", "complete a partial grid");
  std::string complete_in, complete_out, complete_gt;
  bool complete_states = false;
  ConfigFlags complete_flags;
  complete->add_option("input", complete_in, "partial grid")->required();
  complete->add_option("--out", complete_out, "output directory")->required();
  complete->add_option("--gt", complete_gt, "ground truth (gt_downsample coarse provider)");
  complete->add_flag("--dump-states", complete_states, "include per-slot transforms and weights in diagnostics");
  complete_flags.add_to(complete, false);

  // eval
  auto* eval = app.add_subcommand("eval", "crop, complete and score a set of shapes");
  std::string eval_dir, eval_out = "report.csv", eval_kind = "cuboid", eval_ratios = "10,20,40,60", eval_seeds = "0";
  int eval_synthetic = 0;
  bool eval_coarse_only = false, eval_timing = false;
  ConfigFlags eval_flags;
  eval->add_option("dataset", eval_dir, "directory of ground-truth grids (*.pvox, *.txt)");
  eval->add_option("--synthetic", eval_synthetic, "use N procedural shapes instead of a directory");
  eval->add_option("--out", eval_out, "CSV report path");
  eval->add_option("--kind", eval_kind, "cuboid | plane");
  eval->add_option("--ratios", eval_ratios, "crop ratios in percent, comma separated (0 = no crop)");
  eval->add_option("--seeds", eval_seeds, "comma separated seeds");
  eval->add_flag("--coarse-only", eval_coarse_only, "also emit coarse-only baseline rows");
  eval->add_flag("--timing", eval_timing, "record wall-clock runtime_s (makes the CSV non-deterministic)");
  eval_flags.add_to(eval, false);

  // export-obj
  auto* obj = app.add_subcommand("export-obj", "write the exposed voxel faces of a grid as OBJ");
  std::string obj_in, obj_out;
  double obj_threshold = kOccupancyThreshold;
  obj->add_option("input", obj_in)->required();
  obj->add_option("output", obj_out)->required();
  obj->add_option("--threshold", obj_threshold);

  // info
  auto* info = app.add_subcommand("info", "describe a grid or embedder file");
  std::string info_in;
  info->add_option("input", info_in)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    const int threads = threads_from_env(threads_flag);

    if (*crop) {
      const CropKind kind = crop_kind_from_string(crop_kind);
      const auto [lo, hi] = parse_ratio_range(crop_ratio);
      fs::create_directories(crop_out);
      for (const auto& input : crop_inputs) {
        const VoxelGrid grid = read_grid(input);
        const CropResult r = kind == CropKind::cuboid ? crop_cuboid(grid, lo, hi, crop_seed) : crop_plane(grid, crop_seed);
        const std::string stem = stem_of(input);
        write_grid(r.partial, fs::path(crop_out) / (stem + "_partial.pvox"));
        write_text_file(fs::path(crop_out) / (stem + "_crop.json"), crop_json(r.spec, input).dump(2) + "\n");
        std::cout << input << ": deleted " << r.spec.deleted_fraction << " of occupied volume\n";
      }
      return kOk;
    }

    if (*train) {
      const PipelineConfig cfg = train_flags.resolve(threads);
      const VoxelGrid partial = read_grid(train_partial);
      const VoxelGrid gt = read_grid(train_gt);
      if (partial.size() != cfg.s_shape || gt.size() != cfg.s_shape)
        throw InvalidArgument("train-embed: grid sizes must equal s_shape = " + std::to_string(cfg.s_shape));
      const VoxelGrid coarse = make_coarse(cfg, partial, &gt);
      TripletOptions to;
      to.n_rnd = cfg.n_rnd;
      to.n_true = cfg.n_true;
      to.extent = cfg.s_patch;
      to.stride = cfg.gamma_patch;
      to.seed = cfg.seed;
      to.threads = threads;
      const auto triplets = make_triplets(partial, coarse, gt, to);
      if (cfg.epochs == 0) std::cerr << "warning: --epochs 0 writes an untrained embedder\n";
      TrainOptions opts{cfg.epochs, cfg.train_lr, cfg.batch, cfg.code_dim, cfg.seed};
      const TrainResult tr = train_embedding(triplets, cfg.s_patch, opts);
      EmbeddingBundle bundle{cfg.s_patch, cfg.code_dim, {tr.coarse, tr.detailed},
                             build_codebook(partial.binarized(), cfg.s_patch, cfg.gamma_patch)};
      write_bundle(bundle, train_out);
      write_config(cfg, fs::path(train_out).string() + ".config.json");
      for (std::size_t e = 0; e < tr.loss_history.size(); ++e)
        std::cout << "epoch " << e << " loss " << tr.loss_history[e] << '\n';
      return kOk;
    }

    if (*complete) {
      PipelineConfig cfg = complete_flags.resolve(threads);
      const VoxelGrid partial = read_grid(complete_in);
      if (partial.empty()) throw InvalidArgument("input grid " + complete_in + " has no occupied voxels");
      std::optional<VoxelGrid> gt;
      if (!complete_gt.empty()) gt = read_grid(complete_gt);
      if (cfg.coarse == CoarseKind::gt_downsample && !gt) {
        throw InvalidArgument("the gt_downsample coarse provider needs --gt (or use --coarse heuristic)");
      }
      const VoxelGrid coarse = make_coarse(cfg, partial, gt ? &*gt : nullptr);
      std::optional<EmbeddingBundle> bundle;
      if (cfg.retrieval == RetrievalMode::embedding) bundle = read_bundle(cfg.embedder_path);
      const CompletionResult r =
          complete_shape(partial, coarse, cfg, {bundle ? &*bundle : nullptr, complete_states});
      const fs::path dir(complete_out);
      fs::create_directories(dir);
      const std::string stem = stem_of(complete_in);
      write_grid(r.scalar, dir / (stem + "_completed_scalar.pvox"));
      write_grid(r.binary, dir / (stem + "_completed.pvox"));
      export_obj(r.binary, kOccupancyThreshold, dir / (stem + "_completed.obj"));
      write_text_file(dir / (stem + "_diagnostics.json"), diagnostics_json(r, true).dump(2) + "\n");
      write_config(cfg, dir / "config.json");
      if (r.truncated) std::cerr << "warning: K exceeds the codebook size; retrieval lists were truncated\n";
      std::cout << "codebook " << r.codebook_size << " patches, " << r.retrieval_sets << " query locations, "
                << r.binary.count_occupied() << " occupied output voxels\n";
      if (gt) std::cout << "IoU vs ground truth " << iou(r.binary, *gt) << '\n';
      return kOk;
    }

    if (*eval) {
      const PipelineConfig cfg = eval_flags.resolve(threads);
      std::vector<BenchmarkShape> shapes;
      if (eval_synthetic > 0) {
        for (int i = 0; i < eval_synthetic; ++i) {
          auto s = synthetic_shape(i, cfg.s_shape, cfg.seed);
          shapes.push_back({s.id, s.category, std::move(s.grid)});
        }
      } else {
        if (eval_dir.empty()) throw InvalidArgument("eval needs a dataset directory or --synthetic N");
        shapes = load_dataset(eval_dir);
      }
      if (shapes.empty()) throw InvalidArgument("eval: dataset is empty");
      BenchmarkOptions opts;
      opts.kind = crop_kind_from_string(eval_kind);
      opts.ratios.clear();
      for (const auto& t : CLI::detail::split(eval_ratios, ',')) opts.ratios.push_back(std::stod(t) / 100.0);
      opts.seeds.clear();
      for (const auto& t : CLI::detail::split(eval_seeds, ',')) opts.seeds.push_back(std::stoull(t));
      opts.baseline_rows = eval_coarse_only;
      opts.record_runtime = eval_timing;
      const EvalReport report = run_benchmark(shapes, cfg, opts);
      const fs::path out(eval_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_text_file(out, report_csv(report));
      write_config(cfg, out.string() + ".config.json");
      std::cout << "CD is the L2 Chamfer distance x1000 between surface samples in unit-cube coordinates\n"
                << summary_table(report);
      return kOk;
    }

    if (*obj) {
      const ObjStats s = export_obj(read_grid(obj_in), obj_threshold, obj_out);
      std::cout << s.vertices << " vertices, " << s.faces << " faces\n";
      return kOk;
    }

    if (*info) {
      const auto bytes = read_file_bytes(info_in);
      if (bytes.size() >= 5 && std::string(bytes.begin(), bytes.begin() + 5) == "PRDB1") {
        const EmbeddingBundle b = decode_bundle(bytes);
        std::cout << "embedder: extent " << b.extent << ", code_dim " << b.code_dim << ", " << b.encoders.size()
                  << " encoders, codebook " << b.codebook.size() << " patches\n";
        return kOk;
      }
      const VoxelGrid g = fs::path(info_in).extension() == ".txt" ? read_grid(info_in) : decode_grid(bytes);
      std::cout << "grid: size " << g.size() << ", " << (g.kind() == GridKind::scalar ? "scalar" : "binary") << ", "
                << g.count_occupied() << " occupied voxels\n";
      return kOk;
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericError;
  } catch (const EmptyCodebookError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}
