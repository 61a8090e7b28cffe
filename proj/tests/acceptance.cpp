// One PASS/FAIL line per acceptance criterion. `--only 1,4` restricts the run.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "patchrd/benchmark.hpp"
#include "patchrd/blend.hpp"
#include "patchrd/coarse.hpp"
#include "patchrd/config.hpp"
#include "patchrd/corruption.hpp"
#include "patchrd/grid_io.hpp"
#include "patchrd/metrics.hpp"
#include "patchrd/pipeline.hpp"
#include "patchrd/registration.hpp"
#include "patchrd/retrieval.hpp"
#include "patchrd/rng.hpp"
#include "patchrd/shapes.hpp"

using namespace patchrd;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kInvarianceTol = 1e-6;
constexpr double kInvarianceBudgetS = 60.0;
constexpr double kIcpTol = 1e-4;
constexpr double kIcpBudgetS = 30.0;
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;
constexpr double kSpearmanMin = 0.5;
constexpr double kLossRatioMax = 0.5;
constexpr double kSelfIouMin = 0.95;
constexpr double kSelfBudgetS = 300.0;
constexpr double kWinShare = 0.8;
constexpr double kMeanReduction = 0.2;
constexpr double kBlendTol = 1e-6;

constexpr int kShapeSize = 32;
constexpr int kSurfaceSamples = 16384;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

Patch random_patch(int extent, double density, Rng& rng) {
  Patch p;
  p.extent = extent;
  p.occupancy.assign(static_cast<std::size_t>(extent) * extent * extent, 0);
  while (p.occupied_count == 0)
    for (auto& o : p.occupancy) {
      o = rng.uniform() < density ? 1 : 0;
      p.occupied_count += o;
    }
  return p;
}

Eigen::Matrix3d random_rotation(Rng& rng, double max_angle) {
  Point3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  while (axis.norm() < 1e-3) axis = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return Eigen::AngleAxisd(rng.uniform(0, max_angle), axis.normalized()).toRotationMatrix();
}

PipelineConfig small_config() { return preset_config("small"); }

// 1. d(g(p), p) over 50 random 6^3 patches and all 48 axis-aligned maps.
Outcome invariance() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Patch p = random_patch(6, rng.uniform(0.1, 0.6), rng);
    for (const auto& r : axis_rotations())
      for (bool f : {false, true}) {
        RigidTransform g;
        g.rotation = r;
        g.reflect = f;
        worst = std::max(worst, geometric_distance(resample_patch(p, g, 6), p).distance);
      }
  }
  const double t = seconds_since(t0);
  return {worst <= kInvarianceTol && t < kInvarianceBudgetS,
          "max d " + fmt("%.3g", worst) + ", " + fmt("%.1f", t) + " s"};
}

// 2. ICP recovers known motions from the centroid initialization.
Outcome icp_exactness() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst_r = 0.0, worst_t = 0.0;
  for (int i = 0; i < 100; ++i) {
    PointSet s, d;
    const int n = static_cast<int>(rng.uniform_int(50, 300));
    for (int k = 0; k < n; ++k) s.points.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const Eigen::Matrix3d r = random_rotation(rng, 30.0 * M_PI / 180.0);
    Point3 tr(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    tr *= rng.uniform(0, 5) / std::max(tr.norm(), 1e-9);
    for (const auto& p : s.points) d.points.push_back(r * p + tr);
    const RigidTransform init = centroid_init(s.points, d.points, Eigen::Matrix3d::Identity(), false);
    const AlignmentResult a = icp_align(s, d, init);
    worst_r = std::max(worst_r, (a.transform.rotation - r).norm());
    worst_t = std::max(worst_t, (a.transform.translation - tr).norm());
  }
  const double t = seconds_since(t0);
  return {worst_r <= kIcpTol && worst_t <= kIcpTol && t < kIcpBudgetS,
          "max rotation err " + fmt("%.3g", worst_r) + ", translation err " + fmt("%.3g", worst_t) + ", " +
              fmt("%.1f", t) + " s"};
}

// 3. Analytic gradients against central differences.
Outcome gradients() {
  Rng rng(303);
  std::vector<Triplet> ts;
  for (int i = 0; i < 16; ++i) {
    Triplet t;
    t.coarse = random_patch(6, 0.4, rng);
    t.sample = random_patch(6, 0.4, rng);
    t.positive = t.sample;
    t.target_distance = rng.uniform(0.0, 0.8);
    ts.push_back(t);
  }
  const Embedder c = Embedder::initialize(EncoderKind::coarse, 6, 16, 1);
  const Embedder d = Embedder::initialize(EncoderKind::detailed, 6, 16, 2);
  const EmbeddingGradient g = embedding_gradient(ts, c, d);
  double worst_embed = 0.0;
  for (int k = 0; k < 20; ++k) {
    const bool coarse_side = k % 2 == 0;
    const auto r = static_cast<Eigen::Index>(rng.index(16)), col = static_cast<Eigen::Index>(rng.index(216));
    Embedder cp = c, cm = c, dp = d, dm = d;
    (coarse_side ? cp : dp).weights(r, col) += kFdStep;
    (coarse_side ? cm : dm).weights(r, col) -= kFdStep;
    const double fd = (embedding_loss(ts, cp, dp) - embedding_loss(ts, cm, dm)) / (2 * kFdStep);
    const double an = coarse_side ? g.coarse_weights(r, col) : g.detailed_weights(r, col);
    worst_embed = std::max(worst_embed, std::abs(fd - an) / std::max(std::abs(fd), 1e-8));
  }

  const int e = 16, sp = 6;
  BlendParams params;
  params.s_blend = 4;
  std::vector<Patch> cb;
  std::vector<CandidateSlot> slots;
  for (int m = 0; m < 5; ++m) {
    cb.push_back(random_patch(sp, 0.5, rng));
    CandidateSlot s;
    s.patch_id = m;
    s.placement = {static_cast<int>(rng.uniform_int(0, e - sp)), static_cast<int>(rng.uniform_int(0, e - sp)),
                   static_cast<int>(rng.uniform_int(0, e - sp))};
    s.location = s.placement;
    s.weight_blocks.resize(64);
    for (auto& w : s.weight_blocks) w = rng.uniform(0.2, 2.0);
    slots.push_back(s);
  }
  BlendState state = make_state({0, 0, 0}, e, sp, params, slots);
  VoxelGrid target(e), coarse(e);
  for (auto& v : target.values()) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
  for (auto& v : coarse.values()) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
  std::vector<double> grad;
  blend_objective(state, cb, target, coarse, &grad);
  const std::vector<double> theta = weight_params(state);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (grad[i] != 0.0) live.push_back(i);
  double worst_blend = 0.0;
  int checked = 0;
  for (int k = 0; k < 20 && !live.empty(); ++k, ++checked) {
    const std::size_t i = live[rng.index(live.size())];
    auto at = [&](double v) {
      auto th = theta;
      th[i] = v;
      BlendState s = state;
      set_weight_params(s, th);
      return blend_objective(s, cb, target, coarse).total;
    };
    const double fd = (at(theta[i] + kFdStep) - at(theta[i] - kFdStep)) / (2 * kFdStep);
    worst_blend = std::max(worst_blend, std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-8));
  }
  return {worst_embed < kFdRelTol && worst_blend < kFdRelTol && checked >= 10,
          "embedding rel err " + fmt("%.2g", worst_embed) + ", blending rel err " + fmt("%.2g", worst_blend)};
}

bool same_pair(const Triplet& a, const Triplet& b) { return a.coarse == b.coarse && a.sample == b.sample; }

// 4. Code distances rank pairs like the geometric distance after default training.
Outcome embedding_fidelity() {
  const PipelineConfig cfg = small_config();
  const VoxelGrid gt = synthetic_shape(0, kShapeSize, 0).grid;
  const VoxelGrid coarse = coarse_from_gt(gt);
  TripletOptions o;
  o.n_rnd = cfg.n_rnd;
  o.n_true = cfg.n_true;
  o.extent = cfg.s_patch;
  o.stride = cfg.gamma_patch;
  const auto train = make_triplets(gt, coarse, gt, o);
  const TrainResult r = train_embedding(train, cfg.s_patch, TrainOptions{cfg.epochs, cfg.train_lr, cfg.batch, cfg.code_dim, 0});

  TripletOptions h = o;
  h.seed = 999;
  h.n_rnd = 400;
  h.n_true = 0;
  std::vector<double> code, geo;
  for (const auto& t : make_triplets(gt, coarse, gt, h)) {
    if (code.size() == 200) break;
    if (std::any_of(train.begin(), train.end(), [&](const Triplet& u) { return same_pair(t, u); })) continue;
    code.push_back((r.coarse.encode(t.coarse) - r.detailed.encode(t.sample)).norm());
    geo.push_back(t.target_distance);
  }
  const double rho = spearman(code, geo);
  const double ratio = r.loss_history.back() / r.loss_history.front();
  return {code.size() == 200 && rho > kSpearmanMin && ratio < kLossRatioMax,
          "spearman " + fmt("%.3f", rho) + " on " + std::to_string(code.size()) + " held-out pairs, loss " +
              fmt("%.3f", r.loss_history.front()) + " -> " + fmt("%.3f", r.loss_history.back())};
}

// 5. Uncropped input, ground-truth coarse, exact retrieval.
Outcome self_reconstruction() {
  const auto t0 = Clock::now();
  const PipelineConfig cfg = small_config();
  double worst = 1.0;
  for (int i = 0; i < 10; ++i) {
    const VoxelGrid gt = synthetic_shape(i, kShapeSize, 0).grid;
    const CompletionResult r = complete_shape(gt, coarse_from_gt(gt), cfg);
    worst = std::min(worst, iou(r.binary, gt));
  }
  const double t = seconds_since(t0);
  return {worst >= kSelfIouMin && t < kSelfBudgetS, "min IoU " + fmt("%.4f", worst) + ", " + fmt("%.1f", t) + " s"};
}

struct CropCase {
  VoxelGrid gt, partial, coarse;
  std::uint64_t seed = 0;
};

const std::vector<CropCase>& crop_cases() {
  static const std::vector<CropCase> cases = [] {
    std::vector<CropCase> out;
    for (int i = 0; i < 20; ++i) {
      CropCase c;
      c.gt = synthetic_shape(i, kShapeSize, 0).grid;
      c.seed = derive_seed(6, {i});
      c.partial = crop_cuboid(c.gt, 0.1, 0.3, c.seed).partial;
      c.coarse = coarse_from_gt(c.gt);
      out.push_back(std::move(c));
    }
    return out;
  }();
  return cases;
}

struct RunStats {
  std::vector<double> cd;
  double discontinuity = 0.0;
};

RunStats run_cases(PipelineConfig cfg) {
  RunStats s;
  Discontinuity total;
  for (const auto& c : crop_cases()) {
    cfg.seed = c.seed;
    const CompletionResult r = complete_shape(c.partial, c.coarse, cfg);
    s.cd.push_back(shape_chamfer_x1000(r.binary, c.gt, kSurfaceSamples, c.seed));
    const Discontinuity d = block_discontinuity(r.scalar, cfg.s_blend);
    total.sum += d.sum;
    total.pairs += d.pairs;
  }
  s.discontinuity = total.mean();
  return s;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

const RunStats& full_pipeline() {
  static const RunStats s = run_cases(small_config());
  return s;
}

// 6. Pipeline against the upsampled coarse baseline on 10-30% cuboid crops.
Outcome improvement() {
  const RunStats& full = full_pipeline();
  std::vector<double> base;
  for (const auto& c : crop_cases())
    base.push_back(shape_chamfer_x1000(coarse_only(c.coarse, kShapeSize), c.gt, kSurfaceSamples, c.seed));
  int wins = 0;
  for (std::size_t i = 0; i < base.size(); ++i) wins += full.cd[i] <= base[i];
  const double share = static_cast<double>(wins) / static_cast<double>(base.size());
  const double reduction = 1.0 - mean(full.cd) / mean(base);
  return {share >= kWinShare && reduction >= kMeanReduction,
          std::to_string(wins) + "/" + std::to_string(base.size()) + " shapes improved, mean CD " +
              fmt("%.3f", mean(full.cd)) + " vs baseline " + fmt("%.3f", mean(base)) + " (reduction " +
              fmt("%.1f", 100 * reduction) + "%)"};
}

// 7. Mean CD over 20 shapes x 3 seeds does not decrease with the crop ratio.
Outcome crop_trend() {
  std::vector<BenchmarkShape> shapes;
  for (int i = 0; i < 20; ++i) {
    auto s = synthetic_shape(i, kShapeSize, 0);
    shapes.push_back({s.id, s.category, std::move(s.grid)});
  }
  BenchmarkOptions opt;
  opt.ratios = {0.1, 0.2, 0.4};
  opt.seeds = {0, 1, 2};
  opt.baseline_rows = false;
  const EvalReport rep = run_benchmark(shapes, small_config(), opt);
  std::vector<double> means;
  std::string detail = "mean CD";
  int errors = 0;
  for (double ratio : opt.ratios) {
    std::vector<double> cd;
    for (const auto& r : rep.rows) {
      if (r.crop_ratio != ratio) continue;
      if (r.status == "ok")
        cd.push_back(r.cd_l2_x1000);
      else
        ++errors;
    }
    means.push_back(mean(cd));
    detail += " " + fmt("%.0f%%", 100 * ratio) + "=" + fmt("%.3f", means.back()) + " (n=" + std::to_string(cd.size()) + ")";
  }
  bool ok = true;
  for (std::size_t i = 1; i < means.size(); ++i) ok = ok && means[i] >= means[i - 1];
  detail += ", " + std::to_string(errors) + " crops infeasible; paper reference 0.88/1.22/2.35 not reproducible here";
  return {ok, detail};
}

// 8. Smoothing lowers block-face discontinuity; blending beats best-patch paste.
Outcome ablation() {
  const RunStats& full = full_pipeline();
  PipelineConfig no_smooth = small_config();
  no_smooth.ablation.no_smooth = true;
  PipelineConfig no_blend = small_config();
  no_blend.ablation.no_blend = true;
  const RunStats ns = run_cases(no_smooth), nb = run_cases(no_blend);
  const bool ok = full.discontinuity < ns.discontinuity && mean(full.cd) <= mean(nb.cd);
  return {ok, "discontinuity alpha=10 " + fmt("%.4f", full.discontinuity) + " vs alpha=0 " +
                  fmt("%.4f", ns.discontinuity) + ", mean CD blend " + fmt("%.3f", mean(full.cd)) + " vs paste " +
                  fmt("%.3f", mean(nb.cd))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int sh(const std::string& args) {
  const std::string cmd = std::string(PATCHRD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code != 0) std::fprintf(stderr, "exit %d: %s\n", code, cmd.c_str());
  return code;
}

// 9. Reruns and thread counts give byte-identical files.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "patchrd_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string gt = (dir / "shape.pvox").string();
  write_grid(synthetic_shape(3, kShapeSize, 0).grid, gt);
  auto d = [&](const std::string& s) { return (dir / s).string(); };

  std::vector<std::pair<std::string, std::string>> compare;
  bool ran = true;
  for (const std::string tag : {"a", "b", "t"}) {
    const std::string threads = tag == "t" ? "--threads 4 " : "--threads 1 ";
    ran = ran && sh(threads + "crop --kind cuboid --ratio 0.1:0.3 --seed 5 " + gt + " " + d("crop_" + tag)) == 0;
    const std::string partial = d("crop_" + tag + "/shape_partial.pvox");
    ran = ran && sh(threads + "train-embed --preset small --epochs 10 --partial " + partial + " --gt " + gt + " --out " +
                    d("emb_" + tag + ".prdb")) == 0;
    ran = ran && sh(threads + "complete --preset small --gt " + gt + " " + partial + " --out " + d("out_" + tag)) == 0;
    ran = ran && sh(threads + "complete --preset small --opt-iters 20 --retrieval embedding --embedder " +
                    d("emb_" + tag + ".prdb") + " --gt " + gt + " " + partial + " --out " + d("emb_out_" + tag)) == 0;
    ran = ran && sh(threads + "eval --preset small --synthetic 2 --ratios 0,20 --seeds 0,1 --opt-iters 20 --coarse-only --out " +
                    d("eval_" + tag + ".csv")) == 0;
  }
  const std::vector<std::string> files{"crop_%/shape_partial.pvox",        "emb_%.prdb",
                                       "out_%/shape_partial_completed.pvox", "out_%/shape_partial_completed_scalar.pvox",
                                       "emb_out_%/shape_partial_completed_scalar.pvox", "eval_%.csv"};
  int same = 0;
  for (const auto& f : files) {
    auto path = [&](const std::string& tag) {
      std::string s = f;
      s.replace(s.find('%'), 1, tag);
      return dir / s;
    };
    const std::string a = slurp(path("a"));
    same += !a.empty() && a == slurp(path("b")) && a == slurp(path("t"));
  }
  fs::remove_all(dir);
  return {ran && same == static_cast<int>(files.size()),
          std::to_string(same) + "/" + std::to_string(files.size()) +
              " outputs identical across reruns and --threads 1/4" + (ran ? "" : ", a command failed")};
}

// 10. Blending is invariant to weight scale and stays within the candidate range.
Outcome blend_algebra() {
  Rng rng(1010);
  const int e = 16, sp = 6;
  BlendParams params;
  params.s_blend = 4;
  int bad_scale = 0, bad_range = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<Patch> cb;
    std::vector<CandidateSlot> slots;
    for (int m = 0; m < n; ++m) {
      cb.push_back(random_patch(sp, rng.uniform(0.1, 0.7), rng));
      CandidateSlot s;
      s.patch_id = m;
      for (int a = 0; a < 3; ++a) s.placement[a] = static_cast<int>(rng.uniform_int(0, e - sp));
      s.location = s.placement;
      s.transform.rotation = axis_rotations()[rng.index(24)] * random_rotation(rng, 0.3);
      s.transform.reflect = rng.uniform() < 0.5;
      s.transform.translation = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      s.weight_blocks.resize(64);
      for (auto& w : s.weight_blocks) w = rng.uniform(0.01, 3.0);
      slots.push_back(s);
    }
    VoxelGrid coarse(e);
    for (auto& v : coarse.values()) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    const BlendState state = make_state({0, 0, 0}, e, sp, params, slots);
    const VoxelGrid v = blend_eval(state, cb, coarse);

    BlendState scaled = state;
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    for (auto& s : scaled.slots)
      for (auto& w : s.weight_blocks) w *= c;
    const VoxelGrid u = blend_eval(scaled, cb, coarse);
    double diff = 0.0;
    for (std::size_t i = 0; i < v.voxel_count(); ++i) diff = std::max(diff, double(std::abs(v.values()[i] - u.values()[i])));
    worst = std::max(worst, diff);
    bad_scale += diff > kBlendTol;

    std::vector<float> lo(v.voxel_count(), 2.0f), hi(v.voxel_count(), -1.0f);
    for (const auto& s : slots) {
      const Patch content = slot_content(s, cb, sp);
      for (int x = 0; x < sp; ++x)
        for (int y = 0; y < sp; ++y)
          for (int z = 0; z < sp; ++z) {
            const std::size_t i = v.index(s.placement[0] + x, s.placement[1] + y, s.placement[2] + z);
            const float val = content.at(x, y, z) ? 1.0f : 0.0f;
            lo[i] = std::min(lo[i], val);
            hi[i] = std::max(hi[i], val);
          }
    }
    bool in_range = true;
    for (std::size_t i = 0; i < v.voxel_count(); ++i)
      if (hi[i] >= 0.0f && (v.values()[i] < lo[i] - kBlendTol || v.values()[i] > hi[i] + kBlendTol)) in_range = false;
    bad_range += !in_range;
  }
  return {bad_scale == 0 && bad_range == 0, "1000 states, max scaling change " + fmt("%.2g", worst) + ", " +
                                                std::to_string(bad_range) + " range violations"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, invariance},        {2, icp_exactness}, {3, gradients}, {4, embedding_fidelity}, {5, self_reconstruction},
      {6, improvement},       {7, crop_trend},    {8, ablation},  {9, determinism},        {10, blend_algebra}};
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
