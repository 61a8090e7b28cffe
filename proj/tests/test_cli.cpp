#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "patchrd/config.hpp"
#include "patchrd/grid_io.hpp"
#include "patchrd/metrics.hpp"
#include "patchrd/shapes.hpp"

using namespace patchrd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() { return fs::temp_directory_path() / "patchrd_cli_test"; }

  static void SetUpTestSuite() {
    fs::remove_all(dir());
    fs::create_directories(dir());
    write_grid(synthetic_shape(0, 32, 0).grid, dir() / "chair.pvox");
  }
  static void TearDownTestSuite() { fs::remove_all(dir()); }

  static Outcome run(const std::string& args) {
    const fs::path out = dir() / "stdout.txt", err = dir() / "stderr.txt";
    const std::string cmd = std::string(PATCHRD_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static std::string path(const std::string& name) { return (dir() / name).string(); }
};

}  // namespace

TEST_F(Cli, CropWritesPartialAndSidecar) {
  const Outcome r = run("crop --kind cuboid --ratio 0.1:0.3 --seed 7 " + path("chair.pvox") + " " + path("crop"));
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(path("crop/chair_partial.pvox")));
  const auto j = nlohmann::json::parse(slurp(path("crop/chair_crop.json")));
  EXPECT_EQ(j.at("kind"), "cuboid");
  const double f = j.at("deleted_fraction");
  EXPECT_GE(f, 0.1);
  EXPECT_LE(f, 0.3);
  const VoxelGrid gt = read_grid(path("chair.pvox")), partial = read_grid(path("crop/chair_partial.pvox"));
  EXPECT_LT(partial.count_occupied(), gt.count_occupied());

  const std::string first = slurp(path("crop/chair_partial.pvox"));
  ASSERT_EQ(run("crop --kind cuboid --ratio 0.1:0.3 --seed 7 " + path("chair.pvox") + " " + path("crop")).code, 0);
  EXPECT_EQ(slurp(path("crop/chair_partial.pvox")), first);
}

TEST_F(Cli, CropPlaneKind) {
  const Outcome r = run("crop --kind plane --seed 3 " + path("chair.pvox") + " " + path("plane"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("plane/chair_crop.json")));
  EXPECT_EQ(j.at("kind"), "plane");
}

TEST_F(Cli, MissingInputExitsTwoNamingPath) {
  const Outcome r = run("crop --kind cuboid " + path("nope.pvox") + " " + path("crop"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.pvox"), std::string::npos);
  EXPECT_EQ(run("complete --preset small " + path("nope.pvox") + " --out " + path("x")).code, 2);
}

TEST_F(Cli, EmptyInputExitsTwo) {
  write_grid(VoxelGrid(32), path("empty.pvox"));
  EXPECT_EQ(run("complete --preset small --coarse heuristic " + path("empty.pvox") + " --out " + path("e")).code, 2);
  fs::create_directories(path("emptyset"));
  EXPECT_EQ(run("eval --preset small " + path("emptyset") + " --out " + path("e.csv")).code, 2);
}

TEST_F(Cli, UnknownFlagValuesExitTwo) {
  EXPECT_EQ(run("complete --preset tiny " + path("chair.pvox") + " --out " + path("x")).code, 2);
  EXPECT_EQ(run("complete --preset small --retrieval embedding --gt " + path("chair.pvox") + " " + path("chair.pvox") +
                " --out " + path("x"))
                .code,
            2);
}

TEST_F(Cli, TrainEmbedEpochsZeroWarns) {
  const Outcome r = run("train-embed --preset small --epochs 0 --partial " + path("chair.pvox") + " --gt " +
                    path("chair.pvox") + " --out " + path("untrained.prdb"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("untrained.prdb")));
}

TEST_F(Cli, TrainEmbedReproducibleBytes) {
  const std::string args = "train-embed --preset small --epochs 5 --seed 4 --partial " + path("chair.pvox") + " --gt " +
                           path("chair.pvox") + " --out ";
  const Outcome a = run(args + path("a.prdb"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run(args + path("b.prdb") + " --threads 4").code, 0);
  EXPECT_EQ(slurp(path("a.prdb")), slurp(path("b.prdb")));
  EXPECT_NE(a.out.find("epoch 4 loss"), std::string::npos);
  const Outcome info = run("info " + path("a.prdb"));
  EXPECT_EQ(info.code, 0);
  EXPECT_NE(info.out.find("code_dim 128"), std::string::npos);
}

TEST_F(Cli, CompleteReconstructsUncroppedInputDeterministically) {
  const std::string base = "complete --preset small --gt " + path("chair.pvox") + " " + path("chair.pvox");
  const Outcome a = run(base + " --out " + path("c1"));
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* f : {"chair_completed.pvox", "chair_completed_scalar.pvox", "chair_completed.obj",
                        "chair_diagnostics.json", "config.json"})
    EXPECT_TRUE(fs::exists(dir() / "c1" / f)) << f;
  EXPECT_GE(iou(read_grid(path("c1/chair_completed.pvox")), read_grid(path("chair.pvox"))), 0.95);

  ASSERT_EQ(run(base + " --out " + path("c4") + " --threads 4").code, 0);
  EXPECT_EQ(slurp(path("c1/chair_completed.pvox")), slurp(path("c4/chair_completed.pvox")));
  EXPECT_EQ(slurp(path("c1/chair_completed_scalar.pvox")), slurp(path("c4/chair_completed_scalar.pvox")));

  ASSERT_EQ(run("complete --config " + path("c1/config.json") + " --gt " + path("chair.pvox") + " " +
                path("chair.pvox") + " --out " + path("cc"))
                .code,
            0);
  EXPECT_EQ(slurp(path("c1/chair_completed_scalar.pvox")), slurp(path("cc/chair_completed_scalar.pvox")));
}

TEST_F(Cli, AblateNoSmoothZeroesAlpha) {
  const Outcome r = run("complete --preset small --opt-iters 5 --restarts 1 --ablate no-smooth --gt " + path("chair.pvox") +
                    " " + path("chair.pvox") + " --out " + path("ns"));
  ASSERT_EQ(r.code, 0) << r.err;
  const PipelineConfig cfg = load_config(path("ns/config.json"));
  EXPECT_TRUE(cfg.ablation.no_smooth);
  EXPECT_EQ(cfg.blend_params().effective_alpha(), 0.0);
}

TEST_F(Cli, EmbeddingRetrievalMode) {
  ASSERT_EQ(run("train-embed --preset small --epochs 3 --partial " + path("chair.pvox") + " --gt " +
                path("chair.pvox") + " --out " + path("e.prdb"))
                .code,
            0);
  const Outcome r = run("complete --preset small --opt-iters 5 --restarts 1 --retrieval embedding --embedder " +
                    path("e.prdb") + " --gt " + path("chair.pvox") + " " + path("chair.pvox") + " --out " + path("em"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_config(path("em/config.json")).retrieval, RetrievalMode::embedding);
  EXPECT_TRUE(fs::exists(path("em/chair_completed.pvox")));
}

TEST_F(Cli, EvalCsvDeterministicWithBaselineRows) {
  const std::string args = "eval --preset small --synthetic 1 --ratios 20 --seeds 0 --opt-iters 10 --coarse-only --out ";
  const Outcome a = run(args + path("r1.csv"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run(args + path("r4.csv") + " --threads 4").code, 0);
  const std::string csv = slurp(path("r1.csv"));
  EXPECT_EQ(csv, slurp(path("r4.csv")));
  EXPECT_EQ(csv.rfind("shape_id,category,crop_kind,crop_ratio,seed,cd_l2_x1000,iou,runtime_s,status\n", 0), 0u);
  EXPECT_NE(csv.find(",coarse_only"), std::string::npos);
  EXPECT_NE(csv.find(",ok"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("r1.csv.config.json")));
}

TEST_F(Cli, ExportObjAndInfo) {
  const Outcome r = run("export-obj " + path("chair.pvox") + " " + path("chair.obj"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(path("chair.obj")).find("\nf "), std::string::npos);
  const Outcome i = run("info " + path("chair.pvox"));
  EXPECT_EQ(i.code, 0);
  EXPECT_NE(i.out.find("size 32"), std::string::npos);
}
