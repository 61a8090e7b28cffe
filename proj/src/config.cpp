#include "patchrd/config.hpp"

#include <set>

#include "patchrd/errors.hpp"
#include "patchrd/grid_io.hpp"

namespace patchrd {

std::string to_string(RetrievalMode mode) { return mode == RetrievalMode::exact ? "exact" : "embedding"; }

RetrievalMode retrieval_mode_from_string(const std::string& name) {
  if (name == "exact") return RetrievalMode::exact;
  if (name == "embedding") return RetrievalMode::embedding;
  throw InvalidArgument("unknown retrieval mode '" + name + "' (expected exact or embedding)");
}

BlendParams PipelineConfig::blend_params() const {
  BlendParams p;
  p.M = M;
  p.alpha = alpha;
  p.s_blend = s_blend;
  p.opt_iters = opt_iters;
  p.restarts = restarts;
  p.lr = blend_lr;
  p.refine_every = refine_every;
  p.ablation = ablation;
  p.seed = seed;
  p.icp = icp();
  return p;
}

IcpOptions PipelineConfig::icp() const { return {icp_max_iters, icp_tol}; }

void PipelineConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("config: " + what);
  };
  require(s_shape >= kCoarseFactor && s_shape % kCoarseFactor == 0, "s_shape must be a positive multiple of 4");
  require(s_patch >= 1 && s_patch <= s_subv, "s_patch must lie in [1, s_subv]");
  require(s_subv <= s_shape, "s_subv must not exceed s_shape");
  require(s_blend >= 1 && s_subv % s_blend == 0, "s_blend must divide s_subv");
  require(gamma_patch >= 1, "gamma_patch must be >= 1");
  require(gamma_subv >= 1 && gamma_subv <= s_subv, "gamma_subv must lie in [1, s_subv]");
  require(K >= 1, "K must be >= 1");
  require(M >= 1, "M must be >= 1");
  require(alpha >= 0.0, "alpha must be >= 0");
  require(closing_radius >= 0, "closing_radius must be >= 0");
  require(shortlist >= 0, "shortlist must be >= 0");
  require(opt_iters >= 0 && restarts >= 1 && blend_lr > 0.0, "blend optimizer settings out of range");
  require(refine_every >= 0, "refine_every must be >= 0");
  require(icp_max_iters >= 1 && icp_tol > 0.0, "ICP settings out of range");
  require(n_rnd >= 0 && n_true >= 0 && n_rnd + n_true >= 1, "triplet counts out of range");
  require(epochs >= 0 && train_lr > 0.0 && batch >= 1 && code_dim >= 1, "training settings out of range");
  require(threads >= 1, "threads must be >= 1");
  require(coarse != CoarseKind::external_file || !coarse_path.empty(), "external coarse provider needs coarse_path");
  require(retrieval != RetrievalMode::embedding || !embedder_path.empty(), "embedding retrieval needs embedder_path");
}

PipelineConfig preset_config(const std::string& name) {
  PipelineConfig c;
  if (name == "paper") return c;
  if (name == "small") {
    c.preset = "small";
    c.s_shape = 32;
    c.s_patch = 6;
    c.gamma_patch = 2;
    c.s_subv = 16;
    c.gamma_subv = 12;
    c.s_blend = 4;
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected paper or small)");
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"preset", c.preset},
      {"s_shape", c.s_shape},
      {"s_patch", c.s_patch},
      {"s_subv", c.s_subv},
      {"s_blend", c.s_blend},
      {"gamma_patch", c.gamma_patch},
      {"gamma_subv", c.gamma_subv},
      {"K", c.K},
      {"M", c.M},
      {"alpha", c.alpha},
      {"seed", c.seed},
      {"coarse", to_string(c.coarse)},
      {"closing_radius", c.closing_radius},
      {"symmetry", c.symmetry},
      {"coarse_path", c.coarse_path},
      {"retrieval", to_string(c.retrieval)},
      {"shortlist", c.shortlist},
      {"embedder_path", c.embedder_path},
      {"opt_iters", c.opt_iters},
      {"restarts", c.restarts},
      {"blend_lr", c.blend_lr},
      {"refine_every", c.refine_every},
      {"ablation",
       {{"no_deform", c.ablation.no_deform}, {"no_blend", c.ablation.no_blend}, {"no_smooth", c.ablation.no_smooth}}},
      {"icp_max_iters", c.icp_max_iters},
      {"icp_tol", c.icp_tol},
      {"n_rnd", c.n_rnd},
      {"n_true", c.n_true},
      {"epochs", c.epochs},
      {"train_lr", c.train_lr},
      {"batch", c.batch},
      {"code_dim", c.code_dim},
  };
}

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  // A preset key resets the base before the remaining keys apply.
  if (j.contains("preset")) c = preset_config(j.at("preset").get<std::string>());
  static const std::set<std::string> known = {
      "preset", "s_shape", "s_patch", "s_subv", "s_blend", "gamma_patch", "gamma_subv", "K", "M", "alpha", "seed",
      "coarse", "closing_radius", "symmetry", "coarse_path", "retrieval", "shortlist", "embedder_path",
      "opt_iters", "restarts", "blend_lr", "refine_every", "ablation", "icp_max_iters", "icp_tol", "n_rnd",
      "n_true", "epochs", "train_lr", "batch", "code_dim"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InvalidArgument("config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("s_shape", c.s_shape);
    get("s_patch", c.s_patch);
    get("s_subv", c.s_subv);
    get("s_blend", c.s_blend);
    get("gamma_patch", c.gamma_patch);
    get("gamma_subv", c.gamma_subv);
    get("K", c.K);
    get("M", c.M);
    get("alpha", c.alpha);
    get("seed", c.seed);
    if (j.contains("coarse")) c.coarse = coarse_kind_from_string(j.at("coarse").get<std::string>());
    get("closing_radius", c.closing_radius);
    get("symmetry", c.symmetry);
    get("coarse_path", c.coarse_path);
    if (j.contains("retrieval")) c.retrieval = retrieval_mode_from_string(j.at("retrieval").get<std::string>());
    get("shortlist", c.shortlist);
    get("embedder_path", c.embedder_path);
    get("opt_iters", c.opt_iters);
    get("restarts", c.restarts);
    get("blend_lr", c.blend_lr);
    get("refine_every", c.refine_every);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      if (a.contains("no_deform")) c.ablation.no_deform = a.at("no_deform").get<bool>();
      if (a.contains("no_blend")) c.ablation.no_blend = a.at("no_blend").get<bool>();
      if (a.contains("no_smooth")) c.ablation.no_smooth = a.at("no_smooth").get<bool>();
    }
    get("icp_max_iters", c.icp_max_iters);
    get("icp_tol", c.icp_tol);
    get("n_rnd", c.n_rnd);
    get("n_true", c.n_true);
    get("epochs", c.epochs);
    get("train_lr", c.train_lr);
    get("batch", c.batch);
    get("code_dim", c.code_dim);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void write_config(const PipelineConfig& config, const std::filesystem::path& path) {
  write_text_file(path, to_json(config).dump(2) + "\n");
}

}  // namespace patchrd
