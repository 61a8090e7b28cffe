#include "patchrd/pipeline.hpp"

#include <chrono>

#include "patchrd/errors.hpp"
#include "patchrd/parallel.hpp"
#include "patchrd/retrieval.hpp"

namespace patchrd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

nlohmann::json losses_json(const BlendLosses& l) { return {{"rec", l.rec}, {"smooth", l.smooth}, {"total", l.total}}; }

nlohmann::json transform_json(const RigidTransform& t) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) r.push_back({t.rotation(i, 0), t.rotation(i, 1), t.rotation(i, 2)});
  return {{"rotation", r}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
          {"reflect", t.reflect}};
}

}  // namespace

VoxelGrid make_coarse(const PipelineConfig& config, const VoxelGrid& partial, const VoxelGrid* gt) {
  switch (config.coarse) {
    case CoarseKind::gt_downsample:
      if (!gt) throw InvalidArgument("the gt_downsample coarse provider needs a ground-truth grid");
      if (gt->size() != partial.size()) throw InvalidArgument("ground truth and partial grid sizes differ");
      return coarse_from_gt(*gt);
    case CoarseKind::heuristic:
      return coarse_heuristic(partial, config.closing_radius, config.symmetry);
    case CoarseKind::external_file:
      return load_external_coarse(config.coarse_path, partial.size());
  }
  throw InvalidArgument("unknown coarse provider");
}

VoxelGrid compose_target(const VoxelGrid& partial, const VoxelGrid& coarse) {
  if (coarse.size() < 1 || partial.size() % coarse.size() != 0) {
    throw InvalidArgument("coarse grid size must divide the partial grid size");
  }
  const int f = partial.size() / coarse.size();
  const int n = coarse.size();
  VoxelGrid out(partial.size());
  for (int cx = 0; cx < n; ++cx)
    for (int cy = 0; cy < n; ++cy)
      for (int cz = 0; cz < n; ++cz) {
        bool observed = false;
        for (int x = cx * f; x < (cx + 1) * f && !observed; ++x)
          for (int y = cy * f; y < (cy + 1) * f && !observed; ++y)
            for (int z = cz * f; z < (cz + 1) * f && !observed; ++z) observed = partial.occupied(x, y, z);
        const float fill = coarse.occupied(cx, cy, cz) ? 1.0f : 0.0f;
        for (int x = cx * f; x < (cx + 1) * f; ++x)
          for (int y = cy * f; y < (cy + 1) * f; ++y)
            for (int z = cz * f; z < (cz + 1) * f; ++z)
              out.set(x, y, z, observed ? (partial.occupied(x, y, z) ? 1.0f : 0.0f) : fill);
      }
  return out;
}

VoxelGrid coarse_only(const VoxelGrid& coarse, int shape_size) {
  if (coarse.size() < 1 || shape_size % coarse.size() != 0) throw InvalidArgument("coarse size must divide shape size");
  return upsample_nearest(coarse.binarized(), shape_size / coarse.size());
}

CompletionResult complete_shape(const VoxelGrid& partial_in, const VoxelGrid& coarse, const PipelineConfig& config,
                                const CompletionOptions& options) {
  config.validate();
  if (partial_in.size() != config.s_shape) {
    throw InvalidArgument("partial grid has size " + std::to_string(partial_in.size()) + ", config expects " +
                          std::to_string(config.s_shape));
  }
  if (coarse.size() * kCoarseFactor != config.s_shape) {
    throw InvalidArgument("coarse grid has size " + std::to_string(coarse.size()) + ", expected " +
                          std::to_string(config.s_shape / kCoarseFactor));
  }
  const VoxelGrid partial = partial_in.binarized();
  if (partial.empty()) throw InvalidArgument("partial input has no occupied voxels");

  CompletionResult result;
  auto t0 = Clock::now();
  result.coarse = coarse.binarized();
  const VoxelGrid coarse_up = coarse_only(result.coarse, config.s_shape);
  result.target = compose_target(partial, result.coarse);
  result.times.coarse_s = seconds_since(t0);

  t0 = Clock::now();
  const auto codebook = build_codebook(partial, config.s_patch, config.gamma_patch);
  result.codebook_size = codebook.size();
  std::vector<RetrievalSet> sets;
  if (config.retrieval == RetrievalMode::exact) {
    ExactRetrievalOptions ro;
    ro.shortlist = config.shortlist;
    ro.threads = config.threads;
    ro.icp = config.icp();
    sets = retrieve_exact(coarse_up, result.target, codebook, config.K, config.gamma_patch, ro);
  } else {
    if (!options.embedder) throw InvalidArgument("embedding retrieval needs a trained embedder");
    const Embedder* ec = options.embedder->find(EncoderKind::coarse);
    const Embedder* ed = options.embedder->find(EncoderKind::detailed);
    if (!ec || !ed) throw InvalidArgument("embedder file lacks a coarse or detailed encoder");
    sets = retrieve_knn(coarse_up, codebook, *ec, *ed, config.K, config.gamma_patch, config.threads);
  }
  result.retrieval_sets = sets.size();
  for (const auto& s : sets) result.truncated = result.truncated || s.truncated;
  result.times.retrieval_s = seconds_since(t0);

  t0 = Clock::now();
  const BlendParams params = config.blend_params();
  const auto corners = subvolume_corners(config.s_shape, config.s_subv, config.gamma_subv);
  std::vector<SubvolumeValues> values(corners.size());
  result.subvolumes.resize(corners.size());
  parallel_for(corners.size(), config.threads, [&](std::size_t i) {
    const Index3& c = corners[i];
    const VoxelGrid local_coarse = window_grid(coarse_up, c, config.s_subv);
    const VoxelGrid local_target = window_grid(result.target, c, config.s_subv);
    SubvolumeReport& report = result.subvolumes[i];
    report.corner = c;
    BlendState state = make_state(c, config.s_subv, config.s_patch, params,
                                  select_candidates(sets, c, config.s_subv, config.s_patch, params));
    report.slots = state.slots.size();
    values[i].corner = c;
    if (state.slots.empty()) {
      values[i].values = local_coarse;
      return;
    }
    report.initial = blend_objective(state, codebook, local_target, local_coarse);
    state = optimize_subvolume(std::move(state), codebook, local_target, local_coarse, params);
    report.final = state.losses;
    report.iterations = state.iterations;
    values[i].values = blend_eval(state, codebook, local_coarse);
    if (options.keep_states) report.state = std::move(state);
  });
  result.times.blend_s = seconds_since(t0);

  t0 = Clock::now();
  result.scalar = assemble(config.s_shape, values);
  result.binary = result.scalar.binarized();
  result.times.assemble_s = seconds_since(t0);
  return result;
}

nlohmann::json diagnostics_json(const CompletionResult& r, bool include_times) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : r.subvolumes) {
    nlohmann::json j = {{"corner", s.corner}, {"slots", s.slots}, {"iterations", s.iterations},
                        {"initial", losses_json(s.initial)}, {"final", losses_json(s.final)}};
    if (s.state) {
      nlohmann::json slots = nlohmann::json::array();
      for (const auto& slot : s.state->slots)
        slots.push_back({{"patch_id", slot.patch_id}, {"location", slot.location}, {"rank", slot.rank},
                         {"transform", transform_json(slot.transform)}, {"weights", slot.weight_blocks}});
      j["slot_states"] = std::move(slots);
    }
    subs.push_back(std::move(j));
  }
  nlohmann::json out = {{"codebook_size", r.codebook_size},
                        {"retrieval_sets", r.retrieval_sets},
                        {"retrieval_truncated", r.truncated},
                        {"occupied_output", r.binary.count_occupied()},
                        {"subvolumes", std::move(subs)}};
  if (include_times) {
    out["times_s"] = {{"coarse", r.times.coarse_s}, {"retrieval", r.times.retrieval_s},
                      {"blend", r.times.blend_s}, {"assemble", r.times.assemble_s}};
  }
  return out;
}

}  // namespace patchrd
