#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "patchrd/registration.hpp"
#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// Codebook: non-empty windows of the partial input; a patch's id is its index.
std::vector<Patch> build_codebook(const VoxelGrid& partial, int extent, int stride);

struct Triplet {
  Patch coarse;    // window of the upsampled coarse shape
  Patch positive;  // ground-truth detailed window at the same corner
  Patch sample;    // equals positive for true triplets, a codebook patch otherwise
  double target_distance = 0.0;
  bool is_true = false;
};

struct TripletOptions {
  int n_rnd = 800;
  int n_true = 400;
  int extent = 18;
  int stride = 4;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Query corners are drawn uniformly (with replacement) from windows that are non-empty
// in both upsample(C) and S_gt. Random samples are uniform over the codebook of S.
std::vector<Triplet> make_triplets(const VoxelGrid& partial, const VoxelGrid& coarse, const VoxelGrid& gt,
                                   const TripletOptions& options);

enum class EncoderKind : std::uint8_t { coarse = 0, detailed = 1 };

// Linear patch encoder: code = W * flatten(occupancy) + b.
struct Embedder {
  EncoderKind kind = EncoderKind::coarse;
  int extent = 0;
  Eigen::MatrixXd weights;  // code_dim x extent^3
  Eigen::VectorXd bias;     // code_dim

  int code_dim() const { return static_cast<int>(weights.rows()); }
  Eigen::VectorXd encode(const Patch& patch) const;

  // Weights uniform in +-0.1/sqrt(extent^3), zero bias.
  static Embedder initialize(EncoderKind kind, int extent, int code_dim, std::uint64_t seed);
};

Eigen::VectorXd flatten(const Patch& patch);

struct EmbeddingGradient {
  Eigen::MatrixXd coarse_weights, detailed_weights;
  Eigen::VectorXd coarse_bias, detailed_bias;
};

// Mean over triplets of | ||E_c(c) - E_d(p)||_2 - d(p,q) |.
double embedding_loss(std::span<const Triplet> triplets, const Embedder& coarse, const Embedder& detailed);

// Gradient of embedding_loss; the norm's subgradient at 0 and sign(0) are taken as 0.
EmbeddingGradient embedding_gradient(std::span<const Triplet> triplets, const Embedder& coarse,
                                     const Embedder& detailed);

struct TrainOptions {
  int epochs = 200;
  double lr = 1e-3;
  int batch = 32;
  int code_dim = 128;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Embedder coarse;
  Embedder detailed;
  // Entry 0 is the mean loss at initialization, entry e the mean loss after epoch e.
  std::vector<double> loss_history;
};

// Minibatch SGD with seed-controlled shuffling; the learning rate decays linearly
// to lr/epochs over the run. Both encoders start from the same weights.
TrainResult train_embedding(std::span<const Triplet> triplets, int extent, const TrainOptions& options);

struct Candidate {
  int patch_id = 0;
  RigidTransform transform_hint;
  double score = 0.0;
};

struct RetrievalSet {
  Index3 location{0, 0, 0};
  std::vector<Candidate> candidates;  // ordered by score, ties by patch_id
  bool truncated = false;             // K exceeded the codebook size
};

// K nearest codebook codes for every non-empty window of the upsampled coarse shape.
std::vector<RetrievalSet> retrieve_knn(const VoxelGrid& coarse_up, std::span<const Patch> codebook,
                                       const Embedder& coarse, const Embedder& detailed, int k, int stride,
                                       int threads = 1);

struct ExactRetrievalOptions {
  // Codebook entries scored with the full distance per query, pre-ranked by a pose-invariant
  // moment descriptor. 0 scores the whole codebook.
  int shortlist = 0;
  int threads = 1;
  IcpOptions icp{};
};

// Scores codebook patches with geometric_distance against each query's detailed proxy
// (a window of `query_source`, which carries observed detail and coarse fill elsewhere).
// Query locations are the non-empty windows of coarse_up whose proxy is non-empty.
std::vector<RetrievalSet> retrieve_exact(const VoxelGrid& coarse_up, const VoxelGrid& query_source,
                                         std::span<const Patch> codebook, int k, int stride,
                                         const ExactRetrievalOptions& options = {});

// Pose-invariant summary used to pre-rank candidates: occupied count, covariance
// invariants and a radial histogram about the centroid. Identical for patterns that
// differ by an axis-aligned orthogonal map and a lattice translation.
struct PatchDescriptor {
  std::vector<double> values;
};
PatchDescriptor describe(const Patch& patch);
double descriptor_distance(const PatchDescriptor& a, const PatchDescriptor& b);

}  // namespace patchrd
