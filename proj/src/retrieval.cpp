#include "patchrd/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "patchrd/errors.hpp"
#include "patchrd/parallel.hpp"
#include "patchrd/rng.hpp"

namespace patchrd {

std::vector<Patch> build_codebook(const VoxelGrid& partial, int extent, int stride) {
  auto patches = sample_patches(partial, extent, stride, /*keep_empty=*/false);
  if (patches.empty()) throw EmptyCodebookError("partial input has no non-empty patches to build a codebook from");
  return patches;
}

std::vector<Triplet> make_triplets(const VoxelGrid& partial, const VoxelGrid& coarse, const VoxelGrid& gt,
                                   const TripletOptions& options) {
  if (options.n_rnd < 0 || options.n_true < 0) throw InvalidArgument("triplet counts must be non-negative");
  if (coarse.size() < 1 || gt.size() % coarse.size() != 0) {
    throw InvalidArgument("coarse grid size does not divide the detailed grid size");
  }
  if (partial.size() != gt.size()) throw InvalidArgument("partial and ground-truth grids differ in size");
  const VoxelGrid up = upsample_nearest(coarse, gt.size() / coarse.size());

  std::vector<Index3> queries;
  for (const auto& c : window_corners(gt.size(), options.extent, options.stride)) {
    if (extract_patch(up, c, options.extent).occupied_count > 0 &&
        extract_patch(gt, c, options.extent).occupied_count > 0)
      queries.push_back(c);
  }
  if (queries.empty()) throw InvalidArgument("make_triplets: no window is non-empty in both coarse and ground truth");

  std::vector<Patch> codebook;
  if (options.n_rnd > 0) codebook = build_codebook(partial, options.extent, options.stride);

  Rng rng(options.seed);
  struct Draw {
    Index3 corner;
    int sample = -1;  // codebook id, -1 for a true triplet
  };
  std::vector<Draw> draws;
  for (int i = 0; i < options.n_true; ++i) draws.push_back({queries[rng.index(queries.size())], -1});
  for (int i = 0; i < options.n_rnd; ++i) {
    const Index3 corner = queries[rng.index(queries.size())];
    draws.push_back({corner, static_cast<int>(rng.index(codebook.size()))});
  }

  std::vector<Triplet> triplets(draws.size());
  parallel_for(draws.size(), options.threads, [&](std::size_t i) {
    Triplet& t = triplets[i];
    t.coarse = extract_patch(up, draws[i].corner, options.extent);
    t.positive = extract_patch(gt, draws[i].corner, options.extent);
    if (draws[i].sample < 0) {
      t.sample = t.positive;
      t.is_true = true;
      t.target_distance = 0.0;
    } else {
      t.sample = codebook[static_cast<std::size_t>(draws[i].sample)];
      t.target_distance = geometric_distance(t.sample, t.positive).distance;
    }
  });
  return triplets;
}

Eigen::VectorXd flatten(const Patch& patch) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(patch.occupancy.size()));
  for (std::size_t i = 0; i < patch.occupancy.size(); ++i) v[static_cast<Eigen::Index>(i)] = patch.occupancy[i];
  return v;
}

Eigen::VectorXd Embedder::encode(const Patch& patch) const {
  if (patch.extent != extent) throw InvalidArgument("encoder extent does not match patch extent");
  return weights * flatten(patch) + bias;
}

Embedder Embedder::initialize(EncoderKind kind, int extent, int code_dim, std::uint64_t seed) {
  if (code_dim < 1) throw InvalidArgument("code_dim must be >= 1");
  if (extent < 1) throw InvalidArgument("encoder extent must be >= 1");
  Embedder e;
  e.kind = kind;
  e.extent = extent;
  const Eigen::Index fan_in = static_cast<Eigen::Index>(extent) * extent * extent;
  e.weights.resize(code_dim, fan_in);
  e.bias = Eigen::VectorXd::Zero(code_dim);
  const double bound = 0.1 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(seed);
  for (Eigen::Index r = 0; r < e.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < e.weights.cols(); ++c) e.weights(r, c) = rng.uniform(-bound, bound);
  return e;
}

namespace {

struct TripletMatrices {
  Eigen::MatrixXd coarse, sample;  // D x N
  Eigen::VectorXd target;
};

TripletMatrices pack(std::span<const Triplet> triplets) {
  if (triplets.empty()) throw InvalidArgument("need at least one triplet");
  const auto d = static_cast<Eigen::Index>(triplets.front().coarse.occupancy.size());
  const auto n = static_cast<Eigen::Index>(triplets.size());
  TripletMatrices m{Eigen::MatrixXd(d, n), Eigen::MatrixXd(d, n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Triplet& t = triplets[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(t.coarse.occupancy.size()) != d ||
        static_cast<Eigen::Index>(t.sample.occupancy.size()) != d)
      throw InvalidArgument("triplets mix patch extents");
    m.coarse.col(i) = flatten(t.coarse);
    m.sample.col(i) = flatten(t.sample);
    m.target[i] = t.target_distance;
  }
  return m;
}

// Code differences for the given columns.
Eigen::MatrixXd differences(const Eigen::MatrixXd& xc, const Eigen::MatrixXd& xp, const Embedder& ec,
                            const Embedder& ed) {
  Eigen::MatrixXd u = ec.weights * xc - ed.weights * xp;
  u.colwise() += ec.bias - ed.bias;
  return u;
}

double mean_loss(const Eigen::MatrixXd& u, const Eigen::VectorXd& target) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < u.cols(); ++i) total += std::abs(u.col(i).norm() - target[i]);
  return total / static_cast<double>(u.cols());
}

// dLoss/du per column, already divided by the column count.
Eigen::MatrixXd loss_direction(const Eigen::MatrixXd& u, const Eigen::VectorXd& target) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(u.rows(), u.cols());
  const double scale = 1.0 / static_cast<double>(u.cols());
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    const double norm = u.col(i).norm();
    if (norm == 0.0) continue;
    const double r = norm - target[i];
    const double s = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
    g.col(i) = (s * scale / norm) * u.col(i);
  }
  return g;
}

}  // namespace

double embedding_loss(std::span<const Triplet> triplets, const Embedder& coarse, const Embedder& detailed) {
  const auto m = pack(triplets);
  return mean_loss(differences(m.coarse, m.sample, coarse, detailed), m.target);
}

EmbeddingGradient embedding_gradient(std::span<const Triplet> triplets, const Embedder& coarse,
                                     const Embedder& detailed) {
  const auto m = pack(triplets);
  const Eigen::MatrixXd g = loss_direction(differences(m.coarse, m.sample, coarse, detailed), m.target);
  EmbeddingGradient out;
  out.coarse_weights = g * m.coarse.transpose();
  out.detailed_weights = -g * m.sample.transpose();
  out.coarse_bias = g.rowwise().sum();
  out.detailed_bias = -out.coarse_bias;
  return out;
}

TrainResult train_embedding(std::span<const Triplet> triplets, int extent, const TrainOptions& options) {
  if (triplets.empty()) throw InvalidArgument("train_embedding: need at least one triplet");
  if (options.epochs < 0 || options.batch < 1) throw InvalidArgument("train_embedding: bad epochs/batch");
  const auto data = pack(triplets);
  if (data.coarse.rows() != static_cast<Eigen::Index>(extent) * extent * extent) {
    throw InvalidArgument("train_embedding: triplet patches do not match extent");
  }

  TrainResult result;
  result.coarse = Embedder::initialize(EncoderKind::coarse, extent, options.code_dim, options.seed);
  result.detailed = result.coarse;
  result.detailed.kind = EncoderKind::detailed;
  Embedder& ec = result.coarse;
  Embedder& ed = result.detailed;

  auto full_loss = [&] { return mean_loss(differences(data.coarse, data.sample, ec, ed), data.target); };
  result.loss_history.push_back(full_loss());
  if (!std::isfinite(result.loss_history.back())) throw NumericError("embedding loss is non-finite at initialization");

  const auto n = static_cast<std::size_t>(data.target.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options.seed, {0x5eed}));

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const double lr = options.lr * (1.0 - static_cast<double>(epoch - 1) / options.epochs);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(options.batch));
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd xc(data.coarse.rows(), b), xp(data.sample.rows(), b);
      Eigen::VectorXd target(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const Eigen::Index col = order[start + static_cast<std::size_t>(j)];
        xc.col(j) = data.coarse.col(col);
        xp.col(j) = data.sample.col(col);
        target[j] = data.target[col];
      }
      // The loss is a sum over triplets, so step along the batch sum, not its mean.
      const Eigen::MatrixXd g = static_cast<double>(b) * loss_direction(differences(xc, xp, ec, ed), target);
      const Eigen::VectorXd gb = g.rowwise().sum();
      ec.weights.noalias() -= lr * g * xc.transpose();
      ed.weights.noalias() += lr * g * xp.transpose();
      ec.bias -= lr * gb;
      ed.bias += lr * gb;
    }
    const double loss = full_loss();
    if (!std::isfinite(loss)) throw NumericError("embedding training diverged at epoch " + std::to_string(epoch));
    result.loss_history.push_back(loss);
  }
  return result;
}

namespace {

constexpr int kTableExtentLimit = 12;

struct Ranked {
  double score;
  int id;
  bool operator<(const Ranked& o) const { return score < o.score || (score == o.score && id < o.id); }
};

std::vector<Ranked> top_k(std::vector<Ranked> all, std::size_t k) {
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

}  // namespace

std::vector<RetrievalSet> retrieve_knn(const VoxelGrid& coarse_up, std::span<const Patch> codebook,
                                       const Embedder& coarse, const Embedder& detailed, int k, int stride,
                                       int threads) {
  if (codebook.empty()) throw EmptyCodebookError("retrieve_knn: empty codebook");
  if (k < 1) throw InvalidArgument("retrieve_knn: K must be >= 1");
  const int extent = codebook.front().extent;
  if (coarse.extent != extent || detailed.extent != extent || coarse.code_dim() != detailed.code_dim()) {
    throw InvalidArgument("retrieve_knn: encoders do not match the codebook extent or each other");
  }
  std::vector<Eigen::VectorXd> codes(codebook.size());
  parallel_for(codebook.size(), threads, [&](std::size_t i) { codes[i] = detailed.encode(codebook[i]); });

  std::vector<Patch> queries;
  for (const auto& c : window_corners(coarse_up.size(), extent, stride)) {
    Patch q = extract_patch(coarse_up, c, extent);
    if (q.occupied_count > 0) queries.push_back(std::move(q));
  }
  std::vector<RetrievalSet> sets(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t qi) {
    const Eigen::VectorXd code = coarse.encode(queries[qi]);
    std::vector<Ranked> all(codebook.size());
    for (std::size_t i = 0; i < codebook.size(); ++i) all[i] = {(code - codes[i]).norm(), static_cast<int>(i)};
    RetrievalSet& set = sets[qi];
    set.location = queries[qi].corner;
    set.truncated = static_cast<std::size_t>(k) > codebook.size();
    for (const auto& r : top_k(std::move(all), static_cast<std::size_t>(k)))
      set.candidates.push_back({r.id, RigidTransform::identity(), r.score});
  });
  return sets;
}

PatchDescriptor describe(const Patch& patch) {
  PatchDescriptor d;
  const int e = patch.extent;
  long n = 0;
  std::array<long, 3> s{0, 0, 0};
  std::array<std::array<long, 3>, 3> ss{};
  std::vector<Index3> pts;
  for (int x = 0; x < e; ++x)
    for (int y = 0; y < e; ++y)
      for (int z = 0; z < e; ++z) {
        if (!patch.at(x, y, z)) continue;
        const Index3 v{x, y, z};
        pts.push_back(v);
        ++n;
        for (int a = 0; a < 3; ++a) {
          s[a] += v[a];
          for (int b = 0; b < 3; ++b) ss[a][b] += static_cast<long>(v[a]) * v[b];
        }
      }
  d.values.push_back(std::log1p(static_cast<double>(n)));
  if (n == 0) {
    d.values.resize(4 + static_cast<std::size_t>(2 * e * 2 + 2), 0.0);
    return d;
  }
  // n^2 * covariance, exact in integers.
  __int128 m[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m[a][b] = static_cast<__int128>(n) * ss[a][b] - static_cast<__int128>(s[a]) * s[b];
  const __int128 trace = m[0][0] + m[1][1] + m[2][2];
  const __int128 minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] +
                          m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const __int128 det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const double scale = 1.0 / (e * e);
  d.values.push_back(static_cast<double>(trace) / n2 * scale);
  d.values.push_back(std::sqrt(std::max(0.0, static_cast<double>(minors))) / n2 * scale);
  d.values.push_back(std::cbrt(static_cast<double>(det)) / n2 * scale);
  // Radial histogram, half-voxel bins, of distances to the centroid.
  const std::size_t bins = static_cast<std::size_t>(2 * e * 2 + 2);
  std::vector<double> hist(bins, 0.0);
  for (const auto& v : pts) {
    long r2 = 0;
    for (int a = 0; a < 3; ++a) {
      const long c = n * v[a] - s[a];
      r2 += c * c;
    }
    const double r = std::sqrt(static_cast<double>(r2)) / static_cast<double>(n);
    hist[std::min(bins - 1, static_cast<std::size_t>(2.0 * r))] += 1.0 / static_cast<double>(n);
  }
  d.values.insert(d.values.end(), hist.begin(), hist.end());
  return d;
}

double descriptor_distance(const PatchDescriptor& a, const PatchDescriptor& b) {
  double total = 0.0;
  const std::size_t n = std::min(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < n; ++i) total += std::abs(a.values[i] - b.values[i]);
  return total;
}

std::vector<RetrievalSet> retrieve_exact(const VoxelGrid& coarse_up, const VoxelGrid& query_source,
                                         std::span<const Patch> codebook, int k, int stride,
                                         const ExactRetrievalOptions& options) {
  if (codebook.empty()) throw EmptyCodebookError("retrieve_exact: empty codebook");
  if (k < 1) throw InvalidArgument("retrieve_exact: K must be >= 1");
  if (coarse_up.size() != query_source.size()) throw InvalidArgument("retrieve_exact: grid sizes differ");
  const int extent = codebook.front().extent;

  // Identical proxies share one scoring pass.
  std::vector<Index3> locations;
  std::vector<std::size_t> proxy_of;
  std::vector<Patch> proxies;
  std::map<std::vector<std::uint8_t>, std::size_t> seen;
  for (const auto& c : window_corners(coarse_up.size(), extent, stride)) {
    if (extract_patch(coarse_up, c, extent).occupied_count == 0) continue;
    Patch proxy = extract_patch(query_source, c, extent);
    if (proxy.occupied_count == 0) continue;
    auto [it, inserted] = seen.emplace(proxy.occupancy, proxies.size());
    if (inserted) proxies.push_back(std::move(proxy));
    locations.push_back(c);
    proxy_of.push_back(it->second);
  }

  const bool prerank = options.shortlist > 0 && static_cast<std::size_t>(options.shortlist) < codebook.size();
  std::vector<PatchDescriptor> descriptors;
  if (prerank) {
    descriptors.resize(codebook.size());
    parallel_for(codebook.size(), options.threads, [&](std::size_t i) { descriptors[i] = describe(codebook[i]); });
  }

  // Distance tables pay off once a patch takes part in many comparisons; they grow as
  // (3 * extent)^3, so large extents use the table-free path.
  const bool tables = extent <= kTableExtentLimit;
  std::vector<std::optional<PatchGeometry>> geometry(codebook.size());
  parallel_for(codebook.size(), options.threads, [&](std::size_t i) { geometry[i].emplace(codebook[i], tables); });

  std::vector<std::vector<Candidate>> scored(proxies.size());
  parallel_for(proxies.size(), options.threads, [&](std::size_t qi) {
    const Patch& proxy = proxies[qi];
    const PatchGeometry proxy_geometry(proxy, tables);
    std::vector<int> ids;
    if (prerank) {
      const PatchDescriptor qd = describe(proxy);
      std::vector<Ranked> all(codebook.size());
      for (std::size_t i = 0; i < codebook.size(); ++i)
        all[i] = {descriptor_distance(qd, descriptors[i]), static_cast<int>(i)};
      for (const auto& r : top_k(std::move(all), static_cast<std::size_t>(options.shortlist))) ids.push_back(r.id);
    } else {
      ids.resize(codebook.size());
      std::iota(ids.begin(), ids.end(), 0);
    }
    std::vector<std::pair<Ranked, RigidTransform>> results;
    results.reserve(ids.size());
    for (int id : ids) {
      const AlignmentResult a = geometric_distance(*geometry[static_cast<std::size_t>(id)], proxy_geometry, options.icp);
      results.push_back({{a.distance, id}, a.transform});
    }
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t take = std::min(results.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < take; ++i)
      scored[qi].push_back({results[i].first.id, results[i].second, results[i].first.score});
  });

  std::vector<RetrievalSet> sets(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    sets[i].location = locations[i];
    sets[i].candidates = scored[proxy_of[i]];
    sets[i].truncated = static_cast<std::size_t>(k) > codebook.size();
  }
  return sets;
}

}  // namespace patchrd
