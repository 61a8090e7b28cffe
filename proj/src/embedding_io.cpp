#include "patchrd/embedding_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "patchrd/errors.hpp"
#include "patchrd/grid_io.hpp"

namespace patchrd {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::size_t at = pos_;
    const float v = std::bit_cast<float>(u32());
    if (!std::isfinite(v)) throw FormatError("non-finite encoder weight", at);
    return v;
  }
  std::uint8_t u8() {
    need(1, "u8");
    return bytes_[pos_++];
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) throw FormatError(std::string("truncated PRDB1 ") + what, pos_);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Embedder* EmbeddingBundle::find(EncoderKind kind) const {
  for (const auto& e : encoders)
    if (e.kind == kind) return &e;
  return nullptr;
}

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& b) {
  std::vector<std::uint8_t> out(std::begin(kBundleMagic), std::end(kBundleMagic));
  put_u32(out, static_cast<std::uint32_t>(b.extent));
  put_u32(out, static_cast<std::uint32_t>(b.code_dim));
  put_u32(out, static_cast<std::uint32_t>(b.codebook.size()));
  put_u32(out, static_cast<std::uint32_t>(b.encoders.size()));
  const std::size_t volume = static_cast<std::size_t>(b.extent) * b.extent * b.extent;
  for (const auto& e : b.encoders) {
    if (e.extent != b.extent || e.code_dim() != b.code_dim) throw InvalidArgument("encoder shape disagrees with bundle");
    put_u32(out, static_cast<std::uint32_t>(e.kind));
    for (Eigen::Index r = 0; r < e.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < e.weights.cols(); ++c) put_f32(out, e.weights(r, c));
    for (Eigen::Index r = 0; r < e.bias.size(); ++r) put_f32(out, e.bias[r]);
  }
  for (const auto& p : b.codebook) {
    if (p.extent != b.extent || p.occupancy.size() != volume) throw InvalidArgument("codebook patch extent disagrees with bundle");
    for (int a = 0; a < 3; ++a) put_u32(out, static_cast<std::uint32_t>(p.corner[a]));
    put_u32(out, static_cast<std::uint32_t>(p.occupied_count));
    out.insert(out.end(), p.occupancy.begin(), p.occupancy.end());
  }
  return out;
}

EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kBundleMagic)) throw FormatError("file too short for PRDB1 magic", bytes.size());
  if (!std::equal(std::begin(kBundleMagic), std::end(kBundleMagic), bytes.begin()))
    throw FormatError("PRDB1 magic mismatch", 0);
  Reader r(bytes.subspan(sizeof(kBundleMagic)));
  const std::size_t base = sizeof(kBundleMagic);
  EmbeddingBundle b;
  const std::uint32_t extent = r.u32(), code_dim = r.u32(), count = r.u32(), encoders = r.u32();
  if (extent == 0 || extent > 64) throw FormatError("bad patch extent", base);
  if (code_dim == 0 || code_dim > 4096) throw FormatError("bad code_dim", base + 4);
  if (encoders > 2) throw FormatError("at most two encoders are supported", base + 12);
  b.extent = static_cast<int>(extent);
  b.code_dim = static_cast<int>(code_dim);
  const std::size_t volume = static_cast<std::size_t>(extent) * extent * extent;
  // Every record has a fixed size, so the total length can be checked up front.
  const std::size_t expected = base + 16 + encoders * (4 + 4 * (code_dim * volume + code_dim)) +
                               static_cast<std::size_t>(count) * (16 + volume);
  if (bytes.size() != expected) {
    throw FormatError("PRDB1 length " + std::to_string(bytes.size()) + " differs from expected " +
                          std::to_string(expected),
                      std::min(bytes.size(), expected));
  }
  for (std::uint32_t i = 0; i < encoders; ++i) {
    Embedder e;
    const std::size_t at = base + r.pos();
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw FormatError("unknown encoder kind", at);
    e.kind = static_cast<EncoderKind>(kind);
    e.extent = b.extent;
    e.weights.resize(code_dim, static_cast<Eigen::Index>(volume));
    for (Eigen::Index row = 0; row < e.weights.rows(); ++row)
      for (Eigen::Index c = 0; c < e.weights.cols(); ++c) e.weights(row, c) = r.f32();
    e.bias.resize(code_dim);
    for (Eigen::Index row = 0; row < e.bias.size(); ++row) e.bias[row] = r.f32();
    b.encoders.push_back(std::move(e));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    Patch p;
    p.extent = b.extent;
    for (int a = 0; a < 3; ++a) p.corner[a] = static_cast<std::int32_t>(r.u32());
    const std::size_t at = base + r.pos();
    const std::uint32_t occupied = r.u32();
    p.occupancy.resize(volume);
    int counted = 0;
    for (std::size_t v = 0; v < volume; ++v) {
      const std::size_t cell = base + r.pos();
      const std::uint8_t value = r.u8();
      if (value > 1) throw FormatError("occupancy byte must be 0 or 1", cell);
      p.occupancy[v] = value;
      counted += value;
    }
    if (static_cast<std::uint32_t>(counted) != occupied) throw FormatError("occupied count mismatch", at);
    p.occupied_count = counted;
    b.codebook.push_back(std::move(p));
  }
  return b;
}

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
  write_file_bytes(path, encode_bundle(bundle));
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) { return decode_bundle(read_file_bytes(path)); }

}  // namespace patchrd
