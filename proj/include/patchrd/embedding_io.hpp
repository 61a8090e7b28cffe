#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchrd/retrieval.hpp"

namespace patchrd {

// PRDB1 layout (little-endian):
//   8 bytes magic "PRDB1\0\0\0"
//   u32 extent, u32 code_dim, u32 codebook_count, u32 encoder_count
//   per encoder: u32 kind, f32 weights[code_dim * extent^3] row-major, f32 bias[code_dim]
//   per codebook patch: i32 corner[3], u32 occupied_count, u8 occupancy[extent^3]
inline constexpr char kBundleMagic[8] = {'P', 'R', 'D', 'B', '1', '\0', '\0', '\0'};

struct EmbeddingBundle {
  int extent = 0;
  int code_dim = 0;
  std::vector<Embedder> encoders;
  std::vector<Patch> codebook;

  const Embedder* find(EncoderKind kind) const;
};

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& bundle);
EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes);

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);

}  // namespace patchrd
