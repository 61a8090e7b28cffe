#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchrd/voxel_grid.hpp"

namespace patchrd {

// PVOX1 layout (all integers little-endian):
//   8 bytes  magic "PVOX1\0\0\0"
//   u32      size
//   u32      flags, bit0 = 1 for scalar payload
//   payload  binary: alternating u32 run lengths, first run counts empty voxels;
//            scalar: size^3 f32 values in x-major order.
inline constexpr char kGridMagic[8] = {'P', 'V', 'O', 'X', '1', '\0', '\0', '\0'};

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid);
VoxelGrid decode_grid(std::span<const std::uint8_t> bytes);

// Text grids: first line is the size, then one "x y z" occupied voxel per line.
std::string encode_text_grid(const VoxelGrid& grid);
VoxelGrid decode_text_grid(const std::string& text);

// Dispatch on extension: ".txt" is text, anything else PVOX1.
VoxelGrid read_grid(const std::filesystem::path& path);
void write_grid(const VoxelGrid& grid, const std::filesystem::path& path);

// Exposed-face quad mesh of voxels with value >= threshold, shared corners deduplicated.
struct ObjStats {
  std::size_t vertices = 0;
  std::size_t faces = 0;
};
std::string obj_text(const VoxelGrid& grid, double threshold, ObjStats* stats = nullptr);
ObjStats export_obj(const VoxelGrid& grid, double threshold, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace patchrd
