#include "patchrd/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "patchrd/errors.hpp"

namespace patchrd {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated u32", offset);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

constexpr std::uint32_t kScalarFlag = 1u;
constexpr std::size_t kHeaderBytes = 16;

}  // namespace

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid) {
  std::vector<std::uint8_t> out(std::begin(kGridMagic), std::end(kGridMagic));
  put_u32(out, static_cast<std::uint32_t>(grid.size()));
  const bool scalar = grid.kind() == GridKind::scalar;
  put_u32(out, scalar ? kScalarFlag : 0u);
  const auto values = grid.values();
  if (scalar) {
    out.reserve(out.size() + 4 * values.size());
    for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
  }
  bool state = false;
  std::uint32_t run = 0;
  for (float v : values) {
    const bool occ = v >= kOccupancyThreshold;
    if (occ != state) {
      put_u32(out, run);
      state = occ;
      run = 0;
    }
    ++run;
  }
  put_u32(out, run);
  return out;
}

VoxelGrid decode_grid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kGridMagic)) throw FormatError("file too short for PVOX1 magic", bytes.size());
  if (!std::equal(std::begin(kGridMagic), std::end(kGridMagic), bytes.begin())) {
    throw FormatError("PVOX1 magic mismatch", 0);
  }
  const std::uint32_t size = get_u32(bytes, 8);
  const std::uint32_t flags = get_u32(bytes, 12);
  if (size == 0) throw FormatError("grid size must be >= 1", 8);
  if (size > 2048) throw FormatError("grid size " + std::to_string(size) + " exceeds supported maximum", 8);
  const std::size_t n = static_cast<std::size_t>(size) * size * size;
  std::vector<float> values(n, 0.0f);
  std::size_t offset = kHeaderBytes;
  if (flags & kScalarFlag) {
    if (bytes.size() != kHeaderBytes + 4 * n) {
      throw FormatError("scalar payload holds " + std::to_string((bytes.size() - kHeaderBytes) / 4) +
                            " values, expected " + std::to_string(n),
                        std::min(bytes.size(), kHeaderBytes + 4 * n));
    }
    for (std::size_t i = 0; i < n; ++i, offset += 4) {
      const float v = std::bit_cast<float>(get_u32(bytes, offset));
      if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("scalar value outside [0,1]", offset);
      values[i] = v;
    }
    return VoxelGrid(static_cast<int>(size), GridKind::scalar, std::move(values));
  }
  std::size_t decoded = 0;
  bool state = false;
  while (decoded < n) {
    if (offset >= bytes.size()) {
      throw FormatError("run-length payload ends after " + std::to_string(decoded) + " of " + std::to_string(n) +
                            " voxels",
                        offset);
    }
    const std::uint32_t run = get_u32(bytes, offset);
    if (decoded + run > n) throw FormatError("run-length payload overruns size^3", offset);
    if (state) std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(decoded), run, 1.0f);
    decoded += run;
    offset += 4;
    state = !state;
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after run-length payload", offset);
  return VoxelGrid(static_cast<int>(size), GridKind::binary, std::move(values));
}

std::string encode_text_grid(const VoxelGrid& grid) {
  std::ostringstream os;
  os << grid.size() << '\n';
  const int n = grid.size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        if (grid.occupied(x, y, z)) os << x << ' ' << y << ' ' << z << '\n';
  return os.str();
}

VoxelGrid decode_text_grid(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  int size = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!(ls >> size) || size < 1) throw FormatError("text grid: first line must be a positive size", line_no);
    break;
  }
  if (size == 0) throw FormatError("text grid: missing size line", line_no);
  VoxelGrid grid(size);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int x, y, z;
    if (!(ls >> x >> y >> z)) throw FormatError("text grid: expected 'x y z'", line_no);
    if (!grid.contains(x, y, z)) throw FormatError("text grid: voxel outside grid", line_no);
    grid.set(x, y, z, 1.0f);
  }
  return grid;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

VoxelGrid read_grid(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (path.extension() == ".txt") return decode_text_grid(std::string(bytes.begin(), bytes.end()));
  return decode_grid(bytes);
}

void write_grid(const VoxelGrid& grid, const std::filesystem::path& path) {
  if (path.extension() == ".txt") {
    if (grid.kind() != GridKind::binary) throw InvalidArgument("text grids can only hold binary occupancy");
    write_text_file(path, encode_text_grid(grid));
    return;
  }
  write_file_bytes(path, encode_grid(grid));
}

std::string obj_text(const VoxelGrid& grid, double threshold, ObjStats* stats) {
  std::map<Index3, std::size_t> vertex_ids;
  std::vector<Index3> vertices;
  std::vector<std::array<std::size_t, 4>> quads;
  auto vertex = [&](const Index3& c) {
    auto [it, inserted] = vertex_ids.emplace(c, vertices.size() + 1);
    if (inserted) vertices.push_back(c);
    return it->second;
  };
  for (const auto& f : exposed_faces(grid, threshold)) {
    const int a1 = (f.axis + 1) % 3, a2 = (f.axis + 2) % 3;
    Index3 base = f.voxel;
    if (f.direction > 0) base[f.axis] += 1;
    std::array<Index3, 4> corners{base, base, base, base};
    corners[1][a1] += 1;
    corners[2][a1] += 1;
    corners[2][a2] += 1;
    corners[3][a2] += 1;
    // e_a1 x e_a2 = e_axis, so this winding faces +axis; flip for -axis faces.
    if (f.direction < 0) std::swap(corners[1], corners[3]);
    quads.push_back({vertex(corners[0]), vertex(corners[1]), vertex(corners[2]), vertex(corners[3])});
  }
  std::ostringstream os;
  os << "# voxel surface: " << vertices.size() << " vertices, " << quads.size() << " faces\n";
  const double pitch = grid.pitch();
  for (const auto& v : vertices) os << "v " << v[0] * pitch << ' ' << v[1] * pitch << ' ' << v[2] * pitch << '\n';
  for (const auto& q : quads) os << "f " << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3] << '\n';
  if (stats) *stats = {vertices.size(), quads.size()};
  return os.str();
}

ObjStats export_obj(const VoxelGrid& grid, double threshold, const std::filesystem::path& path) {
  ObjStats stats;
  write_text_file(path, obj_text(grid, threshold, &stats));
  return stats;
}

}  // namespace patchrd
