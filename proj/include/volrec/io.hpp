#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volrec/volume.hpp"

namespace volrec {

/// Parsed stack manifest. Slice paths are resolved against the manifest's directory.
///
/// Text format, one `key = value` per line, `#` starts a comment:
///
///     pixel_spacing = 1.0 1.0
///     slice_gap = 3.0
///     axis = axial
///     slice = slices/000.png
///     slice = slices/001.png
///
/// Optional `value_range = lo hi` replaces the stack min-max normalization by a
/// fixed mapping of [lo, hi] (in decoded units, i.e. after the 1/255 or 1/65535
/// scaling) onto [0,1].
struct StackManifest {
  std::vector<std::filesystem::path> slice_files;
  Eigen::Vector2d pixel_spacing_mm{1.0, 1.0};
  double slice_gap_mm = 1.0;
  std::string axis_label = "axial";
  std::optional<std::array<double, 2>> value_range;
};

StackManifest parse_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const StackManifest& manifest);

/// Loads the manifest's slices in order and normalizes them over the whole stack.
SliceStack load_stack(const std::filesystem::path& manifest_path);

/// Reads an 8- or 16-bit grayscale PNG or binary PGM; samples are scaled by
/// 1/255 or 1/65535 respectively.
Image2D read_image(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG (values clamped to [0,1], rounded to 1/255).
void write_png(const std::filesystem::path& path, const Image2D& image);
std::vector<std::uint8_t> encode_png(const Image2D& image);
/// 16-bit variant used to store phantom slices without 8-bit quantization loss.
void write_png16(const std::filesystem::path& path, const Image2D& image);

// Binary volume format (little-endian):
//   8 bytes magic "VRVOLUME", uint32 version (=1),
//   int32 dims[3], int32 origin[3],
//   float32 payload[nx*ny*nz] (x fastest),
//   bit-packed mask, ceil(N/8) bytes, LSB first (1 = missing),
//   uint64 FNV-1a checksum over every preceding byte.
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

std::vector<std::uint8_t> serialize_volume(const VolumeGrid& grid);
VolumeGrid deserialize_volume(std::span<const std::uint8_t> bytes);

void save_volume(const VolumeGrid& grid, const std::filesystem::path& path);
VolumeGrid load_volume(const std::filesystem::path& path);

/// FNV-1a 64-bit hash of the serialized volume.
std::uint64_t volume_checksum(const VolumeGrid& grid);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

enum class MeshFormat { obj, stl_binary };

void export_mesh(const TriangleMesh& mesh, MeshFormat format, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_stl(const TriangleMesh& mesh);
std::string encode_obj(const TriangleMesh& mesh);

/// Vertices and faces of an OBJ file (normals are recomputed by callers if needed).
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace volrec
