#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "volrec/shearlet.hpp"
#include "volrec/volume.hpp"

namespace volrec {

using Pixel = Eigen::Vector2i;  // (x = column, y = row)

/// Clockwise 8-neighborhood starting east, image y pointing down:
/// E, SE, S, SW, W, NW, N, NE.
inline constexpr std::array<std::array<int, 2>, 8> kRing = {
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

/// Ring index of the step a -> b, or -1 when b is not an 8-neighbor of a.
int ring_direction(const Pixel& a, const Pixel& b);
bool adjacent8(const Pixel& a, const Pixel& b);

struct EdgeChain {
  std::vector<Pixel> pixels;
  std::vector<int> theta;

  std::size_t size() const { return pixels.size(); }
};

/// Partitions the edge pixels into chains. Each chain starts at the first
/// unvisited edge pixel in raster order and greedily steps to the first
/// unvisited edge neighbor in kRing order. Isolated pixels form 1-pixel chains.
std::vector<EdgeChain> trace_chains(const EdgeMap& edges);

/// Sign changes between consecutive nonzero differences of the sequence.
int direction_changes(std::span<const int> thetas);

/// Replaces the interior of a noisy window (>= noise_changes direction changes)
/// by the integer nearest the window mean, ties toward the smaller value.
std::vector<int> smooth_window_orientation(std::span<const int> window, int noise_changes = 4);

/// Moves chain pixels whose orientation disagrees with the smoothed one onto the
/// strongest 8-neighbor carrying the smoothed orientation. A candidate that would
/// break 8-adjacency with its chain neighbors is rejected and the pixel kept.
EdgeChain reselect_edge_pixels(const EdgeChain& chain, std::span<const int> smoothed, const EdgeMap& edges);

/// Sets the three pixels left of the traversal direction to their median, and
/// likewise the three on the right. Border pixels are left alone.
template <typename Derived>
void adjust_neighbors(Eigen::MatrixBase<Derived>& image, const Pixel& p, int direction) {
  using Scalar = typename Derived::Scalar;
  if (p.x() <= 0 || p.y() <= 0 || p.x() >= image.cols() - 1 || p.y() >= image.rows() - 1) return;
  for (int side : {+1, -1}) {
    std::array<Scalar, 3> v{};
    std::array<std::array<int, 2>, 3> at{};
    for (int i = 0; i < 3; ++i) {
      const auto& d = kRing[static_cast<std::size_t>(((direction + side * (i + 1)) % 8 + 8) % 8)];
      at[static_cast<std::size_t>(i)] = {p.x() + d[0], p.y() + d[1]};
      v[static_cast<std::size_t>(i)] = image(at[static_cast<std::size_t>(i)][1], at[static_cast<std::size_t>(i)][0]);
    }
    const Scalar med = std::max(std::min(v[0], v[1]), std::min(std::max(v[0], v[1]), v[2]));
    for (const auto& q : at) image(q[1], q[0]) = med;
  }
}

struct EdgePreserveOptions {
  int window = 16;
  int stride = 16;
  int noise_changes = 4;
  int num_scales = 2;
  EdgeOptions edges;
};

/// Per-image correction: detect -> trace -> smooth windows -> reselect ->
/// adjust around every reselected pixel. Returns the number of reselected pixels.
int preserve_edges_image(Image<double>& image, const EdgeMap& edges, const EdgePreserveOptions& options = {});

/// Shearlet system sized for the padded YZ planes of a block.
ShearletSystem plane_system(const Vec3i& block_dims, int num_scales = 2);

/// Applies the image correction to every YZ plane (rows = z, cols = y) of a
/// filled block. Planes are padded by reflection to the system size. Voxels with
/// a nonzero entry in `protect` (same indexing as the block) keep their values.
VolumeGrid preserve_edges(const VolumeGrid& block, const ShearletSystem& system,
                          const EdgePreserveOptions& options = {},
                          std::span<const std::uint8_t> protect = {});

/// Builds the plane system itself.
VolumeGrid preserve_edges(const VolumeGrid& block, const EdgePreserveOptions& options = {},
                          std::span<const std::uint8_t> protect = {});

}  // namespace volrec
