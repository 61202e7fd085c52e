#include "volrec/edge_preserve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace volrec {

int ring_direction(const Pixel& a, const Pixel& b) {
  const int dx = b.x() - a.x(), dy = b.y() - a.y();
  for (int r = 0; r < 8; ++r)
    if (kRing[static_cast<std::size_t>(r)][0] == dx && kRing[static_cast<std::size_t>(r)][1] == dy) return r;
  return -1;
}

bool adjacent8(const Pixel& a, const Pixel& b) { return ring_direction(a, b) >= 0; }

std::vector<EdgeChain> trace_chains(const EdgeMap& edges) {
  const int rows = edges.rows(), cols = edges.cols();
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
  auto seen = [&](int x, int y) -> std::uint8_t& {
    return visited[static_cast<std::size_t>(y) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(x)];
  };
  std::vector<EdgeChain> chains;
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      if (!edges.edge(y, x) || seen(x, y)) continue;
      EdgeChain chain;
      Pixel p(x, y);
      for (;;) {
        seen(p.x(), p.y()) = 1;
        chain.pixels.push_back(p);
        chain.theta.push_back(edges.theta(p.y(), p.x()));
        bool moved = false;
        for (const auto& d : kRing) {
          const int nx = p.x() + d[0], ny = p.y() + d[1];
          if (nx < 0 || ny < 0 || nx >= cols || ny >= rows) continue;
          if (!edges.edge(ny, nx) || seen(nx, ny)) continue;
          p = Pixel(nx, ny);
          moved = true;
          break;
        }
        if (!moved) break;
      }
      chains.push_back(std::move(chain));
    }
  return chains;
}

int direction_changes(std::span<const int> thetas) {
  int changes = 0, last_sign = 0;
  for (std::size_t i = 1; i < thetas.size(); ++i) {
    const int d = thetas[i] - thetas[i - 1];
    if (d == 0) continue;
    const int sign = d > 0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++changes;
    last_sign = sign;
  }
  return changes;
}

std::vector<int> smooth_window_orientation(std::span<const int> window, int noise_changes) {
  std::vector<int> out(window.begin(), window.end());
  if (out.size() < 3 || direction_changes(window) < noise_changes) return out;
  const double mean =
      std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  // Nearest integer with halves going down.
  const int rep = static_cast<int>(std::ceil(mean - 0.5));
  std::fill(out.begin() + 1, out.end() - 1, rep);
  return out;
}

EdgeChain reselect_edge_pixels(const EdgeChain& chain, std::span<const int> smoothed, const EdgeMap& edges) {
  if (smoothed.size() != chain.size())
    throw Error(ErrorCode::InvalidArgument, "smoothed orientations do not match the chain length");
  EdgeChain out = chain;
  const std::size_t n = chain.size();
  // Pixels already on the chain never serve as replacements.
  std::vector<std::int64_t> taken;
  taken.reserve(n);
  auto key = [&](const Pixel& q) { return static_cast<std::int64_t>(q.y()) * edges.cols() + q.x(); };
  for (const auto& q : chain.pixels) taken.push_back(key(q));
  std::sort(taken.begin(), taken.end());
  for (std::size_t i = 0; i < n; ++i) {
    const int want = smoothed[i];
    out.theta[i] = want;
    if (chain.theta[i] == want) continue;
    const Pixel& p = chain.pixels[i];
    int best = -1;
    double best_mag = -1.0;
    for (int r = 0; r < 8; ++r) {
      const int x = p.x() + kRing[static_cast<std::size_t>(r)][0], y = p.y() + kRing[static_cast<std::size_t>(r)][1];
      if (x < 0 || y < 0 || x >= edges.cols() || y >= edges.rows()) continue;
      if (edges.theta(y, x) != want) continue;
      if (std::binary_search(taken.begin(), taken.end(), key(Pixel(x, y)))) continue;
      if (edges.magnitude(y, x) > best_mag) {
        best_mag = edges.magnitude(y, x);
        best = r;
      }
    }
    if (best < 0) continue;
    const Pixel cand(p.x() + kRing[static_cast<std::size_t>(best)][0], p.y() + kRing[static_cast<std::size_t>(best)][1]);
    const bool ok_prev = i == 0 || adjacent8(out.pixels[i - 1], cand);
    const bool ok_next = i + 1 == n || adjacent8(cand, chain.pixels[i + 1]);
    if (ok_prev && ok_next) {
      out.pixels[i] = cand;
      taken.insert(std::lower_bound(taken.begin(), taken.end(), key(cand)), key(cand));
    }
  }
  return out;
}

int preserve_edges_image(Image<double>& image, const EdgeMap& edges, const EdgePreserveOptions& options) {
  if (options.window < 1 || options.stride < 1) throw Error(ErrorCode::InvalidArgument, "window and stride must be >= 1");
  int moved = 0;
  for (const EdgeChain& chain : trace_chains(edges)) {
    std::vector<int> smoothed = chain.theta;
    for (std::size_t start = 0; start < smoothed.size(); start += static_cast<std::size_t>(options.stride)) {
      const std::size_t len = std::min(static_cast<std::size_t>(options.window), smoothed.size() - start);
      const auto w = smooth_window_orientation(std::span<const int>(smoothed).subspan(start, len), options.noise_changes);
      std::copy(w.begin(), w.end(), smoothed.begin() + static_cast<std::ptrdiff_t>(start));
    }
    const EdgeChain fixed = reselect_edge_pixels(chain, smoothed, edges);
    if (fixed.size() < 2) continue;
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      if (fixed.pixels[i] == chain.pixels[i]) continue;
      ++moved;
      const int dir = i + 1 < fixed.size() ? ring_direction(fixed.pixels[i], fixed.pixels[i + 1])
                                           : ring_direction(fixed.pixels[i - 1], fixed.pixels[i]);
      if (dir >= 0) adjust_neighbors(image, fixed.pixels[i], dir);
    }
  }
  return moved;
}

namespace {

int fft_friendly(int n) {
  for (;; ++n) {
    int m = n;
    for (int f : {2, 3, 5})
      while (m % f == 0) m /= f;
    if (m == 1) return n;
  }
}

int padded_extent(int n) { return fft_friendly(std::max(32, n + 16)); }

// Half-sample symmetric extension of index i into [0, n).
int fold(int i, int n) {
  const int period = 2 * n;
  int m = ((i % period) + period) % period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

ShearletSystem plane_system(const Vec3i& block_dims, int num_scales) {
  return build_system(padded_extent(block_dims.y()), padded_extent(block_dims.z()), num_scales);
}

VolumeGrid preserve_edges(const VolumeGrid& block, const ShearletSystem& system, const EdgePreserveOptions& options,
                          std::span<const std::uint8_t> protect) {
  if (block.missing_count() != 0) throw Error(ErrorCode::MissingData, "preserve_edges needs a filled block");
  if (!protect.empty() && protect.size() != static_cast<std::size_t>(block.size()))
    throw Error(ErrorCode::DimensionMismatch, "protect mask size differs from the block");
  const int rows = block.nz(), cols = block.ny();
  if (system.height < rows || system.width < cols)
    throw Error(ErrorCode::DimensionMismatch, "shearlet system smaller than the block's YZ planes");
  const int r0 = (system.height - rows) / 2, c0 = (system.width - cols) / 2;

  VolumeGrid out = block;
  Image<double> padded(system.height, system.width);
  for (int x = 0; x < block.nx(); ++x) {
    Image<double> plane = block.plane_x(x).cast<double>();
    // Constant planes have no edges; skip the transforms.
    if (plane.size() == 0 || plane.maxCoeff() == plane.minCoeff()) continue;
    for (int r = 0; r < system.height; ++r)
      for (int c = 0; c < system.width; ++c) padded(r, c) = plane(fold(r - r0, rows), fold(c - c0, cols));
    const EdgeMap full = detect_edges(system, padded, options.edges);
    EdgeMap edges;
    edges.is_edge = full.is_edge.block(r0, c0, rows, cols);
    edges.theta = full.theta.block(r0, c0, rows, cols);
    edges.magnitude = full.magnitude.block(r0, c0, rows, cols);

    Image<double> work = plane;
    if (preserve_edges_image(work, edges, options) == 0) continue;
    for (int z = 0; z < rows; ++z)
      for (int y = 0; y < cols; ++y) {
        const Eigen::Index i = block.index(x, y, z);
        if (!protect.empty() && protect[static_cast<std::size_t>(i)]) continue;
        if (work(z, y) != plane(z, y)) out.set(i, static_cast<float>(work(z, y)));
      }
  }
  return out;
}

VolumeGrid preserve_edges(const VolumeGrid& block, const EdgePreserveOptions& options,
                          std::span<const std::uint8_t> protect) {
  return preserve_edges(block, plane_system(block.dims(), options.num_scales), options, protect);
}

}  // namespace volrec
