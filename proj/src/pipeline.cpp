#include "volrec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "volrec/shearlet.hpp"

namespace volrec {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::vector<Block> partition(const SliceStack& stack, int k, int halo_width) {
  return partition(stack, k, halo_width, missing_planes_per_gap(stack.slice_gap_mm, stack.pixel_spacing.x()));
}

std::vector<Block> partition(const SliceStack& stack, int k, int halo_width, int g) {
  validate(stack);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (halo_width < 0) throw Error(ErrorCode::InvalidArgument, "halo_width must be >= 0");
  if (g < 0) throw Error(ErrorCode::InvalidArgument, "g must be >= 0");
  const int n = stack.count();
  const int per_chunk = n / k;
  if (per_chunk < 2)
    throw Error(ErrorCode::TooFewSlices, std::to_string(n) + " slices cannot form " + std::to_string(k) +
                                             " chunks of at least 2 slices");
  const int mx = stack.width(), my = stack.height();
  const int depth = full_depth(n, g);
  const int step = g + 1;

  std::vector<Block> blocks;
  blocks.reserve(static_cast<std::size_t>(4 * k));
  for (int q = 0; q < 4; ++q) {
    const int qx = q % 2, qy = q / 2;
    const int x0 = qx == 0 ? 0 : mx / 2, x1 = qx == 0 ? mx / 2 : mx;  // half-open
    const int y0 = qy == 0 ? 0 : my / 2, y1 = qy == 0 ? my / 2 : my;
    // Halo only on sides facing another quadrant.
    const int gx0 = qx == 1 ? std::max(0, x0 - halo_width) : x0;
    const int gx1 = qx == 0 ? std::min(mx, x1 + halo_width) : x1;
    const int gy0 = qy == 1 ? std::max(0, y0 - halo_width) : y0;
    const int gy1 = qy == 0 ? std::min(my, y1 + halo_width) : y1;

    for (int c = 0; c < k; ++c) {
      const int first = c * per_chunk;
      const int last = c == k - 1 ? n - 1 : (c + 1) * per_chunk - 1;
      // Core planes run up to (excluding) the next chunk's first plane; the last chunk closes the volume.
      const int z0 = first * step;
      const int z1 = c == k - 1 ? depth : (last + 1) * step;
      // Known slices present in the grid: the chunk, the next chunk's first slice, plus the halo.
      const int s0 = c == 0 ? first : std::max(0, first - halo_width);
      const int s1 = c == k - 1 ? last : std::min(n - 1, last + 1 + halo_width);

      Block b;
      b.desc.quadrant_index = q;
      b.desc.chunk_index = c;
      b.desc.quadrant_origin = {x0, y0};
      b.desc.quadrant_size = {x1 - x0, y1 - y0};
      b.desc.slice_range = {first, last};
      b.desc.halo_width = halo_width;
      b.desc.core_lo = Vec3i(x0, y0, z0);
      b.desc.core_hi = Vec3i(x1, y1, z1);

      const Vec3i origin(gx0, gy0, s0 * step);
      const Vec3i dims(gx1 - gx0, gy1 - gy0, (s1 - s0) * step + 1);
      b.grid = VolumeGrid::missing(dims, origin);
      for (int s = s0; s <= s1; ++s) {
        const int lz = s * step - origin.z();
        const Image2D& img = stack.slices[static_cast<std::size_t>(s)];
        for (int y = 0; y < dims.y(); ++y)
          for (int x = 0; x < dims.x(); ++x) b.grid.set(x, y, lz, img(gy0 + y, gx0 + x));
      }
      blocks.push_back(std::move(b));
    }
  }
  return blocks;
}

VolumeGrid reconstruct_block(const Block& block, const ReconstructionConfig& config) {
  try {
    const VolumeGrid& grid = block.grid;
    const auto samples = sample_known_voxels(grid, config.variogram_samples);
    const VariogramModel model = fit_variogram(samples, config.variogram);
    VolumeGrid filled = fill_missing(grid, model, config.kriging);
    if (!config.edge_preserve) return filled;
    std::vector<std::uint8_t> protect(grid.mask().size());
    std::transform(grid.mask().begin(), grid.mask().end(), protect.begin(),
                   [](std::uint8_t missing) -> std::uint8_t { return missing ? 0 : 1; });
    return preserve_edges(filled, config.edges, protect);
  } catch (const Error& e) {
    throw Error(e.code(), "block (quadrant " + std::to_string(block.desc.quadrant_index) + ", chunk " +
                              std::to_string(block.desc.chunk_index) + "): " + e.what());
  }
}

std::vector<VolumeGrid> run_parallel(std::span<const Block> blocks, const ReconstructionConfig& config,
                                     const ProgressFn& progress, double* dispatch_seconds) {
  if (config.workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  const int total = static_cast<int>(blocks.size());
  std::vector<VolumeGrid> results(blocks.size());
  std::atomic<int> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;
  int done = 0;
  std::optional<std::pair<int, std::exception_ptr>> failure;
  Clock::time_point last_finish = Clock::now();

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const int i = next.fetch_add(1);
      if (i >= total) return;
      try {
        results[static_cast<std::size_t>(i)] = reconstruct_block(blocks[static_cast<std::size_t>(i)], config);
        std::lock_guard lock(mu);
        ++done;
        last_finish = Clock::now();
        if (progress) progress(done, total);
      } catch (...) {
        std::lock_guard lock(mu);
        abort = true;
        last_finish = Clock::now();
        if (!failure || i < failure->first) failure = std::make_pair(i, std::current_exception());
      }
    }
  };

  const int nthreads = std::max(1, std::min(config.workers, total));
  const auto t0 = Clock::now();
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  const double spawn = seconds_since(t0);
  for (auto& th : pool) th.join();
  const double join = std::chrono::duration<double>(Clock::now() - last_finish).count();
  if (dispatch_seconds) *dispatch_seconds = spawn + std::max(0.0, join);
  if (failure) std::rethrow_exception(failure->second);
  return results;
}

VolumeGrid merge(std::span<const Block> blocks, std::span<const VolumeGrid> results, const Vec3i& dims) {
  if (blocks.size() != results.size()) throw Error(ErrorCode::InvalidArgument, "block/result count mismatch");
  VolumeGrid out = VolumeGrid::missing(dims);
  std::vector<std::uint8_t> owner(static_cast<std::size_t>(out.size()), 0);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockDescriptor& d = blocks[b].desc;
    const VolumeGrid& r = results[b];
    const Vec3i o = r.origin();
    for (int z = d.core_lo.z(); z < d.core_hi.z(); ++z)
      for (int y = d.core_lo.y(); y < d.core_hi.y(); ++y)
        for (int x = d.core_lo.x(); x < d.core_hi.x(); ++x) {
          if (!out.contains(x, y, z) || !r.contains(x - o.x(), y - o.y(), z - o.z()))
            throw Error(ErrorCode::TilingGap, "block core lies outside its grid or the volume");
          const Eigen::Index i = out.index(x, y, z);
          auto& own = owner[static_cast<std::size_t>(i)];
          if (own)
            throw Error(ErrorCode::TilingOverlap, "voxel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                                                      std::to_string(z) + ") owned twice");
          own = 1;
          const Eigen::Index j = r.index(x - o.x(), y - o.y(), z - o.z());
          if (r.is_missing(j))
            out.set_missing(i);
          else
            out.set(i, r.data()[j]);
        }
  }
  if (std::find(owner.begin(), owner.end(), std::uint8_t{0}) != owner.end())
    throw Error(ErrorCode::TilingGap, "some voxels belong to no block core");
  return out;
}

SliceStack denoise_stack(const SliceStack& stack, double mult) {
  if (mult <= 0) return stack;
  const int side = std::min(stack.width(), stack.height());
  int scales = 1;
  while (scales < 3 && std::pow(4.0, scales + 1) <= side) ++scales;
  const ShearletSystem sys = build_system(stack.width(), stack.height(), scales);
  SliceStack out = stack;
  for (auto& s : out.slices) s = denoise(sys, s, mult);
  return out;
}

ReconstructionResult reconstruct(const SliceStack& input, const ReconstructionConfig& config,
                                 const ProgressFn& progress) {
  ReconstructionResult res;
  const auto t_all = Clock::now();

  auto t = Clock::now();
  const SliceStack stack = denoise_stack(input, config.denoise_mult);
  res.timings.denoise_s = seconds_since(t);

  t = Clock::now();
  res.g = missing_planes_per_gap(stack.slice_gap_mm, stack.pixel_spacing.x());
  const std::vector<Block> blocks = partition(stack, config.k, config.halo_width, res.g);
  res.blocks = static_cast<int>(blocks.size());
  res.timings.split_s = seconds_since(t);

  t = Clock::now();
  const auto results = run_parallel(blocks, config, progress, &res.timings.dispatch_s);
  res.timings.reconstruct_s = seconds_since(t);

  t = Clock::now();
  res.volume = merge(blocks, results, Vec3i(stack.width(), stack.height(), full_depth(stack.count(), res.g)));
  res.timings.merge_s = seconds_since(t);
  res.timings.total_s = seconds_since(t_all);
  return res;
}

}  // namespace volrec
