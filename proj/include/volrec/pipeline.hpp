#pragma once

#include <functional>
#include <span>
#include <vector>

#include "volrec/edge_preserve.hpp"
#include "volrec/kriging.hpp"
#include "volrec/volume.hpp"

namespace volrec {

struct ReconstructionConfig {
  int k = 2;           // chunks per quadrant
  int workers = 1;
  int halo_width = 2;  // voxels in-plane, slices along z
  KrigingOptions kriging;
  VariogramKind variogram = VariogramKind::exponential;
  std::size_t variogram_samples = 1500;
  bool edge_preserve = true;
  EdgePreserveOptions edges;
  double denoise_mult = 0.0;  // 0 keeps input slices untouched
};

/// One unit of work: the block's placement plus its partially filled grid.
/// grid.origin() is the grid's position inside the full volume.
struct Block {
  BlockDescriptor desc;
  VolumeGrid grid;
};

/// Splits the stack into 4k blocks ordered by (quadrant, chunk). Known planes
/// sit at z = i*(g+1); everything else is missing. Chunks get n/k slices, the
/// last one absorbs the remainder.
std::vector<Block> partition(const SliceStack& stack, int k, int halo_width, int g);
std::vector<Block> partition(const SliceStack& stack, int k, int halo_width);

/// Variogram fit, kriging fill and (optionally) edge preservation of one block.
/// Originally known voxels are never modified.
VolumeGrid reconstruct_block(const Block& block, const ReconstructionConfig& config = {});

using ProgressFn = std::function<void(int done, int total)>;

/// Reconstructs all blocks on a pool of config.workers threads. Results keep
/// the block order. The first failure stops new work; once in-flight blocks
/// finish, the error of the lowest failing block index is rethrown.
/// `dispatch_seconds`, if given, receives thread start-up plus join latency.
std::vector<VolumeGrid> run_parallel(std::span<const Block> blocks, const ReconstructionConfig& config,
                                     const ProgressFn& progress = {}, double* dispatch_seconds = nullptr);

/// Copies each block's core region into a volume of the given dims. Throws
/// TilingOverlap / TilingGap if cores are not an exact partition.
VolumeGrid merge(std::span<const Block> blocks, std::span<const VolumeGrid> results, const Vec3i& dims);

struct StageTimings {
  double denoise_s = 0;
  double split_s = 0;
  double dispatch_s = 0;     // worker start-up plus join latency
  double reconstruct_s = 0;  // wall time of the parallel phase
  double merge_s = 0;
  double total_s = 0;

  double overhead_s() const { return split_s + dispatch_s + merge_s; }
};

struct ReconstructionResult {
  VolumeGrid volume;
  StageTimings timings;
  int g = 0;
  int blocks = 0;
};

/// Denoises each slice with a shearlet system sized to the slices (mult > 0).
SliceStack denoise_stack(const SliceStack& stack, double mult);

/// denoise (optional) -> partition -> run_parallel -> merge.
ReconstructionResult reconstruct(const SliceStack& stack, const ReconstructionConfig& config = {},
                                 const ProgressFn& progress = {});

}  // namespace volrec
