#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "volrec/metrics.hpp"
#include "volrec/pipeline.hpp"

namespace volrec {

/// Runs one `volrec` command line. Returns the process exit code: 0 on
/// success, the ErrorCode value for library errors, 2 for usage errors and 1
/// for anything unexpected. Errors go to `err`, reports to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// load_stack -> reconstruct -> save_volume. Stage timings are written to `log`.
ReconstructionResult cmd_reconstruct(const std::filesystem::path& manifest, const std::filesystem::path& out_volume,
                                     const ReconstructionConfig& config, std::ostream& log);

struct BenchRow {
  int workers = 1;
  StageTimings timings;
  std::uint64_t checksum = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  /// Reconstruction-time ratio of the first row to each row.
  double speedup(std::size_t row) const;
  std::string to_text() const;
};

/// Reconstructs once per worker count. Throws DeterminismViolation when the
/// output volumes differ.
BenchReport cmd_bench(const SliceStack& stack, const std::vector<int>& workers_list, ReconstructionConfig config);

/// Compares ground slices with the volume planes they correspond to. Ground
/// slice i maps to plane z = round(i * slice_gap / pixel_spacing). With g > 0,
/// planes with z % (g + 1) == 0 (the acquired ones) are skipped.
AccuracyReport cmd_metrics(const SliceStack& ground, const VolumeGrid& recon, int g, int bins = 256);

/// Writes into `dir`: the phantom slice stack (`stack.manifest`, 16-bit PNGs),
/// every plane of the ground truth (`ground.manifest`) and the dense volume
/// `ground.vol`. Returns the stack manifest path.
std::filesystem::path write_phantom_dataset(const std::filesystem::path& dir, int width, int height, int slices,
                                            int g);

}  // namespace volrec
