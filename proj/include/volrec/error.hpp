#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace volrec {

// Error classes. The numeric values double as process exit codes for the CLI
// and must stay stable.
enum class ErrorCode : int {
  InvalidArgument = 2,
  EmptyStack = 10,
  DimensionMismatch = 11,
  NonPositiveSpacing = 12,
  ManifestParse = 20,
  ImageDecode = 21,
  Io = 22,
  CorruptHeader = 23,
  ChecksumMismatch = 24,
  InvalidGrid = 25,
  UnsupportedVersion = 26,
  InsufficientSamples = 30,
  DegenerateLags = 31,
  SingularSystem = 32,
  NoKnownNeighbors = 33,
  ImageTooSmall = 40,
  TooFewSlices = 50,
  TilingGap = 51,
  TilingOverlap = 52,
  MissingData = 60,
  ZeroDirection = 70,
  EmptyIntersection = 71,
  EmptyRegion = 72,
  UpscaleRequested = 73,
  AlignmentMismatch = 80,
  DeterminismViolation = 90,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace volrec
