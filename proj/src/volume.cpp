#include "volrec/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace volrec {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyStack: return "EmptyStack";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveSpacing: return "NonPositiveSpacing";
    case ErrorCode::ManifestParse: return "ManifestParse";
    case ErrorCode::ImageDecode: return "ImageDecode";
    case ErrorCode::Io: return "Io";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateLags: return "DegenerateLags";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NoKnownNeighbors: return "NoKnownNeighbors";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::TooFewSlices: return "TooFewSlices";
    case ErrorCode::TilingGap: return "TilingGap";
    case ErrorCode::TilingOverlap: return "TilingOverlap";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::UpscaleRequested: return "UpscaleRequested";
    case ErrorCode::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorCode::DeterminismViolation: return "DeterminismViolation";
  }
  return "Unknown";
}

std::string_view to_string(Axis axis) noexcept {
  switch (axis) {
    case Axis::axial: return "axial";
    case Axis::sagittal: return "sagittal";
    case Axis::coronal: return "coronal";
  }
  return "axial";
}

Axis axis_from_string(std::string_view label) {
  if (label == "axial") return Axis::axial;
  if (label == "sagittal") return Axis::sagittal;
  if (label == "coronal") return Axis::coronal;
  throw Error(ErrorCode::InvalidArgument, "unknown axis label '" + std::string(label) + "'");
}

void validate(const SliceStack& stack) {
  if (stack.slices.size() < 2) throw Error(ErrorCode::EmptyStack, "need at least 2 slices");
  if (!(stack.slice_gap_mm > 0) || !(stack.pixel_spacing.array() > 0).all())
    throw Error(ErrorCode::NonPositiveSpacing, "spacing must be positive");
  const auto rows = stack.slices.front().rows();
  const auto cols = stack.slices.front().cols();
  for (const auto& s : stack.slices) {
    if (s.rows() != rows || s.cols() != cols)
      throw Error(ErrorCode::DimensionMismatch, "slices differ in size");
    if (!s.allFinite() || (s.size() > 0 && (s.minCoeff() < 0.0f || s.maxCoeff() > 1.0f)))
      throw Error(ErrorCode::InvalidArgument, "slice values must be finite and in [0,1]");
  }
}

void validate(const TriangleMesh& mesh) {
  const auto nv = mesh.vertices.size();
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= nv) throw Error(ErrorCode::InvalidArgument, "triangle index out of range");
  if (!mesh.normals.empty()) {
    if (mesh.normals.size() != nv) throw Error(ErrorCode::InvalidArgument, "one normal per vertex required");
    for (const auto& n : mesh.normals)
      if (std::abs(n.norm() - 1.0f) > 1e-5f) throw Error(ErrorCode::InvalidArgument, "normal not unit length");
  }
}

namespace {

void check_stack_shape(const SliceStack& raw) {
  if (raw.slices.size() < 2) throw Error(ErrorCode::EmptyStack, "need at least 2 slices");
  const auto rows = raw.slices.front().rows();
  const auto cols = raw.slices.front().cols();
  for (const auto& s : raw.slices)
    if (s.rows() != rows || s.cols() != cols) throw Error(ErrorCode::DimensionMismatch, "slices differ in size");
}

}  // namespace

SliceStack normalize_stack(SliceStack raw) {
  check_stack_shape(raw);
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (const auto& s : raw.slices) {
    if (s.size() == 0) continue;
    lo = std::min(lo, s.minCoeff());
    hi = std::max(hi, s.maxCoeff());
  }
  return normalize_stack(std::move(raw), lo, hi);
}

SliceStack normalize_stack(SliceStack raw, double lo, double hi) {
  check_stack_shape(raw);
  const double span = hi - lo;
  for (auto& s : raw.slices) {
    if (!(span > 0)) {
      s.setZero();
      continue;
    }
    s = ((s.cast<double>().array() - lo) / span).cast<float>().matrix();
    s = s.cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return raw;
}

int missing_planes_per_gap(double slice_gap_mm, double pixel_spacing_mm) {
  if (!(slice_gap_mm > 0) || !(pixel_spacing_mm > 0))
    throw Error(ErrorCode::NonPositiveSpacing, "slice gap and pixel spacing must be positive");
  return std::max(0, static_cast<int>(std::lround(slice_gap_mm / pixel_spacing_mm)) - 1);
}

}  // namespace volrec
