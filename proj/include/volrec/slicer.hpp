#pragma once

#include <optional>
#include <vector>

#include "volrec/volume.hpp"

namespace volrec {

/// Voxel (x,y,z) belongs to the plane iff 0 <= a*x + b*y + c*z + mu < omega.
/// omega = max(|a|,|b|,|c|) gives the thinnest face-separating (2-minimal) plane.
struct DigitalPlane {
  Vec3i normal = Vec3i::UnitZ();
  long long mu = 0;
  long long omega = 1;

  long long value(const Vec3i& p) const {
    return static_cast<long long>(normal.x()) * p.x() + static_cast<long long>(normal.y()) * p.y() +
           static_cast<long long>(normal.z()) * p.z() + mu;
  }
  bool contains(const Vec3i& p) const {
    const long long v = value(p);
    return v >= 0 && v < omega;
  }
};

/// Plane with a coprime integer normal and minimal thickness. Throws
/// ZeroDirection for a zero normal.
DigitalPlane plane_from_normal(const Vec3i& normal, long long mu);

/// Integer direction closest in angle to `direction` among vectors with
/// components bounded by max_component, reduced to coprime form.
Vec3i rationalize_direction(const Vec3d& direction, int max_component = 64);

/// Plane normal to the rationalized direction, passing through the voxel at
/// center + depth * unit(direction), where center = dims / 2 (integer division).
DigitalPlane make_plane(const Vec3d& direction, double depth, const Vec3i& volume_dims);

/// In-bounds plane voxels in raster order (x fastest). Integer arithmetic only.
std::vector<Vec3i> plane_voxels(const DigitalPlane& plane, const Vec3i& volume_dims);

/// True iff no face-adjacent in-bounds voxel pair has one member below the
/// plane (value < 0) and the other above it (value >= omega).
bool separability_check(const DigitalPlane& plane, const Vec3i& volume_dims);

/// In-plane orthonormal basis: u is the projection of +x onto the plane (+y
/// when degenerate), v = n x u.
struct SliceBasis {
  Vec3d origin;  // sample (0,0) of the grid before cropping to the image
  Vec3d u, v, n;
};

SliceBasis slice_basis(const DigitalPlane& plane, const Vec3i& volume_dims);

/// Trilinear sampling of the real plane through the centroid of the plane's
/// voxels on a unit-spaced (u, v) grid covering the volume. The grid is
/// anchored at the plane voxel nearest the centroid, so axis-aligned planes
/// reproduce voxel planes exactly (rows follow v, columns follow u). Samples
/// outside the volume are 0. Throws EmptyIntersection.
Image2D extract_slice(const VolumeGrid& volume, const DigitalPlane& plane);

enum class KeepSide { at_or_above, below };  // value >= 0 or value < 0

struct CutPlane {
  DigitalPlane plane;
  KeepSide keep = KeepSide::at_or_above;
};

/// Axis-aligned box [lo, hi) intersected with the kept half-spaces.
struct CropRequest {
  std::optional<std::array<Vec3i, 2>> box;
  std::vector<CutPlane> cuts;
};

inline const Vec3i kDefaultRenderBudget{512, 512, 40};

/// Bounding box of the kept region with non-kept voxels set to 0. Results
/// larger than `budget` along any axis are downsampled to fit. The output
/// origin is the box corner in the source volume's coordinates (source origin
/// added). Throws EmptyRegion.
VolumeGrid crop_region(const VolumeGrid& volume, const CropRequest& request,
                       const Vec3i& budget = kDefaultRenderBudget);

/// Trilinear downsampling: target index i samples source coordinate
/// i * (S - 1) / (T - 1) per axis (the center for T == 1). Throws UpscaleRequested.
VolumeGrid resize_volume(const VolumeGrid& volume, const Vec3i& target_dims);

/// Trilinear interpolation at a real position inside [0, d-1]^3.
double sample_trilinear(const VolumeGrid& volume, const Vec3d& p);

}  // namespace volrec
