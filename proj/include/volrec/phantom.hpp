#pragma once

#include "volrec/volume.hpp"

namespace volrec {

/// Analytic test volume: three Gaussian blobs plus an ellipsoidal shell with a
/// one-voxel antialiased boundary. Coordinates are normalized to [0,1] per axis.
struct PhantomOptions {
  Vec3i dims{128, 128, 25};
  bool blobs = true;
  bool shell = true;
  double shell_amplitude = 0.7;
  double shell_z_semi_axis = 2.0;  // in normalized units; large values make a cylinder-like shell
};

VolumeGrid make_phantom(const PhantomOptions& options = {});

/// Depth of a phantom that keeps `n` slices with g withheld planes per gap.
inline Vec3i phantom_dims(int width, int height, int n, int g) { return {width, height, full_depth(n, g)}; }

/// Centered ball of the given radius: value 0.5 + (radius - distance) / scale,
/// clamped to [0,1], so the 0.5 iso-surface is the sphere.
VolumeGrid sphere_volume(int n, double radius, double scale = 8.0);

/// The planes z = i*(g+1) of a dense volume as a slice stack (no renormalization).
SliceStack stack_from_volume(const VolumeGrid& volume, int g, double pixel_spacing_mm = 1.0);

/// Copy of the volume with every plane except z = i*(g+1) marked missing.
VolumeGrid withhold_planes(const VolumeGrid& volume, int g);

}  // namespace volrec
