#include "volrec/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace volrec {

namespace {

struct Blob {
  double cx, cy, cz, sigma, amplitude;
};

constexpr std::array<Blob, 3> kBlobs = {{
    {0.30, 0.35, 0.40, 0.12, 0.50},
    {0.65, 0.60, 0.55, 0.15, 0.40},
    {0.50, 0.30, 0.70, 0.10, 0.35},
}};

double normalized(int i, int n) { return n > 1 ? static_cast<double>(i) / (n - 1) : 0.5; }

}  // namespace

VolumeGrid make_phantom(const PhantomOptions& o) {
  VolumeGrid v(o.dims, 0.0f);
  // Shell thickness in pixels per unit of normalized radius along x.
  const double px = 0.3 * std::max(1, o.dims.x() - 1);
  for (int z = 0; z < o.dims.z(); ++z)
    for (int y = 0; y < o.dims.y(); ++y)
      for (int x = 0; x < o.dims.x(); ++x) {
        const double fx = normalized(x, o.dims.x()), fy = normalized(y, o.dims.y()), fz = normalized(z, o.dims.z());
        double val = 0.0;
        if (o.blobs)
          for (const auto& b : kBlobs) {
            const double d2 = (fx - b.cx) * (fx - b.cx) + (fy - b.cy) * (fy - b.cy) + (fz - b.cz) * (fz - b.cz);
            val += b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
          }
        if (o.shell) {
          const double r = std::sqrt(std::pow((fx - 0.5) / 0.38, 2) + std::pow((fy - 0.5) / 0.30, 2) +
                                     std::pow((fz - 0.5) / o.shell_z_semi_axis, 2));
          const double inner = std::clamp((r - 0.85) * px + 0.5, 0.0, 1.0);
          const double outer = std::clamp((1.0 - r) * px + 0.5, 0.0, 1.0);
          const double cover = std::min(inner, outer);
          val = val * (1.0 - cover) + o.shell_amplitude * cover;
        }
        v.set(x, y, z, static_cast<float>(std::clamp(val, 0.0, 1.0)));
      }
  return v;
}

VolumeGrid sphere_volume(int n, double radius, double scale) {
  VolumeGrid v(Vec3i::Constant(n), 0.0f);
  const double c = 0.5 * (n - 1);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
        v.set(x, y, z, static_cast<float>(std::clamp(0.5 + (radius - d) / scale, 0.0, 1.0)));
      }
  return v;
}

SliceStack stack_from_volume(const VolumeGrid& volume, int g, double pixel_spacing_mm) {
  if (g < 0) throw Error(ErrorCode::InvalidArgument, "g must be >= 0");
  if ((volume.nz() - 1) % (g + 1) != 0)
    throw Error(ErrorCode::DimensionMismatch, "volume depth is not n + (n-1)*g");
  SliceStack s;
  s.pixel_spacing = Eigen::Vector2d::Constant(pixel_spacing_mm);
  s.slice_gap_mm = (g + 1) * pixel_spacing_mm;
  for (int z = 0; z < volume.nz(); z += g + 1) s.slices.push_back(volume.plane_z(z));
  return s;
}

VolumeGrid withhold_planes(const VolumeGrid& volume, int g) {
  VolumeGrid out = volume;
  for (int z = 0; z < volume.nz(); ++z) {
    if (z % (g + 1) == 0) continue;
    for (int y = 0; y < volume.ny(); ++y)
      for (int x = 0; x < volume.nx(); ++x) out.set_missing(x, y, z);
  }
  return out;
}

}  // namespace volrec
