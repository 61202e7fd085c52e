#include "volrec/slicer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Geometry>

namespace volrec {

namespace {

bool in_bounds(const Vec3i& p, const Vec3i& d) {
  return (p.array() >= 0).all() && (p.array() < d.array()).all();
}

}  // namespace

DigitalPlane plane_from_normal(const Vec3i& normal, long long mu) {
  if (normal == Vec3i::Zero()) throw Error(ErrorCode::ZeroDirection, "plane normal is zero");
  const int g = std::gcd(std::gcd(std::abs(normal.x()), std::abs(normal.y())), std::abs(normal.z()));
  DigitalPlane p;
  p.normal = normal / g;
  p.mu = mu;
  p.omega = p.normal.cwiseAbs().maxCoeff();
  return p;
}

Vec3i rationalize_direction(const Vec3d& direction, int max_component) {
  if (!direction.allFinite() || direction.norm() == 0.0)
    throw Error(ErrorCode::ZeroDirection, "view direction is zero");
  if (max_component < 1) throw Error(ErrorCode::InvalidArgument, "max_component must be >= 1");
  const Vec3d unit = direction.normalized();
  const Vec3d r = direction / direction.cwiseAbs().maxCoeff();
  Vec3i best = Vec3i::Zero();
  double best_err = std::numeric_limits<double>::infinity();
  // Smallest scale wins ties, so exact rational directions come out coprime.
  for (int m = 1; m <= max_component; ++m) {
    Vec3i cand;
    for (int a = 0; a < 3; ++a) cand[a] = static_cast<int>(std::lround(r[a] * m));
    if (cand == Vec3i::Zero()) continue;
    const double err = 1.0 - std::clamp(cand.cast<double>().normalized().dot(unit), -1.0, 1.0);
    if (err < best_err - 1e-15) {
      best_err = err;
      best = cand;
    }
  }
  const int g = std::gcd(std::gcd(std::abs(best.x()), std::abs(best.y())), std::abs(best.z()));
  return best / g;
}

DigitalPlane make_plane(const Vec3d& direction, double depth, const Vec3i& volume_dims) {
  const Vec3i n = rationalize_direction(direction);
  const Vec3d point = (volume_dims / 2).cast<double>() + depth * direction.normalized();
  DigitalPlane plane = plane_from_normal(n, 0);
  // Center the slab of thickness omega on the point.
  const double s = n.cast<double>().dot(point) - 0.5 * static_cast<double>(plane.omega - 1);
  plane.mu = -static_cast<long long>(std::floor(s + 1e-9));
  return plane;
}

std::vector<Vec3i> plane_voxels(const DigitalPlane& plane, const Vec3i& d) {
  std::vector<Vec3i> out;
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x)
        if (plane.contains(Vec3i(x, y, z))) out.emplace_back(x, y, z);
  return out;
}

bool separability_check(const DigitalPlane& plane, const Vec3i& d) {
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Vec3i p(x, y, z);
        const long long v = plane.value(p);
        if (v >= 0 && v < plane.omega) continue;
        for (int a = 0; a < 3; ++a) {
          Vec3i q = p;
          q[a] += 1;
          if (!in_bounds(q, d)) continue;
          const long long w = plane.value(q);
          if ((v < 0 && w >= plane.omega) || (v >= plane.omega && w < 0)) return false;
        }
      }
  return true;
}

SliceBasis slice_basis(const DigitalPlane& plane, const Vec3i& d) {
  const auto voxels = plane_voxels(plane, d);
  if (voxels.empty()) throw Error(ErrorCode::EmptyIntersection, "plane does not meet the volume");
  Vec3d centroid = Vec3d::Zero();
  for (const auto& p : voxels) centroid += p.cast<double>();
  centroid /= static_cast<double>(voxels.size());
  Vec3i anchor = voxels.front();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : voxels) {
    const double dist = (p.cast<double>() - centroid).squaredNorm();
    if (dist < best) {
      best = dist;
      anchor = p;
    }
  }
  SliceBasis b;
  b.n = plane.normal.cast<double>().normalized();
  Vec3d u = Vec3d::UnitX() - b.n.x() * b.n;
  if (u.norm() < 1e-9) u = Vec3d::UnitY() - b.n.y() * b.n;
  b.u = u.normalized();
  b.v = b.n.cross(b.u);
  const Vec3d a = anchor.cast<double>();
  b.origin = a - (a - centroid).dot(b.n) * b.n;
  return b;
}

double sample_trilinear(const VolumeGrid& vol, const Vec3d& p) {
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const int n = vol.dims()[a];
    const double c = std::clamp(p[a], 0.0, static_cast<double>(n - 1));
    i0[a] = n > 1 ? std::min(static_cast<int>(std::floor(c)), n - 2) : 0;
    t[a] = n > 1 ? c - i0[a] : 0.0;
  }
  auto at = [&](int dx, int dy, int dz) -> double {
    const int x = std::min(i0[0] + dx, vol.nx() - 1), y = std::min(i0[1] + dy, vol.ny() - 1),
              z = std::min(i0[2] + dz, vol.nz() - 1);
    return vol(x, y, z);
  };
  // Weighted-sum form keeps integer positions exact.
  double s = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) * (dz ? t[2] : 1.0 - t[2]);
        if (w != 0.0) s += w * at(dx, dy, dz);
      }
  return s;
}

Image2D extract_slice(const VolumeGrid& volume, const DigitalPlane& plane) {
  if (!volume.fully_known()) throw Error(ErrorCode::MissingData, "extract_slice needs a dense volume");
  const Vec3i d = volume.dims();
  const SliceBasis b = slice_basis(plane, d);
  double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
  for (int c = 0; c < 8; ++c) {
    const Vec3d corner((c & 1) ? d.x() - 1 : 0, (c & 2) ? d.y() - 1 : 0, (c & 4) ? d.z() - 1 : 0);
    const Vec3d r = corner - b.origin;
    umin = std::min(umin, r.dot(b.u));
    umax = std::max(umax, r.dot(b.u));
    vmin = std::min(vmin, r.dot(b.v));
    vmax = std::max(vmax, r.dot(b.v));
  }
  constexpr double eps = 1e-9;
  const int i0 = static_cast<int>(std::ceil(umin - eps)), i1 = static_cast<int>(std::floor(umax + eps));
  const int j0 = static_cast<int>(std::ceil(vmin - eps)), j1 = static_cast<int>(std::floor(vmax + eps));
  Image2D img = Image2D::Zero(j1 - j0 + 1, i1 - i0 + 1);
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      Vec3d p = b.origin + i * b.u + j * b.v;
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        if (p[a] < -eps || p[a] > d[a] - 1 + eps) inside = false;
        // Snap round-off so axis-aligned samples land on voxel centers.
        if (std::abs(p[a] - std::round(p[a])) < eps) p[a] = std::round(p[a]);
      }
      if (inside) img(j - j0, i - i0) = static_cast<float>(sample_trilinear(volume, p));
    }
  return img;
}

VolumeGrid crop_region(const VolumeGrid& volume, const CropRequest& request, const Vec3i& budget) {
  const Vec3i d = volume.dims();
  Vec3i lo = Vec3i::Zero(), hi = d;
  if (request.box) {
    lo = (*request.box)[0].cwiseMax(0);
    hi = (*request.box)[1].cwiseMin(d);
  }
  auto kept = [&](const Vec3i& p) {
    for (const auto& cut : request.cuts) {
      const long long v = cut.plane.value(p);
      if ((cut.keep == KeepSide::at_or_above) != (v >= 0)) return false;
    }
    return true;
  };
  Vec3i blo = hi, bhi = lo;  // bounding box of kept voxels, half-open
  for (int z = lo.z(); z < hi.z(); ++z)
    for (int y = lo.y(); y < hi.y(); ++y)
      for (int x = lo.x(); x < hi.x(); ++x)
        if (kept(Vec3i(x, y, z))) {
          blo = blo.cwiseMin(Vec3i(x, y, z));
          bhi = bhi.cwiseMax(Vec3i(x + 1, y + 1, z + 1));
        }
  if ((bhi.array() <= blo.array()).any()) throw Error(ErrorCode::EmptyRegion, "crop keeps no voxel");

  VolumeGrid out(bhi - blo, 0.0f, volume.origin() + blo);
  for (int z = blo.z(); z < bhi.z(); ++z)
    for (int y = blo.y(); y < bhi.y(); ++y)
      for (int x = blo.x(); x < bhi.x(); ++x) {
        const Vec3i p(x, y, z);
        if (!kept(p)) continue;
        const Vec3i q = p - blo;
        if (volume.is_missing(x, y, z))
          out.set_missing(q.x(), q.y(), q.z());
        else
          out.set(q.x(), q.y(), q.z(), volume(x, y, z));
      }
  if ((out.dims().array() > budget.array()).any()) {
    VolumeGrid resized = resize_volume(out, out.dims().cwiseMin(budget.cwiseMax(1)));
    resized.set_origin(out.origin());
    return resized;
  }
  return out;
}

VolumeGrid resize_volume(const VolumeGrid& volume, const Vec3i& target) {
  const Vec3i s = volume.dims();
  if ((target.array() < 1).any()) throw Error(ErrorCode::InvalidArgument, "target dims must be >= 1");
  if ((target.array() > s.array()).any()) throw Error(ErrorCode::UpscaleRequested, "target exceeds source dims");
  if (!volume.fully_known()) throw Error(ErrorCode::MissingData, "resize_volume needs a dense volume");
  if (target == s) return volume;
  VolumeGrid out(target, 0.0f, volume.origin());
  auto coord = [&](int i, int a) {
    return target[a] > 1 ? static_cast<double>(i) * (s[a] - 1) / (target[a] - 1) : 0.5 * (s[a] - 1);
  };
  for (int z = 0; z < target.z(); ++z)
    for (int y = 0; y < target.y(); ++y)
      for (int x = 0; x < target.x(); ++x)
        out.set(x, y, z, static_cast<float>(sample_trilinear(volume, Vec3d(coord(x, 0), coord(y, 1), coord(z, 2)))));
  return out;
}

}  // namespace volrec
