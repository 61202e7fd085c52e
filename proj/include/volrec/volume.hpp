#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "volrec/error.hpp"

namespace volrec {

/// Row-major 2D scalar grid. rows() is the image height (y), cols() the width (x).
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image2D = Image<float>;

using Vec3i = Eigen::Vector3i;
using Vec3d = Eigen::Vector3d;

enum class Axis { axial, sagittal, coronal };

std::string_view to_string(Axis axis) noexcept;
Axis axis_from_string(std::string_view label);

/// Ordered single-axis slice sequence with its acquisition geometry.
struct SliceStack {
  std::vector<Image2D> slices;
  Eigen::Vector2d pixel_spacing{1.0, 1.0};  // mm
  double slice_gap_mm = 1.0;
  Axis axis = Axis::axial;

  int width() const { return slices.empty() ? 0 : static_cast<int>(slices.front().cols()); }
  int height() const { return slices.empty() ? 0 : static_cast<int>(slices.front().rows()); }
  int count() const { return static_cast<int>(slices.size()); }
};

/// Throws when the stack violates its invariants (equal dims, n >= 2,
/// positive spacing, finite values in [0,1]).
void validate(const SliceStack& stack);

/// Dense 3D grid with an explicit missing-voxel mask. Storage is x-fastest:
/// index = x + nx * (y + ny * z). The mask is authoritative; missing voxels
/// also carry a quiet NaN so stray reads are visible.
template <typename Scalar>
class Volume {
 public:
  using scalar_type = Scalar;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  static constexpr Scalar missing_value() { return std::numeric_limits<Scalar>::quiet_NaN(); }

  Volume() = default;
  Volume(Vec3i dims, Scalar fill, Vec3i origin = Vec3i::Zero())
      : dims_(dims), origin_(origin) {
    check_dims(dims);
    data_ = Storage::Constant(size(), fill);
    mask_.assign(static_cast<std::size_t>(size()), 0);
  }

  /// Grid with every voxel marked missing.
  static Volume missing(Vec3i dims, Vec3i origin = Vec3i::Zero()) {
    Volume v(dims, missing_value(), origin);
    std::fill(v.mask_.begin(), v.mask_.end(), std::uint8_t{1});
    return v;
  }

  const Vec3i& dims() const { return dims_; }
  int nx() const { return dims_.x(); }
  int ny() const { return dims_.y(); }
  int nz() const { return dims_.z(); }
  Eigen::Index size() const {
    return static_cast<Eigen::Index>(dims_.x()) * dims_.y() * dims_.z();
  }
  bool empty() const { return size() == 0; }

  const Vec3i& origin() const { return origin_; }
  void set_origin(const Vec3i& o) { origin_ = o; }

  Eigen::Index index(int x, int y, int z) const {
    return x + static_cast<Eigen::Index>(dims_.x()) * (y + static_cast<Eigen::Index>(dims_.y()) * z);
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.x() && y < dims_.y() && z < dims_.z();
  }

  Scalar operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  bool is_missing(int x, int y, int z) const { return mask_[static_cast<std::size_t>(index(x, y, z))] != 0; }
  bool is_missing(Eigen::Index i) const { return mask_[static_cast<std::size_t>(i)] != 0; }

  void set(int x, int y, int z, Scalar v) { set(index(x, y, z), v); }
  void set(Eigen::Index i, Scalar v) {
    data_[i] = v;
    mask_[static_cast<std::size_t>(i)] = 0;
  }
  void set_missing(int x, int y, int z) { set_missing(index(x, y, z)); }
  void set_missing(Eigen::Index i) {
    data_[i] = missing_value();
    mask_[static_cast<std::size_t>(i)] = 1;
  }

  const Storage& data() const { return data_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto m : mask_) n += m;
    return n;
  }
  bool fully_known() const { return missing_count() == 0; }

  /// Copy of the XY plane at depth z (rows = y).
  Image<Scalar> plane_z(int z) const {
    Image<Scalar> img(dims_.y(), dims_.x());
    for (int y = 0; y < dims_.y(); ++y)
      for (int x = 0; x < dims_.x(); ++x) img(y, x) = (*this)(x, y, z);
    return img;
  }

  /// Copy of the YZ plane at column x (rows = z, cols = y).
  Image<Scalar> plane_x(int x) const {
    Image<Scalar> img(dims_.z(), dims_.y());
    for (int z = 0; z < dims_.z(); ++z)
      for (int y = 0; y < dims_.y(); ++y) img(z, y) = (*this)(x, y, z);
    return img;
  }

  template <typename Derived>
  void set_plane_z(int z, const Eigen::MatrixBase<Derived>& img) {
    for (int y = 0; y < dims_.y(); ++y)
      for (int x = 0; x < dims_.x(); ++x) set(x, y, z, static_cast<Scalar>(img(y, x)));
  }

  /// Range over known voxels; {+inf, -inf} when nothing is known.
  std::array<Scalar, 2> known_range() const {
    Scalar lo = std::numeric_limits<Scalar>::infinity();
    Scalar hi = -lo;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (mask_[static_cast<std::size_t>(i)]) continue;
      lo = std::min(lo, data_[i]);
      hi = std::max(hi, data_[i]);
    }
    return {lo, hi};
  }

  friend bool operator==(const Volume& a, const Volume& b) {
    if (a.dims_ != b.dims_ || a.origin_ != b.origin_ || a.mask_ != b.mask_) return false;
    // Bitwise payload comparison so that NaN sentinels compare equal.
    return std::equal(a.data_.data(), a.data_.data() + a.size(), b.data_.data(),
                      [](Scalar p, Scalar q) {
                        return std::memcmp(&p, &q, sizeof(Scalar)) == 0;
                      });
  }

 private:
  static void check_dims(const Vec3i& d) {
    if ((d.array() < 0).any()) throw Error(ErrorCode::InvalidGrid, "negative volume dimension");
  }

  Vec3i dims_ = Vec3i::Zero();
  Vec3i origin_ = Vec3i::Zero();
  Storage data_;
  std::vector<std::uint8_t> mask_;
};

using VolumeGrid = Volume<float>;

/// Placement of one reconstruction block inside the full volume.
struct BlockDescriptor {
  int quadrant_index = 0;  // 0..3, row-major over the 2x2 tiling
  int chunk_index = 0;
  Eigen::Vector2i quadrant_origin = Eigen::Vector2i::Zero();  // (x, y) in the slice
  Eigen::Vector2i quadrant_size = Eigen::Vector2i::Zero();
  std::array<int, 2> slice_range{0, 0};  // inclusive [first, last]
  int halo_width = 0;

  // Owned (core) region in full-volume voxel coordinates, half-open.
  Vec3i core_lo = Vec3i::Zero();
  Vec3i core_hi = Vec3i::Zero();
};

struct TriangleMesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Eigen::Vector3f> normals;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
};

/// Throws InvalidArgument when indices are out of range or normals are not unit length.
void validate(const TriangleMesh& mesh);

/// Min-max rescale over the whole stack; constant stacks map to zero.
SliceStack normalize_stack(SliceStack raw);
/// Fixed-range variant: (v - lo) / (hi - lo), clamped to [0,1].
SliceStack normalize_stack(SliceStack raw, double lo, double hi);

/// Number of voxel planes missing between consecutive slices.
int missing_planes_per_gap(double slice_gap_mm, double pixel_spacing_mm);

/// Depth of the full volume for n slices with g missing planes per gap.
inline int full_depth(int n, int g) { return n + (n - 1) * g; }

}  // namespace volrec
