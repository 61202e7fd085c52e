#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "volrec/volume.hpp"

namespace volrec {

using ComplexImage = Image<std::complex<double>>;

/// In-place 2D DFT (rows then columns). The inverse is scaled by 1/(rows*cols).
void fft2(ComplexImage& data, bool inverse = false);

/// One directional band. cone 0 holds |w_y| <= |w_x|, cone 1 holds |w_x| <= |w_y|.
struct ShearletBand {
  int scale = 0;
  int cone = 0;
  int shear = 0;  // in [-2^scale, 2^scale]
};

/// Band-limited cone-adapted shearlet frame on a fixed image size. Filters are
/// real and even in frequency, so real images give real coefficients.
struct ShearletSystem {
  int width = 0;
  int height = 0;
  int num_scales = 0;

  std::vector<ShearletBand> bands;    // ordered by scale, cone, shear
  std::vector<Image<double>> filters;  // frequency response per band
  Image<double> lowpass;
  Image<double> frame_sum;  // |phi|^2 + sum |psi|^2 at every frequency bin
  std::vector<double> band_norms;  // spatial l2 norm of each band filter

  static int shears_per_cone(int scale) { return 2 * (1 << scale) + 1; }
  int finest_scale() const { return num_scales - 1; }
  /// Orientation count at a scale (both cones).
  int orientations(int scale) const { return 2 * shears_per_cone(scale); }
  /// Index of the first band of a scale in `bands`.
  int first_band(int scale) const;

  double frame_lower_bound() const { return frame_sum.minCoeff(); }
  double frame_upper_bound() const { return frame_sum.maxCoeff(); }
};

struct ShearletCoefficients {
  Image<double> lowpass;
  std::vector<Image<double>> bands;
};

/// Orientation field from the finest-scale (or chosen-scale) band responses.
struct EdgeMap {
  Image<std::uint8_t> is_edge;
  Image<int> theta;  // -1 off edges
  Image<double> magnitude;

  int rows() const { return static_cast<int>(is_edge.rows()); }
  int cols() const { return static_cast<int>(is_edge.cols()); }
  bool edge(int r, int c) const { return is_edge(r, c) != 0; }
};

/// Throws ImageTooSmall unless width, height >= 32 and 4^num_scales <= min(width, height).
ShearletSystem build_system(int width, int height, int num_scales);

ShearletCoefficients forward(const ShearletSystem& system, const Image<double>& image);

template <typename Derived>
ShearletCoefficients forward(const ShearletSystem& system, const Eigen::MatrixBase<Derived>& image) {
  return forward(system, Image<double>(image.template cast<double>()));
}

Image<double> inverse(const ShearletSystem& system, const ShearletCoefficients& coeffs);

/// Hard-thresholds every band at mult * sigma * ||psi_band||, sigma being the
/// MAD estimate over the normalized finest-scale coefficients. Output clamped to [0,1].
Image2D denoise(const ShearletSystem& system, const Image2D& image, double threshold_mult = 3.0);

struct EdgeOptions {
  double magnitude_quantile = 0.95;
  int scale = -1;              // -1 selects the finest scale
  double min_magnitude = 1e-6;  // responses at or below this are never edges
};

/// Marks pixels whose max-over-orientations response exceeds the quantile of
/// all responses; theta is the argmax orientation (ties to the smaller index).
EdgeMap detect_edges(const ShearletSystem& system, const Image<double>& image, const EdgeOptions& options = {});

template <typename Derived>
EdgeMap detect_edges(const ShearletSystem& system, const Eigen::MatrixBase<Derived>& image,
                     const EdgeOptions& options = {}) {
  return detect_edges(system, Image<double>(image.template cast<double>()), options);
}

}  // namespace volrec
