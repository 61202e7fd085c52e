#include "volrec/shearlet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace volrec {

void fft2(ComplexImage& data, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in, out;
  auto run = [&] {
    if (inverse)
      fft.inv(out, in);
    else
      fft.fwd(out, in);
  };
  in.resize(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) in[static_cast<std::size_t>(c)] = data(r, c);
    run();
    for (Eigen::Index c = 0; c < data.cols(); ++c) data(r, c) = out[static_cast<std::size_t>(c)];
  }
  in.resize(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    for (Eigen::Index r = 0; r < data.rows(); ++r) in[static_cast<std::size_t>(r)] = data(r, c);
    run();
    for (Eigen::Index r = 0; r < data.rows(); ++r) data(r, c) = out[static_cast<std::size_t>(r)];
  }
}

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

// Meyer auxiliary function: smooth 0 -> 1 on [0,1] with nu(x) + nu(1-x) = 1.
double meyer_nu(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * x * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x);
}

// Radial profile: 1 up to 1/4, Meyer roll-off to 0 at 1.
double radial_profile(double r) {
  if (r <= 0.25) return 1.0;
  if (r >= 1.0) return 0.0;
  return std::cos(kHalfPi * meyer_nu((r - 0.25) / 0.75));
}

// Directional bump on [-1,1]; integer translates square-sum to one.
double angular_window(double t) {
  t = std::abs(t);
  return t >= 1.0 ? 0.0 : std::cos(kHalfPi * meyer_nu(t));
}

// Frequency in cycles per sample of DFT bin i out of n.
double bin_frequency(Eigen::Index i, Eigen::Index n) {
  return static_cast<double>(i < (n + 1) / 2 ? i : i - n) / static_cast<double>(n);
}

ComplexImage spectrum(const Image<double>& image) {
  ComplexImage f = image.cast<std::complex<double>>();
  fft2(f);
  return f;
}

Image<double> filtered(const ComplexImage& freq, const Image<double>& filter) {
  ComplexImage g = freq.cwiseProduct(filter.cast<std::complex<double>>());
  fft2(g, true);
  return g.real();
}

void check_dims(const ShearletSystem& s, const Image<double>& image) {
  if (image.rows() != s.height || image.cols() != s.width)
    throw Error(ErrorCode::DimensionMismatch, "image is " + std::to_string(image.cols()) + "x" +
                                                  std::to_string(image.rows()) + ", system is " +
                                                  std::to_string(s.width) + "x" + std::to_string(s.height));
}

double median_inplace(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

int ShearletSystem::first_band(int scale) const {
  int idx = 0;
  for (int j = 0; j < scale; ++j) idx += 2 * shears_per_cone(j);
  return idx;
}

ShearletSystem build_system(int width, int height, int num_scales) {
  if (num_scales < 1) throw Error(ErrorCode::InvalidArgument, "num_scales must be >= 1");
  if (width < 32 || height < 32)
    throw Error(ErrorCode::ImageTooSmall, "shearlet system needs at least 32x32 pixels");
  if (std::pow(4.0, num_scales) > std::min(width, height))
    throw Error(ErrorCode::ImageTooSmall, "4^num_scales exceeds the image size");

  ShearletSystem s;
  s.width = width;
  s.height = height;
  s.num_scales = num_scales;

  const double r0 = 2.0 * std::pow(4.0, -num_scales);
  auto scale_window = [&](double rinf, int j) { return radial_profile(rinf / (r0 * std::pow(4.0, j))); };

  s.lowpass.resize(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double w1 = bin_frequency(c, width), w2 = bin_frequency(r, height);
      s.lowpass(r, c) = scale_window(std::max(std::abs(w1), std::abs(w2)), 0);
    }
  s.frame_sum = s.lowpass.cwiseAbs2();

  for (int j = 0; j < num_scales; ++j) {
    const int half = 1 << j;
    for (int cone = 0; cone < 2; ++cone)
      for (int k = -half; k <= half; ++k) {
        Image<double> psi(height, width);
        for (int r = 0; r < height; ++r)
          for (int c = 0; c < width; ++c) {
            const double w1 = bin_frequency(c, width), w2 = bin_frequency(r, height);
            const double a1 = std::abs(w1), a2 = std::abs(w2);
            const double rinf = std::max(a1, a2);
            const bool in_cone = cone == 0 ? a2 <= a1 : a1 <= a2;
            if (!in_cone || rinf == 0.0) {
              psi(r, c) = 0.0;
              continue;
            }
            const double lo = scale_window(rinf, j), hi = scale_window(rinf, j + 1);
            const double radial = std::sqrt(std::max(0.0, hi * hi - lo * lo));
            const double slope = cone == 0 ? w2 / w1 : w1 / w2;
            psi(r, c) = radial * angular_window(half * slope - k);
          }
        // Nyquist rows/columns alias +1/2 onto -1/2; averaging with the
        // point reflection keeps psi(w) == psi(-w) exactly.
        Image<double> mirrored(height, width);
        for (int r = 0; r < height; ++r)
          for (int c = 0; c < width; ++c) mirrored(r, c) = psi((height - r) % height, (width - c) % width);
        psi = 0.5 * (psi + mirrored);
        s.frame_sum += psi.cwiseAbs2();
        s.band_norms.push_back(std::sqrt(psi.squaredNorm() / static_cast<double>(psi.size())));
        s.filters.push_back(std::move(psi));
        s.bands.push_back({j, cone, k});
      }
  }
  return s;
}

ShearletCoefficients forward(const ShearletSystem& system, const Image<double>& image) {
  check_dims(system, image);
  const ComplexImage freq = spectrum(image);
  ShearletCoefficients out;
  out.lowpass = filtered(freq, system.lowpass);
  out.bands.reserve(system.filters.size());
  for (const auto& psi : system.filters) out.bands.push_back(filtered(freq, psi));
  return out;
}

Image<double> inverse(const ShearletSystem& system, const ShearletCoefficients& coeffs) {
  check_dims(system, coeffs.lowpass);
  if (coeffs.bands.size() != system.filters.size())
    throw Error(ErrorCode::DimensionMismatch, "coefficient band count does not match the system");
  ComplexImage acc = spectrum(coeffs.lowpass).cwiseProduct(system.lowpass.cast<std::complex<double>>());
  for (std::size_t b = 0; b < coeffs.bands.size(); ++b) {
    check_dims(system, coeffs.bands[b]);
    acc += spectrum(coeffs.bands[b]).cwiseProduct(system.filters[b].cast<std::complex<double>>());
  }
  acc = acc.cwiseQuotient(system.frame_sum.cast<std::complex<double>>());
  fft2(acc, true);
  return acc.real();
}

Image2D denoise(const ShearletSystem& system, const Image2D& image, double threshold_mult) {
  if (threshold_mult < 0) throw Error(ErrorCode::InvalidArgument, "threshold_mult must be >= 0");
  ShearletCoefficients c = forward(system, image);

  const int fine = system.first_band(system.finest_scale());
  std::vector<double> normalized;
  normalized.reserve(static_cast<std::size_t>(system.bands.size() - fine) * static_cast<std::size_t>(image.size()));
  for (std::size_t b = static_cast<std::size_t>(fine); b < c.bands.size(); ++b) {
    const double norm = system.band_norms[b];
    if (norm <= 0) continue;
    for (Eigen::Index i = 0; i < c.bands[b].size(); ++i)
      normalized.push_back(std::abs(c.bands[b].data()[i]) / norm);
  }
  const double sigma = median_inplace(normalized) / 0.6745;

  for (std::size_t b = 0; b < c.bands.size(); ++b) {
    const double t = threshold_mult * sigma * system.band_norms[b];
    c.bands[b] = (c.bands[b].array().abs() > t).select(c.bands[b], 0.0);
  }
  return inverse(system, c).cwiseMax(0.0).cwiseMin(1.0).cast<float>();
}

EdgeMap detect_edges(const ShearletSystem& system, const Image<double>& image, const EdgeOptions& options) {
  check_dims(system, image);
  const int scale = options.scale < 0 ? system.finest_scale() : options.scale;
  if (scale >= system.num_scales) throw Error(ErrorCode::InvalidArgument, "edge scale out of range");
  if (options.magnitude_quantile < 0 || options.magnitude_quantile > 1)
    throw Error(ErrorCode::InvalidArgument, "magnitude_quantile must lie in [0,1]");

  const ComplexImage freq = spectrum(image);
  EdgeMap map;
  map.magnitude = Image<double>::Zero(system.height, system.width);
  map.theta = Image<int>::Constant(system.height, system.width, -1);
  Image<int> arg = Image<int>::Zero(system.height, system.width);

  const int first = system.first_band(scale);
  for (int o = 0; o < system.orientations(scale); ++o) {
    const Image<double> resp = filtered(freq, system.filters[static_cast<std::size_t>(first + o)]).cwiseAbs();
    for (Eigen::Index i = 0; i < resp.size(); ++i)
      if (resp.data()[i] > map.magnitude.data()[i]) {
        map.magnitude.data()[i] = resp.data()[i];
        arg.data()[i] = o;
      }
  }

  std::vector<double> mags(map.magnitude.data(), map.magnitude.data() + map.magnitude.size());
  const auto pos = static_cast<std::ptrdiff_t>(
      std::floor(options.magnitude_quantile * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + pos, mags.end());
  const double threshold = std::max(mags[static_cast<std::size_t>(pos)], options.min_magnitude);

  map.is_edge = (map.magnitude.array() > threshold).cast<std::uint8_t>();
  map.theta = map.is_edge.cast<bool>().select(arg, -1);
  return map;
}

}  // namespace volrec
