#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "volrec/volume.hpp"

namespace volrec {

namespace detail {
template <typename DA, typename DB>
void require_same_shape(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "images differ in size");
}

double entropy_impl(const Image<double>& a, int bins);
double mutual_information_impl(const Image<double>& a, const Image<double>& b, int bins);
}  // namespace detail

template <typename DA, typename DB>
double rmse(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b);
  if (a.size() == 0) return 0.0;
  return std::sqrt((a.template cast<double>() - b.template cast<double>()).squaredNorm() /
                   static_cast<double>(a.size()));
}

/// Global SSIM with c1 = (0.01 L)^2, c2 = (0.03 L)^2 and L = 1.
template <typename DA, typename DB>
double ssim(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto x = a.template cast<double>().array();
  const auto y = b.template cast<double>().array();
  const double n = static_cast<double>(a.size());
  const double mx = x.sum() / n, my = y.sum() / n;
  const double vx = (x - mx).square().sum() / n;
  const double vy = (y - my).square().sum() / n;
  const double cxy = ((x - mx) * (y - my)).sum() / n;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

/// Shannon entropy in bits of a `bins`-bin histogram over [0,1].
template <typename D>
double entropy(const Eigen::MatrixBase<D>& a, int bins = 256) {
  return detail::entropy_impl(a.template cast<double>(), bins);
}

/// Mutual information in bits from the joint bins x bins histogram over [0,1].
template <typename DA, typename DB>
double mutual_information(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, int bins = 256) {
  detail::require_same_shape(a, b);
  return detail::mutual_information_impl(a.template cast<double>(), b.template cast<double>(), bins);
}

/// |H(a) - H(b)| / max(H(a), 1e-12).
template <typename DA, typename DB>
double entropy_difference(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, int bins = 256) {
  detail::require_same_shape(a, b);
  const double ha = entropy(a, bins), hb = entropy(b, bins);
  return std::abs(ha - hb) / std::max(ha, 1e-12);
}

struct SliceScore {
  int gap = 0;    // group index
  int index = 0;  // caller-defined position (e.g. plane z)
  double ed = 0, mi = 0, mi_self = 0, rmse = 0, ssim = 0;

  /// (MI(G,G) - MI(G,R)) / MI(G,G); zero when G carries no information.
  double mi_deficit() const { return mi_self > 0 ? (mi_self - mi) / mi_self : 0.0; }
};

struct GapSummary {
  int gap = 0;
  int samples = 0;
  double ed = 0, mi_deficit = 0, rmse = 0, ssim = 0;  // means over the group
};

struct AccuracyReport {
  std::vector<SliceScore> slices;
  std::vector<GapSummary> gaps;
  double a_ed = 0, a_mi = 0, a_rmse = 0, a_ssim = 0, a_total = 0;  // percent
  double mean_time_s = 0;

  std::string to_text() const;
  std::string to_json() const;
};

/// The four component scores and their mean, from component means in [0,1]:
/// A_ED = (1 - ED), A_MI = (1 - MI deficit), A_RMSE = (1 - RMSE), A_SSIM = SSIM, all x100.
AccuracyReport accuracy_from_components(double ed, double mi_deficit, double rmse, double ssim);

SliceScore score_slice(const Image2D& ground, const Image2D& recon, int bins = 256);

/// ground[g][i] is compared with recon[g][i]. Per-slice components are clamped
/// to [0,1] for scoring, averaged per gap group, then over groups. GapSummary
/// keeps the unclamped means. Timings are averaged into mean_time_s.
AccuracyReport accuracy_percent(const std::vector<std::vector<Image2D>>& ground,
                                const std::vector<std::vector<Image2D>>& recon,
                                const std::vector<double>& timings = {}, int bins = 256);

}  // namespace volrec
