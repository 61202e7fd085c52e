#include "volrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace volrec {

namespace detail {

namespace {

int bin_of(double v, int bins) {
  const double c = std::clamp(v, 0.0, 1.0);
  return std::min(bins - 1, static_cast<int>(c * bins));
}

void check_bins(int bins) {
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 histogram bins");
}

}  // namespace

double entropy_impl(const Image<double>& a, int bins) {
  check_bins(bins);
  if (a.size() == 0) return 0.0;
  std::vector<long> h(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < a.size(); ++i) ++h[static_cast<std::size_t>(bin_of(a.data()[i], bins))];
  const double n = static_cast<double>(a.size());
  double e = 0.0;
  for (long c : h)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      e -= p * std::log2(p);
    }
  return e;
}

double mutual_information_impl(const Image<double>& a, const Image<double>& b, int bins) {
  check_bins(bins);
  if (a.size() == 0) return 0.0;
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<long> joint(nb * nb, 0), ha(nb, 0), hb(nb, 0);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const auto x = static_cast<std::size_t>(bin_of(a.data()[i], bins));
    const auto y = static_cast<std::size_t>(bin_of(b.data()[i], bins));
    ++joint[x * nb + y];
    ++ha[x];
    ++hb[y];
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (std::size_t x = 0; x < nb; ++x)
    for (std::size_t y = 0; y < nb; ++y) {
      const long c = joint[x * nb + y];
      if (c == 0) continue;
      // p(x,y) / (p(x) p(y)) = c * n / (ha * hb)
      mi += static_cast<double>(c) / n *
            std::log2(static_cast<double>(c) * n / (static_cast<double>(ha[x]) * static_cast<double>(hb[y])));
    }
  return std::max(0.0, mi);
}

}  // namespace detail

SliceScore score_slice(const Image2D& ground, const Image2D& recon, int bins) {
  SliceScore s;
  s.ed = entropy_difference(ground, recon, bins);
  s.mi = mutual_information(ground, recon, bins);
  s.mi_self = mutual_information(ground, ground, bins);
  s.rmse = rmse(ground, recon);
  s.ssim = ssim(ground, recon);
  return s;
}

AccuracyReport accuracy_from_components(double ed, double mi_deficit, double rmse_mean, double ssim_mean) {
  AccuracyReport r;
  r.a_ed = (1.0 - ed) * 100.0;
  r.a_mi = (1.0 - mi_deficit) * 100.0;
  r.a_rmse = (1.0 - rmse_mean) * 100.0;
  r.a_ssim = ssim_mean * 100.0;
  r.a_total = (r.a_ed + r.a_mi + r.a_rmse + r.a_ssim) / 4.0;
  return r;
}

AccuracyReport accuracy_percent(const std::vector<std::vector<Image2D>>& ground,
                                const std::vector<std::vector<Image2D>>& recon, const std::vector<double>& timings,
                                int bins) {
  if (ground.empty()) throw Error(ErrorCode::AlignmentMismatch, "no gap groups");
  if (ground.size() != recon.size()) throw Error(ErrorCode::AlignmentMismatch, "gap group counts differ");
  std::vector<SliceScore> scores;
  std::vector<GapSummary> gaps;
  double ed = 0, mid = 0, rm = 0, ss = 0;
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (std::size_t g = 0; g < ground.size(); ++g) {
    double ced = 0, cmid = 0, crm = 0, css = 0;  // per-slice values clamped to [0,1]
    if (ground[g].size() != recon[g].size() || ground[g].empty())
      throw Error(ErrorCode::AlignmentMismatch, "gap group " + std::to_string(g) + " is empty or misaligned");
    GapSummary sum;
    sum.gap = static_cast<int>(g);
    for (std::size_t i = 0; i < ground[g].size(); ++i) {
      if (ground[g][i].rows() != recon[g][i].rows() || ground[g][i].cols() != recon[g][i].cols())
        throw Error(ErrorCode::AlignmentMismatch, "slice dimensions differ in gap group " + std::to_string(g));
      SliceScore s = score_slice(ground[g][i], recon[g][i], bins);
      s.gap = static_cast<int>(g);
      s.index = static_cast<int>(i);
      sum.ed += s.ed;
      sum.mi_deficit += s.mi_deficit();
      sum.rmse += s.rmse;
      sum.ssim += s.ssim;
      ced += unit(s.ed);
      cmid += unit(s.mi_deficit());
      crm += unit(s.rmse);
      css += unit(s.ssim);
      scores.push_back(s);
    }
    sum.samples = static_cast<int>(ground[g].size());
    sum.ed /= sum.samples;
    sum.mi_deficit /= sum.samples;
    sum.rmse /= sum.samples;
    sum.ssim /= sum.samples;
    ed += ced / sum.samples;
    mid += cmid / sum.samples;
    rm += crm / sum.samples;
    ss += css / sum.samples;
    gaps.push_back(sum);
  }
  const double m = static_cast<double>(gaps.size());
  AccuracyReport r = accuracy_from_components(ed / m, mid / m, rm / m, ss / m);
  r.slices = std::move(scores);
  r.gaps = std::move(gaps);
  if (!timings.empty()) {
    double t = 0;
    for (double v : timings) t += v;
    r.mean_time_s = t / static_cast<double>(timings.size());
  }
  return r;
}

std::string AccuracyReport::to_text() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(6);
  for (const auto& g : gaps)
    o << "gap." << g.gap << ".samples = " << g.samples << "\n"
      << "gap." << g.gap << ".ed = " << g.ed << "\n"
      << "gap." << g.gap << ".mi_deficit = " << g.mi_deficit << "\n"
      << "gap." << g.gap << ".rmse = " << g.rmse << "\n"
      << "gap." << g.gap << ".ssim = " << g.ssim << "\n";
  o << std::setprecision(4);
  o << "A_ED% = " << a_ed << "\n"
    << "A_MI% = " << a_mi << "\n"
    << "A_RMSE% = " << a_rmse << "\n"
    << "A_SSIM% = " << a_ssim << "\n"
    << "A% = " << a_total << "\n"
    << "mean_time_s = " << mean_time_s << "\n";
  return o.str();
}

std::string AccuracyReport::to_json() const {
  nlohmann::json j;
  j["A_ED"] = a_ed;
  j["A_MI"] = a_mi;
  j["A_RMSE"] = a_rmse;
  j["A_SSIM"] = a_ssim;
  j["A"] = a_total;
  j["mean_time_s"] = mean_time_s;
  for (const auto& g : gaps)
    j["gaps"].push_back({{"gap", g.gap}, {"samples", g.samples}, {"ed", g.ed}, {"mi_deficit", g.mi_deficit},
                         {"rmse", g.rmse}, {"ssim", g.ssim}});
  for (const auto& s : slices)
    j["slices"].push_back({{"gap", s.gap}, {"index", s.index}, {"ed", s.ed}, {"mi", s.mi}, {"mi_self", s.mi_self},
                           {"rmse", s.rmse}, {"ssim", s.ssim}});
  return j.dump(2);
}

}  // namespace volrec
