#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "volrec/metrics.hpp"

using namespace volrec;

namespace {

Image2D random_image(int rows, int cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image2D img(rows, cols);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  return img;
}

Image2D structured_image(int n) {
  Image2D img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double r = std::hypot(x - n / 2.0, y - n / 2.0);
      img(y, x) = static_cast<float>(r < n / 4.0 ? 0.9 : 0.1 + 0.3 * x / n);
    }
  return img;
}

// Shannon entropy in bits with the same binning rule as the library: bin = min(floor(v * bins), bins - 1).
double brute_entropy(const Image2D& img, int bins) {
  std::map<int, int> h;
  for (Eigen::Index i = 0; i < img.size(); ++i)
    ++h[std::min(static_cast<int>(std::floor(img.data()[i] * bins)), bins - 1)];
  double e = 0;
  for (const auto& [bin, c] : h) {
    const double p = static_cast<double>(c) / static_cast<double>(img.size());
    e -= p * std::log2(p);
  }
  return e;
}

}  // namespace

TEST_CASE("rmse examples") {
  const Image2D a = random_image(8, 8, 1);
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(Image2D::Zero(4, 4), Image2D::Ones(4, 4)) == doctest::Approx(1.0));
  Image2D p = Image2D::Zero(2, 2), q(2, 2);
  q << 0.1f, 0.2f, 0.2f, 0.1f;
  CHECK(rmse(p, q) == doctest::Approx(std::sqrt(0.025)).epsilon(1e-6));
  CHECK_THROWS_AS(rmse(Image2D::Zero(2, 2), Image2D::Zero(3, 2)), Error);
}

TEST_CASE("mutual information") {
  const Image2D a = random_image(64, 64, 2);
  CHECK(mutual_information(a, a) == doctest::Approx(entropy(a)).epsilon(1e-12));
  CHECK(std::abs(mutual_information(a, a) - brute_entropy(a, 256)) < 1e-9);
  CHECK(mutual_information(Image2D::Constant(64, 64, 0.3f), a) == doctest::Approx(0.0));
  CHECK(mutual_information(a, Image2D::Constant(64, 64, 0.3f)) == doctest::Approx(0.0));

  // Independent images: the plug-in estimate sits at its small-sample bias
  // (B-1)^2 / (2 N ln 2) for B bins; at 64 bins it is well under 0.05 bits.
  const double n = 512.0 * 512.0;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const Image2D x = random_image(512, 512, 100 + seed), y = random_image(512, 512, 200 + seed);
    CHECK(mutual_information(x, y, 64) <= 0.05);
    const double bias256 = 255.0 * 255.0 / (2.0 * n * std::log(2.0));
    CHECK(mutual_information(x, y, 256) == doctest::Approx(bias256).epsilon(0.1));
  }
}

TEST_CASE("ssim examples") {
  const Image2D a = random_image(32, 32, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  Image2D checker(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) checker(y, x) = static_cast<float>((x + y) % 2);
  const Image2D inverse = (1.0f - checker.array()).matrix();
  CHECK(ssim(checker, inverse) < 0.0);
  const Image2D shifted = (a.array() * 0.9f + 0.01f).matrix();
  const Image2D offset = (shifted.array() + 0.01f).matrix();
  const double s = ssim(shifted, offset);
  CHECK(s > 0.9);
  CHECK(s < 1.0);
}

TEST_CASE("entropy difference") {
  const Image2D a = random_image(64, 64, 4);
  CHECK(entropy_difference(a, a) == 0.0);
  CHECK(entropy_difference(Image2D::Constant(8, 8, 0.2f), Image2D::Constant(8, 8, 0.7f)) == 0.0);
  const Image2D q = (a.array() < 0.5f).select(Image2D::Constant(64, 64, 0.25f), Image2D::Constant(64, 64, 0.75f));
  const double ha = brute_entropy(a, 256), hq = brute_entropy(q, 256);
  CHECK(entropy_difference(a, q) == doctest::Approx(std::abs(ha - hq) / ha).epsilon(1e-12));
}

TEST_CASE("metric invariants") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Image2D a = random_image(32, 32, 10 + seed), b = structured_image(32);
    CHECK(rmse(a, b) == doctest::Approx(rmse(b, a)));
    CHECK(mutual_information(a, b) == doctest::Approx(mutual_information(b, a)));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)));
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);
    CHECK(mutual_information(a, b) >= 0.0);
    const Image2D q = ((a.array() * 4.0f).floor() / 4.0f).matrix();
    CHECK(mutual_information(a, q) <= mutual_information(a, a) + 1e-12);
  }
}

TEST_CASE("accuracy_percent") {
  const Image2D g = structured_image(64);
  SUBCASE("identical inputs score 100") {
    const AccuracyReport r = accuracy_percent({{g, g}, {g}}, {{g, g}, {g}}, {1.0, 3.0});
    CHECK(r.a_total == doctest::Approx(100.0));
    CHECK(r.a_ed == doctest::Approx(100.0));
    CHECK(r.a_mi == doctest::Approx(100.0));
    CHECK(r.a_rmse == doctest::Approx(100.0));
    CHECK(r.a_ssim == doctest::Approx(100.0));
    CHECK(r.mean_time_s == doctest::Approx(2.0));
    CHECK(r.gaps.size() == 2);
    CHECK(r.slices.size() == 3);
  }
  SUBCASE("component arithmetic") {
    // SSIM 0.99, RMSE 1e-4, ED 1e-3, MI deficit 1e-3 -> (99.9 + 99.9 + 99.99 + 99) / 4.
    const AccuracyReport r = accuracy_from_components(0.001, 0.001, 0.0001, 0.99);
    CHECK(r.a_total == doctest::Approx(99.6975));
  }
  SUBCASE("noise against structure scores below 60") {
    const AccuracyReport r = accuracy_percent({{g}}, {{random_image(64, 64, 5)}});
    CHECK(r.a_total < 60.0);
    CHECK(r.a_total >= 0.0);
  }
  SUBCASE("misaligned lists") {
    try {
      accuracy_percent({{g}, {g}}, {{g}});
      FAIL("expected AlignmentMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::AlignmentMismatch);
    }
    try {
      accuracy_percent({}, {});
      FAIL("expected AlignmentMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::AlignmentMismatch);
    }
  }
  SUBCASE("reports serialize") {
    const AccuracyReport r = accuracy_percent({{g}}, {{g}});
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["A"].get<double>() == doctest::Approx(100.0));
    CHECK(r.to_text().find("A% = 100") != std::string::npos);
  }
}
