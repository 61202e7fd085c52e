#include <doctest.h>

#include <random>
#include <set>

#include "volrec/edge_preserve.hpp"

using namespace volrec;

namespace {

EdgeMap empty_map(int rows, int cols) {
  EdgeMap m;
  m.is_edge = Image<std::uint8_t>::Zero(rows, cols);
  m.theta = Image<int>::Constant(rows, cols, -1);
  m.magnitude = Image<double>::Zero(rows, cols);
  return m;
}

void mark(EdgeMap& m, int x, int y, int theta, double mag = 1.0) {
  m.is_edge(y, x) = 1;
  m.theta(y, x) = theta;
  m.magnitude(y, x) = mag;
}

// Brute-force 8-connected component count.
int components(const EdgeMap& m) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(m.rows() * m.cols()), 0);
  int count = 0;
  for (int y = 0; y < m.rows(); ++y)
    for (int x = 0; x < m.cols(); ++x) {
      if (!m.edge(y, x) || seen[static_cast<std::size_t>(y * m.cols() + x)]) continue;
      ++count;
      std::vector<Pixel> stack{Pixel(x, y)};
      seen[static_cast<std::size_t>(y * m.cols() + x)] = 1;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        for (const auto& d : kRing) {
          const int nx = p.x() + d[0], ny = p.y() + d[1];
          if (nx < 0 || ny < 0 || nx >= m.cols() || ny >= m.rows() || !m.edge(ny, nx)) continue;
          auto& s = seen[static_cast<std::size_t>(ny * m.cols() + nx)];
          if (!s) {
            s = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  return count;
}

}  // namespace

TEST_CASE("trace_chains") {
  SUBCASE("empty map") { CHECK(trace_chains(empty_map(8, 8)).empty()); }
  SUBCASE("horizontal segment") {
    auto m = empty_map(8, 8);
    for (int x = 2; x < 6; ++x) mark(m, x, 3, 1);
    const auto c = trace_chains(m);
    REQUIRE(c.size() == 1);
    CHECK(c[0].size() == 4);
    CHECK(c[0].pixels.front() == Pixel(2, 3));
    for (std::size_t i = 1; i < c[0].size(); ++i) CHECK(adjacent8(c[0].pixels[i - 1], c[0].pixels[i]));
  }
  SUBCASE("two disjoint segments and random maps partition the edge set") {
    auto m = empty_map(10, 10);
    for (int x = 0; x < 4; ++x) mark(m, x, 1, 0);
    for (int y = 4; y < 9; ++y) mark(m, 7, y, 2);
    const auto c = trace_chains(m);
    CHECK(c.size() == 2);
    CHECK(components(m) == 2);

    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto r = empty_map(16, 16);
      std::bernoulli_distribution on(0.3);
      int total = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          if (on(rng)) {
            mark(r, x, y, 0);
            ++total;
          }
      std::set<std::pair<int, int>> seen;
      std::size_t n = 0;
      const auto chains = trace_chains(r);
      for (const auto& ch : chains) {
        for (std::size_t i = 0; i < ch.size(); ++i) {
          seen.insert({ch.pixels[i].x(), ch.pixels[i].y()});
          if (i > 0) CHECK(adjacent8(ch.pixels[i - 1], ch.pixels[i]));
        }
        n += ch.size();
      }
      CHECK(n == static_cast<std::size_t>(total));
      CHECK(seen.size() == static_cast<std::size_t>(total));
      CHECK(chains.size() >= static_cast<std::size_t>(components(r)));
    }
  }
}

TEST_CASE("smooth_window_orientation") {
  SUBCASE("noisy window collapses to the mean orientation") {
    const std::vector<int> w = {1, 2, 1, 2, 3, 1, 2, 1, 1, 2, 1, 1, 2, 1, 2, 1};
    const auto out = smooth_window_orientation(w);
    CHECK(out.front() == 1);
    CHECK(out.back() == 1);
    for (std::size_t i = 1; i + 1 < out.size(); ++i) CHECK(out[i] == 1);
  }
  SUBCASE("constant window") {
    const std::vector<int> w(16, 2);
    CHECK(smooth_window_orientation(w) == w);
  }
  SUBCASE("single transition") {
    std::vector<int> w(16, 1);
    std::fill(w.begin() + 8, w.end(), 2);
    CHECK(direction_changes(w) == 0);
    CHECK(smooth_window_orientation(w) == w);
  }
  SUBCASE("ties go to the smaller value") {
    const std::vector<int> w = {1, 2, 1, 2, 1, 2, 1, 2};
    const auto out = smooth_window_orientation(w);
    CHECK(out[1] == 1);
    CHECK(out.back() == 2);
  }
}

TEST_CASE("reselect_edge_pixels") {
  auto m = empty_map(5, 5);
  for (int x = 0; x < 5; ++x) mark(m, x, 2, 3);
  EdgeChain chain;
  for (int x = 0; x < 5; ++x) {
    chain.pixels.emplace_back(x, 2);
    chain.theta.push_back(3);
  }
  SUBCASE("consistent chain") {
    const auto out = reselect_edge_pixels(chain, chain.theta, m);
    CHECK(out.pixels == chain.pixels);
  }
  SUBCASE("one deviant pixel with one matching neighbor") {
    chain.theta[2] = 5;
    m.theta(2, 2) = 5;
    mark(m, 2, 1, 3, 0.5);
    std::vector<int> smoothed(5, 3);
    // Brute-force scan of the 8-neighborhood for theta 3, excluding chain pixels.
    const auto out = reselect_edge_pixels(chain, smoothed, m);
    CHECK(out.pixels[2] == Pixel(2, 1));
    CHECK(out.theta[2] == 3);
  }
  SUBCASE("no matching neighbor keeps the pixel") {
    auto lone = empty_map(5, 5);
    mark(lone, 2, 2, 5);
    EdgeChain c;
    c.pixels = {Pixel(2, 2)};
    c.theta = {5};
    const auto out = reselect_edge_pixels(c, std::vector<int>{3}, lone);
    CHECK(out.pixels[0] == Pixel(2, 2));
  }
  SUBCASE("non-adjacent replacement is rejected") {
    EdgeChain c;
    c.pixels = {Pixel(1, 2), Pixel(2, 2), Pixel(3, 2)};
    c.theta = {3, 5, 3};
    auto mm = empty_map(5, 5);
    mark(mm, 1, 2, 3);
    mark(mm, 2, 2, 5);
    mark(mm, 3, 2, 3);
    // Only candidate touching (2,2) with theta 3 besides chain neighbors sits at (1,1),
    // which is adjacent to (1,2) but not to (3,2).
    mark(mm, 1, 1, 3, 5.0);
    mm.theta(2, 1) = -1;
    mm.theta(2, 3) = -1;
    const auto out = reselect_edge_pixels(c, std::vector<int>{3, 3, 3}, mm);
    CHECK(out.pixels[1] == Pixel(2, 2));
  }
}

TEST_CASE("adjust_neighbors") {
  SUBCASE("left triple set to its median") {
    Image<double> img = Image<double>::Constant(3, 3, 0.5);
    // Moving south from the center: left is the west column.
    img(0, 0) = 0.2;
    img(1, 0) = 0.6;
    img(2, 0) = 0.9;
    adjust_neighbors(img, Pixel(1, 1), 2);
    CHECK(img(0, 0) == 0.6);
    CHECK(img(1, 0) == 0.6);
    CHECK(img(2, 0) == 0.6);
  }
  SUBCASE("uniform neighborhood unchanged") {
    Image<double> img = Image<double>::Constant(3, 3, 0.3);
    const Image<double> before = img;
    for (int d = 0; d < 8; ++d) adjust_neighbors(img, Pixel(1, 1), d);
    CHECK(img == before);
  }
  SUBCASE("left and right fixture") {
    Image<double> img = Image<double>::Zero(3, 3);
    img.col(0) << 0.1, 0.3, 0.2;
    img.col(2) << 0.9, 0.7, 0.8;
    adjust_neighbors(img, Pixel(1, 1), 2);
    CHECK((img.col(0).array() == 0.2).all());
    CHECK((img.col(2).array() == 0.8).all());
  }
  SUBCASE("border pixel skipped") {
    Image<double> img = Image<double>::Random(3, 3);
    const Image<double> before = img;
    adjust_neighbors(img, Pixel(0, 1), 2);
    CHECK(img == before);
  }
}

TEST_CASE("preserve_edges") {
  SUBCASE("constant planes are untouched") {
    VolumeGrid b(Vec3i(6, 40, 40), 0.4f);
    CHECK(preserve_edges(b) == b);
  }
  SUBCASE("clean axis-aligned step is a fixed point") {
    VolumeGrid b(Vec3i(3, 48, 40), 0.2f);
    for (int z = 0; z < 40; ++z)
      for (int y = 24; y < 48; ++y)
        for (int x = 0; x < 3; ++x) b.set(x, y, z, 0.8f);
    const auto once = preserve_edges(b);
    CHECK(once == b);
    CHECK(preserve_edges(once) == once);
  }
  SUBCASE("protected voxels keep their values and changes stay local") {
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    VolumeGrid b(Vec3i(2, 40, 40), 0.0f);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.set(i, u(rng) > 0.5f ? 0.9f : 0.1f);
    std::vector<std::uint8_t> protect(static_cast<std::size_t>(b.size()), 0);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 2; ++x) protect[static_cast<std::size_t>(b.index(x, y, 10))] = 1;
    const auto out = preserve_edges(b, {}, protect);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 2; ++x) CHECK(out(x, y, 10) == b(x, y, 10));
  }
}
