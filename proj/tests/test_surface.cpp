#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Geometry>

#include "volrec/phantom.hpp"
#include "volrec/surface.hpp"

using namespace volrec;

TEST_CASE("marching_cubes basic cases") {
  SUBCASE("all voxels above iso") {
    VolumeGrid v(Vec3i(4, 4, 4), 0.9f);
    CHECK(marching_cubes(v, 0.5).triangle_count() == 0);
  }
  SUBCASE("one corner above iso in a single cell") {
    VolumeGrid v(Vec3i(2, 2, 2), 0.0f);
    v.set(1, 1, 1, 1.0f);
    const auto m = marching_cubes(v, 0.5);
    REQUIRE(m.triangle_count() == 1);
    CHECK(m.vertex_count() == 3);
    for (const auto& p : m.vertices) {
      // Each vertex sits midway on an edge leaving corner (1,1,1).
      CHECK(((p.array() == 1.0f).count() == 2));
      CHECK(((p.array() == 0.5f).count() == 1));
    }
    // Normal points away from the bright corner.
    const Eigen::Vector3f c(1, 1, 1);
    const auto& t = m.triangles[0];
    const Eigen::Vector3f fn = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
    CHECK(fn.dot(m.vertices[t[0]] - c) > 0);
    for (const auto& n : m.normals) CHECK(n.dot(c - m.vertices[0]) < 0);
  }
  SUBCASE("masked voxel rejected") {
    VolumeGrid v(Vec3i(3, 3, 3), 0.2f);
    v.set_missing(1, 1, 1);
    CHECK_THROWS_AS(marching_cubes(v, 0.5), Error);
  }
  SUBCASE("iso outside the data range gives an empty mesh") {
    VolumeGrid v(Vec3i(3, 3, 3), 0.2f);
    v.set(1, 1, 1, 0.4f);
    CHECK(marching_cubes(v, 0.9).triangle_count() == 0);
  }
}

TEST_CASE("sphere mesh geometry and topology") {
  const double r = 20.0;
  const auto vol = sphere_volume(64, r);
  const auto m = marching_cubes(vol, 0.5);
  validate(m);
  const double area = surface_area(m), volume = enclosed_volume(m);
  CHECK(std::abs(area - 4 * std::numbers::pi * r * r) / (4 * std::numbers::pi * r * r) < 0.02);
  CHECK(std::abs(volume - 4.0 / 3.0 * std::numbers::pi * r * r * r) / (4.0 / 3.0 * std::numbers::pi * r * r * r) < 0.02);
  const auto topo = mesh_topology(m);
  CHECK(topo.closed_manifold());
  CHECK(topo.euler_characteristic() == 2);

  SUBCASE("every vertex lies on a straddling cell edge") {
    for (const auto& p : m.vertices) {
      int frac_axis = -1;
      for (int a = 0; a < 3; ++a)
        if (p[a] != std::floor(p[a])) frac_axis = a;
      Vec3i lo(static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y())), static_cast<int>(std::floor(p.z())));
      if (frac_axis < 0) continue;  // exactly on a grid point
      Vec3i hi = lo;
      hi[frac_axis] += 1;
      const double a = vol(lo.x(), lo.y(), lo.z()), b = vol(hi.x(), hi.y(), hi.z());
      CHECK((std::min(a, b) <= 0.5 && std::max(a, b) >= 0.5));
    }
  }
  SUBCASE("iso symmetry") {
    VolumeGrid neg = vol;
    for (Eigen::Index i = 0; i < neg.size(); ++i) neg.set(i, 1.0f - vol.data()[i]);
    const auto n = marching_cubes(neg, 0.5);
    REQUIRE(n.vertex_count() == m.vertex_count());
    // Vertices keyed by the cell edge they lie on.
    auto by_edge = [](const TriangleMesh& mesh) {
      std::map<std::array<int, 4>, Eigen::Vector3f> out;
      for (const auto& p : mesh.vertices) {
        std::array<int, 4> key{static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y())),
                               static_cast<int>(std::floor(p.z())), -1};
        for (int a = 0; a < 3; ++a)
          if (p[a] != std::floor(p[a])) key[3] = a;
        out[key] = p;
      }
      return out;
    };
    const auto a = by_edge(m), b = by_edge(n);
    REQUIRE(a.size() == b.size());
    for (const auto& [key, p] : a) {
      REQUIRE(b.count(key) == 1);
      CHECK((b.at(key) - p).norm() < 1e-4);
    }
    CHECK(enclosed_volume(n) == doctest::Approx(-volume).epsilon(0.02));
  }
}

TEST_CASE("smooth_mesh") {
  const auto sphere = marching_cubes(sphere_volume(32, 10.0), 0.5);
  SUBCASE("zero iterations is the identity") {
    const auto s = smooth_mesh(sphere, 0, 0.5);
    CHECK(s.vertices == sphere.vertices);
    CHECK(s.triangles == sphere.triangles);
  }
  SUBCASE("regular tetrahedron stays regular") {
    TriangleMesh t;
    t.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    t.triangles = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    recompute_normals(t);
    const auto s = smooth_mesh(t, 1, 0.5);
    const double e = (s.vertices[0] - s.vertices[1]).norm();
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) CHECK((s.vertices[i] - s.vertices[j]).norm() == doctest::Approx(e).epsilon(1e-6));
    // Centroid of the other three is -v/3, so v moves to v + 0.5 (-v/3 - v) = v/3.
    CHECK((s.vertices[0] - t.vertices[0] / 3.0f).norm() < 1e-6);
  }
  SUBCASE("area shrinks monotonically and topology is kept") {
    double prev = surface_area(sphere);
    TriangleMesh cur = sphere;
    for (int i = 0; i < 10; ++i) {
      cur = smooth_mesh(cur, 1, 0.5);
      const double a = surface_area(cur);
      CHECK(a < prev);
      prev = a;
    }
    CHECK(cur.triangles == sphere.triangles);
    validate(cur);
  }
  SUBCASE("invalid lambda") { CHECK_THROWS_AS(smooth_mesh(sphere, 1, 1.0), Error); }
}
