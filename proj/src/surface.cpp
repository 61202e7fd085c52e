#include "volrec/surface.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Geometry>

#include "mc_tables.hpp"

namespace volrec {

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

Vec3d gradient(const VolumeGrid& v, int x, int y, int z) {
  const int p[3] = {x, y, z};
  Vec3d g;
  for (int a = 0; a < 3; ++a) {
    int lo[3] = {x, y, z}, hi[3] = {x, y, z};
    lo[a] = std::max(0, p[a] - 1);
    hi[a] = std::min(v.dims()[a] - 1, p[a] + 1);
    const int span = hi[a] - lo[a];
    g[a] = span > 0 ? (static_cast<double>(v(hi[0], hi[1], hi[2])) - v(lo[0], lo[1], lo[2])) / span : 0.0;
  }
  return g;
}

Eigen::Vector3f face_normal(const TriangleMesh& m, const std::array<std::uint32_t, 3>& t) {
  const Eigen::Vector3f& a = m.vertices[t[0]];
  return (m.vertices[t[1]] - a).cross(m.vertices[t[2]] - a);
}

}  // namespace

TriangleMesh marching_cubes(const VolumeGrid& volume, double iso) {
  if (!volume.fully_known()) throw Error(ErrorCode::MissingData, "marching_cubes needs a dense volume");
  TriangleMesh mesh;
  if (volume.nx() < 2 || volume.ny() < 2 || volume.nz() < 2) return mesh;

  // Key: 3 * linear index of the edge's lower grid point + axis.
  std::unordered_map<std::int64_t, std::uint32_t> edge_vertex;
  std::vector<Vec3d> grads;
  auto vertex_on = [&](int x, int y, int z, int e) -> std::uint32_t {
    int a[3], b[3];
    for (int i = 0; i < 3; ++i) {
      a[i] = (i == 0 ? x : i == 1 ? y : z) + kCorner[kEdgeEnds[e][0]][i];
      b[i] = (i == 0 ? x : i == 1 ? y : z) + kCorner[kEdgeEnds[e][1]][i];
    }
    if (a[0] + a[1] + a[2] > b[0] + b[1] + b[2]) std::swap(a, b);
    const int axis = b[0] != a[0] ? 0 : b[1] != a[1] ? 1 : 2;
    const std::int64_t key = 3 * static_cast<std::int64_t>(volume.index(a[0], a[1], a[2])) + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double va = volume(a[0], a[1], a[2]), vb = volume(b[0], b[1], b[2]);
    const double t = vb != va ? (iso - va) / (vb - va) : 0.5;
    Vec3d p(a[0], a[1], a[2]);
    p[axis] += t;
    const Vec3d g = (1.0 - t) * gradient(volume, a[0], a[1], a[2]) + t * gradient(volume, b[0], b[1], b[2]);
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p.cast<float>());
    grads.push_back(g);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < volume.nz(); ++z)
    for (int y = 0; y + 1 < volume.ny(); ++y)
      for (int x = 0; x + 1 < volume.nx(); ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (volume(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]) < iso) cube |= 1 << c;
        if (detail::kEdgeTable[static_cast<std::size_t>(cube)] == 0) continue;
        const auto& tri = detail::kTriTable[static_cast<std::size_t>(cube)];
        for (int i = 0; tri[static_cast<std::size_t>(i)] != -1; i += 3) {
          const std::uint32_t v0 = vertex_on(x, y, z, tri[static_cast<std::size_t>(i)]);
          const std::uint32_t v1 = vertex_on(x, y, z, tri[static_cast<std::size_t>(i + 1)]);
          const std::uint32_t v2 = vertex_on(x, y, z, tri[static_cast<std::size_t>(i + 2)]);
          mesh.triangles.push_back({v0, v1, v2});
        }
      }

  mesh.normals.resize(mesh.vertices.size());
  bool need_faces = false;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double n = grads[i].norm();
    if (n > 1e-12)
      mesh.normals[i] = (-grads[i] / n).cast<float>().normalized();
    else
      need_faces = true;
  }
  if (need_faces) {
    TriangleMesh face_based = mesh;
    recompute_normals(face_based);
    for (std::size_t i = 0; i < grads.size(); ++i)
      if (grads[i].norm() <= 1e-12) mesh.normals[i] = face_based.normals[i];
  }
  return mesh;
}

void recompute_normals(TriangleMesh& mesh) {
  std::vector<Eigen::Vector3d> acc(mesh.vertices.size(), Eigen::Vector3d::Zero());
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d n = face_normal(mesh, t).cast<double>();
    for (auto v : t) acc[v] += n;
  }
  mesh.normals.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double n = acc[i].norm();
    mesh.normals[i] = n > 1e-20 ? (acc[i] / n).cast<float>().normalized() : Eigen::Vector3f::UnitZ();
  }
}

TriangleMesh smooth_mesh(const TriangleMesh& mesh, int iterations, double lambda) {
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 0");
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in (0,1)");
  if (iterations == 0) return mesh;

  // 1-ring adjacency, sorted and unique for a deterministic centroid.
  std::vector<std::vector<std::uint32_t>> ring(mesh.vertices.size());
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      ring[t[static_cast<std::size_t>(k)]].push_back(t[static_cast<std::size_t>((k + 1) % 3)]);
      ring[t[static_cast<std::size_t>(k)]].push_back(t[static_cast<std::size_t>((k + 2) % 3)]);
    }
  for (auto& r : ring) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }

  TriangleMesh out = mesh;
  std::vector<Eigen::Vector3d> cur(mesh.vertices.size()), next(mesh.vertices.size());
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = mesh.vertices[i].cast<double>();
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (ring[i].empty()) {
        next[i] = cur[i];
        continue;
      }
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (auto j : ring[i]) c += cur[j];
      c /= static_cast<double>(ring[i].size());
      next[i] = cur[i] + lambda * (c - cur[i]);
    }
    std::swap(cur, next);
  }
  for (std::size_t i = 0; i < cur.size(); ++i) out.vertices[i] = cur[i].cast<float>();
  recompute_normals(out);
  return out;
}

double surface_area(const TriangleMesh& mesh) {
  double a = 0.0;
  for (const auto& t : mesh.triangles) a += 0.5 * face_normal(mesh, t).cast<double>().norm();
  return a;
}

double enclosed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices[t[0]].cast<double>();
    const Eigen::Vector3d b = mesh.vertices[t[1]].cast<double>();
    const Eigen::Vector3d c = mesh.vertices[t[2]].cast<double>();
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

MeshTopology mesh_topology(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edge_use;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      std::uint64_t a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++edge_use[(a << 32) | b];
    }
  MeshTopology topo;
  topo.vertices = mesh.vertices.size();
  topo.faces = mesh.triangles.size();
  topo.edges = edge_use.size();
  for (const auto& [key, n] : edge_use) {
    if (n == 1) ++topo.boundary_edges;
    if (n > 2) ++topo.nonmanifold_edges;
  }
  return topo;
}

}  // namespace volrec
