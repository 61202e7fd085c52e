#pragma once

#include "volrec/volume.hpp"

namespace volrec {

/// Iso-surface of a dense volume in voxel coordinates. Vertices on shared cell
/// edges are emitted once. Triangles wind counter-clockwise seen from the low
/// side and normals point from high to low values, so a bright object gets
/// outward normals. An iso outside the data range yields an empty mesh.
TriangleMesh marching_cubes(const VolumeGrid& volume, double iso);

/// Uniform Laplacian smoothing: each pass moves every vertex by lambda toward
/// the centroid of its 1-ring (all vertices updated from the previous pass).
/// Normals are recomputed from area-weighted face normals.
TriangleMesh smooth_mesh(const TriangleMesh& mesh, int iterations, double lambda);

/// Area-weighted vertex normals; isolated or degenerate vertices get +z.
void recompute_normals(TriangleMesh& mesh);

double surface_area(const TriangleMesh& mesh);

/// Signed volume by the divergence theorem; positive for outward winding.
double enclosed_volume(const TriangleMesh& mesh);

struct MeshTopology {
  std::size_t vertices = 0, edges = 0, faces = 0;
  std::size_t boundary_edges = 0;      // edges with one incident triangle
  std::size_t nonmanifold_edges = 0;   // edges with more than two
  long euler_characteristic() const {
    return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces);
  }
  bool closed_manifold() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};

MeshTopology mesh_topology(const TriangleMesh& mesh);

}  // namespace volrec
