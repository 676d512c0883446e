#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "scene/shape.hpp"

namespace naf {

struct TriMesh {
  MatX<double> vertices;  // V x 3
  std::vector<std::array<int, 3>> faces;
};

// Batched SDF evaluator: N x 3 points in, N values out.
using SdfBatchFn = std::function<VecX<double>(const MatX<double>&)>;

// Zero level set over a regular grid of `resolution` samples per axis
// spanning `box`.  Vertices are deduplicated per grid edge, so closed
// surfaces come out watertight.
TriMesh marching_cubes(const SdfBatchFn& sdf, const Aabb& box, int resolution);

// Number of undirected edges used by exactly one triangle (0 = watertight).
int boundary_edge_count(const TriMesh& mesh);

void write_mesh_ply(const TriMesh& mesh, const std::string& path);

}  // namespace naf
