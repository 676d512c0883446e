#include "mesh/mesh.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "mesh/mc_tables.hpp"

namespace naf {

namespace {

// Cube corner offsets matching the lookup tables' bit order.
constexpr int kCorner[8][3] = {{1, 1, 0}, {1, 0, 0}, {0, 0, 0}, {0, 1, 0},
                               {1, 1, 1}, {1, 0, 1}, {0, 0, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                  {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                  {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriMesh marching_cubes(const SdfBatchFn& sdf, const Aabb& box,
                       int resolution) {
  require(resolution >= 3, Errc::invalid_argument,
          "degenerate marching-cubes grid: resolution " +
              std::to_string(resolution) + " is below 3 samples per axis");
  const int R = resolution;
  const Vec3<double> lo = box.lo;
  const Vec3<double> step = (box.hi - box.lo) / (R - 1);
  require(step.minCoeff() > 0, Errc::invalid_argument,
          "degenerate marching-cubes box");

  auto grid_point = [&](int x, int y, int z) {
    return Vec3<double>(lo.x() + x * step.x(), lo.y() + y * step.y(),
                        lo.z() + z * step.z());
  };
  auto grid_id = [&](int x, int y, int z) {
    return ((int64_t)z * R + y) * R + x;
  };

  // One SDF evaluation per grid point, layer by layer.
  std::vector<double> values((size_t)R * R * R);
  for (int z = 0; z < R; ++z) {
    MatX<double> pts(R * R, 3);
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        pts.row(y * R + x) = grid_point(x, y, z).transpose();
    VecX<double> v = sdf(pts);
    require(v.size() == R * R, Errc::invalid_argument,
            "sdf evaluator returned the wrong number of values");
    for (int i = 0; i < R * R; ++i) values[(size_t)z * R * R + i] = v(i);
  }
  auto value_at = [&](int x, int y, int z) {
    return values[(size_t)grid_id(x, y, z)];
  };

  TriMesh mesh;
  std::vector<Vec3<double>> verts;
  std::map<std::pair<int64_t, int64_t>, int> edge_vertex;

  auto edge_point = [&](int corner_a[3], int corner_b[3]) {
    int64_t ia = grid_id(corner_a[0], corner_a[1], corner_a[2]);
    int64_t ib = grid_id(corner_b[0], corner_b[1], corner_b[2]);
    auto key = std::minmax(ia, ib);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double va = values[(size_t)ia], vb = values[(size_t)ib];
    Vec3<double> pa = grid_point(corner_a[0], corner_a[1], corner_a[2]);
    Vec3<double> pb = grid_point(corner_b[0], corner_b[1], corner_b[2]);
    double mu = 0.5;
    if (std::abs(va) < 1e-12)
      mu = 0.0;
    else if (std::abs(vb) < 1e-12)
      mu = 1.0;
    else if (std::abs(va - vb) > 1e-12)
      mu = std::clamp(-va / (vb - va), 0.0, 1.0);
    verts.push_back(pa + mu * (pb - pa));
    int id = (int)verts.size() - 1;
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < R; ++z)
    for (int y = 0; y + 1 < R; ++y)
      for (int x = 0; x + 1 < R; ++x) {
        int idx = 0;
        for (int c = 0; c < 8; ++c)
          if (value_at(x + kCorner[c][0], y + kCorner[c][1],
                       z + kCorner[c][2]) > 0)
            idx |= 1 << c;
        if (detail::kEdgeTable[idx] == 0) continue;

        int edge_ids[12];
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kEdgeTable[idx] & (1 << e))) continue;
          int a[3], b[3];
          for (int k = 0; k < 3; ++k) {
            a[k] = (k == 0 ? x : k == 1 ? y : z) +
                   kCorner[kEdgeEnds[e][0]][k];
            b[k] = (k == 0 ? x : k == 1 ? y : z) +
                   kCorner[kEdgeEnds[e][1]][k];
          }
          edge_ids[e] = edge_point(a, b);
        }
        for (int t = 0; detail::kTriTable[idx][t] != -1; t += 3)
          mesh.faces.push_back({edge_ids[detail::kTriTable[idx][t]],
                                edge_ids[detail::kTriTable[idx][t + 1]],
                                edge_ids[detail::kTriTable[idx][t + 2]]});
      }

  mesh.vertices.resize((int)verts.size(), 3);
  for (int i = 0; i < (int)verts.size(); ++i)
    mesh.vertices.row(i) = verts[i].transpose();
  return mesh;
}

int boundary_edge_count(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(f[k], f[(k + 1) % 3]);
      ++uses[key];
    }
  int boundary = 0;
  for (const auto& [key, n] : uses)
    if (n == 1) ++boundary;
  return boundary;
}

void write_mesh_ply(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write mesh: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.rows()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size()
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  out.precision(9);
  for (int i = 0; i < (int)mesh.vertices.rows(); ++i)
    out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' '
        << mesh.vertices(i, 2) << '\n';
  for (const auto& f : mesh.faces)
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

}  // namespace naf
