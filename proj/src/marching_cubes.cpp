#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "cagenet/cage.hpp"

namespace cagenet {

namespace {

// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct CubeTopology {
  std::array<std::array<int, 2>, 12> edge_corners{};
  std::array<int, 12> edge_axis{};
  std::array<std::array<int, 4>, 6> face_corners{};  // counter-clockwise seen from outside
  std::array<std::array<bool, 12>, 12> share_face{};
  std::array<std::array<int, 8>, 8> edge_between{};

  CubeTopology() {
    for (auto& row : edge_between) row.fill(-1);
    int e = 0;
    for (int c = 0; c < 8; ++c) {
      for (int a = 0; a < 3; ++a) {
        if (c & (1 << a)) continue;
        const int d = c | (1 << a);
        edge_corners[e] = {c, d};
        edge_axis[e] = a;
        edge_between[c][d] = edge_between[d][c] = e;
        ++e;
      }
    }
    int f = 0;
    for (int a = 0; a < 3; ++a) {
      for (int s = 0; s < 2; ++s) {
        const int u = (a + 1) % 3;
        const int v = (a + 2) % 3;
        // (u,v) walk: 00 -> 10 -> 11 -> 01 is counter-clockwise about +a
        std::array<int, 4> ring{};
        const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int k = 0; k < 4; ++k) ring[k] = (s << a) | (uv[k][0] << u) | (uv[k][1] << v);
        if (s == 0) std::reverse(ring.begin(), ring.end());
        face_corners[f++] = ring;
      }
    }
    for (int x = 0; x < 12; ++x) {
      for (int y = 0; y < 12; ++y) {
        bool shared = false;
        for (const auto& ring : face_corners) {
          auto on = [&](int edge) {
            const int c0 = edge_corners[edge][0];
            const int c1 = edge_corners[edge][1];
            return std::find(ring.begin(), ring.end(), c0) != ring.end() &&
                   std::find(ring.begin(), ring.end(), c1) != ring.end();
          };
          if (on(x) && on(y)) shared = true;
        }
        share_face[x][y] = shared;
      }
    }
  }
};

const CubeTopology& topology() {
  static const CubeTopology topo;
  return topo;
}

}  // namespace

TriangleMesh marching_cubes(const ScalarGrid& grid, double level) {
  const auto& topo = topology();
  const auto [nx, ny, nz] = grid.dims;
  if (grid.values.size() != grid.size()) throw std::invalid_argument("marching_cubes: value count does not match dims");

  bool any_inside = false;
  bool any_outside = false;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const bool in = grid.values[idx] < level;
    any_inside |= in;
    any_outside |= !in;
    if (in) {
      const auto [i, j, k] = grid.unravel(idx);
      if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1) {
        throw CageError("marching_cubes: level set clipped by the grid boundary");
      }
    }
  }
  if (!any_inside || !any_outside) throw CageError("marching_cubes: empty level set");

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto vertex_on_edge = [&](int i, int j, int k, int edge) -> int {
    const int c0 = topo.edge_corners[edge][0];
    const int c1 = topo.edge_corners[edge][1];
    const int i0 = i + (c0 & 1), j0 = j + ((c0 >> 1) & 1), k0 = k + ((c0 >> 2) & 1);
    const int i1 = i + (c1 & 1), j1 = j + ((c1 >> 1) & 1), k1 = k + ((c1 >> 2) & 1);
    const std::uint64_t key = grid.index(i0, j0, k0) * 3 + topo.edge_axis[edge];
    auto [it, inserted] = edge_vertex.emplace(key, static_cast<int>(mesh.positions.size()));
    if (inserted) {
      const double v0 = grid.at(i0, j0, k0);
      const double v1 = grid.at(i1, j1, k1);
      double t = (level - v0) / (v1 - v0);
      t = std::clamp(t, 1e-3, 1.0 - 1e-3);
      mesh.positions.push_back((1.0 - t) * grid.node(i0, j0, k0) + t * grid.node(i1, j1, k1));
    }
    return it->second;
  };

  for (int i = 0; i + 1 < nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int k = 0; k + 1 < nz; ++k) {
        double value[8];
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          value[c] = grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (value[c] < level) mask |= 1 << c;
        }
        if (mask == 0 || mask == 0xff) continue;

        std::array<int, 12> next;
        next.fill(-1);
        for (const auto& ring : topo.face_corners) {
          int crossing[4];
          bool entry[4];
          int count = 0;
          for (int m = 0; m < 4; ++m) {
            const int a = ring[m];
            const int b = ring[(m + 1) % 4];
            const bool ina = mask & (1 << a);
            const bool inb = mask & (1 << b);
            if (ina == inb) continue;
            crossing[count] = topo.edge_between[a][b];
            entry[count] = inb;
            ++count;
          }
          if (count == 2) {
            const int from = entry[0] ? 0 : 1;
            next[crossing[from]] = crossing[1 - from];
          } else if (count == 4) {
            double p_in = 1.0, p_out = 1.0, s_in = 0.0, s_out = 0.0;
            for (int c : ring) {
              if (mask & (1 << c)) {
                p_in *= value[c];
                s_in += value[c];
              } else {
                p_out *= value[c];
                s_out += value[c];
              }
            }
            const double saddle = (p_in - p_out) / (s_in - s_out);
            const bool inside_connected = saddle < level;
            for (int m = 0; m < 4; ++m) {
              if (!entry[m]) continue;
              const int partner = inside_connected ? (m + 3) % 4 : (m + 1) % 4;
              next[crossing[m]] = crossing[partner];
            }
          }
        }

        std::array<bool, 12> used{};
        for (int start = 0; start < 12; ++start) {
          if (next[start] < 0 || used[start]) continue;
          std::vector<int> loop;
          for (int e = start; !used[e]; e = next[e]) {
            used[e] = true;
            loop.push_back(e);
          }
          const int m = static_cast<int>(loop.size());
          std::vector<int> ids(m);
          for (int q = 0; q < m; ++q) ids[q] = vertex_on_edge(i, j, k, loop[q]);

          int apex = -1;
          for (int r = 0; r < m && apex < 0; ++r) {
            bool ok = true;
            for (int q = 0; q < m && ok; ++q) {
              if (q == r || q == (r + 1) % m || q == (r + m - 1) % m) continue;
              if (topo.share_face[loop[r]][loop[q]]) ok = false;
            }
            if (ok) apex = r;
          }
          if (apex >= 0) {
            for (int q = 1; q + 1 < m; ++q) {
              mesh.faces.push_back({ids[apex], ids[(apex + q) % m], ids[(apex + q + 1) % m]});
            }
          } else {
            Vec3 center = Vec3::Zero();
            for (int id : ids) center += mesh.positions[id];
            const int c = static_cast<int>(mesh.positions.size());
            mesh.positions.push_back(center / m);
            for (int q = 0; q < m; ++q) mesh.faces.push_back({c, ids[q], ids[(q + 1) % m]});
          }
        }
      }
    }
  }
  return mesh;
}

}  // namespace cagenet
