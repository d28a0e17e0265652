#include "cagenet/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace cagenet::shapes {

TriangleMesh icosphere(int subdivisions, double radius, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.positions = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                    {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : mesh.positions) p.normalize();
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(mesh.positions.size());
      mesh.positions.push_back((mesh.positions[a] + mesh.positions[b]).normalized());
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(mesh.faces.size() * 4);
    for (const Face& f : mesh.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  for (Vec3& p : mesh.positions) p = center + radius * p;
  return mesh;
}

TriangleMesh box(const Vec3& lo, const Vec3& hi, int n) {
  n = std::max(1, n);
  TriangleMesh mesh;
  std::map<std::array<int, 3>, int> ids;
  auto vertex = [&](std::array<int, 3> g) {
    auto it = ids.find(g);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(mesh.positions.size());
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = lo[a] + (hi[a] - lo[a]) * g[a] / n;
    mesh.positions.push_back(p);
    ids.emplace(g, id);
    return id;
  };
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          std::array<int, 3> c[4];
          const int uv[4][2] = {{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}};
          for (int k = 0; k < 4; ++k) {
            c[k][axis] = side * n;
            c[k][u] = uv[k][0];
            c[k][v] = uv[k][1];
          }
          int q[4];
          for (int k = 0; k < 4; ++k) q[k] = vertex(c[k]);
          // (u, v) order is counter-clockwise about +axis
          if (side == 1) {
            mesh.faces.push_back({q[0], q[1], q[2]});
            mesh.faces.push_back({q[0], q[2], q[3]});
          } else {
            mesh.faces.push_back({q[0], q[2], q[1]});
            mesh.faces.push_back({q[0], q[3], q[2]});
          }
        }
      }
    }
  }
  return mesh;
}

TriangleMesh regular_tetrahedron(double circumradius, const Vec3& center) {
  TriangleMesh mesh;
  const double s = circumradius / std::sqrt(3.0);
  mesh.positions = {center + s * Vec3(1, 1, 1), center + s * Vec3(1, -1, -1), center + s * Vec3(-1, 1, -1),
                    center + s * Vec3(-1, -1, 1)};
  mesh.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return mesh;
}

TriangleMesh capped_cylinder(double x0, double x1, double radius, int segments, int rings) {
  TriangleMesh mesh;
  rings = std::max(2, rings);
  const double mid = 0.5 * (x0 + x1);
  const double half = 0.5 * (x1 - x0);
  // mirror-exact x samples: x_r = mid - half * s_r with s_{rings-1-r} = -s_r
  std::vector<double> xs(rings);
  for (int r = 0; r < rings; ++r) {
    const int m = rings - 1 - r;
    if (r > m) {
      xs[r] = mid + (mid - xs[m]);
      continue;
    }
    const double s = 1.0 - 2.0 * static_cast<double>(r) / (rings - 1);
    xs[r] = mid - half * s;
  }
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      mesh.positions.emplace_back(xs[r], radius * std::cos(a), radius * std::sin(a));
    }
  }
  auto id = [&](int r, int s) { return r * segments + (s % segments); };
  for (int r = 0; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      mesh.faces.push_back({id(r, s), id(r, s + 1), id(r + 1, s + 1)});
      mesh.faces.push_back({id(r, s), id(r + 1, s + 1), id(r + 1, s)});
    }
  }
  const int c0 = static_cast<int>(mesh.positions.size());
  mesh.positions.emplace_back(xs.front(), 0.0, 0.0);
  const int c1 = static_cast<int>(mesh.positions.size());
  mesh.positions.emplace_back(xs.back(), 0.0, 0.0);
  for (int s = 0; s < segments; ++s) {
    mesh.faces.push_back({c0, id(0, s + 1), id(0, s)});
    mesh.faces.push_back({c1, id(rings - 1, s), id(rings - 1, s + 1)});
  }
  return mesh;
}

TriangleMesh torus(double major, double minor, int major_segments, int minor_segments, const Vec3& center) {
  TriangleMesh mesh;
  for (int i = 0; i < major_segments; ++i) {
    const double u = 2.0 * std::numbers::pi * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      const double v = 2.0 * std::numbers::pi * j / minor_segments;
      const double r = major + minor * std::cos(v);
      mesh.positions.push_back(center + Vec3(r * std::cos(u), r * std::sin(u), minor * std::sin(v)));
    }
  }
  auto id = [&](int i, int j) { return (i % major_segments) * minor_segments + (j % minor_segments); };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < minor_segments; ++j) {
      mesh.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

TriangleMesh transformed(TriangleMesh mesh, const Vec3& scale, const Vec3& translate) {
  for (Vec3& p : mesh.positions) p = scale.cwiseProduct(p) + translate;
  return mesh;
}

TriangleMesh flipped(TriangleMesh mesh) {
  for (Face& f : mesh.faces) std::swap(f[1], f[2]);
  return mesh;
}

}  // namespace cagenet::shapes
