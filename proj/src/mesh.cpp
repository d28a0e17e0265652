#include "cagenet/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

namespace cagenet {

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;  // smaller index becomes root
  }
};

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

void fnv_mix(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

void TriangleMesh::validate() const {
  const int n = static_cast<int>(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) {
      throw std::invalid_argument("non-finite position at vertex " + std::to_string(i));
    }
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int v : faces[f]) {
      if (v < 0 || v >= n) {
        throw std::invalid_argument("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                                    " out of range [0," + std::to_string(n) + ")");
      }
    }
  }
}

Bounds bounds(const std::vector<Vec3>& points) {
  if (points.empty()) throw std::invalid_argument("bounds of empty point set");
  Bounds b{points.front(), points.front()};
  for (const Vec3& p : points) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  return b;
}

Bounds bounds(const TriangleMesh& mesh) { return bounds(mesh.positions); }

std::pair<TriangleMesh, Similarity> normalize_unit_box(const TriangleMesh& mesh) {
  if (mesh.empty()) throw std::invalid_argument("normalize_unit_box: empty mesh");
  const Bounds b = bounds(mesh);
  const double extent = b.extent().maxCoeff();
  const Vec3 center = 0.5 * (b.min + b.max);
  Similarity to_original;
  to_original.scale = extent > 0.0 ? extent : 1.0;
  to_original.translation = center;

  TriangleMesh out = mesh;
  for (Vec3& p : out.positions) p = (p - center) / to_original.scale;
  return {std::move(out), to_original};
}

TopologyReport topology_report(const TriangleMesh& mesh) {
  TopologyReport report;
  const std::size_t n = mesh.vertex_count();

  std::unordered_map<std::uint64_t, int> edge_faces;
  edge_faces.reserve(mesh.face_count() * 3);
  for (const Face& f : mesh.faces) {
    const Vec3 e1 = mesh.positions[f[1]] - mesh.positions[f[0]];
    const Vec3 e2 = mesh.positions[f[2]] - mesh.positions[f[0]];
    const bool repeated = f[0] == f[1] || f[1] == f[2] || f[0] == f[2];
    if (repeated || e1.cross(e2).squaredNorm() == 0.0) ++report.degenerate_face_count;
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      if (a != b) ++edge_faces[edge_key(a, b)];
    }
  }
  for (const auto& [key, count] : edge_faces) {
    if (count > 2) ++report.nonmanifold_edge_count;
    if (count == 1) ++report.boundary_edge_count;
  }
  report.is_edge_manifold = report.nonmanifold_edge_count == 0;
  report.is_closed = !mesh.faces.empty() && report.boundary_edge_count == 0 && report.nonmanifold_edge_count == 0;

  // A vertex is manifold when its incident faces form a single fan joined
  // through edges incident to the vertex.
  std::vector<std::vector<int>> vertex_faces(n);
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    for (int v : mesh.faces[f]) {
      if (vertex_faces[v].empty() || vertex_faces[v].back() != static_cast<int>(f)) {
        vertex_faces[v].push_back(static_cast<int>(f));
      }
    }
  }
  for (std::size_t v = 0; v < n && report.is_vertex_manifold; ++v) {
    const auto& incident = vertex_faces[v];
    if (incident.size() <= 1) continue;
    DisjointSets fans(incident.size());
    std::map<int, int> first_face_by_neighbor;
    for (std::size_t i = 0; i < incident.size(); ++i) {
      for (int w : mesh.faces[incident[i]]) {
        if (w == static_cast<int>(v)) continue;
        if (edge_faces[edge_key(static_cast<int>(v), w)] > 2) report.is_vertex_manifold = false;
        auto [it, inserted] = first_face_by_neighbor.emplace(w, static_cast<int>(i));
        if (!inserted) fans.unite(it->second, static_cast<int>(i));
      }
    }
    for (std::size_t i = 0; i < incident.size(); ++i) {
      if (fans.find(static_cast<int>(i)) != 0) {
        report.is_vertex_manifold = false;
        break;
      }
    }
  }
  if (!report.is_edge_manifold) report.is_vertex_manifold = false;

  std::map<std::array<double, 3>, int> seen;
  for (const Vec3& p : mesh.positions) {
    auto [it, inserted] = seen.emplace(std::array<double, 3>{p.x(), p.y(), p.z()}, 1);
    if (!inserted) ++report.duplicate_vertex_count;
  }

  int count = 0;
  component_labels(mesh, &count);
  report.component_count = count;
  return report;
}

std::vector<int> component_labels(const TriangleMesh& mesh, int* count) {
  DisjointSets sets(mesh.vertex_count());
  for (const Face& f : mesh.faces) {
    sets.unite(f[0], f[1]);
    sets.unite(f[1], f[2]);
  }
  std::vector<int> labels(mesh.vertex_count(), -1);
  std::vector<int> root_label(mesh.vertex_count(), -1);
  int next = 0;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const int root = sets.find(static_cast<int>(v));
    if (root_label[root] < 0) root_label[root] = next++;
    labels[v] = root_label[root];
  }
  if (count) *count = next;
  return labels;
}

std::vector<std::vector<int>> connected_components(const TriangleMesh& mesh) {
  int count = 0;
  const std::vector<int> labels = component_labels(mesh, &count);
  std::vector<std::vector<int>> components(count);
  for (std::size_t v = 0; v < labels.size(); ++v) components[labels[v]].push_back(static_cast<int>(v));
  return components;
}

TriangleMesh make_soup(const TriangleMesh& mesh, double vertex_noise_sigma, double flip_fraction,
                       std::uint64_t rng_seed) {
  if (flip_fraction < 0.0 || flip_fraction > 1.0) throw std::invalid_argument("flip_fraction must lie in [0,1]");
  std::mt19937_64 rng(rng_seed);
  const std::size_t nf = mesh.face_count();

  std::vector<std::size_t> order(nf);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = nf; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto flips = static_cast<std::size_t>(std::floor(flip_fraction * static_cast<double>(nf)));
  std::vector<bool> flipped(nf, false);
  for (std::size_t i = 0; i < flips; ++i) flipped[order[i]] = true;

  std::normal_distribution<double> noise(0.0, 1.0);
  TriangleMesh soup;
  soup.positions.reserve(3 * nf);
  soup.faces.reserve(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const int base = static_cast<int>(soup.positions.size());
    for (int v : mesh.faces[f]) {
      Vec3 p = mesh.positions[v];
      if (vertex_noise_sigma > 0.0) {
        for (int k = 0; k < 3; ++k) p[k] += vertex_noise_sigma * noise(rng);
      }
      soup.positions.push_back(p);
    }
    soup.faces.push_back(flipped[f] ? Face{base, base + 2, base + 1} : Face{base, base + 1, base + 2});
  }
  return soup;
}

std::vector<int> soup_source_vertices(const TriangleMesh& mesh) {
  std::vector<int> source;
  source.reserve(3 * mesh.face_count());
  for (const Face& f : mesh.faces) source.insert(source.end(), f.begin(), f.end());
  return source;
}

TriangleMesh extract_submesh(const TriangleMesh& mesh, const std::vector<int>& vertices) {
  std::vector<int> remap(mesh.vertex_count(), -1);
  TriangleMesh out;
  out.positions.reserve(vertices.size());
  for (int v : vertices) {
    remap[v] = static_cast<int>(out.positions.size());
    out.positions.push_back(mesh.positions[v]);
  }
  for (const Face& f : mesh.faces) {
    if (remap[f[0]] >= 0 && remap[f[1]] >= 0 && remap[f[2]] >= 0) {
      out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
  }
  return out;
}

TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b) {
  TriangleMesh out = a;
  const int offset = static_cast<int>(a.vertex_count());
  out.positions.insert(out.positions.end(), b.positions.begin(), b.positions.end());
  for (const Face& f : b.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  return out;
}

TriangleMesh remove_unreferenced(const TriangleMesh& mesh) {
  std::vector<char> used(mesh.vertex_count(), 0);
  for (const Face& f : mesh.faces)
    for (int v : f) used[v] = 1;
  std::vector<int> keep;
  for (std::size_t v = 0; v < used.size(); ++v)
    if (used[v]) keep.push_back(static_cast<int>(v));
  return extract_submesh(mesh, keep);
}

std::uint64_t content_digest(const TriangleMesh& mesh) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::uint64_t counts[2] = {mesh.vertex_count(), mesh.face_count()};
  fnv_mix(h, counts, sizeof(counts));
  for (const Vec3& p : mesh.positions) {
    const double xyz[3] = {p.x(), p.y(), p.z()};
    fnv_mix(h, xyz, sizeof(xyz));
  }
  for (const Face& f : mesh.faces) {
    const std::int32_t idx[3] = {f[0], f[1], f[2]};
    fnv_mix(h, idx, sizeof(idx));
  }
  return h;
}

double signed_volume(const TriangleMesh& mesh) {
  double volume = 0.0;
  for (const Face& f : mesh.faces) {
    volume += mesh.positions[f[0]].dot(mesh.positions[f[1]].cross(mesh.positions[f[2]]));
  }
  return volume / 6.0;
}

}  // namespace cagenet
