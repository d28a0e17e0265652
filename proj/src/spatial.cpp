#include "cagenet/spatial.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "cagenet/binary_io.hpp"
#include "cagenet/parallel.hpp"

namespace cagenet {

namespace {

std::atomic<int> g_workers{1};

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

// Closest point on segment [a,b]; t is the parameter along a->b.
double closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b, double& t) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).squaredNorm();
}

// Ericson's region classification; (u, v, w) are barycentrics of the result.
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;

  const double area2 = ab.cross(ac).squaredNorm();
  const double scale = std::max({ab.squaredNorm(), ac.squaredNorm(), (c - b).squaredNorm()});
  if (!(area2 > 1e-24 * scale * scale)) {
    // Degenerate: best of the three edges.
    double t0, t1, t2;
    const double d0 = closest_on_segment(p, a, b, t0);
    const double d1 = closest_on_segment(p, b, c, t1);
    const double d2 = closest_on_segment(p, c, a, t2);
    if (d0 <= d1 && d0 <= d2) return {1.0 - t0, t0, 0.0};
    if (d1 <= d2) return {0.0, 1.0 - t1, t1};
    return {t2, 0.0, 1.0 - t2};
  }

  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return {1.0 - v - w, v, w};
}

double box_distance2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
  return d.squaredNorm();
}

}  // namespace

int worker_count() { return g_workers.load(); }
void set_worker_count(int threads) { g_workers.store(std::max(1, threads)); }

TriangleProjection point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Canonical corner order so the result does not depend on winding or
  // rotation of the corner list.
  const Vec3* corner[3] = {&a, &b, &c};
  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&](int i, int j) { return lex_less(*corner[i], *corner[j]); });

  const Vec3 bary_sorted = closest_on_triangle(p, *corner[order[0]], *corner[order[1]], *corner[order[2]]);
  TriangleProjection out;
  out.closest = bary_sorted[0] * *corner[order[0]] + bary_sorted[1] * *corner[order[1]] +
                bary_sorted[2] * *corner[order[2]];
  out.distance = (p - out.closest).norm();
  for (int k = 0; k < 3; ++k) out.barycentric[order[k]] = bary_sorted[k];
  return out;
}

TriangleIndex::TriangleIndex(const TriangleMesh& mesh, int leaf_size) : mesh_(mesh), leaf_size_(std::max(1, leaf_size)) {
  mesh_.validate();
  const int nf = static_cast<int>(mesh_.face_count());
  face_order_.resize(nf);
  std::vector<Vec3> centroids(nf);
  for (int f = 0; f < nf; ++f) {
    face_order_[f] = f;
    const Face& t = mesh_.faces[f];
    // min/max midpoint is order independent, unlike a corner sum
    const Vec3 lo = mesh_.positions[t[0]].cwiseMin(mesh_.positions[t[1]]).cwiseMin(mesh_.positions[t[2]]);
    const Vec3 hi = mesh_.positions[t[0]].cwiseMax(mesh_.positions[t[1]]).cwiseMax(mesh_.positions[t[2]]);
    centroids[f] = 0.5 * (lo + hi);
  }
  if (nf > 0) {
    nodes_.reserve(2 * (nf / leaf_size_ + 1));
    build(0, nf, centroids);
  }
}

int TriangleIndex::build(int begin, int end, const std::vector<Vec3>& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo;
  Vec3 chi = hi;
  for (int i = begin; i < end; ++i) {
    const Face& t = mesh_.faces[face_order_[i]];
    for (int v : t) {
      lo = lo.cwiseMin(mesh_.positions[v]);
      hi = hi.cwiseMax(mesh_.positions[v]);
    }
    clo = clo.cwiseMin(centroids[face_order_[i]]);
    chi = chi.cwiseMax(centroids[face_order_[i]]);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (end - begin <= leaf_size_) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(face_order_.begin() + begin, face_order_.begin() + mid, face_order_.begin() + end,
                   [&](int x, int y) {
                     const double cx = centroids[x][axis];
                     const double cy = centroids[y][axis];
                     return cx != cy ? cx < cy : x < y;
                   });
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

ClosestHit TriangleIndex::test_face(const Vec3& p, int face) const {
  const Face& t = mesh_.faces[face];
  const TriangleProjection proj =
      point_triangle_distance(p, mesh_.positions[t[0]], mesh_.positions[t[1]], mesh_.positions[t[2]]);
  return {proj.distance, face, proj.closest, proj.barycentric};
}

ClosestHit TriangleIndex::closest_brute_force(const Vec3& p) const {
  ClosestHit best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int f = 0; f < static_cast<int>(mesh_.face_count()); ++f) {
    const ClosestHit hit = test_face(p, f);
    if (hit.distance < best.distance || (hit.distance == best.distance && hit.face < best.face)) best = hit;
  }
  return best;
}

ClosestHit TriangleIndex::closest(const Vec3& p) const {
  ClosestHit best;
  best.distance = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  queue.push({box_distance2(p, nodes_[0].lo, nodes_[0].hi), 0});
  while (!queue.empty()) {
    const auto [d2, id] = queue.top();
    queue.pop();
    if (std::sqrt(d2) > best.distance) break;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const ClosestHit hit = test_face(p, face_order_[i]);
        if (hit.distance < best.distance || (hit.distance == best.distance && hit.face < best.face)) best = hit;
      }
      continue;
    }
    for (int child : {node.left, node.right}) {
      const double cd2 = box_distance2(p, nodes_[child].lo, nodes_[child].hi);
      if (std::sqrt(cd2) <= best.distance) queue.push({cd2, child});
    }
  }
  return best;
}

double triangle_winding(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 x = a - p;
  const Vec3 y = b - p;
  const Vec3 z = c - p;
  const double lx = x.norm();
  const double ly = y.norm();
  const double lz = z.norm();
  const double numerator = x.dot(y.cross(z));
  const double denominator = lx * ly * lz + x.dot(y) * lz + y.dot(z) * lx + z.dot(x) * ly;
  return std::atan2(numerator, denominator) / (2.0 * std::numbers::pi);
}

double winding_number(const Vec3& p, const TriangleMesh& mesh) {
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += triangle_winding(p, mesh.positions[f[0]], mesh.positions[f[1]], mesh.positions[f[2]]);
  }
  return total;
}

std::vector<double> winding_numbers(const std::vector<Vec3>& points, const TriangleMesh& mesh) {
  std::vector<double> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) { out[i] = winding_number(points[i], mesh); });
  return out;
}

ScalarGrid grid_covering(const Bounds& box, double padding, const std::array<int, 3>& dims) {
  for (int d : dims) {
    if (d < 2) throw std::invalid_argument("grid dims must be >= 2 per axis");
  }
  const Vec3 extent = box.extent() + Vec3::Constant(2.0 * padding);
  double spacing = 0.0;
  for (int a = 0; a < 3; ++a) spacing = std::max(spacing, extent[a] / (dims[a] - 1));
  if (!(spacing > 0.0)) spacing = 1.0;
  ScalarGrid grid;
  grid.dims = dims;
  grid.spacing = spacing;
  const Vec3 center = 0.5 * (box.min + box.max);
  for (int a = 0; a < 3; ++a) grid.origin[a] = center[a] - 0.5 * spacing * (dims[a] - 1);
  return grid;
}

ScalarGrid grid_covering(const Bounds& box, double padding, int max_dims) {
  if (max_dims < 2) throw std::invalid_argument("grid dims must be >= 2 per axis");
  const Vec3 extent = box.extent() + Vec3::Constant(2.0 * padding);
  double spacing = extent.maxCoeff() / (max_dims - 1);
  if (!(spacing > 0.0)) spacing = 1.0;
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = std::max(2, static_cast<int>(std::ceil(extent[a] / spacing - 1e-9)) + 1);
  ScalarGrid grid;
  grid.dims = dims;
  grid.spacing = spacing;
  const Vec3 center = 0.5 * (box.min + box.max);
  for (int a = 0; a < 3; ++a) grid.origin[a] = center[a] - 0.5 * spacing * (dims[a] - 1);
  return grid;
}

void fill_udf(ScalarGrid& grid, const TriangleIndex& index) {
  grid.values.assign(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t idx) {
    const auto [i, j, k] = grid.unravel(idx);
    grid.values[idx] = index.closest(grid.node(i, j, k)).distance;
  });
}

ScalarGrid sample_udf_grid(const TriangleMesh& mesh, const std::array<int, 3>& dims, double padding) {
  if (mesh.faces.empty()) throw std::invalid_argument("sample_udf_grid: mesh has no faces");
  ScalarGrid grid = grid_covering(bounds(mesh), padding, dims);
  const TriangleIndex index(mesh);
  fill_udf(grid, index);
  return grid;
}

std::vector<char> voxelize_interior(const TriangleMesh& closed_mesh, const ScalarGrid& geometry) {
  ScalarGrid udf = geometry;
  const TriangleIndex index(closed_mesh);
  fill_udf(udf, index);

  const std::size_t total = udf.size();
  std::vector<char> inside(total, 0);
  std::vector<int> region(total, -1);
  const double near = udf.spacing;

  std::vector<std::size_t> near_nodes;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (udf.values[idx] <= near) near_nodes.push_back(idx);
  }
  std::vector<double> near_w(near_nodes.size());
  parallel_for(near_nodes.size(), [&](std::size_t n) {
    const auto [i, j, k] = udf.unravel(near_nodes[n]);
    near_w[n] = winding_number(udf.node(i, j, k), closed_mesh);
  });
  for (std::size_t n = 0; n < near_nodes.size(); ++n) inside[near_nodes[n]] = near_w[n] >= 0.5;

  // Far nodes: flood fill 6-connected regions; a 6-edge between two nodes
  // farther than spacing/2 from the surface cannot cross it.
  std::vector<std::size_t> stack;
  int regions = 0;
  for (std::size_t seed = 0; seed < total; ++seed) {
    if (udf.values[seed] <= near || region[seed] >= 0) continue;
    const auto [si, sj, sk] = udf.unravel(seed);
    const bool in = winding_number(udf.node(si, sj, sk), closed_mesh) >= 0.5;
    region[seed] = regions;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      inside[cur] = in;
      const auto [i, j, k] = udf.unravel(cur);
      const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= udf.dims[0] || q[1] >= udf.dims[1] || q[2] >= udf.dims[2])
          continue;
        const std::size_t qi = udf.index(q[0], q[1], q[2]);
        if (region[qi] >= 0 || udf.values[qi] <= near) continue;
        region[qi] = regions;
        stack.push_back(qi);
      }
    }
    ++regions;
  }
  return inside;
}

std::string encode_grid(const ScalarGrid& grid) {
  ByteWriter w;
  w.magic("SGF1");
  for (int d : grid.dims) w.u32(static_cast<std::uint32_t>(d));
  for (int a = 0; a < 3; ++a) w.f64(grid.origin[a]);
  w.f64(grid.spacing);
  for (double v : grid.values) w.f64(v);
  return w.bytes();
}

ScalarGrid decode_grid(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("SGF1");
  ScalarGrid grid;
  for (int& d : grid.dims) d = static_cast<int>(r.u32());
  for (int d : grid.dims) {
    if (d < 2) throw std::runtime_error("SGF1: dims must be >= 2");
  }
  for (int a = 0; a < 3; ++a) grid.origin[a] = r.f64();
  grid.spacing = r.f64();
  grid.values.resize(grid.size());
  for (double& v : grid.values) v = r.f64();
  if (!r.at_end()) throw std::runtime_error("SGF1: trailing bytes");
  return grid;
}

void save_grid(const std::filesystem::path& path, const ScalarGrid& grid) { write_file_atomic(path, encode_grid(grid)); }
ScalarGrid load_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

}  // namespace cagenet
