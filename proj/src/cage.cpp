#include "cagenet/cage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cagenet/parallel.hpp"

namespace cagenet {

namespace {

constexpr int kMaxGridDims = 256;
constexpr int kMaxGrowthSteps = 64;

std::vector<TriangleMesh> split_components(const TriangleMesh& mesh) {
  std::vector<TriangleMesh> parts;
  for (const auto& comp : connected_components(mesh)) parts.push_back(extract_submesh(mesh, comp));
  return parts;
}

bool level_touches_boundary(const ScalarGrid& grid, double level) {
  const auto [nx, ny, nz] = grid.dims;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        if (i != 0 && j != 0 && k != 0 && i != nx - 1 && j != ny - 1 && k != nz - 1) continue;
        if (grid.at(i, j, k) < level) return true;
      }
  return false;
}

// Grid whose padding keeps the `offset` level set off the boundary, with the
// spacing refined (up to kMaxGridDims) so that spacing <= min_offset.
ScalarGrid offset_grid(const Bounds& box, double offset, double min_offset, int dims) {
  const double extent = box.extent().maxCoeff();
  auto spacing_for = [&](int n) { return (extent + 4.0 * offset) / (n - 5); };
  int n = std::max(dims, 8);
  while (spacing_for(n) > min_offset && n < kMaxGridDims) ++n;
  const double h = spacing_for(n);
  return grid_covering(box, 2.0 * offset + 2.0 * h, n);
}

}  // namespace

std::vector<TriangleMesh> group_faces_by_shell(const TriangleMesh& input, const TriangleMesh& shells) {
  const std::vector<TriangleMesh> parts = split_components(shells);
  std::vector<TriangleIndex> indices;
  indices.reserve(parts.size());
  for (const auto& p : parts) indices.emplace_back(p);
  std::vector<int> owner(input.face_count(), 0);
  parallel_for(input.face_count(), [&](std::size_t f) {
    const Face& t = input.faces[f];
    const Vec3& a = input.positions[t[0]];
    const Vec3& b = input.positions[t[1]];
    const Vec3& c = input.positions[t[2]];
    const Vec3 probe = 0.5 * (a.cwiseMin(b).cwiseMin(c) + a.cwiseMax(b).cwiseMax(c));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < indices.size(); ++s) {
      const double d = indices[s].closest(probe).distance;
      if (d < best) {
        best = d;
        owner[f] = static_cast<int>(s);
      }
    }
  });
  std::vector<TriangleMesh> groups(parts.size());
  for (std::size_t f = 0; f < input.face_count(); ++f) {
    TriangleMesh& g = groups[owner[f]];
    const int base = static_cast<int>(g.positions.size());
    for (int v : input.faces[f]) g.positions.push_back(input.positions[v]);
    g.faces.push_back({base, base + 1, base + 2});
  }
  return groups;
}

void CageParams::validate() const {
  if (!(offset > 0.0)) throw std::invalid_argument("cage offset must be positive");
  if (target_faces < 4) throw std::invalid_argument("target_faces must be >= 4");
  if (max_faces < target_faces) throw std::invalid_argument("max_faces must be >= target_faces");
  if (grid_dims < 8) throw std::invalid_argument("grid dims must be >= 8");
}

std::string cage_violation(const TriangleMesh& cage) {
  const TopologyReport r = topology_report(cage);
  if (cage.faces.empty()) return "cage has no faces";
  if (!r.is_closed) return "cage is not closed";
  if (!r.is_edge_manifold) return "cage is not edge-manifold";
  if (!r.is_vertex_manifold) return "cage is not vertex-manifold";
  if (r.component_count != 1) return "cage has " + std::to_string(r.component_count) + " components";
  return {};
}

TriangleMesh remove_internal_components(const TriangleMesh& mesh) {
  std::vector<TriangleMesh> parts = split_components(mesh);
  std::vector<char> alive(parts.size(), 1);
  for (;;) {
    std::vector<double> w(parts.size(), 0.0);
    parallel_for(parts.size(), [&](std::size_t c) {
      if (!alive[c] || parts[c].positions.empty()) return;
      const Vec3& probe = parts[c].positions.front();
      double total = 0.0;
      for (std::size_t d = 0; d < parts.size(); ++d) {
        if (d != c && alive[d]) total += winding_number(probe, parts[d]);
      }
      w[c] = total;
    });
    bool changed = false;
    for (std::size_t c = 0; c < parts.size(); ++c) {
      if (alive[c] && w[c] >= 0.5) {
        alive[c] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }
  TriangleMesh out;
  for (std::size_t c = 0; c < parts.size(); ++c)
    if (alive[c]) out = merge(out, parts[c]);
  return out;
}

double component_gap(const TriangleMesh& mesh) {
  const std::vector<TriangleMesh> parts = split_components(mesh);
  if (parts.size() < 2) throw CageError("component_gap: mesh has a single component");
  return partition_gap(parts);
}

double partition_gap(const std::vector<TriangleMesh>& parts) {
  std::vector<TriangleIndex> indices;
  indices.reserve(parts.size());
  for (const auto& p : parts) indices.emplace_back(p);

  // directed[i][j]: min distance from vertices of i to the surface of j
  const std::size_t k = parts.size();
  std::vector<double> directed(k * k, std::numeric_limits<double>::infinity());
  parallel_for(k * k, [&](std::size_t ij) {
    const std::size_t i = ij / k;
    const std::size_t j = ij % k;
    if (i == j || parts[j].faces.empty()) return;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : parts[i].positions) best = std::min(best, indices[j].closest(p).distance);
    directed[ij] = best;
  });
  double gap = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) gap = std::max(gap, std::min(directed[i * k + j], directed[j * k + i]));
  return gap;
}

Cage generate_cage(const TriangleMesh& mesh, const CageParams& params) {
  params.validate();
  if (mesh.faces.empty()) throw CageError("generate_cage: input has no faces");
  mesh.validate();

  const Bounds box = bounds(mesh);
  const TriangleIndex index(mesh);
  ScalarGrid grid = offset_grid(box, params.offset, params.offset, params.grid_dims);
  fill_udf(grid, index);

  Cage cage;
  cage.params = params;
  double offset = params.offset;
  TriangleMesh shell;
  for (int step = 0;; ++step) {
    if (step >= kMaxGrowthSteps) throw CageError("generate_cage: offset growth did not converge");
    if (level_touches_boundary(grid, offset)) {
      // the level set outgrew the padding: resample with room for it
      grid = offset_grid(box, offset, params.offset, params.grid_dims);
      fill_udf(grid, index);
    }
    const TriangleMesh extracted = marching_cubes(grid, offset);
    int before = 0;
    component_labels(extracted, &before);
    shell = remove_internal_components(extracted);
    int after = 0;
    component_labels(shell, &after);
    GrowthStep log{offset, before, after, 0.0};
    if (after <= 1) {
      cage.growth.push_back(log);
      break;
    }
    // d_max: largest distance between the pieces of input geometry that
    // produced the disjoint shells
    const std::vector<TriangleMesh> groups = group_faces_by_shell(mesh, shell);
    const bool all_owned = std::all_of(groups.begin(), groups.end(), [](const TriangleMesh& g) { return !g.faces.empty(); });
    log.gap = all_owned ? partition_gap(groups) : component_gap(shell);
    cage.growth.push_back(log);
    // touching components that the grid still separates: advance by a cell
    offset += log.gap > 0.0 ? 0.5 * log.gap : grid.spacing;
  }
  cage.effective_offset = offset;
  cage.grid_spacing = grid.spacing;

  auto enclosure = [&](const TriangleMesh& candidate) {
    const std::vector<double> w = winding_numbers(mesh.positions, candidate);
    return w.empty() ? 0.0 : *std::min_element(w.begin(), w.end());
  };

  SimplifyResult simplified = simplify_qem(shell, params.target_faces);
  cage.face_budget_used = params.target_faces;
  double min_w = enclosure(simplified.mesh);
  if (params.require_enclosure && min_w < 0.5 && params.max_faces > params.target_faces) {
    simplified = simplify_qem(shell, params.max_faces);
    cage.face_budget_used = params.max_faces;
    min_w = enclosure(simplified.mesh);
  }
  cage.mesh = std::move(simplified.mesh);
  cage.simplification_reached_target = simplified.reached_target;
  cage.min_enclosure_winding = min_w;

  const std::string violation = cage_violation(cage.mesh);
  if (!violation.empty()) throw CageError("generate_cage: " + violation);
  if (params.require_enclosure && min_w < 0.5) {
    throw CageError("generate_cage: enclosure unreachable at " + std::to_string(params.max_faces) +
                    " faces (min winding number " + std::to_string(min_w) + ")");
  }
  return cage;
}

std::vector<Cage> generate_offset_family(const TriangleMesh& mesh, const std::vector<double>& offsets,
                                         const CageParams& params) {
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (!(offsets[i] > offsets[i - 1])) throw std::invalid_argument("offsets must be strictly increasing");
  }
  std::vector<Cage> family;
  for (double offset : offsets) {
    CageParams p = params;
    p.offset = offset;
    family.push_back(generate_cage(mesh, p));
  }
  return family;
}

}  // namespace cagenet
