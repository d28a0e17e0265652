#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cagenet {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

/// Indexed triangle set. No manifoldness is assumed: faces may share edges
/// arbitrarily, be duplicated, or be degenerate.
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t face_count() const { return faces.size(); }
  bool empty() const { return positions.empty(); }

  /// Throws std::invalid_argument on out-of-range indices or non-finite positions.
  void validate() const;
};

struct TopologyReport {
  bool is_edge_manifold = true;
  bool is_vertex_manifold = true;
  bool is_closed = false;
  int component_count = 0;
  int nonmanifold_edge_count = 0;
  int boundary_edge_count = 0;
  int duplicate_vertex_count = 0;
  int degenerate_face_count = 0;
};

/// Uniform scale plus translation: original = scale * normalized + translation.
struct Similarity {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
};

struct Bounds {
  Vec3 min;
  Vec3 max;

  Vec3 extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
};

class ObjParseError : public std::runtime_error {
 public:
  ObjParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(const std::string& text);
/// Positions written with 9 significant digits.
std::string format_obj(const TriangleMesh& mesh);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

Bounds bounds(const TriangleMesh& mesh);
Bounds bounds(const std::vector<Vec3>& points);

/// Fits the bounding box into the unit cube centered at the origin with a
/// uniform scale. The returned similarity maps normalized back to original.
std::pair<TriangleMesh, Similarity> normalize_unit_box(const TriangleMesh& mesh);

TopologyReport topology_report(const TriangleMesh& mesh);

/// Vertex components by shared-index face connectivity. Isolated vertices
/// form singleton components. Components are ordered by smallest vertex index
/// and each is sorted ascending.
std::vector<std::vector<int>> connected_components(const TriangleMesh& mesh);

/// Per-vertex component id consistent with connected_components ordering.
std::vector<int> component_labels(const TriangleMesh& mesh, int* count = nullptr);

/// Every face gets three private vertices, perturbed by isotropic Gaussian
/// noise; floor(flip_fraction * |F|) faces chosen by the seeded rng get their
/// winding reversed.
TriangleMesh make_soup(const TriangleMesh& mesh, double vertex_noise_sigma, double flip_fraction,
                       std::uint64_t rng_seed);
/// Source vertex of every soup vertex: soup vertex 3f+k copies mesh.faces[f][k].
std::vector<int> soup_source_vertices(const TriangleMesh& mesh);

/// Sub-mesh made of the faces whose vertices all belong to `vertices`;
/// vertices are renumbered in the given order.
TriangleMesh extract_submesh(const TriangleMesh& mesh, const std::vector<int>& vertices);

/// Concatenation; faces of `b` are re-indexed.
TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b);

/// Removes vertices no face references, preserving order.
TriangleMesh remove_unreferenced(const TriangleMesh& mesh);

/// 64-bit FNV-1a digest over the raw position and face bytes.
std::uint64_t content_digest(const TriangleMesh& mesh);

double signed_volume(const TriangleMesh& mesh);

}  // namespace cagenet
