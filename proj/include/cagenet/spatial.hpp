#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "cagenet/mesh.hpp"

namespace cagenet {

struct TriangleProjection {
  double distance = 0.0;
  Vec3 closest = Vec3::Zero();
  /// Barycentric coordinates of `closest` w.r.t. the triangle in input order.
  Vec3 barycentric = Vec3::Zero();
};

/// Exact Euclidean distance from `p` to the closed triangle (a, b, c).
/// Degenerate triangles fall back to their edges. The result is bitwise
/// invariant under any permutation of the triangle's corners.
TriangleProjection point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct ClosestHit {
  double distance = 0.0;
  int face = -1;
  Vec3 closest = Vec3::Zero();
  Vec3 barycentric = Vec3::Zero();
};

/// Bounding-volume hierarchy over the faces of a mesh (median split on the
/// longest centroid axis). Read-only after construction.
class TriangleIndex {
 public:
  explicit TriangleIndex(const TriangleMesh& mesh, int leaf_size = 8);

  /// Best-first traversal; returns the exact minimum over all faces.
  ClosestHit closest(const Vec3& p) const;
  /// Linear scan over every face. Test oracle for `closest`.
  ClosestHit closest_brute_force(const Vec3& p) const;

  int leaf_size() const { return leaf_size_; }
  const TriangleMesh& mesh() const { return mesh_; }

  struct Node {
    Vec3 lo;
    Vec3 hi;
    int left = -1;  // child indices; -1 for leaves
    int right = -1;
    int begin = 0;  // range into face_order_ (leaves only)
    int end = 0;
  };
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& face_order() const { return face_order_; }

 private:
  int build(int begin, int end, const std::vector<Vec3>& centroids);
  ClosestHit test_face(const Vec3& p, int face) const;

  TriangleMesh mesh_;
  int leaf_size_;
  std::vector<Node> nodes_;
  std::vector<int> face_order_;
};

/// Signed solid angle of the triangle seen from p, divided by 4 pi.
double triangle_winding(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Generalized winding number: exact per-triangle solid-angle sum / 4 pi,
/// accumulated in face order.
double winding_number(const Vec3& p, const TriangleMesh& mesh);
std::vector<double> winding_numbers(const std::vector<Vec3>& points, const TriangleMesh& mesh);

/// Regular grid, z index fastest.
struct ScalarGrid {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::array<int, 3> dims{2, 2, 2};
  std::vector<double> values;

  std::size_t size() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  std::array<int, 3> unravel(std::size_t idx) const {
    const int k = static_cast<int>(idx % dims[2]);
    const std::size_t ij = idx / dims[2];
    return {static_cast<int>(ij / dims[1]), static_cast<int>(ij % dims[1]), k};
  }
};

/// Cubic-cell grid geometry covering `box` grown by `padding` on each side.
/// The longest axis gets `max_dims` nodes; other axes get as many nodes as
/// needed at the same spacing (at least 2).
ScalarGrid grid_covering(const Bounds& box, double padding, int max_dims);
/// Geometry with exact per-axis node counts; spacing set by the longest axis.
ScalarGrid grid_covering(const Bounds& box, double padding, const std::array<int, 3>& dims);

/// Unsigned distance to the nearest face at every node of the grid geometry.
void fill_udf(ScalarGrid& grid, const TriangleIndex& index);
ScalarGrid sample_udf_grid(const TriangleMesh& mesh, const std::array<int, 3>& dims, double padding);

/// Node-wise inside flags (winding number >= 0.5) for a closed mesh. Nodes
/// farther than one spacing from the surface are classified per connected
/// region from a single representative; the rest individually.
std::vector<char> voxelize_interior(const TriangleMesh& closed_mesh, const ScalarGrid& geometry);

/// "SGF1" binary format.
std::string encode_grid(const ScalarGrid& grid);
ScalarGrid decode_grid(const std::string& bytes);
void save_grid(const std::filesystem::path& path, const ScalarGrid& grid);
ScalarGrid load_grid(const std::filesystem::path& path);

}  // namespace cagenet
