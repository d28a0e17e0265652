#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "cagenet/mesh.hpp"

namespace cagenet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class CoordError : public std::runtime_error {
 public:
  CoordError(const std::string& what, int vertex = -1) : std::runtime_error(what), vertex_(vertex) {}
  int vertex() const { return vertex_; }

 private:
  int vertex_;
};

enum class CoordMethod : std::uint8_t { mvc = 0, harmonic = 1 };

const char* method_name(CoordMethod method);
CoordMethod parse_method(const std::string& name);

/// n x cage-vertex weights; row i expresses mesh vertex i in the cage.
struct CoordinateMatrix {
  RowMatrix entries;
  CoordMethod method = CoordMethod::mvc;
  std::uint64_t mesh_hash = 0;
  std::uint64_t cage_hash = 0;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

/// Mean value coordinates of p w.r.t. a closed triangle cage. Points within
/// 1e-10 * diag of a vertex get the indicator row, points on a face get its
/// barycentric coordinates.
Eigen::VectorXd mvc_weights(const Vec3& p, const TriangleMesh& cage);
CoordinateMatrix compute_mvc_matrix(const TriangleMesh& mesh, const TriangleMesh& cage);

/// Harmonic coordinates on a voxel grid with `grid_dims` nodes along the
/// longest axis. Exterior nodes next to the interior carry the hat function
/// of each cage vertex evaluated at their closest cage point.
CoordinateMatrix compute_harmonic_matrix(const TriangleMesh& mesh, const TriangleMesh& cage, int grid_dims = 48);

/// C * cage_values.
Eigen::MatrixXd map_signal(const CoordinateMatrix& coords, const Eigen::MatrixXd& cage_values);
/// Mean of the three vertex rows per face.
Eigen::MatrixXd average_to_faces(const TriangleMesh& mesh, const Eigen::MatrixXd& vertex_values);

/// "GBC1" binary format.
std::string encode_coords(const CoordinateMatrix& coords);
CoordinateMatrix decode_coords(const std::string& bytes);
void save_coords(const std::filesystem::path& path, const CoordinateMatrix& coords);
CoordinateMatrix load_coords(const std::filesystem::path& path);

}  // namespace cagenet
