#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "cagenet/mesh.hpp"
#include "cagenet/skin.hpp"

namespace cagenet {

struct CotanOperators {
  Eigen::SparseMatrix<double> stiffness;  // positive semi-definite, rows sum to 0
  Eigen::VectorXd mass;                   // barycentric lumped, > 0
};

/// Cotangent weights are clamped to [-1e4, 1e4].
CotanOperators cotan_laplacian_mass(const TriangleMesh& mesh);

struct SpectralBasis {
  Eigen::VectorXd eigenvalues;   // ascending, >= 0
  Eigen::MatrixXd eigenvectors;  // columns M-orthonormal
  Eigen::VectorXd mass;
};

/// k smallest generalized eigenpairs of (stiffness, diag(mass)). Dense solve
/// up to `dense_limit` vertices, shift-invert subspace iteration above.
SpectralBasis eigenbasis(const Eigen::SparseMatrix<double>& stiffness, const Eigen::VectorXd& mass, int k,
                         int dense_limit = 3000);

/// Largest ||L phi - mu M phi||_2 / (max|L_ii| ||phi||_2) over the basis.
double eigen_residual(const Eigen::SparseMatrix<double>& stiffness, const SpectralBasis& basis);

struct FeatureSet {
  Eigen::MatrixXd values;  // cage vertices x channels
  std::vector<std::string> labels;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

FeatureSet concat_features(const FeatureSet& a, const FeatureSet& b);

/// 16 values log-spaced on [0.01, 1].
std::vector<double> default_hks_times();
FeatureSet hks_features(const SpectralBasis& basis, const std::vector<double>& times);

FeatureSet position_features(const TriangleMesh& cage);

/// Per bone: 26-connected shortest paths over the interior voxels of the
/// cage, seeded at voxels the bone segment crosses, read at each cage vertex's
/// nearest interior voxel plus the snap distance.
FeatureSet volumetric_geodesic_to_bones(const TriangleMesh& cage, const Skeleton& skeleton, int grid_dims = 64);

/// "FTS1" binary format.
std::string encode_features(const FeatureSet& features);
FeatureSet decode_features(const std::string& bytes);
void save_features(const std::filesystem::path& path, const FeatureSet& features);
FeatureSet load_features(const std::filesystem::path& path);

}  // namespace cagenet
