#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cagenet/mesh.hpp"

namespace cagenet {

struct Joint {
  std::string name;
  Vec3 position = Vec3::Zero();
  int parent = -1;
};

struct Skeleton {
  std::vector<Joint> joints;
  std::vector<std::array<int, 2>> bones;  // (parent joint, child joint)

  std::size_t bone_count() const { return bones.size(); }
  /// Throws std::invalid_argument: bad indices, cycles, or not exactly one root.
  void validate() const;
};

/// n x k, rows non-negative and summing to 1.
using SkinWeights = Eigen::MatrixXd;
void validate_weights(const SkinWeights& weights, double tol = 1e-9);

struct BoneTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

using Frame = std::vector<BoneTransform>;

struct AnimationClip {
  std::vector<Frame> frames;

  void validate(std::size_t bone_count) const;
};

/// Rotation `rotation` about `pivot`.
BoneTransform rotation_about(const Eigen::Matrix3d& rotation, const Vec3& pivot);

TriangleMesh lbs_deform(const TriangleMesh& mesh, const SkinWeights& weights, const Frame& frame);

/// Zeroes entries below `threshold` and renormalizes; rows that would vanish
/// become the indicator of their largest entry.
SkinWeights sparsify_weights(const SkinWeights& weights, double threshold);

double metric_avg_l1(const SkinWeights& pred, const SkinWeights& gt);

struct PrecisionRecall {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
};

/// Per-vertex influence-set precision/recall/F1, averaged over vertices.
PrecisionRecall metric_prf1(const SkinWeights& pred, const SkinWeights& gt, double influence_threshold = 1e-4);

struct VertexDistance {
  double avg = 0.0;
  double max = 0.0;
};

/// Displacement between pred- and gt-deformed frames over the rest bbox diagonal.
VertexDistance metric_vertex_distance(const TriangleMesh& mesh, const SkinWeights& pred, const SkinWeights& gt,
                                      const AnimationClip& clip);

/// match[i] is the nearest vertex to the mirror image (-x, y, z) of vertex i
/// when within `tolerance`, else -1.
struct SymmetryMap {
  std::vector<int> match;

  bool contains(int i) const { return match[i] >= 0; }
  std::size_t size() const;
};

SymmetryMap detect_symmetric_vertices(const TriangleMesh& mesh, double tolerance);

/// JSON forms: skeleton {joints: [{name, position, parent}], bones: [[a, b]]},
/// weights as n x k nested arrays, clip {frames: [[{rotation: 9, translation: 3}]]}.
std::string skeleton_to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(const std::string& text);
std::string weights_to_json(const SkinWeights& weights);
SkinWeights weights_from_json(const std::string& text);
std::string clip_to_json(const AnimationClip& clip);
AnimationClip clip_from_json(const std::string& text);

}  // namespace cagenet
