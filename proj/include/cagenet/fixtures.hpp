#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cagenet/mesh.hpp"
#include "cagenet/skin.hpp"

namespace cagenet::fixtures {

/// clean, multi_component, non_manifold, soup, interior
std::vector<std::string> wildness_classes(const TriangleMesh& mesh);

struct CorpusEntry {
  std::string name;
  std::string wildness;  // the class the entry was built for
  TriangleMesh mesh;
  std::vector<int> vertex_labels;  // empty when not labeled
};

/// Two radius-0.225 spheres 0.1 apart along x.
TriangleMesh two_spheres();

/// Radius-0.5 body sphere around a radius-0.3 organ sphere; labels are
/// 0 on the body and 1 on the organ.
CorpusEntry organ_in_body();

/// Torso, head, arms and legs as separate overlapping closed parts.
TriangleMesh character();

/// The wild-mesh corpus, deterministic in `seed`.
std::vector<CorpusEntry> wild_corpus(std::uint64_t seed);

struct TubeFixture {
  std::string name;
  TriangleMesh mesh;
  Skeleton skeleton;
  SkinWeights weights;
  AnimationClip clip;
};

/// Capped tubes along x, mirror symmetric about x = 0, with three bones
/// (left, middle, right) and smoothstep blends at the two inner joints.
std::vector<TubeFixture> articulated_tubes(int count, std::uint64_t seed);

}  // namespace cagenet::fixtures
