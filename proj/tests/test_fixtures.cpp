#include <algorithm>
#include <set>

#include "doctest.h"

#include "cagenet/cage.hpp"
#include "cagenet/fixtures.hpp"

using namespace cagenet;

TEST_CASE("wild corpus") {
  const auto corpus = fixtures::wild_corpus(7);
  CHECK(corpus.size() >= 10);
  std::set<std::string> covered;
  for (const auto& e : corpus) {
    INFO(e.name);
    e.mesh.validate();
    const auto classes = fixtures::wildness_classes(e.mesh);
    CHECK(std::find(classes.begin(), classes.end(), e.wildness) != classes.end());
    covered.insert(classes.begin(), classes.end());
  }
  CHECK(covered == std::set<std::string>{"clean", "interior", "multi_component", "non_manifold", "soup"});

  const auto again = fixtures::wild_corpus(7);
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(format_obj(corpus[i].mesh) == format_obj(again[i].mesh));
  const auto other = fixtures::wild_corpus(8);
  bool differs = false;
  for (std::size_t i = 0; i < corpus.size(); ++i) differs |= format_obj(corpus[i].mesh) != format_obj(other[i].mesh);
  CHECK(differs);
}

TEST_CASE("organ fixture labels") {
  const auto e = fixtures::organ_in_body();
  REQUIRE(e.vertex_labels.size() == e.mesh.vertex_count());
  int count = 0;
  const std::vector<int> comp = component_labels(e.mesh, &count);
  REQUIRE(count == 2);
  for (std::size_t i = 0; i < comp.size(); ++i) CHECK(e.vertex_labels[i] == comp[i]);
}

TEST_CASE("articulated tubes") {
  const auto tubes = fixtures::articulated_tubes(6, 3);
  REQUIRE(tubes.size() == 6);
  for (const auto& t : tubes) {
    INFO(t.name);
    CHECK(cage_violation(t.mesh).empty());
    t.skeleton.validate();
    REQUIRE(t.skeleton.bone_count() == 3);
    validate_weights(t.weights, 1e-12);
    t.clip.validate(3);
    const SymmetryMap sym = detect_symmetric_vertices(t.mesh, 1e-9);
    CHECK(sym.size() == t.mesh.vertex_count());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < t.weights.rows(); ++i) {
      const int j = sym.match[static_cast<std::size_t>(i)];
      worst = std::max({worst, std::abs(t.weights(i, 0) - t.weights(j, 2)), std::abs(t.weights(i, 1) - t.weights(j, 1))});
    }
    CHECK(worst == 0.0);
    // every bone dominates somewhere
    for (Eigen::Index b = 0; b < 3; ++b) CHECK(t.weights.col(b).maxCoeff() == 1.0);
  }
  CHECK(format_obj(fixtures::articulated_tubes(2, 3)[1].mesh) == format_obj(tubes[1].mesh));
  CHECK(format_obj(fixtures::articulated_tubes(2, 4)[1].mesh) != format_obj(tubes[1].mesh));
}
