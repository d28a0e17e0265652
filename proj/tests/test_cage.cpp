#include <chrono>
#include <cmath>
#include <limits>

#include "doctest.h"

#include "cagenet/cage.hpp"
#include "cagenet/shapes.hpp"

using namespace cagenet;

namespace {

ScalarGrid analytic_grid(int n, double half_extent, auto&& field) {
  ScalarGrid g;
  g.dims = {n, n, n};
  g.spacing = 2.0 * half_extent / (n - 1);
  g.origin = Vec3::Constant(-half_extent);
  g.values.resize(g.size());
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const auto [i, j, k] = g.unravel(idx);
    g.values[idx] = field(g.node(i, j, k));
  }
  return g;
}

// Oracle: min over all vertex/face pairs in both directions.
double brute_force_gap(const TriangleMesh& a, const TriangleMesh& b) {
  double best = std::numeric_limits<double>::infinity();
  auto sweep = [&](const TriangleMesh& from, const TriangleMesh& to) {
    for (const Vec3& p : from.positions)
      for (const Face& f : to.faces)
        best = std::min(best, point_triangle_distance(p, to.positions[f[0]], to.positions[f[1]], to.positions[f[2]]).distance);
  };
  sweep(a, b);
  sweep(b, a);
  return best;
}

double max_distance_to(const TriangleMesh& from, const TriangleMesh& to) {
  const TriangleIndex index(to);
  double worst = 0.0;
  for (const Vec3& p : from.positions) worst = std::max(worst, index.closest(p).distance);
  return worst;
}

}  // namespace

TEST_CASE("marching_cubes on an analytic sphere") {
  const double r = 0.6;
  const ScalarGrid g = analytic_grid(40, 1.0, [](const Vec3& p) { return p.norm(); });
  const TriangleMesh m = marching_cubes(g, r);
  REQUIRE(m.face_count() > 100);
  for (const Vec3& v : m.positions) CHECK(std::abs(v.norm() - r) <= g.spacing);
  const TopologyReport rep = topology_report(m);
  CHECK(rep.is_closed);
  CHECK(rep.is_edge_manifold);
  CHECK(rep.is_vertex_manifold);
  CHECK(rep.component_count == 1);
  CHECK(signed_volume(m) > 0.0);  // normals point toward increasing values
  CHECK(std::abs(winding_number(Vec3::Zero(), m) - 1.0) < 1e-9);
}

TEST_CASE("marching_cubes errors") {
  const ScalarGrid constant = analytic_grid(8, 1.0, [](const Vec3&) { return 0.3; });
  CHECK_THROWS_AS(marching_cubes(constant, 0.31), CageError);
  CHECK_THROWS_AS(marching_cubes(constant, 0.29), CageError);
  const ScalarGrid sphere = analytic_grid(16, 1.0, [](const Vec3& p) { return p.norm(); });
  CHECK_THROWS_AS(marching_cubes(sphere, 1.2), CageError);  // clipped by the boundary
}

TEST_CASE("marching_cubes on a noisy field stays manifold") {
  // random-ish trigonometric field exercises ambiguous faces
  const ScalarGrid g = analytic_grid(36, 1.0, [](const Vec3& p) {
    return p.norm() + 0.15 * std::sin(9 * p.x()) * std::cos(11 * p.y()) * std::sin(13 * p.z() + 1.0);
  });
  const TriangleMesh m = marching_cubes(g, 0.6);
  const TopologyReport rep = topology_report(m);
  CHECK(rep.is_closed);
  CHECK(rep.is_edge_manifold);
  CHECK(rep.is_vertex_manifold);
}

TEST_CASE("remove_internal_components") {
  SUBCASE("concentric spheres keep the outer one") {
    const TriangleMesh m = merge(shapes::icosphere(2, 0.3), shapes::icosphere(2, 1.0));
    const TriangleMesh out = remove_internal_components(m);
    CHECK(out.vertex_count() == shapes::icosphere(2).vertex_count());
    CHECK(bounds(out).extent().maxCoeff() == doctest::Approx(2.0));
  }
  SUBCASE("side by side spheres are both kept") {
    const TriangleMesh m = merge(shapes::icosphere(2, 0.3, Vec3(-1, 0, 0)), shapes::icosphere(2, 0.3, Vec3(1, 0, 0)));
    CHECK(remove_internal_components(m).vertex_count() == m.vertex_count());
  }
  SUBCASE("offset shell of a solid cube loses its inner shell") {
    const TriangleMesh cube = shapes::box(Vec3::Constant(-0.4), Vec3::Constant(0.4), 2);
    const ScalarGrid udf = sample_udf_grid(cube, {48, 48, 48}, 0.2);
    const TriangleMesh shells = marching_cubes(udf, 0.05);
    CHECK(topology_report(shells).component_count == 2);
    const TriangleMesh outer = remove_internal_components(shells);
    CHECK(topology_report(outer).component_count == 1);
    for (const Vec3& v : cube.positions) CHECK(winding_number(v, outer) > 0.5);
  }
}

TEST_CASE("component_gap") {
  SUBCASE("two unit spheres three apart") {
    const TriangleMesh a = shapes::icosphere(3, 1.0, Vec3(-1.5, 0, 0));
    const TriangleMesh b = shapes::icosphere(3, 1.0, Vec3(1.5, 0, 0));
    const double gap = component_gap(merge(a, b));
    CHECK(gap == doctest::Approx(brute_force_gap(a, b)).epsilon(1e-12));
    CHECK(gap == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("largest pairwise gap among three") {
    const TriangleMesh a = shapes::box(Vec3(0, 0, 0), Vec3(1, 1, 1));
    const TriangleMesh b = shapes::box(Vec3(2, 0, 0), Vec3(3, 1, 1));    // 1.0 from a
    const TriangleMesh c = shapes::box(Vec3(5.5, 0, 0), Vec3(6.5, 1, 1));  // 2.5 from b
    const double gap = component_gap(merge(merge(a, b), c));
    const double expected = std::max({brute_force_gap(a, b), brute_force_gap(b, c), brute_force_gap(a, c)});
    CHECK(gap == doctest::Approx(expected));
    CHECK(gap == doctest::Approx(4.5));
  }
  SUBCASE("touching") {
    const TriangleMesh a = shapes::box(Vec3(0, 0, 0), Vec3(1, 1, 1));
    const TriangleMesh b = shapes::box(Vec3(1, 0, 0), Vec3(2, 1, 1));
    CHECK(component_gap(merge(a, b)) == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(component_gap(shapes::icosphere(1)), CageError);
}

TEST_CASE("simplify_qem") {
  SUBCASE("under budget is unchanged") {
    const TriangleMesh m = shapes::icosphere(2);
    const SimplifyResult r = simplify_qem(m, 10000);
    CHECK(r.mesh.faces == m.faces);
    CHECK(r.mesh.positions == m.positions);
  }
  SUBCASE("planar regions collapse first") {
    // a finely tessellated cube: every interior collapse on a face plane is free
    const TriangleMesh m = shapes::box(Vec3::Zero(), Vec3::Ones(), 8);
    const SimplifyResult r = simplify_qem(m, 12 * 4);
    CHECK(r.reached_target);
    CHECK(topology_report(r.mesh).is_closed);
    // all surviving vertices stay on the cube surface
    for (const Vec3& p : r.mesh.positions) {
      const double to_surface = std::min({p.x(), p.y(), p.z(), 1 - p.x(), 1 - p.y(), 1 - p.z()});
      CHECK(std::abs(to_surface) <= 1e-9);
    }
    CHECK(signed_volume(r.mesh) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("icosphere 5120 -> 500 stays close") {
    const TriangleMesh m = shapes::icosphere(4);
    const SimplifyResult r = simplify_qem(m, 500);
    CHECK(r.mesh.face_count() <= 500);
    CHECK(r.reached_target);
    CHECK(cage_violation(r.mesh).empty());
    CHECK(max_distance_to(r.mesh, m) <= 0.02);
  }
}

TEST_CASE("generate_cage: single sphere needs no growth") {
  const TriangleMesh sphere = shapes::icosphere(3, 0.5);
  CageParams p;
  p.offset = 0.02;
  p.target_faces = 1000;
  p.max_faces = 2000;
  p.grid_dims = 64;
  p.require_enclosure = true;
  const Cage cage = generate_cage(sphere, p);
  CHECK(cage.growth.size() == 1);
  CHECK(cage.effective_offset == 0.02);
  CHECK(cage.mesh.face_count() <= 1000);
  CHECK(cage_violation(cage.mesh).empty());
  CHECK(cage.min_enclosure_winding >= 0.5);
  const double r = bounds(cage.mesh).extent().maxCoeff() / 2.0;
  CHECK(r > 0.5);
  CHECK(r < 0.5 + 0.02 + 2 * cage.grid_spacing);
}

TEST_CASE("generate_cage: two spheres grow into one component") {
  const TriangleMesh a = shapes::icosphere(3, 0.225, Vec3(-0.275, 0, 0));
  const TriangleMesh b = shapes::icosphere(3, 0.225, Vec3(0.275, 0, 0));
  CageParams p;
  p.offset = 0.01;
  p.grid_dims = 96;
  p.target_faces = 2000;
  p.max_faces = 4000;
  const Cage cage = generate_cage(merge(a, b), p);
  REQUIRE(cage.growth.size() >= 2);
  CHECK(cage.growth.front().components_after_removal == 2);
  CHECK(cage.growth.back().components_after_removal == 1);
  CHECK(cage.effective_offset >= 0.06 - cage.grid_spacing);
  CHECK(cage_violation(cage.mesh).empty());
}

TEST_CASE("generate_cage: interior organ shells are removed") {
  const TriangleMesh body = shapes::icosphere(3, 0.5);
  const TriangleMesh organ = shapes::icosphere(2, 0.15, Vec3(0.1, 0.05, 0));
  CageParams p;
  p.offset = 0.02;
  p.grid_dims = 64;
  p.target_faces = 800;
  p.max_faces = 1600;
  p.require_enclosure = true;
  const Cage cage = generate_cage(merge(body, organ), p);
  CHECK(cage.growth.size() == 1);
  CHECK(cage_violation(cage.mesh).empty());
  // the cage is the outer shell: organ samples are deep inside it
  for (const Vec3& v : organ.positions) CHECK(winding_number(v, cage.mesh) > 0.99);
}

TEST_CASE("generate_cage is soup invariant") {
  const TriangleMesh m = merge(shapes::icosphere(2, 0.3, Vec3(-0.2, 0, 0)), shapes::torus(0.2, 0.06, 20, 10, Vec3(0.25, 0, 0)));
  CageParams p;
  p.offset = 0.03;
  p.grid_dims = 48;
  p.target_faces = 600;
  p.max_faces = 1200;
  const Cage clean = generate_cage(m, p);
  const Cage soup = generate_cage(make_soup(m, 0.0, 0.5, 5), p);
  CHECK(clean.mesh.faces == soup.mesh.faces);
  CHECK(clean.mesh.positions == soup.mesh.positions);
  CHECK(clean.effective_offset == soup.effective_offset);
}

TEST_CASE("generate_offset_family") {
  const TriangleMesh m = shapes::icosphere(2, 0.45);
  CageParams p;
  p.grid_dims = 48;
  p.target_faces = 400;
  p.max_faces = 800;
  const auto family = generate_offset_family(m, {0.02, 0.03, 0.04, 0.05}, p);
  CHECK(family.size() == 4);
  for (const Cage& c : family) CHECK(cage_violation(c.mesh).empty());
  CHECK(family[0].effective_offset < family[3].effective_offset);

  p.offset = 0.02;
  const auto single = generate_offset_family(m, {0.02}, p);
  REQUIRE(single.size() == 1);
  const Cage direct = generate_cage(m, p);
  CHECK(single[0].mesh.positions == direct.mesh.positions);
  CHECK_THROWS(generate_offset_family(m, {0.02, 0.01}, p));
}
