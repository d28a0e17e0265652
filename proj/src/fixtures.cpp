#include "cagenet/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "cagenet/shapes.hpp"
#include "cagenet/spatial.hpp"

namespace cagenet::fixtures {

namespace {

TriangleMesh rotated(TriangleMesh mesh, const Eigen::Matrix3d& r, const Vec3& t) {
  for (Vec3& p : mesh.positions) p = r * p + t;
  return mesh;
}

// merges vertices closer than about 1e-9
TriangleMesh weld(const TriangleMesh& mesh) {
  std::map<std::array<long long, 3>, int> seen;
  std::vector<int> remap(mesh.vertex_count());
  TriangleMesh out;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3& p = mesh.positions[i];
    const auto [it, fresh] = seen.emplace(std::array<long long, 3>{std::llround(p.x() * 1e9), std::llround(p.y() * 1e9), std::llround(p.z() * 1e9)}, static_cast<int>(out.vertex_count()));
    if (fresh) out.positions.push_back(p);
    remap[i] = it->second;
  }
  for (const Face& f : mesh.faces) out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) / 9007199254740992.0;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

TriangleMesh cylinder_along(double from, double to, double radius, int rings, const Eigen::Matrix3d& r, const Vec3& t) {
  return rotated(shapes::capped_cylinder(from, to, radius, 16, rings), r, t);
}

}  // namespace

std::vector<std::string> wildness_classes(const TriangleMesh& mesh) {
  const TopologyReport rep = topology_report(mesh);
  std::vector<std::string> out;
  const bool soup = mesh.face_count() > 1 && rep.component_count == static_cast<int>(mesh.face_count());
  if (soup) {
    out.push_back("soup");
    return out;
  }
  const bool manifold = rep.is_edge_manifold && rep.is_vertex_manifold;
  if (!manifold) out.push_back("non_manifold");
  if (rep.component_count > 1) {
    out.push_back("multi_component");
    // a closed component whose vertices all lie inside another component
    const auto comps = connected_components(mesh);
    std::vector<TriangleMesh> parts;
    for (const auto& c : comps) parts.push_back(extract_submesh(mesh, c));
    bool interior = false;
    for (std::size_t a = 0; a < parts.size() && !interior; ++a) {
      for (std::size_t b = 0; b < parts.size() && !interior; ++b) {
        if (a == b || !topology_report(parts[b]).is_closed) continue;
        const std::vector<double> w = winding_numbers(parts[a].positions, parts[b]);
        interior = std::all_of(w.begin(), w.end(), [](double x) { return std::abs(x) >= 0.5; });
      }
    }
    if (interior) out.push_back("interior");
  }
  if (out.empty() && rep.is_closed) out.push_back("clean");
  return out;
}

TriangleMesh two_spheres() {
  return merge(shapes::icosphere(3, 0.225, Vec3(-0.275, 0, 0)), shapes::icosphere(3, 0.225, Vec3(0.275, 0, 0)));
}

CorpusEntry organ_in_body() {
  CorpusEntry e;
  e.name = "organ_in_body";
  e.wildness = "interior";
  const TriangleMesh body = shapes::icosphere(3, 0.5);
  const TriangleMesh organ = shapes::icosphere(2, 0.3);
  e.mesh = merge(body, organ);
  e.vertex_labels.assign(e.mesh.vertex_count(), 0);
  std::fill(e.vertex_labels.begin() + static_cast<std::ptrdiff_t>(body.vertex_count()), e.vertex_labels.end(), 1);
  return e;
}

TriangleMesh character() {
  const Eigen::Matrix3d up = Eigen::AngleAxisd(0.5 * std::numbers::pi, Vec3::UnitZ()).toRotationMatrix();
  const Eigen::Matrix3d id = Eigen::Matrix3d::Identity();
  TriangleMesh m = cylinder_along(-0.2, 0.15, 0.12, 12, up, Vec3::Zero());            // torso
  m = merge(m, shapes::icosphere(2, 0.1, Vec3(0, 0.26, 0)));                           // head
  m = merge(m, cylinder_along(0.05, 0.42, 0.04, 10, id, Vec3(0, 0.1, 0)));            // right arm
  m = merge(m, cylinder_along(-0.42, -0.05, 0.04, 10, id, Vec3(0, 0.1, 0)));          // left arm
  m = merge(m, cylinder_along(-0.5, -0.15, 0.05, 10, up, Vec3(0.06, 0, 0)));          // right leg
  m = merge(m, cylinder_along(-0.5, -0.15, 0.05, 10, up, Vec3(-0.06, 0, 0)));         // left leg
  return m;
}

std::vector<CorpusEntry> wild_corpus(std::uint64_t seed) {
  std::vector<CorpusEntry> out;
  auto add = [&](std::string name, std::string wildness, TriangleMesh mesh) {
    out.push_back({std::move(name), std::move(wildness), std::move(mesh), {}});
  };
  add("sphere", "clean", shapes::icosphere(3, 0.45));
  add("torus", "clean", shapes::torus(0.32, 0.12, 40, 16));
  add("two_spheres", "multi_component", two_spheres());
  add("character", "multi_component", character());
  {
    // two cubes sharing one edge
    const TriangleMesh a = shapes::box(Vec3(-0.4, -0.4, -0.2), Vec3(0.0, 0.0, 0.2), 3);
    const TriangleMesh b = shapes::box(Vec3(0.0, 0.0, -0.2), Vec3(0.4, 0.4, 0.2), 3);
    add("edge_sharing_cubes", "non_manifold", weld(merge(a, b)));
  }
  {
    // box with a fin triangle on one edge
    TriangleMesh box = shapes::box(Vec3(-0.3, -0.3, -0.3), Vec3(0.3, 0.3, 0.3), 2);
    int e0 = -1, e1 = -1;
    for (std::size_t i = 0; i < box.vertex_count(); ++i) {
      const Vec3& p = box.positions[i];
      if (p.x() == 0.3 && p.y() == 0.3 && p.z() == -0.3) e0 = static_cast<int>(i);
      if (p.x() == 0.3 && p.y() == 0.3 && p.z() == 0.0) e1 = static_cast<int>(i);
    }
    const int tip = static_cast<int>(box.vertex_count());
    box.positions.emplace_back(0.45, 0.45, -0.15);
    box.faces.push_back({e0, e1, tip});
    add("fin_box", "non_manifold", box);
  }
  add("soup_torus", "soup", make_soup(shapes::torus(0.32, 0.12, 32, 12), 0.0, 0.5, seed));
  add("soup_character", "soup", make_soup(character(), 0.0, 0.5, seed + 1));
  out.push_back(organ_in_body());
  {
    // hollow shell with a loose core in the cavity
    TriangleMesh m = shapes::icosphere(3, 0.48);
    m = merge(m, shapes::flipped(shapes::icosphere(3, 0.36)));
    m = merge(m, shapes::icosphere(2, 0.15, Vec3(0.05, -0.04, 0.02)));
    add("nested_shells", "interior", m);
  }
  return out;
}

std::vector<TubeFixture> articulated_tubes(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TubeFixture> out;
  for (int t = 0; t < count; ++t) {
    TubeFixture f;
    f.name = "tube_" + std::to_string(t);
    const double length = uniform(rng, 0.8, 1.0);
    const double radius = uniform(rng, 0.08, 0.14);
    const double blend = uniform(rng, 0.03, 0.08);
    const double joint = length / 6.0 + uniform(rng, -0.03, 0.03);
    const int rings = 49 + 2 * static_cast<int>(rng() % 4);
    f.mesh = shapes::capped_cylinder(-0.5 * length, 0.5 * length, radius, 16, rings);

    f.skeleton.joints = {{"mid_left", Vec3(-joint, 0, 0), -1},
                         {"left_end", Vec3(-0.5 * length, 0, 0), 0},
                         {"mid_right", Vec3(joint, 0, 0), 0},
                         {"right_end", Vec3(0.5 * length, 0, 0), 2}};
    f.skeleton.bones = {{0, 1}, {0, 2}, {2, 3}};

    const auto n = static_cast<Eigen::Index>(f.mesh.vertex_count());
    f.weights = SkinWeights::Zero(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = f.mesh.positions[static_cast<std::size_t>(i)].x();
      const double outer = smoothstep((std::abs(x) - (joint - blend)) / (2.0 * blend));
      f.weights(i, 1) = 1.0 - outer;
      f.weights(i, x < 0.0 ? 0 : 2) = outer;
    }

    const int frames = 5;
    const double amplitude = uniform(rng, 0.3, 0.7);
    for (int k = 0; k < frames; ++k) {
      const double a = amplitude * std::sin(2.0 * std::numbers::pi * k / frames);
      const Eigen::Matrix3d rl = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
      const Eigen::Matrix3d rr = Eigen::AngleAxisd(-a, Vec3::UnitZ()).toRotationMatrix();
      f.clip.frames.push_back({rotation_about(rl, f.skeleton.joints[0].position), BoneTransform{},
                               rotation_about(rr, f.skeleton.joints[2].position)});
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace cagenet::fixtures
