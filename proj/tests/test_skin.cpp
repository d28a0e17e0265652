#include <cmath>
#include <random>

#include "doctest.h"

#include "cagenet/shapes.hpp"
#include "cagenet/skin.hpp"

using namespace cagenet;

namespace {

Eigen::Matrix3d rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

SkinWeights random_weights(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  SkinWeights w(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < k; ++b) w(i, b) = e(rng) * e(rng);
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

SkinWeights rows(std::initializer_list<std::initializer_list<double>> r) {
  SkinWeights w(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index b = 0;
    for (double v : row) w(i, b++) = v;
    ++i;
  }
  return w;
}

}  // namespace

TEST_CASE("Skeleton validation and JSON") {
  Skeleton s;
  s.joints = {{"root", Vec3(0, 0, 0), -1}, {"a", Vec3(1, 0, 0), 0}, {"b", Vec3(2, 0, 0), 1}};
  s.bones = {{0, 1}, {1, 2}};
  CHECK_NOTHROW(s.validate());
  const Skeleton back = skeleton_from_json(skeleton_to_json(s));
  REQUIRE(back.joints.size() == 3);
  CHECK(back.joints[2].position == s.joints[2].position);
  CHECK(back.joints[1].parent == 0);
  CHECK(back.bones == s.bones);

  Skeleton cyc = s;
  cyc.joints[0].parent = 2;
  CHECK_THROWS(cyc.validate());
  Skeleton two_roots = s;
  two_roots.joints[2].parent = -1;
  CHECK_THROWS(two_roots.validate());
  Skeleton bad_bone = s;
  bad_bone.bones.push_back({0, 7});
  CHECK_THROWS(bad_bone.validate());
  CHECK_THROWS(skeleton_from_json("{\"joints\": 3}"));
}

TEST_CASE("weights and clip JSON round trip") {
  const SkinWeights w = random_weights(5, 3, 1);
  CHECK(weights_from_json(weights_to_json(w)) == w);
  CHECK_THROWS(weights_from_json("[[1, 0], [1]]"));

  AnimationClip clip;
  clip.frames.push_back({rotation_about(rot(Vec3(0, 0, 1), 0.3), Vec3(1, 2, 3)), BoneTransform{}});
  const AnimationClip back = clip_from_json(clip_to_json(clip));
  REQUIRE(back.frames.size() == 1);
  CHECK(back.frames[0][0].rotation == clip.frames[0][0].rotation);
  CHECK(back.frames[0][0].translation == clip.frames[0][0].translation);
  CHECK_NOTHROW(back.validate(2));
  CHECK_THROWS(back.validate(3));
  AnimationClip skew = clip;
  skew.frames[0][1].rotation(0, 1) = 0.1;
  CHECK_THROWS(skew.validate(2));
}

TEST_CASE("lbs_deform") {
  const TriangleMesh mesh = shapes::icosphere(1);
  const SkinWeights w = random_weights(static_cast<Eigen::Index>(mesh.vertex_count()), 2, 3);
  SUBCASE("identity") {
    const TriangleMesh out = lbs_deform(mesh, w, Frame(2));
    CHECK(out.positions == mesh.positions);
  }
  SUBCASE("single bone translation") {
    BoneTransform t;
    t.translation = Vec3(0.1, -0.2, 0.3);
    const SkinWeights one = SkinWeights::Ones(static_cast<Eigen::Index>(mesh.vertex_count()), 1);
    const TriangleMesh out = lbs_deform(mesh, one, {t});
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) CHECK((out.positions[i] - mesh.positions[i] - t.translation).norm() <= 1e-15);
  }
  SUBCASE("half and half") {
    BoneTransform a, b;
    a.translation = Vec3(1, 0, 0);
    b.translation = Vec3(0, 3, 0);
    const SkinWeights half = SkinWeights::Constant(static_cast<Eigen::Index>(mesh.vertex_count()), 2, 0.5);
    const TriangleMesh out = lbs_deform(mesh, half, {a, b});
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) CHECK((out.positions[i] - mesh.positions[i] - Vec3(0.5, 1.5, 0)).norm() <= 1e-15);
  }
  SUBCASE("rigid-motion equivariance") {
    const Frame frame = {rotation_about(rot(Vec3(1, 1, 0), 0.7), Vec3(0.2, 0, 0)),
                         rotation_about(rot(Vec3(0, 1, 1), -0.4), Vec3(0, 0.5, 0))};
    const BoneTransform g{rot(Vec3(1, 2, 3), 1.1), Vec3(0.3, -0.7, 2.0)};
    Frame moved;
    for (const BoneTransform& t : frame) moved.push_back({g.rotation * t.rotation, g.rotation * t.translation + g.translation});
    const TriangleMesh a = lbs_deform(mesh, w, frame);
    const TriangleMesh b = lbs_deform(mesh, w, moved);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) CHECK((g.apply(a.positions[i]) - b.positions[i]).norm() <= 1e-10);
  }
  CHECK_THROWS(lbs_deform(mesh, w, Frame(3)));
}

TEST_CASE("sparsify_weights") {
  CHECK(sparsify_weights(rows({{0.7, 0.3}}), 0.2) == rows({{0.7, 0.3}}));
  CHECK(sparsify_weights(rows({{0.85, 0.15}}), 0.2) == rows({{1.0, 0.0}}));
  CHECK(sparsify_weights(rows({{0.19, 0.19, 0.19, 0.19, 0.24}}), 0.2) == rows({{0, 0, 0, 0, 1}}));
  CHECK(sparsify_weights(rows({{0.15, 0.18, 0.17, 0.16, 0.17, 0.17}}), 0.2) == rows({{0, 1, 0, 0, 0, 0}}));
  const SkinWeights w = random_weights(200, 5, 9);
  const SkinWeights s = sparsify_weights(w, 0.2);
  CHECK_NOTHROW(validate_weights(s, 1e-15));
  CHECK_THROWS(sparsify_weights(w, 1.0));
}

TEST_CASE("metric_avg_l1") {
  CHECK(metric_avg_l1(rows({{1, 0}}), rows({{1, 0}})) == 0.0);
  CHECK(metric_avg_l1(rows({{1, 0}}), rows({{0, 1}})) == doctest::Approx(2.0));
  CHECK(metric_avg_l1(rows({{0.5, 0.5}, {0.7, 0.3}}), rows({{0.6, 0.4}, {0.4, 0.6}})) == doctest::Approx(0.4));
  CHECK_THROWS(metric_avg_l1(rows({{1, 0}}), rows({{1, 0, 0}})));
}

TEST_CASE("metric_prf1") {
  const SkinWeights w = random_weights(50, 4, 2);
  const PrecisionRecall same = metric_prf1(w, w);
  CHECK(same.precision == 100.0);
  CHECK(same.recall == 100.0);
  CHECK(same.f1 == 100.0);

  const PrecisionRecall spread = metric_prf1(rows({{0.25, 0.25, 0.25, 0.25}}), rows({{1, 0, 0, 0}}));
  CHECK(spread.precision == doctest::Approx(25.0));
  CHECK(spread.recall == doctest::Approx(100.0));
  CHECK(spread.f1 == doctest::Approx(40.0));

  const PrecisionRecall empty_both = metric_prf1(rows({{0, 0}}), rows({{0, 0}}));
  CHECK(empty_both.precision == 100.0);
  const PrecisionRecall empty_pred = metric_prf1(rows({{0, 0}}), rows({{1, 0}}));
  CHECK(empty_pred.precision == 0.0);
  CHECK(empty_pred.recall == 0.0);
  CHECK(empty_pred.f1 == 0.0);

  SUBCASE("recall never grows under thresholding") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SkinWeights pred = random_weights(100, 5, seed);
      const SkinWeights gt = sparsify_weights(random_weights(100, 5, seed + 100), 0.3);
      double last_r = 1000.0;
      for (double tau : {0.0, 0.05, 0.1, 0.2, 0.3, 0.45}) {
        const PrecisionRecall m = metric_prf1(sparsify_weights(pred, tau), gt);
        CHECK(m.recall <= last_r + 1e-12);
        last_r = m.recall;
      }
    }
  }
  SUBCASE("precision never drops when gt keeps the top bones") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SkinWeights pred = random_weights(100, 5, seed);
      const SkinWeights gt = sparsify_weights(pred, 0.15 + 0.02 * static_cast<double>(seed));
      double last_p = -1.0;
      for (double tau : {0.0, 0.05, 0.1, 0.2, 0.3, 0.45}) {
        const PrecisionRecall m = metric_prf1(sparsify_weights(pred, tau), gt);
        CHECK(m.precision >= last_p - 1e-12);
        last_p = m.precision;
      }
    }
  }
  SUBCASE("precision can drop for unrelated gt") {
    // gt = {0, 1}; thresholding drops the correct bone 1 but keeps the wrong bone 2
    const SkinWeights pred = rows({{0.5, 0.15, 0.35}});
    const SkinWeights gt = rows({{0.5, 0.5, 0.0}});
    CHECK(metric_prf1(sparsify_weights(pred, 0.2), gt).precision < metric_prf1(pred, gt).precision);
  }
}

TEST_CASE("metric_vertex_distance") {
  const TriangleMesh mesh = shapes::box(Vec3::Zero(), Vec3::Ones(), 1);
  const double diag = std::sqrt(3.0);
  const Eigen::Index n = static_cast<Eigen::Index>(mesh.vertex_count());
  SkinWeights gt = SkinWeights::Zero(n, 2);
  gt.col(0).setOnes();
  AnimationClip identity;
  identity.frames = {Frame(2), Frame(2)};
  const SkinWeights other = random_weights(n, 2, 4);
  const VertexDistance zero = metric_vertex_distance(mesh, other, gt, identity);
  CHECK(zero.avg == 0.0);
  CHECK(zero.max == 0.0);

  AnimationClip move;
  Frame f(2);
  f[0].translation = Vec3(diag / 10.0, 0, 0);
  move.frames = {f};
  CHECK(metric_vertex_distance(mesh, gt, gt, move).max == 0.0);
  SkinWeights pred = gt;
  pred(3, 0) = 0.0;
  pred(3, 1) = 1.0;
  const VertexDistance d = metric_vertex_distance(mesh, pred, gt, move);
  CHECK(d.max == doctest::Approx(0.1));
  CHECK(d.avg == doctest::Approx(0.1 / static_cast<double>(n)));
  CHECK_THROWS(metric_vertex_distance(mesh, pred, gt, AnimationClip{}));
}

TEST_CASE("detect_symmetric_vertices") {
  SUBCASE("mirrored mesh") {
    const TriangleMesh m = shapes::capped_cylinder(-1, 1, 0.3, 12, 9);
    const SymmetryMap s = detect_symmetric_vertices(m, 1e-9);
    CHECK(s.size() == m.vertex_count());
    for (std::size_t i = 0; i < m.vertex_count(); ++i) CHECK(s.match[s.match[i]] == static_cast<int>(i));
  }
  SUBCASE("one-sided mesh") {
    const TriangleMesh m = shapes::icosphere(1, 0.3, Vec3(1, 0, 0));
    CHECK(detect_symmetric_vertices(m, 1e-3).size() == 0);
  }
  SUBCASE("perturbed pair is excluded") {
    TriangleMesh m = shapes::capped_cylinder(-1, 1, 0.3, 12, 9);
    const SymmetryMap before = detect_symmetric_vertices(m, 1e-6);
    const int v = 5;
    const int partner = before.match[v];
    m.positions[v] += Vec3(0, 1e-3, 0);
    const SymmetryMap after = detect_symmetric_vertices(m, 1e-6);
    CHECK(after.match[v] == -1);
    CHECK(after.match[partner] == -1);
    CHECK(after.size() == m.vertex_count() - 2);
  }
}
