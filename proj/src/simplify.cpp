#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/Dense>

#include "cagenet/cage.hpp"

namespace cagenet {

namespace {

using Quadric = Eigen::Matrix4d;

Quadric plane_quadric(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 cross = (b - a).cross(c - a);
  const double norm = cross.norm();
  if (norm == 0.0) return Quadric::Zero();
  const Vec3 n = cross / norm;
  Eigen::Vector4d plane(n.x(), n.y(), n.z(), -n.dot(a));
  return (0.5 * norm) * (plane * plane.transpose());
}

double quadric_cost(const Quadric& q, const Vec3& p) {
  const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  return std::max(0.0, h.dot(q * h));
}

struct Candidate {
  double cost;
  int a;
  int b;
  unsigned stamp_a;
  unsigned stamp_b;
  Vec3 target;
  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (a != o.a) return a > o.a;
    return b > o.b;
  }
};

class EdgeCollapser {
 public:
  explicit EdgeCollapser(const TriangleMesh& mesh)
      : positions_(mesh.positions),
        faces_(mesh.faces),
        face_alive_(mesh.face_count(), 1),
        vertex_faces_(mesh.vertex_count()),
        quadrics_(mesh.vertex_count(), Quadric::Zero()),
        stamp_(mesh.vertex_count(), 0),
        alive_faces_(static_cast<int>(mesh.face_count())) {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Face& t = faces_[f];
      const Quadric q = plane_quadric(positions_[t[0]], positions_[t[1]], positions_[t[2]]);
      for (int v : t) {
        vertex_faces_[v].push_back(static_cast<int>(f));
        quadrics_[v] += q;
      }
    }
  }

  bool run(int target_faces) {
    // Rejected edges are dropped from the queue; a later pass re-seeds them
    // since neighbouring collapses may have made them legal.
    for (int pass = 0; pass < 8 && alive_faces_ > target_faces; ++pass) {
      const int before = alive_faces_;
      heap_ = {};
      for (std::size_t f = 0; f < faces_.size(); ++f) {
        if (!face_alive_[f]) continue;
        const Face& t = faces_[f];
        for (int k = 0; k < 3; ++k) {
          const int a = t[k];
          const int b = t[(k + 1) % 3];
          if (a < b) push_candidate(a, b);
        }
      }
      while (alive_faces_ > target_faces && alive_faces_ > 4 && !heap_.empty()) {
        const Candidate c = heap_.top();
        heap_.pop();
        if (c.stamp_a != stamp_[c.a] || c.stamp_b != stamp_[c.b]) continue;
        collapse(c.a, c.b, c.target);
      }
      if (alive_faces_ == before) break;
    }
    return alive_faces_ <= target_faces;
  }

  TriangleMesh result() const {
    TriangleMesh out;
    std::vector<int> remap(positions_.size(), -1);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      Face t;
      for (int k = 0; k < 3; ++k) {
        int& r = remap[faces_[f][k]];
        if (r < 0) {
          r = static_cast<int>(out.positions.size());
          out.positions.push_back(positions_[faces_[f][k]]);
        }
        t[k] = r;
      }
      out.faces.push_back(t);
    }
    return out;
  }

 private:
  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int f : vertex_faces_[v]) {
      if (!face_alive_[f]) continue;
      for (int w : faces_[f])
        if (w != v) out.push_back(w);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  Vec3 optimal_position(const Quadric& q, int a, int b) const {
    const Eigen::Matrix3d m = q.topLeftCorner<3, 3>();
    const Vec3 rhs = -q.topRightCorner<3, 1>();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m);
    const Vec3 ev = eig.eigenvalues();
    if (ev.maxCoeff() > 0.0 && ev.minCoeff() > 1e-8 * ev.maxCoeff()) {
      const Vec3 x = eig.eigenvectors() * ((eig.eigenvectors().transpose() * rhs).cwiseQuotient(ev));
      // keep the solution near the edge; far-away minimizers come from near-singular forms
      const double len = (positions_[a] - positions_[b]).norm();
      const Vec3 mid = 0.5 * (positions_[a] + positions_[b]);
      if ((x - mid).norm() <= 2.0 * len + 1e-12) return x;
    }
    return 0.5 * (positions_[a] + positions_[b]);
  }

  void push_candidate(int a, int b) {
    if (a > b) std::swap(a, b);
    const Quadric q = quadrics_[a] + quadrics_[b];
    const Vec3 target = optimal_position(q, a, b);
    heap_.push({quadric_cost(q, target), a, b, stamp_[a], stamp_[b], target});
  }

  bool collapse(int a, int b, const Vec3& target) {
    // faces on the edge
    std::vector<int> edge_faces;
    for (int f : vertex_faces_[a]) {
      if (!face_alive_[f]) continue;
      const Face& t = faces_[f];
      if (t[0] == b || t[1] == b || t[2] == b) edge_faces.push_back(f);
    }
    if (edge_faces.size() != 2) return false;

    std::vector<int> opposite;
    for (int f : edge_faces)
      for (int w : faces_[f])
        if (w != a && w != b) opposite.push_back(w);
    std::sort(opposite.begin(), opposite.end());
    if (opposite.size() != 2 || opposite[0] == opposite[1]) return false;

    const std::vector<int> na = neighbors(a);
    const std::vector<int> nb = neighbors(b);
    std::vector<int> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    if (common != opposite) return false;

    // reject normal flips and slivers among surviving faces
    for (int v : {a, b}) {
      for (int f : vertex_faces_[v]) {
        if (!face_alive_[f] || f == edge_faces[0] || f == edge_faces[1]) continue;
        const Face& t = faces_[f];
        Vec3 p[3];
        for (int k = 0; k < 3; ++k) p[k] = (t[k] == a || t[k] == b) ? target : positions_[t[k]];
        const Vec3 before = (positions_[t[1]] - positions_[t[0]]).cross(positions_[t[2]] - positions_[t[0]]);
        const Vec3 after = (p[1] - p[0]).cross(p[2] - p[0]);
        if (before.dot(after) <= 0.0) return false;
        if (after.squaredNorm() < 1e-12 * before.squaredNorm()) return false;
      }
    }

    for (int f : edge_faces) {
      face_alive_[f] = 0;
      --alive_faces_;
    }
    for (int f : vertex_faces_[b]) {
      if (!face_alive_[f]) continue;
      for (int& w : faces_[f])
        if (w == b) w = a;
      vertex_faces_[a].push_back(f);
    }
    vertex_faces_[b].clear();
    std::vector<int>& fa = vertex_faces_[a];
    fa.erase(std::remove_if(fa.begin(), fa.end(), [&](int f) { return !face_alive_[f]; }), fa.end());
    std::sort(fa.begin(), fa.end());
    fa.erase(std::unique(fa.begin(), fa.end()), fa.end());

    positions_[a] = target;
    quadrics_[a] += quadrics_[b];
    ++stamp_[a];
    ++stamp_[b];
    for (int w : neighbors(a)) push_candidate(a, w);
    return true;
  }

  std::vector<Vec3> positions_;
  std::vector<Face> faces_;
  std::vector<char> face_alive_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<Quadric> quadrics_;
  std::vector<unsigned> stamp_;
  int alive_faces_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

}  // namespace

SimplifyResult simplify_qem(const TriangleMesh& mesh, int target_faces) {
  if (static_cast<int>(mesh.face_count()) <= target_faces) return {mesh, true};
  EdgeCollapser collapser(mesh);
  const bool reached = collapser.run(target_faces);
  return {collapser.result(), reached};
}

}  // namespace cagenet
