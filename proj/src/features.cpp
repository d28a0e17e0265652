#include "cagenet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "cagenet/binary_io.hpp"
#include "cagenet/parallel.hpp"
#include "cagenet/spatial.hpp"

namespace cagenet {

using SpMat = Eigen::SparseMatrix<double>;

CotanOperators cotan_laplacian_mass(const TriangleMesh& mesh) {
  const Eigen::Index n = static_cast<Eigen::Index>(mesh.vertex_count());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.face_count() * 12);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.positions[f[0]];
    const Vec3& b = mesh.positions[f[1]];
    const Vec3& c = mesh.positions[f[2]];
    const double area = 0.5 * (b - a).cross(c - a).norm();
    for (int v : f) mass[v] += area / 3.0;
    for (int i = 0; i < 3; ++i) {
      const int o = f[i];
      const int p = f[(i + 1) % 3];
      const int q = f[(i + 2) % 3];
      const Vec3 u = mesh.positions[p] - mesh.positions[o];
      const Vec3 v = mesh.positions[q] - mesh.positions[o];
      const double cross = u.cross(v).norm();
      double cot = cross > 0.0 ? u.dot(v) / cross : (u.dot(v) >= 0.0 ? 1e4 : -1e4);
      cot = std::clamp(cot, -1e4, 1e4);
      const double w = 0.5 * cot;
      trip.emplace_back(p, q, -w);
      trip.emplace_back(q, p, -w);
      trip.emplace_back(p, p, w);
      trip.emplace_back(q, q, w);
    }
  }
  const double floor = 1e-12 * std::max(1e-300, mass.sum() / std::max<Eigen::Index>(1, n));
  for (Eigen::Index i = 0; i < n; ++i) mass[i] = std::max(mass[i], floor);
  CotanOperators out;
  out.stiffness.resize(n, n);
  out.stiffness.setFromTriplets(trip.begin(), trip.end());
  out.stiffness.makeCompressed();
  out.mass = mass;
  return out;
}

namespace {

void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index at;
    vectors.col(c).cwiseAbs().maxCoeff(&at);
    if (vectors(at, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

// Solves (T - shift I) x = b for symmetric tridiagonal T by LU with partial
// pivoting; tiny pivots are replaced by `tiny`.
Eigen::VectorXd tridiagonal_solve(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double shift,
                                  const Eigen::VectorXd& b, double tiny) {
  const Eigen::Index n = diag.size();
  Eigen::VectorXd u0 = diag.array() - shift, u1 = Eigen::VectorXd::Zero(n), u2 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd low = Eigen::VectorXd::Zero(n);
  std::vector<char> swapped(n, 0);
  if (n > 1) u1.head(n - 1) = sub;
  Eigen::VectorXd x = b;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    double below = sub[i];
    double next_diag = diag[i + 1] - shift;
    double next_sup = i + 2 < n ? sub[i + 1] : 0.0;
    if (std::abs(below) > std::abs(u0[i])) {
      // swap rows i and i+1
      swapped[i] = 1;
      const double m = u0[i] / below;
      low[i] = m;
      const double r1 = u1[i];
      u0[i] = below;
      u1[i] = next_diag;
      u2[i] = next_sup;
      u0[i + 1] = r1 - m * next_diag;
      u1[i + 1] = -m * next_sup;
      std::swap(x[i], x[i + 1]);
    } else {
      if (std::abs(u0[i]) < tiny) u0[i] = tiny;
      const double m = below / u0[i];
      low[i] = m;
      u0[i + 1] = next_diag - m * u1[i];
      u1[i + 1] = next_sup;
    }
    x[i + 1] -= low[i] * x[i];
  }
  if (std::abs(u0[n - 1]) < tiny) u0[n - 1] = tiny;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double v = x[i];
    if (i + 1 < n) v -= u1[i] * x[i + 1];
    if (i + 2 < n) v -= u2[i] * x[i + 2];
    x[i] = v / u0[i];
  }
  return x;
}

SpectralBasis dense_basis(const SpMat& stiffness, const Eigen::VectorXd& mass, int k) {
  const Eigen::Index n = stiffness.rows();
  const Eigen::VectorXd inv_sqrt = mass.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd a = inv_sqrt.asDiagonal() * Eigen::MatrixXd(stiffness) * inv_sqrt.asDiagonal();
  Eigen::Tridiagonalization<Eigen::MatrixXd> tri(a);
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  const Eigen::VectorXd diag = tri.diagonal() / scale;
  const Eigen::VectorXd sub = tri.subDiagonal() / scale;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenbasis: dense solver failed");
  const Eigen::VectorXd evals = es.eigenvalues();
  const double norm = evals.cwiseAbs().maxCoeff();
  const double tiny = norm * 1e-15;
  const double cluster = 1e-3 * norm;

  // inverse iteration with reorthogonalization inside clusters
  Eigen::MatrixXd z(n, k);
  std::uint64_t state = 0x2545f4914f6cdd1dULL;
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      state ^= state << 13;
      state ^= state >> 7;
      state ^= state << 17;
      x[i] = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
    }
    int first = j;
    while (first > 0 && evals[j] - evals[first - 1] <= cluster) --first;
    for (int it = 0; it < 4; ++it) {
      x = tridiagonal_solve(diag, sub, evals[j], x / x.norm(), tiny);
      for (int c = first; c < j; ++c) x -= z.col(c).dot(x) * z.col(c);
      x /= x.norm();
    }
    z.col(j) = x;
  }
  Eigen::MatrixXd v = tri.matrixQ() * z;

  // Rayleigh-Ritz on the recovered subspace
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
  v = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const Eigen::MatrixXd small = v.transpose() * a * v;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (small + small.transpose()));
  SpectralBasis out;
  out.mass = mass;
  out.eigenvalues = ritz.eigenvalues().cwiseMax(0.0);
  out.eigenvectors = inv_sqrt.asDiagonal() * (v * ritz.eigenvectors());
  return out;
}

SpectralBasis shift_invert_basis(const SpMat& stiffness, const Eigen::VectorXd& mass, int k) {
  const Eigen::Index n = stiffness.rows();
  const Eigen::Index p = std::min<Eigen::Index>(n, k + std::max(8, k / 2));
  const double sigma = 1e-8 * stiffness.diagonal().maxCoeff() / mass.maxCoeff();
  SpMat shifted = stiffness;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += sigma * mass[i];
  Eigen::SimplicialLDLT<SpMat> solver(shifted);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigenbasis: factorization failed");

  // deterministic xorshift start block
  Eigen::MatrixXd x(n, p);
  std::uint64_t state = 0x9e3779b97f4a7c15ULL;
  for (Eigen::Index c = 0; c < p; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      state ^= state << 13;
      state ^= state >> 7;
      state ^= state << 17;
      x(i, c) = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
    }
  }
  const Eigen::VectorXd sqrt_mass = mass.cwiseSqrt();
  const Eigen::VectorXd inv_sqrt_mass = sqrt_mass.cwiseInverse();
  SpectralBasis out;
  out.mass = mass;
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 500; ++iter) {
    const Eigen::MatrixXd rhs = mass.asDiagonal() * x;
    x = solver.solve(rhs);
    // M-orthonormalize
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(sqrt_mass.asDiagonal() * x);
    x = inv_sqrt_mass.asDiagonal() * (qr.householderQ() * Eigen::MatrixXd::Identity(n, p));
    const Eigen::MatrixXd lr = x.transpose() * (stiffness * x);
    const Eigen::MatrixXd mr = x.transpose() * mass.asDiagonal() * x;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(0.5 * (lr + lr.transpose()), 0.5 * (mr + mr.transpose()));
    if (ges.info() != Eigen::Success) throw std::runtime_error("eigenbasis: Rayleigh-Ritz failed");
    x = x * ges.eigenvectors();
    out.eigenvalues = ges.eigenvalues().head(k).cwiseMax(0.0);
    out.eigenvectors = x.leftCols(k);
    residual = eigen_residual(stiffness, out);
    if (residual <= 1e-9) return out;
  }
  if (residual > 1e-6) {
    throw std::runtime_error("eigenbasis: no convergence, residual " + std::to_string(residual));
  }
  return out;
}

}  // namespace

double eigen_residual(const SpMat& stiffness, const SpectralBasis& basis) {
  const double scale = stiffness.diagonal().cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index c = 0; c < basis.eigenvectors.cols(); ++c) {
    const Eigen::VectorXd phi = basis.eigenvectors.col(c);
    const Eigen::VectorXd r = stiffness * phi - basis.eigenvalues[c] * basis.mass.cwiseProduct(phi);
    worst = std::max(worst, r.norm() / (scale * phi.norm() + 1e-300));
  }
  return worst;
}

SpectralBasis eigenbasis(const SpMat& stiffness, const Eigen::VectorXd& mass, int k, int dense_limit) {
  const Eigen::Index n = stiffness.rows();
  if (k < 1 || k >= n) throw std::invalid_argument("eigenbasis: need 1 <= k < vertex count");
  SpectralBasis out = n <= dense_limit ? dense_basis(stiffness, mass, k) : shift_invert_basis(stiffness, mass, k);
  // M-normalize and fix signs
  for (Eigen::Index c = 0; c < out.eigenvectors.cols(); ++c) {
    const double norm = std::sqrt(out.eigenvectors.col(c).dot(mass.cwiseProduct(out.eigenvectors.col(c))));
    out.eigenvectors.col(c) /= norm;
  }
  fix_signs(out.eigenvectors);
  return out;
}

FeatureSet concat_features(const FeatureSet& a, const FeatureSet& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_features: row count mismatch");
  FeatureSet out;
  out.values.resize(a.rows(), a.cols() + b.cols());
  out.values << a.values, b.values;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

std::vector<double> default_hks_times() {
  std::vector<double> t(16);
  for (int i = 0; i < 16; ++i) t[i] = std::pow(10.0, -2.0 + 2.0 * i / 15.0);
  return t;
}

FeatureSet hks_features(const SpectralBasis& basis, const std::vector<double>& times) {
  FeatureSet out;
  const Eigen::MatrixXd sq = basis.eigenvectors.cwiseAbs2();
  out.values.resize(sq.rows(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t c = 0; c < times.size(); ++c) {
    const Eigen::VectorXd decay = (-basis.eigenvalues * times[c]).array().exp();
    out.values.col(static_cast<Eigen::Index>(c)) = sq * decay;
    char label[32];
    std::snprintf(label, sizeof(label), "hks_t%.4g", times[c]);
    out.labels.emplace_back(label);
  }
  return out;
}

FeatureSet position_features(const TriangleMesh& cage) {
  FeatureSet out;
  out.values.resize(static_cast<Eigen::Index>(cage.vertex_count()), 3);
  for (std::size_t i = 0; i < cage.vertex_count(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = cage.positions[i].transpose();
  out.labels = {"x", "y", "z"};
  return out;
}

namespace {

bool segment_hits_box(const Vec3& a, const Vec3& b, const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0, t1 = 1.0;
  const Vec3 d = b - a;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-300) {
      if (a[axis] < lo[axis] || a[axis] > hi[axis]) return false;
      continue;
    }
    double ta = (lo[axis] - a[axis]) / d[axis];
    double tb = (hi[axis] - a[axis]) / d[axis];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

}  // namespace

FeatureSet volumetric_geodesic_to_bones(const TriangleMesh& cage, const Skeleton& skeleton, int grid_dims) {
  skeleton.validate();
  if (grid_dims < 8) throw std::invalid_argument("geodesic grid needs at least 8 nodes per axis");
  const Bounds box = bounds(cage);
  const double pad = 2.0 * box.extent().maxCoeff() / (grid_dims - 5);
  const ScalarGrid grid = grid_covering(box, pad, grid_dims);
  const std::vector<char> inside = voxelize_interior(cage, grid);
  const double h = grid.spacing;
  const auto& dims = grid.dims;

  std::vector<std::array<int, 3>> offsets;
  std::vector<double> lengths;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        offsets.push_back({a, b, c});
        lengths.push_back(h * std::sqrt(static_cast<double>(a * a + b * b + c * c)));
      }

  // nearest interior node per cage vertex
  const std::size_t nv = cage.vertex_count();
  std::vector<std::size_t> snap_node(nv);
  std::vector<double> snap_dist(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3 q = (cage.positions[v] - grid.origin) / h;
    const int ci = static_cast<int>(std::lround(q.x()));
    const int cj = static_cast<int>(std::lround(q.y()));
    const int ck = static_cast<int>(std::lround(q.z()));
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    int found_ring = -1;
    const int max_ring = std::max({dims[0], dims[1], dims[2]});
    for (int r = 0; r <= max_ring; ++r) {
      if (found_ring >= 0 && r > 2 * found_ring + 1) break;
      for (int i = ci - r; i <= ci + r; ++i)
        for (int j = cj - r; j <= cj + r; ++j)
          for (int k = ck - r; k <= ck + r; ++k) {
            if (std::max({std::abs(i - ci), std::abs(j - cj), std::abs(k - ck)}) != r) continue;
            if (i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2]) continue;
            const std::size_t idx = grid.index(i, j, k);
            if (!inside[idx]) continue;
            const double d = (grid.node(i, j, k) - cage.positions[v]).norm();
            if (d < best || (d == best && idx < best_idx)) {
              best = d;
              best_idx = idx;
            }
            if (found_ring < 0) found_ring = r;
          }
    }
    if (found_ring < 0) throw std::runtime_error("volumetric geodesics: empty interior voxelization");
    snap_node[v] = best_idx;
    snap_dist[v] = best;
  }

  const std::size_t nb = skeleton.bone_count();
  FeatureSet out;
  out.values.resize(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nb));
  std::vector<std::string> errors(nb);
  parallel_for(nb, [&](std::size_t b) {
    const Vec3& pa = skeleton.joints[skeleton.bones[b][0]].position;
    const Vec3& pb = skeleton.joints[skeleton.bones[b][1]].position;
    std::vector<double> dist(grid.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;

    Vec3 lo = pa.cwiseMin(pb), hi = pa.cwiseMax(pb);
    std::array<int, 3> ilo{}, ihi{};
    for (int a = 0; a < 3; ++a) {
      ilo[a] = std::max(0, static_cast<int>(std::floor((lo[a] - grid.origin[a]) / h)) - 1);
      ihi[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil((hi[a] - grid.origin[a]) / h)) + 1);
    }
    for (int i = ilo[0]; i <= ihi[0]; ++i)
      for (int j = ilo[1]; j <= ihi[1]; ++j)
        for (int k = ilo[2]; k <= ihi[2]; ++k) {
          const std::size_t idx = grid.index(i, j, k);
          if (!inside[idx]) continue;
          const Vec3 c = grid.node(i, j, k);
          const double half = (0.5 + 1e-9) * h;
          if (!segment_hits_box(pa, pb, c - Vec3::Constant(half), c + Vec3::Constant(half))) continue;
          dist[idx] = segment_distance(c, pa, pb);
          queue.emplace(dist[idx], idx);
        }
    if (queue.empty()) {
      errors[b] = "volumetric geodesics: bone " + std::to_string(b) + " crosses no interior voxel";
      return;
    }
    while (!queue.empty()) {
      const auto [d, idx] = queue.top();
      queue.pop();
      if (d > dist[idx]) continue;
      const auto [i, j, k] = grid.unravel(idx);
      for (std::size_t o = 0; o < offsets.size(); ++o) {
        const int ni = i + offsets[o][0], nj = j + offsets[o][1], nk = k + offsets[o][2];
        if (ni < 0 || nj < 0 || nk < 0 || ni >= dims[0] || nj >= dims[1] || nk >= dims[2]) continue;
        const std::size_t nidx = grid.index(ni, nj, nk);
        if (!inside[nidx]) continue;
        const double nd = d + lengths[o];
        if (nd < dist[nidx]) {
          dist[nidx] = nd;
          queue.emplace(nd, nidx);
        }
      }
    }
    for (std::size_t v = 0; v < nv; ++v) {
      out.values(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(b)) = dist[snap_node[v]] + snap_dist[v];
    }
  });
  for (const std::string& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  for (std::size_t b = 0; b < nb; ++b) out.labels.push_back("geo_bone" + std::to_string(b));
  if (!out.values.allFinite()) throw std::runtime_error("volumetric geodesics: unreachable cage vertex");
  return out;
}

std::string encode_features(const FeatureSet& features) {
  if (features.labels.size() != static_cast<std::size_t>(features.cols())) {
    throw std::invalid_argument("encode_features: one label per channel required");
  }
  ByteWriter w;
  w.magic("FTS1");
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  for (const std::string& l : features.labels) w.str(l);
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index j = 0; j < features.cols(); ++j) w.f64(features.values(i, j));
  return w.bytes();
}

FeatureSet decode_features(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("FTS1");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  FeatureSet out;
  for (std::uint32_t c = 0; c < d; ++c) out.labels.push_back(r.str());
  out.values.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out.values(i, j) = r.f64();
  if (!r.at_end()) throw std::runtime_error("FTS1: trailing bytes");
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureSet& features) {
  write_file_atomic(path, encode_features(features));
}

FeatureSet load_features(const std::filesystem::path& path) { return decode_features(read_file(path)); }

}  // namespace cagenet
