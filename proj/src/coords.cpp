#include "cagenet/coords.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "cagenet/binary_io.hpp"
#include "cagenet/parallel.hpp"
#include "cagenet/spatial.hpp"

namespace cagenet {

const char* method_name(CoordMethod method) { return method == CoordMethod::mvc ? "mvc" : "harmonic"; }

CoordMethod parse_method(const std::string& name) {
  if (name == "mvc") return CoordMethod::mvc;
  if (name == "harmonic") return CoordMethod::harmonic;
  throw std::invalid_argument("unknown coordinate method: " + name);
}

namespace {

Eigen::VectorXd mvc_row(const Vec3& p, const TriangleMesh& cage, double tol) {
  const std::size_t nv = cage.vertex_count();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  std::vector<double> d(nv);
  std::vector<Vec3> u(nv);
  for (std::size_t j = 0; j < nv; ++j) {
    const Vec3 r = cage.positions[j] - p;
    d[j] = r.norm();
    if (d[j] < tol) {
      w[static_cast<Eigen::Index>(j)] = 1.0;
      return w;
    }
    u[j] = r / d[j];
  }

  for (std::size_t f = 0; f < cage.face_count(); ++f) {
    const Face& tri = cage.faces[f];
    double theta[3], c[3], s[3];
    double h = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double l = (u[tri[(i + 1) % 3]] - u[tri[(i + 2) % 3]]).norm();
      theta[i] = 2.0 * std::asin(std::min(1.0, 0.5 * l));
      h += 0.5 * theta[i];
    }
    if (std::numbers::pi - h < 1e-10) {
      // p lies on this face: planar barycentrics
      Eigen::VectorXd bary = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
      double total = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double b = std::sin(theta[i]) * d[tri[(i + 2) % 3]] * d[tri[(i + 1) % 3]];
        bary[tri[i]] += b;
        total += b;
      }
      return bary / total;
    }
    const double det = u[tri[0]].dot(u[tri[1]].cross(u[tri[2]]));
    const double sign = det < 0.0 ? -1.0 : 1.0;
    bool skip = false;
    for (int i = 0; i < 3; ++i) {
      const double sp = std::sin(theta[(i + 1) % 3]);
      const double sm = std::sin(theta[(i + 2) % 3]);
      c[i] = 2.0 * std::sin(h) * std::sin(h - theta[i]) / (sp * sm) - 1.0;
      s[i] = sign * std::sqrt(std::max(0.0, 1.0 - c[i] * c[i]));
      if (std::abs(s[i]) <= 1e-10) skip = true;
    }
    if (skip) continue;  // p is in the face plane, outside the face
    for (int i = 0; i < 3; ++i) {
      const int ip = (i + 1) % 3;
      const int im = (i + 2) % 3;
      const double num = theta[i] - c[ip] * theta[im] - c[im] * theta[ip];
      const double den = d[tri[i]] * std::sin(theta[ip]) * s[im];
      const double wi = num / den;
      if (!std::isfinite(wi)) throw CoordError("mvc: non-finite weight at triangle " + std::to_string(f));
      w[tri[i]] += wi;
    }
  }
  const double total = w.sum();
  if (!std::isfinite(total) || total == 0.0) throw CoordError("mvc: degenerate weight sum");
  return w / total;
}

}  // namespace

Eigen::VectorXd mvc_weights(const Vec3& p, const TriangleMesh& cage) {
  return mvc_row(p, cage, 1e-10 * bounds(cage).diagonal());
}

CoordinateMatrix compute_mvc_matrix(const TriangleMesh& mesh, const TriangleMesh& cage) {
  CoordinateMatrix out;
  out.method = CoordMethod::mvc;
  out.mesh_hash = content_digest(mesh);
  out.cage_hash = content_digest(cage);
  out.entries.resize(static_cast<Eigen::Index>(mesh.vertex_count()), static_cast<Eigen::Index>(cage.vertex_count()));
  const double tol = 1e-10 * bounds(cage).diagonal();
  std::vector<std::string> errors(mesh.vertex_count());
  parallel_for(mesh.vertex_count(), [&](std::size_t i) {
    try {
      out.entries.row(static_cast<Eigen::Index>(i)) = mvc_row(mesh.positions[i], cage, tol).transpose();
    } catch (const CoordError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw CoordError(errors[i] + " (vertex " + std::to_string(i) + ")", static_cast<int>(i));
  }
  return out;
}

CoordinateMatrix compute_harmonic_matrix(const TriangleMesh& mesh, const TriangleMesh& cage, int grid_dims) {
  if (grid_dims < 8) throw std::invalid_argument("harmonic grid needs at least 8 nodes per axis");
  const std::vector<double> wind = winding_numbers(mesh.positions, cage);
  for (std::size_t i = 0; i < wind.size(); ++i) {
    if (wind[i] < 0.5) {
      throw CoordError("harmonic coordinates: mesh vertex " + std::to_string(i) + " lies outside the cage",
                       static_cast<int>(i));
    }
  }

  const Bounds box = bounds(cage);
  const double pad = 2.0 * box.extent().maxCoeff() / (grid_dims - 5);
  const ScalarGrid grid = grid_covering(box, pad, grid_dims);
  const std::vector<char> inside = voxelize_interior(cage, grid);
  const std::size_t total = grid.size();

  std::vector<int> unknown(total, -1);
  int n_unknown = 0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (inside[idx]) unknown[idx] = n_unknown++;
  }
  if (n_unknown == 0) throw CoordError("harmonic coordinates: empty interior voxelization");

  // mesh vertex cells
  const Eigen::Index nc = static_cast<Eigen::Index>(cage.vertex_count());
  std::vector<std::array<int, 3>> cell(mesh.vertex_count());
  std::vector<Vec3> frac(mesh.vertex_count());
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3 q = (mesh.positions[i] - grid.origin) / grid.spacing;
    for (int a = 0; a < 3; ++a) {
      const int c = std::clamp(static_cast<int>(std::floor(q[a])), 0, grid.dims[a] - 2);
      cell[i][a] = c;
      frac[i][a] = std::clamp(q[a] - c, 0.0, 1.0);
    }
  }

  // known boundary values: hat functions at the closest cage point
  std::unordered_map<std::size_t, int> known_slot;
  std::vector<std::size_t> known_nodes;
  auto want_known = [&](std::size_t idx) {
    if (inside[idx] || known_slot.count(idx)) return;
    known_slot.emplace(idx, static_cast<int>(known_nodes.size()));
    known_nodes.push_back(idx);
  };
  const int di[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (!inside[idx]) continue;
    const auto [i, j, k] = grid.unravel(idx);
    for (const auto& o : di) want_known(grid.index(i + o[0], j + o[1], k + o[2]));
  }
  for (const auto& c : cell) {
    for (int corner = 0; corner < 8; ++corner) {
      want_known(grid.index(c[0] + (corner >> 2 & 1), c[1] + (corner >> 1 & 1), c[2] + (corner & 1)));
    }
  }
  const TriangleIndex index(cage);
  std::vector<std::array<std::pair<int, double>, 3>> hat(known_nodes.size());
  parallel_for(known_nodes.size(), [&](std::size_t s) {
    const auto [i, j, k] = grid.unravel(known_nodes[s]);
    const ClosestHit hit = index.closest(grid.node(i, j, k));
    const Face& f = cage.faces[hit.face];
    for (int a = 0; a < 3; ++a) hat[s][a] = {f[a], hit.barycentric[a]};
  });

  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> a_trip;
  std::vector<Eigen::Triplet<double>> r_trip;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (!inside[idx]) continue;
    const int row = unknown[idx];
    const auto [i, j, k] = grid.unravel(idx);
    a_trip.emplace_back(row, row, 6.0);
    for (const auto& o : di) {
      const std::size_t nb = grid.index(i + o[0], j + o[1], k + o[2]);
      if (inside[nb]) {
        a_trip.emplace_back(row, unknown[nb], -1.0);
      } else {
        for (const auto& [v, val] : hat[known_slot.at(nb)]) r_trip.emplace_back(row, v, val);
      }
    }
  }
  SpMat a(n_unknown, n_unknown);
  a.setFromTriplets(a_trip.begin(), a_trip.end());
  SpMat rhs(n_unknown, nc);
  rhs.setFromTriplets(r_trip.begin(), r_trip.end());
  Eigen::SimplicialLDLT<SpMat> solver(a);
  if (solver.info() != Eigen::Success) throw CoordError("harmonic coordinates: factorization failed");

  // interior nodes read by trilinear interpolation
  std::unordered_map<std::size_t, int> needed_slot;
  std::vector<int> needed_rows;
  for (const auto& c : cell) {
    for (int corner = 0; corner < 8; ++corner) {
      const std::size_t idx = grid.index(c[0] + (corner >> 2 & 1), c[1] + (corner >> 1 & 1), c[2] + (corner & 1));
      if (inside[idx] && !needed_slot.count(idx)) {
        needed_slot.emplace(idx, static_cast<int>(needed_rows.size()));
        needed_rows.push_back(unknown[idx]);
      }
    }
  }
  RowMatrix node_values(static_cast<Eigen::Index>(needed_rows.size()), nc);
  const Eigen::Index block = 16;
  const std::size_t blocks = static_cast<std::size_t>((nc + block - 1) / block);
  parallel_for(blocks, [&](std::size_t b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b) * block;
    const Eigen::Index width = std::min(block, nc - c0);
    const Eigen::MatrixXd dense = Eigen::MatrixXd(rhs.middleCols(c0, width));
    const Eigen::MatrixXd sol = solver.solve(dense);
    for (std::size_t s = 0; s < needed_rows.size(); ++s) {
      node_values.block(static_cast<Eigen::Index>(s), c0, 1, width) = sol.row(needed_rows[s]);
    }
  });

  CoordinateMatrix out;
  out.method = CoordMethod::harmonic;
  out.mesh_hash = content_digest(mesh);
  out.cage_hash = content_digest(cage);
  out.entries = RowMatrix::Zero(static_cast<Eigen::Index>(mesh.vertex_count()), nc);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    auto row = out.entries.row(static_cast<Eigen::Index>(i));
    for (int corner = 0; corner < 8; ++corner) {
      const int oi = corner >> 2 & 1, oj = corner >> 1 & 1, ok = corner & 1;
      const double wt = (oi ? frac[i][0] : 1.0 - frac[i][0]) * (oj ? frac[i][1] : 1.0 - frac[i][1]) *
                        (ok ? frac[i][2] : 1.0 - frac[i][2]);
      if (wt == 0.0) continue;
      const std::size_t idx = grid.index(cell[i][0] + oi, cell[i][1] + oj, cell[i][2] + ok);
      if (inside[idx]) {
        row += wt * node_values.row(needed_slot.at(idx));
      } else {
        for (const auto& [v, val] : hat[known_slot.at(idx)]) row[v] += wt * val;
      }
    }
    row /= row.sum();
  }
  return out;
}

Eigen::MatrixXd map_signal(const CoordinateMatrix& coords, const Eigen::MatrixXd& cage_values) {
  if (cage_values.rows() != coords.cols() || cage_values.cols() < 1) {
    throw std::invalid_argument("map_signal: expected " + std::to_string(coords.cols()) + " cage rows, got " +
                                std::to_string(cage_values.rows()) + "x" + std::to_string(cage_values.cols()));
  }
  return coords.entries * cage_values;
}

Eigen::MatrixXd average_to_faces(const TriangleMesh& mesh, const Eigen::MatrixXd& vertex_values) {
  if (vertex_values.rows() != static_cast<Eigen::Index>(mesh.vertex_count())) {
    throw std::invalid_argument("average_to_faces: row count differs from vertex count");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mesh.face_count()), vertex_values.cols());
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& t = mesh.faces[f];
    out.row(static_cast<Eigen::Index>(f)) =
        (vertex_values.row(t[0]) + vertex_values.row(t[1]) + vertex_values.row(t[2])) / 3.0;
  }
  return out;
}

std::string encode_coords(const CoordinateMatrix& coords) {
  ByteWriter w;
  w.magic("GBC1");
  w.u8(static_cast<std::uint8_t>(coords.method));
  w.u32(static_cast<std::uint32_t>(coords.rows()));
  w.u32(static_cast<std::uint32_t>(coords.cols()));
  w.u64(coords.mesh_hash);
  w.u64(coords.cage_hash);
  for (Eigen::Index i = 0; i < coords.rows(); ++i)
    for (Eigen::Index j = 0; j < coords.cols(); ++j) w.f64(coords.entries(i, j));
  return w.bytes();
}

CoordinateMatrix decode_coords(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("GBC1");
  CoordinateMatrix c;
  const std::uint8_t m = r.u8();
  if (m > 1) throw std::runtime_error("GBC1: unknown method byte");
  c.method = static_cast<CoordMethod>(m);
  const std::uint32_t n = r.u32();
  const std::uint32_t k = r.u32();
  c.mesh_hash = r.u64();
  c.cage_hash = r.u64();
  c.entries.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) c.entries(i, j) = r.f64();
  if (!r.at_end()) throw std::runtime_error("GBC1: trailing bytes");
  return c;
}

void save_coords(const std::filesystem::path& path, const CoordinateMatrix& coords) {
  write_file_atomic(path, encode_coords(coords));
}

CoordinateMatrix load_coords(const std::filesystem::path& path) { return decode_coords(read_file(path)); }

}  // namespace cagenet
