#include "cagenet/skin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace cagenet {

using nlohmann::json;

void Skeleton::validate() const {
  const int nj = static_cast<int>(joints.size());
  int roots = 0;
  for (int j = 0; j < nj; ++j) {
    const int p = joints[j].parent;
    if (p < -1 || p >= nj || p == j) throw std::invalid_argument("skeleton: bad parent of joint " + joints[j].name);
    if (p == -1) ++roots;
  }
  if (nj > 0 && roots != 1) throw std::invalid_argument("skeleton: expected exactly one root joint");
  for (int j = 0; j < nj; ++j) {
    int steps = 0;
    for (int p = joints[j].parent; p >= 0; p = joints[p].parent) {
      if (++steps > nj) throw std::invalid_argument("skeleton: hierarchy has a cycle");
    }
  }
  for (const auto& b : bones) {
    if (b[0] < 0 || b[1] < 0 || b[0] >= nj || b[1] >= nj || b[0] == b[1]) {
      throw std::invalid_argument("skeleton: bone endpoints must be distinct valid joints");
    }
  }
}

void validate_weights(const SkinWeights& weights, double tol) {
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    if (weights.row(i).minCoeff() < 0.0 || !weights.row(i).allFinite()) {
      throw std::invalid_argument("skin weights: negative or non-finite entry in row " + std::to_string(i));
    }
    if (std::abs(weights.row(i).sum() - 1.0) > tol) {
      throw std::invalid_argument("skin weights: row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

void AnimationClip::validate(std::size_t bone_count) const {
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].size() != bone_count) {
      throw std::invalid_argument("clip: frame " + std::to_string(f) + " has wrong transform count");
    }
    for (const BoneTransform& t : frames[f]) {
      if ((t.rotation.transpose() * t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-8) {
        throw std::invalid_argument("clip: non-orthonormal rotation in frame " + std::to_string(f));
      }
    }
  }
}

BoneTransform rotation_about(const Eigen::Matrix3d& rotation, const Vec3& pivot) {
  return {rotation, pivot - rotation * pivot};
}

TriangleMesh lbs_deform(const TriangleMesh& mesh, const SkinWeights& weights, const Frame& frame) {
  if (weights.rows() != static_cast<Eigen::Index>(mesh.vertex_count()) ||
      weights.cols() != static_cast<Eigen::Index>(frame.size())) {
    throw std::invalid_argument("lbs_deform: dimension mismatch");
  }
  TriangleMesh out = mesh;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    // v + sum_b w_b (T_b v - v): equal to sum_b w_b T_b v for unit rows, exact for identity frames
    const Vec3& v = mesh.positions[i];
    Vec3 delta = Vec3::Zero();
    for (std::size_t b = 0; b < frame.size(); ++b) {
      const double w = weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
      if (w != 0.0) delta += w * (frame[b].apply(v) - v);
    }
    out.positions[i] = v + delta;
  }
  return out;
}

SkinWeights sparsify_weights(const SkinWeights& weights, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) throw std::invalid_argument("sparsify: threshold must be in [0,1)");
  SkinWeights out = weights;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    Eigen::Index best;
    row.maxCoeff(&best);
    for (Eigen::Index b = 0; b < row.size(); ++b) {
      if (row[b] < threshold) row[b] = 0.0;
    }
    const double s = row.sum();
    if (s > 0.0) {
      row /= s;
    } else {
      row.setZero();
      row[best] = 1.0;
    }
  }
  return out;
}

namespace {

void require_same_shape(const SkinWeights& a, const SkinWeights& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

double metric_avg_l1(const SkinWeights& pred, const SkinWeights& gt) {
  require_same_shape(pred, gt, "metric_avg_l1");
  if (pred.rows() == 0) return 0.0;
  return (pred - gt).cwiseAbs().rowwise().sum().mean();
}

PrecisionRecall metric_prf1(const SkinWeights& pred, const SkinWeights& gt, double influence_threshold) {
  require_same_shape(pred, gt, "metric_prf1");
  PrecisionRecall out;
  const Eigen::Index n = pred.rows();
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    int np = 0, ng = 0, both = 0;
    for (Eigen::Index b = 0; b < pred.cols(); ++b) {
      const bool p = pred(i, b) > influence_threshold;
      const bool g = gt(i, b) > influence_threshold;
      np += p;
      ng += g;
      both += p && g;
    }
    const double precision = np > 0 ? static_cast<double>(both) / np : (ng == 0 ? 1.0 : 0.0);
    const double recall = ng > 0 ? static_cast<double>(both) / ng : (np == 0 ? 1.0 : 0.0);
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    out.precision += precision;
    out.recall += recall;
    out.f1 += f1;
  }
  out.precision *= 100.0 / n;
  out.recall *= 100.0 / n;
  out.f1 *= 100.0 / n;
  return out;
}

VertexDistance metric_vertex_distance(const TriangleMesh& mesh, const SkinWeights& pred, const SkinWeights& gt,
                                      const AnimationClip& clip) {
  require_same_shape(pred, gt, "metric_vertex_distance");
  if (clip.frames.empty()) throw std::invalid_argument("metric_vertex_distance: empty clip");
  const double diag = bounds(mesh).diagonal();
  VertexDistance out;
  double total = 0.0;
  for (const Frame& frame : clip.frames) {
    const TriangleMesh a = lbs_deform(mesh, pred, frame);
    const TriangleMesh b = lbs_deform(mesh, gt, frame);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
      const double d = (a.positions[i] - b.positions[i]).norm() / diag;
      total += d;
      out.max = std::max(out.max, d);
    }
  }
  out.avg = total / static_cast<double>(clip.frames.size() * mesh.vertex_count());
  return out;
}

std::size_t SymmetryMap::size() const {
  return static_cast<std::size_t>(std::count_if(match.begin(), match.end(), [](int m) { return m >= 0; }));
}

SymmetryMap detect_symmetric_vertices(const TriangleMesh& mesh, double tolerance) {
  SymmetryMap out;
  out.match.assign(mesh.vertex_count(), -1);
  if (mesh.empty() || !(tolerance > 0.0)) return out;
  const double cell = tolerance;
  auto key = [&](const Vec3& p) {
    return std::array<long long, 3>{static_cast<long long>(std::floor(p.x() / cell)),
                                    static_cast<long long>(std::floor(p.y() / cell)),
                                    static_cast<long long>(std::floor(p.z() / cell))};
  };
  auto hash = [](const std::array<long long, 3>& k) {
    return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
  };
  std::unordered_map<std::size_t, std::vector<int>> buckets;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) buckets[hash(key(mesh.positions[i]))].push_back(static_cast<int>(i));

  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3& p = mesh.positions[i];
    const Vec3 mirror(-p.x(), p.y(), p.z());
    const auto k = key(mirror);
    double best = std::numeric_limits<double>::infinity();
    int best_j = -1;
    for (long long a = -1; a <= 1; ++a)
      for (long long b = -1; b <= 1; ++b)
        for (long long c = -1; c <= 1; ++c) {
          auto it = buckets.find(hash({k[0] + a, k[1] + b, k[2] + c}));
          if (it == buckets.end()) continue;
          for (int j : it->second) {
            const double d = (mesh.positions[j] - mirror).norm();
            if (d <= tolerance && (d < best || (d == best && j < best_j))) {
              best = d;
              best_j = j;
            }
          }
        }
    out.match[i] = best_j;
  }
  return out;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string skeleton_to_json(const Skeleton& skeleton) {
  json j;
  j["joints"] = json::array();
  for (const Joint& jt : skeleton.joints) {
    j["joints"].push_back({{"name", jt.name}, {"position", vec_json(jt.position)}, {"parent", jt.parent}});
  }
  j["bones"] = json::array();
  for (const auto& b : skeleton.bones) j["bones"].push_back({b[0], b[1]});
  return j.dump(1);
}

Skeleton skeleton_from_json(const std::string& text) {
  const json j = parse(text);
  Skeleton s;
  try {
    for (const json& jt : j.at("joints")) {
      s.joints.push_back({jt.at("name").get<std::string>(), json_vec(jt.at("position")), jt.at("parent").get<int>()});
    }
    for (const json& b : j.at("bones")) s.bones.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("skeleton JSON: ") + e.what());
  }
  s.validate();
  return s;
}

std::string weights_to_json(const SkinWeights& weights) {
  json j = json::array();
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index b = 0; b < weights.cols(); ++b) row.push_back(weights(i, b));
    j.push_back(std::move(row));
  }
  return j.dump();
}

SkinWeights weights_from_json(const std::string& text) {
  const json j = parse(text);
  if (!j.is_array()) throw std::invalid_argument("weights JSON: expected an array of rows");
  const Eigen::Index n = static_cast<Eigen::Index>(j.size());
  const Eigen::Index k = n > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  SkinWeights w(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != k) {
      throw std::invalid_argument("weights JSON: ragged row " + std::to_string(i));
    }
    for (Eigen::Index b = 0; b < k; ++b) w(i, b) = j[i][b].get<double>();
  }
  return w;
}

std::string clip_to_json(const AnimationClip& clip) {
  json frames = json::array();
  for (const Frame& frame : clip.frames) {
    json f = json::array();
    for (const BoneTransform& t : frame) {
      json r = json::array();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r.push_back(t.rotation(a, b));
      f.push_back({{"rotation", r}, {"translation", vec_json(t.translation)}});
    }
    frames.push_back(std::move(f));
  }
  return json{{"frames", frames}}.dump();
}

AnimationClip clip_from_json(const std::string& text) {
  const json j = parse(text);
  AnimationClip clip;
  try {
    for (const json& f : j.at("frames")) {
      Frame frame;
      for (const json& t : f) {
        BoneTransform bt;
        const json& r = t.at("rotation");
        if (r.size() != 9) throw std::invalid_argument("clip JSON: rotation needs 9 numbers");
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) bt.rotation(a, b) = r[3 * a + b].get<double>();
        bt.translation = json_vec(t.at("translation"));
        frame.push_back(bt);
      }
      clip.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("clip JSON: ") + e.what());
  }
  return clip;
}

}  // namespace cagenet
