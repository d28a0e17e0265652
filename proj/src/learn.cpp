#include "cagenet/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#include "cagenet/binary_io.hpp"

namespace cagenet {

using nlohmann::json;
using SpMat = Eigen::SparseMatrix<double>;

const char* task_name(Task task) { return task == Task::segmentation ? "segmentation" : "skinning"; }

Task parse_task(const std::string& name) {
  if (name == "segmentation") return Task::segmentation;
  if (name == "skinning") return Task::skinning;
  throw std::invalid_argument("unknown task: " + name);
}

void PredictorHead::validate() const {
  const Eigen::Index d = w1.cols(), h = w1.rows(), out = w2.rows();
  if (h < 1 || d < 1 || out < 1) throw std::invalid_argument("head: empty layer");
  if (b1.size() != h || w2.cols() != h || b2.size() != out || feature_mean.size() != d ||
      feature_scale.size() != d) {
    throw std::invalid_argument("head: inconsistent shapes");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite() || !feature_mean.allFinite() ||
      !feature_scale.allFinite()) {
    throw std::invalid_argument("head: non-finite parameter");
  }
  if ((feature_scale.array() <= 0.0).any()) throw std::invalid_argument("head: non-positive feature scale");
  if (smoothing_steps < 0 || !(smoothing_step >= 0.0 && smoothing_step <= 1.0)) {
    throw std::invalid_argument("head: smoothing steps >= 0 and step in [0, 1]");
  }
}

Eigen::Index PredictorHead::parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

Eigen::VectorXd PredictorHead::parameters() const {
  Eigen::VectorXd out(parameter_count());
  Eigen::Index at = 0;
  out.segment(at, w1.size()) = w1.reshaped();
  at += w1.size();
  out.segment(at, b1.size()) = b1;
  at += b1.size();
  out.segment(at, w2.size()) = w2.reshaped();
  at += w2.size();
  out.segment(at, b2.size()) = b2;
  return out;
}

void PredictorHead::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != parameter_count()) throw std::invalid_argument("head: parameter count mismatch");
  Eigen::Index at = 0;
  w1.reshaped() = params.segment(at, w1.size());
  at += w1.size();
  b1 = params.segment(at, b1.size());
  at += b1.size();
  w2.reshaped() = params.segment(at, w2.size());
  at += w2.size();
  b2 = params.segment(at, b2.size());
}

namespace {

double uniform01(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 0.5) / 9007199254740992.0; }

double normal(std::mt19937_64& rng) {
  const double u1 = uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

PredictorHead make_head(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw std::invalid_argument("make_head: dims must be >= 1");
  std::mt19937_64 rng(seed);
  PredictorHead head;
  head.feature_mean = Eigen::VectorXd::Zero(input_dim);
  head.feature_scale = Eigen::VectorXd::Ones(input_dim);
  head.w1.resize(hidden_dim, input_dim);
  head.w2.resize(output_dim, hidden_dim);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (Eigen::Index j = 0; j < head.w1.cols(); ++j)
    for (Eigen::Index i = 0; i < head.w1.rows(); ++i) head.w1(i, j) = s1 * normal(rng);
  for (Eigen::Index j = 0; j < head.w2.cols(); ++j)
    for (Eigen::Index i = 0; i < head.w2.rows(); ++i) head.w2(i, j) = s2 * normal(rng);
  head.b1 = Eigen::VectorXd::Zero(hidden_dim);
  head.b2 = Eigen::VectorXd::Zero(output_dim);
  return head;
}

SpMat diffusion_operator(const CotanOperators& ops) {
  const Eigen::Index n = ops.stiffness.rows();
  double rho = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) rho = std::max(rho, ops.stiffness.coeff(i, i) / ops.mass[i]);
  if (!(rho > 0.0)) rho = 1.0;
  const Eigen::VectorXd inv = (ops.mass * rho).cwiseInverse();
  SpMat d = inv.asDiagonal() * ops.stiffness;
  d.makeCompressed();
  return d;
}

CageSample make_cage_sample(TriangleMesh cage, FeatureSet features, CoordinateMatrix coords) {
  const auto n = static_cast<Eigen::Index>(cage.vertex_count());
  if (features.rows() != n) throw std::invalid_argument("cage sample: feature rows do not match the cage");
  if (coords.cols() != n) throw std::invalid_argument("cage sample: coordinate columns do not match the cage");
  if (coords.cage_hash != content_digest(cage)) throw std::invalid_argument("cage sample: coordinate cage digest mismatch");
  CageSample s;
  s.diffusion = diffusion_operator(cotan_laplacian_mass(cage));
  s.cage = std::move(cage);
  s.features = std::move(features);
  s.coords = std::move(coords);
  return s;
}

namespace {

struct ForwardCache {
  Eigen::MatrixXd xs;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd y;
};

ForwardCache run_forward(const PredictorHead& head, const FeatureSet& features, const SpMat& diffusion) {
  if (features.cols() != head.input_dim()) {
    throw std::invalid_argument("forward: feature width " + std::to_string(features.cols()) + " != head input " +
                                std::to_string(head.input_dim()));
  }
  if (head.smoothing_steps > 0 && diffusion.rows() != features.rows()) {
    throw std::invalid_argument("forward: diffusion operator size mismatch");
  }
  ForwardCache c;
  c.xs = (features.values.rowwise() - head.feature_mean.transpose()).array().rowwise() /
         head.feature_scale.transpose().array();
  c.hidden = ((c.xs * head.w1.transpose()).rowwise() + head.b1.transpose()).array().tanh();
  c.y = (c.hidden * head.w2.transpose()).rowwise() + head.b2.transpose();
  for (int s = 0; s < head.smoothing_steps; ++s) {
    const Eigen::MatrixXd dy = diffusion * c.y;
    c.y -= head.smoothing_step * dy;
  }
  return c;
}

}  // namespace

Eigen::MatrixXd forward(const PredictorHead& head, const FeatureSet& features, const SpMat& diffusion) {
  return run_forward(head, features, diffusion).y;
}

Eigen::VectorXd backward(const PredictorHead& head, const FeatureSet& features, const SpMat& diffusion,
                         const Eigen::MatrixXd& grad_cage_values) {
  const ForwardCache c = run_forward(head, features, diffusion);
  Eigen::MatrixXd dy = grad_cage_values;
  if (head.smoothing_steps > 0) {
    const SpMat dt = diffusion.transpose();
    for (int s = 0; s < head.smoothing_steps; ++s) {
      const Eigen::MatrixXd t = dt * dy;
      dy -= head.smoothing_step * t;
    }
  }
  const Eigen::MatrixXd dw2 = dy.transpose() * c.hidden;
  const Eigen::VectorXd db2 = dy.colwise().sum().transpose();
  const Eigen::MatrixXd da = ((dy * head.w2).array() * (1.0 - c.hidden.array().square())).matrix();
  const Eigen::MatrixXd dw1 = da.transpose() * c.xs;
  const Eigen::VectorXd db1 = da.colwise().sum().transpose();
  Eigen::VectorXd g(head.parameter_count());
  Eigen::Index at = 0;
  g.segment(at, dw1.size()) = dw1.reshaped();
  at += dw1.size();
  g.segment(at, db1.size()) = db1;
  at += db1.size();
  g.segment(at, dw2.size()) = dw2.reshaped();
  at += dw2.size();
  g.segment(at, db2.size()) = db2;
  return g;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& grad_probs) {
  const Eigen::VectorXd inner = probs.cwiseProduct(grad_probs).rowwise().sum();
  return probs.cwiseProduct(grad_probs.colwise() - inner);
}

namespace {

void check_coords(const CageSample& sample, const TriangleMesh& mesh) {
  if (sample.coords.cage_hash != content_digest(sample.cage)) {
    throw std::invalid_argument("predict: coordinate cage digest mismatch");
  }
  if (sample.coords.mesh_hash != content_digest(mesh) ||
      sample.coords.rows() != static_cast<Eigen::Index>(mesh.vertex_count())) {
    throw std::invalid_argument("predict: coordinate mesh digest mismatch");
  }
}

// transpose of average_to_faces
Eigen::MatrixXd faces_to_vertices_adjoint(const TriangleMesh& mesh, const Eigen::MatrixXd& face_grad) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mesh.vertex_count()), face_grad.cols());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) out.row(mesh.faces[f][k]) += face_grad.row(static_cast<Eigen::Index>(f)) / 3.0;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd predict_mesh(const PredictorHead& head, const CageSample& sample, const TriangleMesh& mesh, Task task) {
  check_coords(sample, mesh);
  const Eigen::MatrixXd z = map_signal(sample.coords, forward(head, sample.features, sample.diffusion));
  if (task == Task::segmentation) return softmax_rows(average_to_faces(mesh, z));
  return softmax_rows(z);
}

double loss_cross_entropy_faces(const Eigen::MatrixXd& probs, const std::vector<int>& labels, Eigen::MatrixXd* grad) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) throw std::invalid_argument("cross entropy: label count");
  if (labels.empty()) throw std::invalid_argument("cross entropy: no faces");
  const double inv = 1.0 / static_cast<double>(labels.size());
  if (grad) *grad = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  double sum = 0.0;
  for (std::size_t f = 0; f < labels.size(); ++f) {
    const int c = labels[f];
    if (c < 0 || c >= probs.cols()) {
      throw std::invalid_argument("cross entropy: label " + std::to_string(c) + " out of range at face " +
                                  std::to_string(f));
    }
    const double p = probs(static_cast<Eigen::Index>(f), c);
    if (p > 1e-12) {
      sum -= std::log(p);
      if (grad) (*grad)(static_cast<Eigen::Index>(f), c) = -inv / p;
    } else {
      sum -= std::log(1e-12);
    }
  }
  return sum * inv;
}

double loss_kl(const SkinWeights& pred, const SkinWeights& gt, Eigen::MatrixXd* grad) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw std::invalid_argument("kl: shape mismatch");
  if (pred.rows() == 0) throw std::invalid_argument("kl: empty");
  if (!(pred.array() > 0.0).all()) throw std::invalid_argument("kl: prediction entries must be positive");
  const double inv = 1.0 / static_cast<double>(pred.rows());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index b = 0; b < pred.cols(); ++b) {
      const double s = gt(i, b);
      if (s > 0.0) sum += s * std::log(s / pred(i, b));
    }
  if (grad) *grad = -inv * gt.cwiseQuotient(pred);
  return sum * inv;
}

double loss_lp(const SkinWeights& pred, double p, Eigen::MatrixXd* grad) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("lp: p must be in (0, 1]");
  constexpr double eps = 1e-12;
  const double inv = 1.0 / static_cast<double>(std::max<Eigen::Index>(pred.rows(), 1));
  const Eigen::ArrayXXd q = pred.array().square() + eps;
  if (grad) *grad = (inv * p * pred.array() * q.pow(0.5 * p - 1.0)).matrix();
  return q.pow(0.5 * p).sum() * inv;
}

BonePairs build_symmetry_pairs(const SkinWeights& gt, const SymmetryMap& symmetry, double delta_s, double eps_s) {
  if (static_cast<Eigen::Index>(symmetry.match.size()) != gt.rows()) {
    throw std::invalid_argument("symmetry pairs: map size differs from weight rows");
  }
  const Eigen::Index n = gt.rows(), k = gt.cols();
  BonePairs pairs;
  for (Eigen::Index p = 0; p < k; ++p) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (symmetry.contains(static_cast<int>(i))) mass += std::abs(gt(i, p));
    if (!(mass > delta_s)) continue;
    const double norm = static_cast<double>(n) * gt.col(p).norm();
    int best = -1;
    double best_err = std::numeric_limits<double>::infinity();
    for (Eigen::Index q = 0; q < k; ++q) {
      double sq = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int j = symmetry.match[static_cast<std::size_t>(i)];
        if (j < 0) continue;
        const double d = gt(i, p) - gt(j, q);
        sq += d * d;
      }
      const double err = std::sqrt(sq) / norm;
      if (err < best_err) {
        best_err = err;
        best = static_cast<int>(q);
      }
    }
    if (best >= 0 && best_err < eps_s) pairs.emplace_back(static_cast<int>(p), best);
  }
  return pairs;
}

double loss_symmetry(const SkinWeights& pred, const BonePairs& pairs, const SymmetryMap& symmetry,
                     Eigen::MatrixXd* grad) {
  if (grad) *grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
  if (pairs.empty()) return 0.0;
  if (static_cast<Eigen::Index>(symmetry.match.size()) != pred.rows()) {
    throw std::invalid_argument("symmetry loss: map size differs from weight rows");
  }
  const double inv = 1.0 / static_cast<double>(pred.rows());
  double sum = 0.0;
  std::vector<double> diff(pairs.size());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const int j = symmetry.match[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    double sq = 0.0;
    for (std::size_t l = 0; l < pairs.size(); ++l) {
      diff[l] = pred(i, pairs[l].first) - pred(j, pairs[l].second);
      sq += diff[l] * diff[l];
    }
    const double r = std::sqrt(sq + 1e-12);
    sum += r;
    if (grad) {
      for (std::size_t l = 0; l < pairs.size(); ++l) {
        (*grad)(i, pairs[l].first) += inv * diff[l] / r;
        (*grad)(j, pairs[l].second) -= inv * diff[l] / r;
      }
    }
  }
  return sum * inv;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning rate must be > 0");
  if (decay_every < 1 || !(decay > 0.0)) throw std::invalid_argument("config: bad decay schedule");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("config: p must be in (0, 1]");
  if (!(lambda_p >= 0.0) || !(lambda_sym >= 0.0)) throw std::invalid_argument("config: loss weights must be >= 0");
  if (offsets.empty()) throw std::invalid_argument("config: need at least one offset");
  for (double o : offsets)
    if (!(o > 0.0)) throw std::invalid_argument("config: offsets must be > 0");
  if (hidden < 1) throw std::invalid_argument("config: hidden width must be >= 1");
  if (smoothing_steps < 0 || !(smoothing_step >= 0.0 && smoothing_step <= 1.0)) {
    throw std::invalid_argument("config: bad smoothing");
  }
}

std::string config_to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"decay_every", c.decay_every},
            {"decay", c.decay},
            {"seed", c.seed},
            {"lambda_p", c.lambda_p},
            {"lambda_sym", c.lambda_sym},
            {"p", c.p},
            {"offsets", c.offsets},
            {"delta_s", c.delta_s},
            {"eps_s", c.eps_s},
            {"symmetry_tolerance", c.symmetry_tolerance},
            {"hidden", c.hidden},
            {"smoothing_steps", c.smoothing_steps},
            {"smoothing_step", c.smoothing_step}};
  return j.dump(2) + "\n";
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: expected an object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "decay_every") c.decay_every = value.get<int>();
      else if (key == "decay") c.decay = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "lambda_p") c.lambda_p = value.get<double>();
      else if (key == "lambda_sym") c.lambda_sym = value.get<double>();
      else if (key == "p") c.p = value.get<double>();
      else if (key == "offsets") c.offsets = value.get<std::vector<double>>();
      else if (key == "delta_s") c.delta_s = value.get<double>();
      else if (key == "eps_s") c.eps_s = value.get<double>();
      else if (key == "symmetry_tolerance") c.symmetry_tolerance = value.get<double>();
      else if (key == "hidden") c.hidden = value.get<int>();
      else if (key == "smoothing_steps") c.smoothing_steps = value.get<int>();
      else if (key == "smoothing_step") c.smoothing_step = value.get<double>();
      else throw std::invalid_argument("config: unknown key " + key);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

LossTerms total_skin_loss(const SkinWeights& pred, const SkinWeights& gt, const BonePairs& pairs,
                          const SymmetryMap& symmetry, const TrainConfig& config, Eigen::MatrixXd* grad) {
  LossTerms t;
  Eigen::MatrixXd g_kl, g_lp, g_sym;
  t.kl = loss_kl(pred, gt, grad ? &g_kl : nullptr);
  t.lp = loss_lp(pred, config.p, grad ? &g_lp : nullptr);
  t.sym = loss_symmetry(pred, pairs, symmetry, grad ? &g_sym : nullptr);
  t.total = t.kl + config.lambda_p * t.lp + config.lambda_sym * t.sym;
  if (grad) *grad = g_kl + config.lambda_p * g_lp + config.lambda_sym * g_sym;
  return t;
}

LossTerms evaluate_mesh(const PredictorHead& head, const TrainingMesh& item, std::size_t cage_index,
                        const TrainConfig& config, Task task, Eigen::VectorXd* grad) {
  const CageSample& sample = item.cages.at(cage_index);
  check_coords(sample, item.mesh);
  const Eigen::MatrixXd y = forward(head, sample.features, sample.diffusion);
  const Eigen::MatrixXd z = map_signal(sample.coords, y);
  LossTerms t;
  Eigen::MatrixXd dz;
  if (task == Task::segmentation) {
    const Eigen::MatrixXd probs = softmax_rows(average_to_faces(item.mesh, z));
    Eigen::MatrixXd dp;
    t.total = t.kl = loss_cross_entropy_faces(probs, item.face_labels, grad ? &dp : nullptr);
    if (grad) dz = faces_to_vertices_adjoint(item.mesh, softmax_backward(probs, dp));
  } else {
    const Eigen::MatrixXd probs = softmax_rows(z);
    Eigen::MatrixXd dp;
    t = total_skin_loss(probs, item.gt, item.pairs, item.symmetry, config, grad ? &dp : nullptr);
    if (grad) dz = softmax_backward(probs, dp);
  }
  if (grad) *grad = backward(head, sample.features, sample.diffusion, sample.coords.entries.transpose() * dz);
  return t;
}

namespace {

struct Adam {
  Eigen::VectorXd m, v;
  long step = 0;

  explicit Adam(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  void apply(Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

TrainResult train(const std::vector<TrainingMesh>& data, const TrainConfig& config, Task task) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: no meshes");
  Eigen::Index d = -1;
  int out = 0;
  for (std::size_t m = 0; m < data.size(); ++m) {
    if (data[m].cages.empty()) throw std::invalid_argument("train: mesh " + std::to_string(m) + " has no cage");
    for (const CageSample& s : data[m].cages) {
      if (d < 0) d = s.features.cols();
      if (s.features.cols() != d) throw std::invalid_argument("train: feature widths differ");
    }
    int classes = 0;
    if (task == Task::segmentation) {
      for (int l : data[m].face_labels) classes = std::max(classes, l + 1);
    } else {
      classes = static_cast<int>(data[m].gt.cols());
    }
    out = std::max(out, classes);
  }
  if (out < 1) throw std::invalid_argument("train: no targets");

  TrainResult result;
  PredictorHead head = make_head(static_cast<int>(d), config.hidden, out, config.seed);
  head.smoothing_steps = config.smoothing_steps;
  head.smoothing_step = config.smoothing_step;
  // standardization over every cage row of every mesh
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
  double rows = 0.0;
  for (const TrainingMesh& item : data)
    for (const CageSample& s : item.cages) {
      sum += s.features.values.colwise().sum().transpose();
      sq += s.features.values.array().square().matrix().colwise().sum().transpose();
      rows += static_cast<double>(s.features.rows());
    }
  head.feature_mean = sum / rows;
  const Eigen::ArrayXd var = (sq / rows).array() - head.feature_mean.array().square();
  head.feature_scale = var.max(0.0).sqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; }).matrix();

  Eigen::VectorXd params = head.parameters();
  Adam adam(params.size());
  std::mt19937_64 cage_rng(config.seed ^ 0x5851f42d4c957f2dULL);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.decay, static_cast<double>(epoch / config.decay_every));
    std::vector<int> choices(data.size());
    LossTerms mean;
    for (std::size_t m = 0; m < data.size(); ++m) {
      const std::size_t count = data[m].cages.size();
      const std::size_t c = static_cast<std::size_t>(cage_rng() % count);
      choices[m] = static_cast<int>(c);
      head.set_parameters(params);
      Eigen::VectorXd grad;
      const LossTerms t = evaluate_mesh(head, data[m], c, config, task, &grad);
      if (!std::isfinite(t.total) || !grad.allFinite()) {
        throw TrainError("train: non-finite loss at epoch " + std::to_string(epoch) + ", mesh " + std::to_string(m));
      }
      mean.total += t.total;
      mean.kl += t.kl;
      mean.lp += t.lp;
      mean.sym += t.sym;
      adam.apply(params, grad, lr);
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    mean.total *= inv;
    mean.kl *= inv;
    mean.lp *= inv;
    mean.sym *= inv;
    result.curve.push_back({epoch, mean});
    result.cage_choices.push_back(std::move(choices));
  }
  head.set_parameters(params);
  result.head = std::move(head);
  return result;
}

std::string curve_to_csv(const std::vector<EpochRecord>& curve) {
  std::string out = "epoch,total,kl,lp,sym\n";
  char line[160];
  for (const EpochRecord& r : curve) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss.total, r.loss.kl, r.loss.lp,
                  r.loss.sym);
    out += line;
  }
  return out;
}

OverfitResult overfit_cage_signal(const TriangleMesh& mesh, const CoordinateMatrix& coords,
                                  const std::vector<int>& labels, int iterations, double learning_rate) {
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  if (coords.rows() != n) throw std::invalid_argument("overfit: coordinate rows do not match the mesh");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw std::invalid_argument("overfit: one label per vertex");
  if (iterations < 0 || !(learning_rate > 0.0)) throw std::invalid_argument("overfit: bad schedule");
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("overfit: negative label");
    classes = std::max(classes, l + 1);
  }
  classes = std::max(classes, 1);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  OverfitResult r;
  r.cage_values = Eigen::MatrixXd::Zero(coords.cols(), classes);
  Eigen::VectorXd x = r.cage_values.reshaped();
  Adam adam(x.size());
  const double inv = 1.0 / static_cast<double>(std::max<Eigen::Index>(n, 1));
  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXd z = coords.entries * x.reshaped(coords.cols(), classes);
    const Eigen::MatrixXd p = softmax_rows(z);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    r.loss.push_back(loss * inv);
    const Eigen::MatrixXd dz = (p - onehot) * inv;
    const Eigen::MatrixXd g = coords.entries.transpose() * dz;
    adam.apply(x, g.reshaped(), learning_rate);
  }
  r.cage_values = x.reshaped(coords.cols(), classes);
  const Eigen::MatrixXd z = coords.entries * r.cage_values;
  r.predicted.resize(static_cast<std::size_t>(n));
  int correct = 0;
  int count = 0;
  const std::vector<int> comp = component_labels(mesh, &count);
  std::vector<int> comp_correct(static_cast<std::size_t>(count), 0), comp_total(static_cast<std::size_t>(count), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best;
    z.row(i).maxCoeff(&best);
    const auto ui = static_cast<std::size_t>(i);
    r.predicted[ui] = static_cast<int>(best);
    const bool ok = r.predicted[ui] == labels[ui];
    correct += ok;
    comp_correct[static_cast<std::size_t>(comp[ui])] += ok;
    comp_total[static_cast<std::size_t>(comp[ui])] += 1;
  }
  r.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 1.0;
  for (int c = 0; c < count; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    r.component_accuracy.push_back(comp_total[uc] ? static_cast<double>(comp_correct[uc]) / comp_total[uc] : 1.0);
  }
  return r;
}

double grad_check(const Objective& objective, const Eigen::VectorXd& x, int samples, std::uint64_t seed) {
  Eigen::VectorXd analytic;
  objective(x, &analytic);
  if (analytic.size() != x.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  std::vector<Eigen::Index> idx;
  if (samples <= 0 || samples >= x.size()) {
    for (Eigen::Index i = 0; i < x.size(); ++i) idx.push_back(i);
  } else {
    std::mt19937_64 rng(seed);
    for (int s = 0; s < samples; ++s) idx.push_back(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(x.size())));
  }
  double worst = 0.0;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i : idx) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = objective(probe, nullptr);
    probe[i] = x[i] - h;
    const double down = objective(probe, nullptr);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, err);
  }
  return worst;
}

std::string encode_head(const PredictorHead& head) {
  head.validate();
  ByteWriter w;
  w.magic("HED1");
  w.u32(static_cast<std::uint32_t>(head.input_dim()));
  w.u32(static_cast<std::uint32_t>(head.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(head.output_dim()));
  w.u32(static_cast<std::uint32_t>(head.smoothing_steps));
  w.f64(head.smoothing_step);
  for (double v : head.feature_mean) w.f64(v);
  for (double v : head.feature_scale) w.f64(v);
  const Eigen::VectorXd p = head.parameters();
  for (double v : p) w.f64(v);
  return w.bytes();
}

PredictorHead decode_head(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("HED1");
  const std::uint32_t d = r.u32(), h = r.u32(), out = r.u32();
  if (d == 0 || h == 0 || out == 0 || d > (1u << 20) || h > (1u << 20) || out > (1u << 20)) {
    throw std::runtime_error("HED1: bad dimensions");
  }
  PredictorHead head;
  head.smoothing_steps = static_cast<int>(r.u32());
  head.smoothing_step = r.f64();
  head.feature_mean.resize(d);
  head.feature_scale.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) head.feature_mean[i] = r.f64();
  for (std::uint32_t i = 0; i < d; ++i) head.feature_scale[i] = r.f64();
  head.w1.resize(h, d);
  head.b1.resize(h);
  head.w2.resize(out, h);
  head.b2.resize(out);
  Eigen::VectorXd p(head.parameter_count());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = r.f64();
  if (!r.at_end()) throw std::runtime_error("HED1: trailing bytes");
  head.set_parameters(p);
  head.validate();
  return head;
}

void save_head(const std::filesystem::path& path, const PredictorHead& head) { write_file_atomic(path, encode_head(head)); }

PredictorHead load_head(const std::filesystem::path& path) { return decode_head(read_file(path)); }

}  // namespace cagenet
