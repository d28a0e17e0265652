#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "cagenet/coords.hpp"
#include "cagenet/features.hpp"
#include "cagenet/mesh.hpp"
#include "cagenet/skin.hpp"

namespace cagenet {

enum class Task { segmentation, skinning };

const char* task_name(Task task);
Task parse_task(const std::string& name);

/// Per-vertex d -> h -> out map with tanh in between, preceded by feature
/// standardization and followed by `smoothing_steps` explicit diffusion steps
/// Y <- Y - tau * D Y, where D is M^-1 L scaled so its largest diagonal is 1.
struct PredictorHead {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  Eigen::MatrixXd w1;  // h x d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x h
  Eigen::VectorXd b2;
  int smoothing_steps = 0;
  double smoothing_step = 0.5;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.rows()); }

  void validate() const;

  /// Trainable parameters (w1, b1, w2, b2), column-major.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);
  Eigen::Index parameter_count() const;
};

PredictorHead make_head(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);

/// M^-1 L divided by max_i L_ii / M_i.
Eigen::SparseMatrix<double> diffusion_operator(const CotanOperators& ops);

/// Everything the head needs from one cage of one mesh.
struct CageSample {
  TriangleMesh cage;
  FeatureSet features;
  CoordinateMatrix coords;
  Eigen::SparseMatrix<double> diffusion;
};

/// Checks that features and coordinates belong to `cage`.
CageSample make_cage_sample(TriangleMesh cage, FeatureSet features, CoordinateMatrix coords);

Eigen::MatrixXd forward(const PredictorHead& head, const FeatureSet& features,
                        const Eigen::SparseMatrix<double>& diffusion);

/// Gradient of a scalar w.r.t. head parameters given dL/dY on the cage.
Eigen::VectorXd backward(const PredictorHead& head, const FeatureSet& features,
                         const Eigen::SparseMatrix<double>& diffusion, const Eigen::MatrixXd& grad_cage_values);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
/// dL/dlogits from softmax output and dL/dprobs.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& grad_probs);

/// Segmentation: face class probabilities. Skinning: per-vertex weights.
Eigen::MatrixXd predict_mesh(const PredictorHead& head, const CageSample& sample, const TriangleMesh& mesh, Task task);

// Losses. When `grad` is given it receives dL/d(first argument).
double loss_cross_entropy_faces(const Eigen::MatrixXd& probs, const std::vector<int>& labels,
                                Eigen::MatrixXd* grad = nullptr);
/// Mean over vertices of KL(gt || pred).
double loss_kl(const SkinWeights& pred, const SkinWeights& gt, Eigen::MatrixXd* grad = nullptr);
double loss_lp(const SkinWeights& pred, double p, Eigen::MatrixXd* grad = nullptr);

using BonePairs = std::vector<std::pair<int, int>>;

BonePairs build_symmetry_pairs(const SkinWeights& gt, const SymmetryMap& symmetry, double delta_s, double eps_s);
double loss_symmetry(const SkinWeights& pred, const BonePairs& pairs, const SymmetryMap& symmetry,
                     Eigen::MatrixXd* grad = nullptr);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int decay_every = 50;
  double decay = 0.5;
  std::uint64_t seed = 0;
  double lambda_p = 0.1;
  double lambda_sym = 0.05;
  double p = 0.3;
  std::vector<double> offsets{0.02};
  double delta_s = 30.0;
  double eps_s = 1e-5;
  double symmetry_tolerance = 1e-6;
  int hidden = 64;
  int smoothing_steps = 2;
  double smoothing_step = 0.5;

  void validate() const;
};

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

struct LossTerms {
  double total = 0.0;
  double kl = 0.0;
  double lp = 0.0;
  double sym = 0.0;
};

LossTerms total_skin_loss(const SkinWeights& pred, const SkinWeights& gt, const BonePairs& pairs,
                          const SymmetryMap& symmetry, const TrainConfig& config, Eigen::MatrixXd* grad = nullptr);

struct TrainingMesh {
  TriangleMesh mesh;
  std::vector<CageSample> cages;
  std::vector<int> face_labels;  // segmentation
  SkinWeights gt;                // skinning
  SymmetryMap symmetry;
  BonePairs pairs;
};

/// Loss of one mesh through the given cage; fills dL/dparameters when asked.
/// The total is the cross-entropy for segmentation.
LossTerms evaluate_mesh(const PredictorHead& head, const TrainingMesh& item, std::size_t cage_index,
                        const TrainConfig& config, Task task, Eigen::VectorXd* grad = nullptr);

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  LossTerms loss;  // mean over meshes
};

struct TrainResult {
  PredictorHead head;
  std::vector<EpochRecord> curve;
  std::vector<std::vector<int>> cage_choices;  // [epoch][mesh]
};

/// Adam, one step per mesh per epoch, a seeded random cage per mesh per epoch.
TrainResult train(const std::vector<TrainingMesh>& data, const TrainConfig& config, Task task);

std::string curve_to_csv(const std::vector<EpochRecord>& curve);

struct OverfitResult {
  Eigen::MatrixXd cage_values;  // cage vertices x classes
  std::vector<int> predicted;
  double accuracy = 0.0;
  std::vector<double> component_accuracy;
  std::vector<double> loss;
};

/// Fits free per-cage-vertex logits so softmax(C logits) matches per-vertex
/// labels under cross-entropy.
OverfitResult overfit_cage_signal(const TriangleMesh& mesh, const CoordinateMatrix& coords,
                                  const std::vector<int>& labels, int iterations = 2000,
                                  double learning_rate = 0.05);

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

/// Max over `samples` random coordinates of |analytic - central difference| /
/// max(|analytic|, |numeric|, 1e-6), step 1e-6 * max(1, |x_i|).
double grad_check(const Objective& objective, const Eigen::VectorXd& x, int samples = 32, std::uint64_t seed = 0);

/// "HED1" binary format.
std::string encode_head(const PredictorHead& head);
PredictorHead decode_head(const std::string& bytes);
void save_head(const std::filesystem::path& path, const PredictorHead& head);
PredictorHead load_head(const std::filesystem::path& path);

}  // namespace cagenet
