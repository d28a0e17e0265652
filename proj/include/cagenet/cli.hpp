#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cagenet/cage.hpp"
#include "cagenet/features.hpp"
#include "cagenet/learn.hpp"
#include "cagenet/skin.hpp"

namespace cagenet::cli {

/// Exit 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exit 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kOk = 0, kIoFailure = 1, kValidationFailure = 2 };

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string hex_digest(std::uint64_t digest);
std::string file_digest(const std::filesystem::path& path);

struct CageRecord {
  double offset = 0.0;
  std::string cage, cage_digest;
  std::string coords, coords_digest;
  std::string features, features_digest;
};

struct MeshRecord {
  std::string name;
  std::string split;  // train or test
  std::string mesh, mesh_digest;
  std::string skeleton, skeleton_digest;
  std::string weights, weights_digest;
  std::string clip, clip_digest;
  std::vector<CageRecord> cages;
};

/// Paths are relative to the manifest's directory.
struct PipelineManifest {
  std::string config;  // JSON of the preparation settings
  std::string config_digest;
  std::vector<MeshRecord> meshes;
};

std::string manifest_to_json(const PipelineManifest& manifest);
PipelineManifest manifest_from_json(const std::string& text);
PipelineManifest load_manifest(const std::filesystem::path& path);

/// Throws IoError for a missing file and ValidationError for a digest mismatch.
void verify_manifest(const PipelineManifest& manifest, const std::filesystem::path& base);

struct PrepareParams {
  std::vector<double> offsets{0.02};
  CageParams cage;
  int eigs = 128;
  int geodesic_grid = 64;
};

std::string prepare_params_to_json(const PrepareParams& params);

/// HKS, positions and volumetric geodesics to each bone. The eigenbasis size
/// is capped at vertex count - 1.
FeatureSet skin_features(const TriangleMesh& cage, const Skeleton& skeleton, int eigs, int geodesic_grid);

/// Cages, MVC coordinates and features for every mesh record without cages.
void prepare_manifest(PipelineManifest& manifest, const std::filesystem::path& base, const PrepareParams& params,
                      bool quiet, std::ostream& err);

/// Loads one record for training or evaluation.
TrainingMesh load_training_mesh(const MeshRecord& record, const std::filesystem::path& base,
                                const TrainConfig& config);

}  // namespace cagenet::cli
