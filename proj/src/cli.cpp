#include "cagenet/cli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cagenet/binary_io.hpp"
#include "cagenet/coords.hpp"
#include "cagenet/fixtures.hpp"
#include "cagenet/parallel.hpp"

namespace cagenet::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

std::string read_bytes(const fs::path& path) {
  try {
    return read_file(path);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  try {
    write_file_atomic(path, bytes);
  } catch (const std::exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_bytes(path, j.dump(2) + "\n"); }

// malformed files count as I/O failures
template <typename Fn>
auto decode_file(const fs::path& path, Fn&& fn) {
  const std::string bytes = read_bytes(path);
  try {
    return fn(bytes);
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

TriangleMesh read_mesh(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return parse_obj(b); });
}
CoordinateMatrix read_coords(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return decode_coords(b); });
}
FeatureSet read_features(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return decode_features(b); });
}
Skeleton read_skeleton(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return skeleton_from_json(b); });
}
Eigen::MatrixXd read_matrix(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return weights_from_json(b); });
}
AnimationClip read_clip(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return clip_from_json(b); });
}
PredictorHead read_head(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return decode_head(b); });
}
std::vector<int> read_labels(const fs::path& p) {
  return decode_file(p, [](const std::string& b) { return json::parse(b).get<std::vector<int>>(); });
}

void require_valid_cage(const TriangleMesh& cage) {
  const std::string v = cage_violation(cage);
  if (!v.empty()) throw ValidationError("invalid cage: " + v);
}

json topology_json(const TopologyReport& t) {
  return {{"is_edge_manifold", t.is_edge_manifold},         {"is_vertex_manifold", t.is_vertex_manifold},
          {"is_closed", t.is_closed},                       {"component_count", t.component_count},
          {"nonmanifold_edge_count", t.nonmanifold_edge_count}, {"boundary_edge_count", t.boundary_edge_count},
          {"duplicate_vertex_count", t.duplicate_vertex_count}, {"degenerate_face_count", t.degenerate_face_count}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// cage

struct CageOpts {
  std::string input, out, report;
  CageParams params;
};

int cmd_cage(const CageOpts& o, const Globals& g, std::ostream& out) {
  const TriangleMesh mesh = read_mesh(o.input);
  const Cage cage = generate_cage(mesh, o.params);
  const std::string text = format_obj(cage.mesh);
  const TopologyReport topo = topology_report(cage.mesh);
  json growth = json::array();
  for (const GrowthStep& s : cage.growth) {
    growth.push_back({{"offset", s.offset},
                      {"components_before_removal", s.components_before_removal},
                      {"components_after_removal", s.components_after_removal},
                      {"gap", s.gap}});
  }
  const json report = {{"input_digest", hex_digest(content_digest(mesh))},
                       {"cage_digest", hex_digest(content_digest(parse_obj(text)))},
                       {"requested_offset", o.params.offset},
                       {"effective_offset", cage.effective_offset},
                       {"grid_dims", o.params.grid_dims},
                       {"grid_spacing", cage.grid_spacing},
                       {"face_count", cage.mesh.face_count()},
                       {"vertex_count", cage.mesh.vertex_count()},
                       {"component_count", topo.component_count},
                       {"topology", topology_json(topo)},
                       {"require_enclosure", o.params.require_enclosure},
                       {"min_enclosure_winding", cage.min_enclosure_winding},
                       {"face_budget_used", cage.face_budget_used},
                       {"simplification_reached_target", cage.simplification_reached_target},
                       {"growth", growth}};
  write_bytes(o.out, text);
  if (!o.report.empty()) write_json(o.report, report);
  if (!g.quiet) {
    out << "cage: " << cage.mesh.vertex_count() << " vertices, " << cage.mesh.face_count()
        << " faces, effective offset " << cage.effective_offset << "\n";
  }
  return kOk;
}

// coords

struct CoordsOpts {
  std::string mesh, cage, method = "mvc", out, report;
  int grid = 48;
};

int cmd_coords(const CoordsOpts& o, const Globals& g, std::ostream& out) {
  const CoordMethod method = parse_method(o.method);
  const TriangleMesh mesh = read_mesh(o.mesh);
  const TriangleMesh cage = read_mesh(o.cage);
  require_valid_cage(cage);
  const CoordinateMatrix c =
      method == CoordMethod::mvc ? compute_mvc_matrix(mesh, cage) : compute_harmonic_matrix(mesh, cage, o.grid);
  write_bytes(o.out, encode_coords(c));
  if (!o.report.empty()) {
    const Eigen::VectorXd sums = c.entries.rowwise().sum();
    json r = {{"method", method_name(method)},
              {"rows", c.rows()},
              {"cols", c.cols()},
              {"mesh_digest", hex_digest(c.mesh_hash)},
              {"cage_digest", hex_digest(c.cage_hash)},
              {"min_entry", c.entries.size() ? c.entries.minCoeff() : 0.0},
              {"max_row_sum_error", sums.size() ? (sums.array() - 1.0).abs().maxCoeff() : 0.0}};
    write_json(o.report, r);
  }
  if (!g.quiet) out << "coords: " << c.rows() << " x " << c.cols() << " " << method_name(method) << "\n";
  return kOk;
}

// map

struct MapOpts {
  std::string coords, mesh, cage, values, out;
  bool faces = false;
};

int cmd_map(const MapOpts& o, const Globals& g, std::ostream& out) {
  const CoordinateMatrix c = read_coords(o.coords);
  const TriangleMesh mesh = read_mesh(o.mesh);
  const TriangleMesh cage = read_mesh(o.cage);
  if (c.mesh_hash != content_digest(mesh)) throw ValidationError("map: coordinates were computed for another mesh");
  if (c.cage_hash != content_digest(cage)) throw ValidationError("map: coordinates were computed for another cage");
  const Eigen::MatrixXd values = read_matrix(o.values);
  if (values.rows() != c.cols()) {
    throw ValidationError("map: expected " + std::to_string(c.cols()) + " cage rows, got " +
                          std::to_string(values.rows()));
  }
  Eigen::MatrixXd mapped = map_signal(c, values);
  if (o.faces) mapped = average_to_faces(mesh, mapped);
  write_bytes(o.out, weights_to_json(mapped) + "\n");
  if (!g.quiet) out << "map: " << mapped.rows() << " rows\n";
  return kOk;
}

// features

struct FeaturesOpts {
  std::string cage, skeleton, out, kinds = "hks,positions";
  int eigs = 128;
  int geodesic_grid = 64;
};

int cmd_features(const FeaturesOpts& o, const Globals& g, std::ostream& out) {
  const TriangleMesh cage = read_mesh(o.cage);
  require_valid_cage(cage);
  FeatureSet f;
  auto add = [&f](const FeatureSet& more) { f = f.labels.empty() ? more : concat_features(f, more); };
  for (const std::string& kind : split_list(o.kinds)) {
    if (kind == "hks") {
      const CotanOperators ops = cotan_laplacian_mass(cage);
      const int k = std::min(o.eigs, static_cast<int>(cage.vertex_count()) - 1);
      add(hks_features(eigenbasis(ops.stiffness, ops.mass, k), default_hks_times()));
    } else if (kind == "positions") {
      add(position_features(cage));
    } else if (kind == "geodesic") {
      if (o.skeleton.empty()) throw ValidationError("features: geodesic channels need --skeleton");
      add(volumetric_geodesic_to_bones(cage, read_skeleton(o.skeleton), o.geodesic_grid));
    } else {
      throw ValidationError("features: unknown kind " + kind);
    }
  }
  if (f.labels.empty()) throw ValidationError("features: no kinds requested");
  write_bytes(o.out, encode_features(f));
  if (!g.quiet) out << "features: " << f.rows() << " x " << f.cols() << "\n";
  return kOk;
}

// overfit

struct OverfitOpts {
  std::string mesh, labels, cage, coords, method = "mvc", out, predicted;
  int iterations = 2000;
  double lr = 0.05;
  int grid = 48;
};

int cmd_overfit(const OverfitOpts& o, const Globals& g, std::ostream& out) {
  const std::vector<int> labels = read_labels(o.labels);
  const TriangleMesh mesh = read_mesh(o.mesh);
  const TriangleMesh cage = read_mesh(o.cage);
  CoordinateMatrix c;
  if (!o.coords.empty()) {
    c = read_coords(o.coords);
    if (c.mesh_hash != content_digest(mesh) || c.cage_hash != content_digest(cage)) {
      throw ValidationError("overfit: coordinate digests do not match the mesh and cage");
    }
  } else {
    require_valid_cage(cage);
    c = parse_method(o.method) == CoordMethod::mvc ? compute_mvc_matrix(mesh, cage)
                                                   : compute_harmonic_matrix(mesh, cage, o.grid);
  }
  const OverfitResult r = overfit_cage_signal(mesh, c, labels, o.iterations, o.lr);
  const json report = {{"method", method_name(c.method)},
                       {"accuracy", r.accuracy},
                       {"component_accuracy", r.component_accuracy},
                       {"final_loss", r.loss.empty() ? 0.0 : r.loss.back()},
                       {"iterations", o.iterations},
                       {"learning_rate", o.lr},
                       {"vertex_count", mesh.vertex_count()},
                       {"cage_vertex_count", cage.vertex_count()},
                       {"mesh_digest", hex_digest(c.mesh_hash)},
                       {"cage_digest", hex_digest(c.cage_hash)}};
  if (!o.predicted.empty()) write_bytes(o.predicted, json(r.predicted).dump() + "\n");
  write_json(o.out, report);
  if (!g.quiet) out << "overfit: " << method_name(c.method) << " accuracy " << r.accuracy << "\n";
  return kOk;
}

// soup, lbs

struct SoupOpts {
  std::string input, out;
  double noise = 0.0;
  double flip = 0.5;
};

int cmd_soup(const SoupOpts& o, const Globals& g, std::ostream& out) {
  const TriangleMesh soup = make_soup(read_mesh(o.input), o.noise, o.flip, g.seed);
  write_bytes(o.out, format_obj(soup));
  if (!g.quiet) out << "soup: " << soup.face_count() << " faces\n";
  return kOk;
}

struct LbsOpts {
  std::string mesh, weights, clip, out;
  int frame = 0;
};

int cmd_lbs(const LbsOpts& o, const Globals& g, std::ostream& out) {
  const TriangleMesh mesh = read_mesh(o.mesh);
  const SkinWeights w = read_matrix(o.weights);
  const AnimationClip clip = read_clip(o.clip);
  if (w.rows() != static_cast<Eigen::Index>(mesh.vertex_count())) throw ValidationError("lbs: one weight row per vertex");
  validate_weights(w);
  clip.validate(static_cast<std::size_t>(w.cols()));
  if (o.frame < 0 || o.frame >= static_cast<int>(clip.frames.size())) throw ValidationError("lbs: frame out of range");
  const TriangleMesh posed = lbs_deform(mesh, w, clip.frames[static_cast<std::size_t>(o.frame)]);
  write_bytes(o.out, format_obj(posed));
  if (!g.quiet) out << "lbs: frame " << o.frame << "\n";
  return kOk;
}

// fixtures

struct FixturesOpts {
  std::string out;
  int tubes = 40;
  int train = 30;
  bool prepare = false;
  PrepareParams prep;
};

std::string label_json(const std::vector<int>& labels) { return json(labels).dump() + "\n"; }

int cmd_fixtures(const FixturesOpts& o, const Globals& g, std::ostream& out, std::ostream& err) {
  if (o.tubes < 0 || o.train < 0 || o.train > o.tubes) throw ValidationError("fixtures: need 0 <= train <= tubes");
  const fs::path root(o.out);

  json index = json::array();
  for (const fixtures::CorpusEntry& e : fixtures::wild_corpus(g.seed)) {
    const std::string file = "corpus/" + e.name + ".obj";
    const std::string text = format_obj(e.mesh);
    write_bytes(root / file, text);
    json entry = {{"name", e.name},
                  {"file", file},
                  {"digest", hex_digest(bytes_digest(text))},
                  {"wildness", e.wildness},
                  {"classes", fixtures::wildness_classes(parse_obj(text))},
                  {"vertex_count", e.mesh.vertex_count()},
                  {"face_count", e.mesh.face_count()},
                  {"labels", nullptr}};
    if (!e.vertex_labels.empty()) {
      const std::string labels = "corpus/" + e.name + ".labels.json";
      write_bytes(root / labels, label_json(e.vertex_labels));
      entry["labels"] = labels;
    }
    index.push_back(std::move(entry));
  }
  write_json(root / "corpus/index.json", index);

  PipelineManifest manifest;
  manifest.config = prepare_params_to_json(o.prep);
  manifest.config_digest = hex_digest(bytes_digest(manifest.config));
  const fs::path tube_dir = root / "tubes";
  int i = 0;
  for (const fixtures::TubeFixture& t : fixtures::articulated_tubes(o.tubes, g.seed)) {
    MeshRecord r;
    r.name = t.name;
    r.split = i++ < o.train ? "train" : "test";
    auto put = [&](const std::string& suffix, const std::string& bytes, std::string& path, std::string& digest) {
      path = t.name + suffix;
      write_bytes(tube_dir / path, bytes);
      digest = hex_digest(bytes_digest(bytes));
    };
    put(".obj", format_obj(t.mesh), r.mesh, r.mesh_digest);
    put(".skeleton.json", skeleton_to_json(t.skeleton) + "\n", r.skeleton, r.skeleton_digest);
    put(".weights.json", weights_to_json(t.weights) + "\n", r.weights, r.weights_digest);
    put(".clip.json", clip_to_json(t.clip) + "\n", r.clip, r.clip_digest);
    manifest.meshes.push_back(std::move(r));
  }
  if (o.prepare) prepare_manifest(manifest, tube_dir, o.prep, g.quiet, err);
  write_bytes(tube_dir / "manifest.json", manifest_to_json(manifest));
  if (!g.quiet) out << "fixtures: " << index.size() << " corpus meshes, " << o.tubes << " tubes\n";
  return kOk;
}

// train-skin, eval-skin, report

struct TrainOpts {
  std::string manifest, config, out, curve, report, split = "train";
};

std::vector<TrainingMesh> load_split(const PipelineManifest& m, const fs::path& base, const std::string& split,
                                     const TrainConfig& config, std::vector<const MeshRecord*>* records = nullptr) {
  std::vector<TrainingMesh> data;
  for (const MeshRecord& r : m.meshes) {
    if (r.split != split) continue;
    data.push_back(load_training_mesh(r, base, config));
    if (records) records->push_back(&r);
  }
  if (data.empty()) throw ValidationError("no meshes in split " + split);
  return data;
}

json loss_json(const LossTerms& l) { return {{"total", l.total}, {"kl", l.kl}, {"lp", l.lp}, {"sym", l.sym}}; }

int cmd_train_skin(const TrainOpts& o, const Globals& g, std::ostream& out) {
  TrainConfig config;
  if (!o.config.empty()) config = config_from_json(read_bytes(o.config));
  if (g.seed_given) config.seed = g.seed;
  config.validate();
  const fs::path base = fs::path(o.manifest).parent_path();
  const PipelineManifest m = load_manifest(o.manifest);
  verify_manifest(m, base);
  const std::vector<TrainingMesh> data = load_split(m, base, o.split, config);
  const TrainResult r = train(data, config, Task::skinning);
  const std::string head = encode_head(r.head);
  write_bytes(o.out, head);
  if (!o.curve.empty()) write_bytes(o.curve, curve_to_csv(r.curve));
  if (!o.report.empty()) {
    const json report = {{"meshes", data.size()},
                         {"epochs", config.epochs},
                         {"config", json::parse(config_to_json(config))},
                         {"manifest_config_digest", m.config_digest},
                         {"final_loss", r.curve.empty() ? json(nullptr) : loss_json(r.curve.back().loss)},
                         {"parameter_count", r.head.parameter_count()},
                         {"head_digest", hex_digest(bytes_digest(head))}};
    write_json(o.report, report);
  }
  if (!g.quiet) {
    out << "train-skin: " << data.size() << " meshes, " << config.epochs << " epochs";
    if (!r.curve.empty()) out << ", final loss " << r.curve.back().loss.total;
    out << "\n";
  }
  return kOk;
}

struct EvalOpts {
  std::string pred, gt, clip, mesh, manifest, head, split = "test", out;
  double sparsify = 0.0;
};

json metrics_json(const SkinWeights& pred, const SkinWeights& gt, const TriangleMesh* mesh, const AnimationClip* clip) {
  const PrecisionRecall pr = metric_prf1(pred, gt);
  json j = {{"avg_l1", metric_avg_l1(pred, gt)},
            {"precision", pr.precision},
            {"recall", pr.recall},
            {"f1", pr.f1},
            {"avg_dist", nullptr},
            {"max_dist", nullptr}};
  if (mesh && clip) {
    const VertexDistance d = metric_vertex_distance(*mesh, pred, gt, *clip);
    j["avg_dist"] = d.avg;
    j["max_dist"] = d.max;
  }
  return j;
}

int cmd_eval_skin(const EvalOpts& o, const Globals& g, std::ostream& out) {
  if (o.sparsify < 0.0) throw ValidationError("eval-skin: sparsify threshold must be >= 0");
  auto prepare = [&](SkinWeights w) { return o.sparsify > 0.0 ? sparsify_weights(w, o.sparsify) : w; };
  json report;
  if (!o.manifest.empty()) {
    if (o.head.empty()) throw ValidationError("eval-skin: --manifest needs --head");
    const PredictorHead head = read_head(o.head);
    const fs::path base = fs::path(o.manifest).parent_path();
    const PipelineManifest m = load_manifest(o.manifest);
    verify_manifest(m, base);
    std::vector<const MeshRecord*> records;
    const std::vector<TrainingMesh> data = load_split(m, base, o.split, TrainConfig{}, &records);
    json meshes = json::array();
    json mean = {{"avg_l1", 0.0}, {"precision", 0.0}, {"recall", 0.0}, {"f1", 0.0}, {"avg_dist", 0.0}, {"max_dist", 0.0}};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const SkinWeights pred = prepare(predict_mesh(head, data[i].cages.front(), data[i].mesh, Task::skinning));
      const AnimationClip clip = read_clip(base / records[i]->clip);
      json mj = metrics_json(pred, data[i].gt, &data[i].mesh, &clip);
      for (auto& [key, value] : mean.items()) value = value.get<double>() + mj[key].get<double>() / static_cast<double>(data.size());
      mj["name"] = records[i]->name;
      meshes.push_back(std::move(mj));
    }
    report = {{"split", o.split}, {"sparsify", o.sparsify}, {"mean", mean}, {"meshes", meshes}};
  } else {
    if (o.pred.empty() || o.gt.empty()) throw ValidationError("eval-skin: need --pred and --gt, or --manifest");
    const SkinWeights pred = prepare(read_matrix(o.pred));
    const SkinWeights gt = read_matrix(o.gt);
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw ValidationError("eval-skin: shape mismatch");
    if (!o.clip.empty() && o.mesh.empty()) throw ValidationError("eval-skin: --clip needs --mesh");
    std::optional<TriangleMesh> mesh;
    std::optional<AnimationClip> clip;
    if (!o.clip.empty()) {
      mesh = read_mesh(o.mesh);
      clip = read_clip(o.clip);
      if (static_cast<Eigen::Index>(mesh->vertex_count()) != gt.rows()) throw ValidationError("eval-skin: mesh size");
      clip->validate(static_cast<std::size_t>(gt.cols()));
    }
    report = metrics_json(pred, gt, mesh ? &*mesh : nullptr, clip ? &*clip : nullptr);
    report["sparsify"] = o.sparsify;
  }
  if (!o.out.empty()) write_json(o.out, report);
  if (!g.quiet || o.out.empty()) out << report.dump(2) << "\n";
  return kOk;
}

struct ReportOpts {
  std::string manifest, out;
};

int cmd_report(const ReportOpts& o, const Globals&, std::ostream& out) {
  const fs::path base = fs::path(o.manifest).parent_path();
  const PipelineManifest m = load_manifest(o.manifest);
  verify_manifest(m, base);
  json records = json::array();
  std::size_t cages = 0;
  for (const MeshRecord& r : m.meshes) {
    cages += r.cages.size();
    records.push_back({{"name", r.name}, {"split", r.split}, {"cages", r.cages.size()}});
  }
  const json report = {{"verified", true},
                       {"config_digest", m.config_digest},
                       {"mesh_count", m.meshes.size()},
                       {"cage_count", cages},
                       {"meshes", records}};
  if (!o.out.empty()) write_json(o.out, report);
  else out << report.dump(2) << "\n";
  return kOk;
}

}  // namespace

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, digest);
  return buf;
}

std::string file_digest(const fs::path& path) { return hex_digest(bytes_digest(read_bytes(path))); }

std::string manifest_to_json(const PipelineManifest& m) {
  json meshes = json::array();
  for (const MeshRecord& r : m.meshes) {
    json cages = json::array();
    for (const CageRecord& c : r.cages) {
      cages.push_back({{"offset", c.offset},
                       {"cage", c.cage},
                       {"cage_digest", c.cage_digest},
                       {"coords", c.coords},
                       {"coords_digest", c.coords_digest},
                       {"features", c.features},
                       {"features_digest", c.features_digest}});
    }
    meshes.push_back({{"name", r.name},
                      {"split", r.split},
                      {"mesh", r.mesh},
                      {"mesh_digest", r.mesh_digest},
                      {"skeleton", r.skeleton},
                      {"skeleton_digest", r.skeleton_digest},
                      {"weights", r.weights},
                      {"weights_digest", r.weights_digest},
                      {"clip", r.clip},
                      {"clip_digest", r.clip_digest},
                      {"cages", cages}});
  }
  const json j = {{"config", m.config.empty() ? json(nullptr) : json::parse(m.config)},
                  {"config_digest", m.config_digest},
                  {"meshes", meshes}};
  return j.dump(2) + "\n";
}

PipelineManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PipelineManifest m;
    if (!j.at("config").is_null()) m.config = j.at("config").dump();
    m.config_digest = j.at("config_digest").get<std::string>();
    for (const json& r : j.at("meshes")) {
      MeshRecord rec;
      rec.name = r.at("name").get<std::string>();
      rec.split = r.value("split", "");
      rec.mesh = r.at("mesh").get<std::string>();
      rec.mesh_digest = r.at("mesh_digest").get<std::string>();
      rec.skeleton = r.value("skeleton", "");
      rec.skeleton_digest = r.value("skeleton_digest", "");
      rec.weights = r.value("weights", "");
      rec.weights_digest = r.value("weights_digest", "");
      rec.clip = r.value("clip", "");
      rec.clip_digest = r.value("clip_digest", "");
      for (const json& c : r.value("cages", json::array())) {
        rec.cages.push_back({c.at("offset").get<double>(), c.at("cage").get<std::string>(),
                             c.at("cage_digest").get<std::string>(), c.at("coords").get<std::string>(),
                             c.at("coords_digest").get<std::string>(), c.at("features").get<std::string>(),
                             c.at("features_digest").get<std::string>()});
      }
      m.meshes.push_back(std::move(rec));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
}

PipelineManifest load_manifest(const fs::path& path) { return manifest_from_json(read_bytes(path)); }

void verify_manifest(const PipelineManifest& m, const fs::path& base) {
  if (hex_digest(bytes_digest(m.config)) != m.config_digest) throw ValidationError("manifest: config digest mismatch");
  auto check = [&](const std::string& file, const std::string& digest) {
    if (file.empty()) return;
    const fs::path p = base / file;
    if (!fs::exists(p)) throw IoError("manifest: missing file " + p.string());
    if (file_digest(p) != digest) throw ValidationError("manifest: digest mismatch for " + p.string());
  };
  for (const MeshRecord& r : m.meshes) {
    check(r.mesh, r.mesh_digest);
    check(r.skeleton, r.skeleton_digest);
    check(r.weights, r.weights_digest);
    check(r.clip, r.clip_digest);
    for (const CageRecord& c : r.cages) {
      check(c.cage, c.cage_digest);
      check(c.coords, c.coords_digest);
      check(c.features, c.features_digest);
    }
  }
}

std::string prepare_params_to_json(const PrepareParams& p) {
  const json j = {{"offsets", p.offsets},
                  {"target_faces", p.cage.target_faces},
                  {"max_faces", p.cage.max_faces},
                  {"grid_dims", p.cage.grid_dims},
                  {"require_enclosure", p.cage.require_enclosure},
                  {"eigs", p.eigs},
                  {"geodesic_grid", p.geodesic_grid}};
  return j.dump();
}

FeatureSet skin_features(const TriangleMesh& cage, const Skeleton& skeleton, int eigs, int geodesic_grid) {
  const CotanOperators ops = cotan_laplacian_mass(cage);
  const int k = std::min(eigs, static_cast<int>(cage.vertex_count()) - 1);
  FeatureSet f = hks_features(eigenbasis(ops.stiffness, ops.mass, k), default_hks_times());
  f = concat_features(f, position_features(cage));
  return concat_features(f, volumetric_geodesic_to_bones(cage, skeleton, geodesic_grid));
}

void prepare_manifest(PipelineManifest& manifest, const fs::path& base, const PrepareParams& params, bool quiet,
                      std::ostream& err) {
  for (std::size_t i = 1; i < params.offsets.size(); ++i) {
    if (!(params.offsets[i] > params.offsets[i - 1])) throw ValidationError("offsets must be strictly increasing");
  }
  for (MeshRecord& r : manifest.meshes) {
    if (!r.cages.empty()) continue;
    const TriangleMesh mesh = read_mesh(base / r.mesh);
    const Skeleton skeleton = read_skeleton(base / r.skeleton);
    const fs::path dir = fs::path(r.mesh).parent_path();
    for (std::size_t k = 0; k < params.offsets.size(); ++k) {
      CageParams cp = params.cage;
      cp.offset = params.offsets[k];
      const std::string stem = r.name + ".cage" + std::to_string(k);
      // the cage as read back from disk, so digests agree downstream
      const std::string cage_text = format_obj(generate_cage(mesh, cp).mesh);
      const TriangleMesh cage = parse_obj(cage_text);
      const std::string coords = encode_coords(compute_mvc_matrix(mesh, cage));
      const std::string features = encode_features(skin_features(cage, skeleton, params.eigs, params.geodesic_grid));
      CageRecord c;
      c.offset = cp.offset;
      c.cage = (dir / (stem + ".obj")).generic_string();
      c.coords = (dir / (stem + ".gbc")).generic_string();
      c.features = (dir / (stem + ".fts")).generic_string();
      write_bytes(base / c.cage, cage_text);
      write_bytes(base / c.coords, coords);
      write_bytes(base / c.features, features);
      c.cage_digest = hex_digest(bytes_digest(cage_text));
      c.coords_digest = hex_digest(bytes_digest(coords));
      c.features_digest = hex_digest(bytes_digest(features));
      r.cages.push_back(std::move(c));
    }
    if (!quiet) err << "prepared " << r.name << "\n";
  }
}

TrainingMesh load_training_mesh(const MeshRecord& r, const fs::path& base, const TrainConfig& config) {
  if (r.weights.empty()) throw ValidationError(r.name + ": no ground-truth weights");
  if (r.cages.empty()) throw ValidationError(r.name + ": no cages");
  TrainingMesh item;
  item.mesh = read_mesh(base / r.mesh);
  item.gt = read_matrix(base / r.weights);
  if (item.gt.rows() != static_cast<Eigen::Index>(item.mesh.vertex_count())) {
    throw ValidationError(r.name + ": weight rows do not match the mesh");
  }
  validate_weights(item.gt);
  item.symmetry = detect_symmetric_vertices(item.mesh, config.symmetry_tolerance);
  item.pairs = build_symmetry_pairs(item.gt, item.symmetry, config.delta_s, config.eps_s);
  for (const CageRecord& c : r.cages) {
    item.cages.push_back(make_cage_sample(read_mesh(base / c.cage), read_features(base / c.features),
                                          read_coords(base / c.coords)));
  }
  return item;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cage-based learning on wild meshes", "cagenet"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  int threads = 0;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", threads, "worker threads (default: CAGENET_THREADS or 1)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g.quiet, "no progress output");

  CageOpts cage;
  auto* sc = app.add_subcommand("cage", "generate a cage");
  sc->add_option("--input", cage.input)->required();
  sc->add_option("--out", cage.out)->required();
  sc->add_option("--report", cage.report);
  sc->add_option("--offset", cage.params.offset);
  sc->add_option("--target-faces", cage.params.target_faces);
  sc->add_option("--max-faces", cage.params.max_faces);
  sc->add_option("--grid", cage.params.grid_dims);
  sc->add_flag("--enclose", cage.params.require_enclosure);

  CoordsOpts coords;
  auto* co = app.add_subcommand("coords", "generalized barycentric coordinates");
  co->add_option("--mesh", coords.mesh)->required();
  co->add_option("--cage", coords.cage)->required();
  co->add_option("--out", coords.out)->required();
  co->add_option("--method", coords.method);
  co->add_option("--grid", coords.grid);
  co->add_option("--report", coords.report);

  MapOpts map;
  auto* mp = app.add_subcommand("map", "map cage values to the mesh");
  mp->add_option("--coords", map.coords)->required();
  mp->add_option("--mesh", map.mesh)->required();
  mp->add_option("--cage", map.cage)->required();
  mp->add_option("--values", map.values)->required();
  mp->add_option("--out", map.out)->required();
  mp->add_flag("--faces", map.faces);

  FeaturesOpts feats;
  auto* fe = app.add_subcommand("features", "cage vertex features");
  fe->add_option("--cage", feats.cage)->required();
  fe->add_option("--out", feats.out)->required();
  fe->add_option("--kinds", feats.kinds, "comma list of hks, positions, geodesic");
  fe->add_option("--skeleton", feats.skeleton);
  fe->add_option("--eigs", feats.eigs);
  fe->add_option("--geodesic-grid", feats.geodesic_grid);

  OverfitOpts over;
  auto* ov = app.add_subcommand("overfit", "fit free cage logits to vertex labels");
  ov->add_option("--mesh", over.mesh)->required();
  ov->add_option("--labels", over.labels)->required();
  ov->add_option("--cage", over.cage)->required();
  ov->add_option("--coords", over.coords);
  ov->add_option("--method", over.method);
  ov->add_option("--grid", over.grid);
  ov->add_option("--iterations", over.iterations);
  ov->add_option("--lr", over.lr);
  ov->add_option("--out", over.out)->required();
  ov->add_option("--predicted", over.predicted);

  TrainOpts tr;
  auto* ts = app.add_subcommand("train-skin", "train a skinning head");
  ts->add_option("--manifest", tr.manifest)->required();
  ts->add_option("--config", tr.config);
  ts->add_option("--split", tr.split);
  ts->add_option("--out", tr.out)->required();
  ts->add_option("--curve", tr.curve);
  ts->add_option("--report", tr.report);

  EvalOpts ev;
  auto* es = app.add_subcommand("eval-skin", "skinning metrics");
  es->add_option("--pred", ev.pred);
  es->add_option("--gt", ev.gt);
  es->add_option("--clip", ev.clip);
  es->add_option("--mesh", ev.mesh);
  es->add_option("--manifest", ev.manifest);
  es->add_option("--head", ev.head);
  es->add_option("--split", ev.split);
  es->add_option("--sparsify", ev.sparsify);
  es->add_option("--out", ev.out);

  LbsOpts lbs;
  auto* lb = app.add_subcommand("lbs", "linear blend skinning of one frame");
  lb->add_option("--mesh", lbs.mesh)->required();
  lb->add_option("--weights", lbs.weights)->required();
  lb->add_option("--clip", lbs.clip)->required();
  lb->add_option("--frame", lbs.frame);
  lb->add_option("--out", lbs.out)->required();

  SoupOpts soup;
  auto* so = app.add_subcommand("soup", "triangle soup of a mesh");
  so->add_option("--input", soup.input)->required();
  so->add_option("--out", soup.out)->required();
  so->add_option("--noise", soup.noise);
  so->add_option("--flip", soup.flip);

  FixturesOpts fix;
  std::string offsets = "0.02";
  auto* fx = app.add_subcommand("fixtures", "synthetic corpus and articulated tubes");
  fx->add_option("--out", fix.out)->required();
  fx->add_option("--tubes", fix.tubes);
  fx->add_option("--train", fix.train);
  fx->add_flag("--prepare", fix.prepare, "cages, coordinates and features for the tubes");
  fx->add_option("--offsets", offsets);
  fx->add_option("--target-faces", fix.prep.cage.target_faces);
  fx->add_option("--max-faces", fix.prep.cage.max_faces);
  fx->add_option("--grid", fix.prep.cage.grid_dims);
  fx->add_option("--eigs", fix.prep.eigs);
  fx->add_option("--geodesic-grid", fix.prep.geodesic_grid);

  ReportOpts rep;
  auto* rp = app.add_subcommand("report", "verify a manifest");
  rp->add_option("--manifest", rep.manifest)->required();
  rp->add_option("--out", rep.out);

  std::vector<const char*> argv{"cagenet"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  g.seed_given = app.count("--seed") > 0;

  try {
    if (threads == 0) {
      if (const char* env = std::getenv("CAGENET_THREADS")) threads = std::atoi(env);
    }
    if (threads > 0) set_worker_count(threads);
    if (sc->parsed()) return cmd_cage(cage, g, out);
    if (co->parsed()) return cmd_coords(coords, g, out);
    if (mp->parsed()) return cmd_map(map, g, out);
    if (fe->parsed()) return cmd_features(feats, g, out);
    if (ov->parsed()) return cmd_overfit(over, g, out);
    if (ts->parsed()) return cmd_train_skin(tr, g, out);
    if (es->parsed()) return cmd_eval_skin(ev, g, out);
    if (lb->parsed()) return cmd_lbs(lbs, g, out);
    if (so->parsed()) return cmd_soup(soup, g, out);
    if (fx->parsed()) {
      fix.prep.offsets.clear();
      for (const std::string& s : split_list(offsets)) fix.prep.offsets.push_back(std::stod(s));
      return cmd_fixtures(fix, g, out, err);
    }
    if (rp->parsed()) return cmd_report(rep, g, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kValidationFailure;
}

}  // namespace cagenet::cli
