// End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Geometry>

#include "json.hpp"

#include "cagenet/binary_io.hpp"
#include "cagenet/cage.hpp"
#include "cagenet/cli.hpp"
#include "cagenet/coords.hpp"
#include "cagenet/features.hpp"
#include "cagenet/fixtures.hpp"
#include "cagenet/learn.hpp"
#include "cagenet/shapes.hpp"
#include "cagenet/skin.hpp"
#include "cagenet/spatial.hpp"

using namespace cagenet;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 11;

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

struct Pipeline {
  fs::path dir;
  std::map<std::string, double> seconds;
  std::vector<std::string> corpus;

  void step(const std::string& label, std::vector<std::string> args) {
    args.insert(args.begin(), {"--quiet", "--seed", std::to_string(kSeed)});
    std::ostringstream out, err;
    const double t0 = now();
    const int code = cli::run(args, out, err);
    seconds[label] = now() - t0;
    if (code != 0) throw std::runtime_error(label + " exited " + std::to_string(code) + ": " + err.str());
  }
  std::string at(const std::string& rel) const { return (dir / rel).string(); }
};

// values defined by cage geometry, so any two cages get comparable inputs
void write_cage_values(const fs::path& cage_path, const fs::path& out) {
  const TriangleMesh cage = load_obj(cage_path);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(cage.vertex_count()), 2);
  for (std::size_t i = 0; i < cage.vertex_count(); ++i) {
    const Vec3& p = cage.positions[i];
    v(static_cast<Eigen::Index>(i), 0) = std::sin(3.0 * p.x()) + p.y() * p.z();
    v(static_cast<Eigen::Index>(i), 1) = p.x() * p.x() - p.z();
  }
  write_file_atomic(out, weights_to_json(v));
}

void run_pipeline(Pipeline& p) {
  fs::remove_all(p.dir);
  fs::create_directories(p.dir);
  p.step("fixtures", {"fixtures", "--out", p.dir.string(), "--tubes", "40", "--train", "30", "--prepare"});
  for (const json& e : read_json(p.dir / "corpus/index.json")) p.corpus.push_back(e["name"].get<std::string>());

  for (const std::string& n : p.corpus) {
    const std::string mesh = p.at("corpus/" + n + ".obj");
    p.step("cage:" + n, {"cage", "--input", mesh, "--enclose", "--out", p.at("cages/" + n + ".obj"), "--report",
                         p.at("cages/" + n + ".json")});
    // soup pipeline next to the clean one
    p.step("soup:" + n, {"soup", "--input", mesh, "--out", p.at("soup/" + n + ".soup.obj")});
    for (const std::string v : {"clean", "soup"}) {
      const std::string input = v == "clean" ? mesh : p.at("soup/" + n + ".soup.obj");
      const std::string stem = "soup/" + n + "." + v;
      p.step("soupcage:" + n + v, {"cage", "--input", input, "--out", p.at(stem + ".cage.obj")});
      p.step("soupcoords:" + n + v, {"coords", "--mesh", input, "--cage", p.at(stem + ".cage.obj"), "--method", "mvc",
                                     "--out", p.at(stem + ".gbc")});
      write_cage_values(p.at(stem + ".cage.obj"), p.at(stem + ".values.json"));
      p.step("soupmap:" + n + v, {"map", "--coords", p.at(stem + ".gbc"), "--mesh", input, "--cage",
                                  p.at(stem + ".cage.obj"), "--values", p.at(stem + ".values.json"), "--out",
                                  p.at(stem + ".mapped.json")});
    }
  }

  p.step("two_spheres", {"cage", "--input", p.at("corpus/two_spheres.obj"), "--offset", "0.01", "--out",
                         p.at("cages/two_spheres_eps0.01.obj"), "--report", p.at("cages/two_spheres_eps0.01.json")});

  for (const std::string m : {"mvc", "harmonic"}) {
    p.step("coords:" + m, {"coords", "--mesh", p.at("corpus/organ_in_body.obj"), "--cage",
                           p.at("cages/organ_in_body.obj"), "--method", m, "--out", p.at("organ/" + m + ".gbc")});
    p.step("overfit:" + m, {"overfit", "--mesh", p.at("corpus/organ_in_body.obj"), "--labels",
                            p.at("corpus/organ_in_body.labels.json"), "--cage", p.at("cages/organ_in_body.obj"),
                            "--coords", p.at("organ/" + m + ".gbc"), "--out", p.at("organ/overfit_" + m + ".json"),
                            "--predicted", p.at("organ/predicted_" + m + ".json")});
  }

  const std::string manifest = p.at("tubes/manifest.json");
  p.step("report", {"report", "--manifest", manifest, "--out", p.at("skin/manifest_report.json")});
  p.step("train-skin", {"train-skin", "--manifest", manifest, "--out", p.at("skin/head.hed"), "--curve",
                        p.at("skin/loss.csv"), "--report", p.at("skin/train.json")});
  p.step("eval-skin", {"eval-skin", "--manifest", manifest, "--head", p.at("skin/head.hed"), "--out",
                       p.at("skin/eval.json")});
  p.step("eval-skin-sparse", {"eval-skin", "--manifest", manifest, "--head", p.at("skin/head.hed"), "--sparsify",
                              "0.2", "--out", p.at("skin/eval_sparse.json")});
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome cage_validity(const Pipeline& p) {
  double slowest = 0.0;
  std::string failures;
  for (const std::string& n : p.corpus) {
    const TriangleMesh mesh = load_obj(p.dir / ("corpus/" + n + ".obj"));
    const TriangleMesh cage = load_obj(p.dir / ("cages/" + n + ".obj"));
    const TopologyReport t = topology_report(cage);
    const std::vector<double> w = winding_numbers(mesh.positions, cage);
    const double min_w = *std::min_element(w.begin(), w.end());
    const double secs = p.seconds.at("cage:" + n);
    slowest = std::max(slowest, secs);
    const bool ok = t.is_closed && t.is_edge_manifold && t.is_vertex_manifold && t.component_count == 1 &&
                    min_w >= 0.5 && secs <= 60.0;
    if (!ok) failures += " " + n;
  }
  return {failures.empty(), std::to_string(p.corpus.size()) + " meshes, slowest " + fmt("%.1f s", slowest) +
                                (failures.empty() ? "" : ", failing:" + failures)};
}

Outcome offset_growth(const Pipeline& p) {
  const json r = read_json(p.dir / "cages/two_spheres_eps0.01.json");
  const TriangleMesh cage = load_obj(p.dir / "cages/two_spheres_eps0.01.obj");
  const double eff = r["effective_offset"].get<double>();
  const double h = r["grid_spacing"].get<double>();
  const double expected = 0.01 + 0.5 * 0.1;  // gap between the spheres
  const bool ok = cage_violation(cage).empty() && topology_report(cage).component_count == 1 && eff >= 0.06 &&
                  std::abs(eff - expected) <= h;
  return {ok, "effective offset " + fmt("%.4f", eff) + ", expected " + fmt("%.4f", expected) + ", spacing " +
                  fmt("%.4f", h)};
}

Outcome soup_invariance(const Pipeline& p) {
  double worst = 0.0;
  for (const std::string& n : p.corpus) {
    const TriangleMesh mesh = load_obj(p.dir / ("corpus/" + n + ".obj"));
    const std::vector<int> src = soup_source_vertices(mesh);
    const Eigen::MatrixXd clean = weights_from_json(read_file(p.dir / ("soup/" + n + ".clean.mapped.json")));
    const Eigen::MatrixXd soup = weights_from_json(read_file(p.dir / ("soup/" + n + ".soup.mapped.json")));
    if (soup.rows() != static_cast<Eigen::Index>(src.size())) return {false, n + ": soup size mismatch"};
    for (std::size_t v = 0; v < src.size(); ++v) {
      worst = std::max(worst, (soup.row(static_cast<Eigen::Index>(v)) - clean.row(src[v])).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-9, "max deviation " + fmt("%.3g", worst) + " over " + std::to_string(p.corpus.size()) + " meshes"};
}

Outcome mvc_properties(const Pipeline& p) {
  double sum_err = 0.0, lin_err = 0.0, lagrange_err = 0.0;
  for (std::size_t c = 0; c < p.corpus.size(); ++c) {
    const TriangleMesh cage = load_obj(p.dir / ("cages/" + p.corpus[c] + ".obj"));
    const Bounds box = bounds(cage);
    const double diag = box.diagonal();
    std::mt19937_64 rng(kSeed + c);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> inside;
    while (inside.size() < 1000) {
      std::vector<Vec3> cand(2000);
      for (Vec3& q : cand) q = box.min + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(box.extent());
      const std::vector<double> w = winding_numbers(cand, cage);
      for (std::size_t i = 0; i < cand.size() && inside.size() < 1000; ++i) {
        if (w[i] >= 0.5) inside.push_back(cand[i]);
      }
    }
    for (const Vec3& q : inside) {
      const Eigen::VectorXd l = mvc_weights(q, cage);
      sum_err = std::max(sum_err, std::abs(l.sum() - 1.0));
      Vec3 r = Vec3::Zero();
      for (std::size_t j = 0; j < cage.vertex_count(); ++j) r += l[static_cast<Eigen::Index>(j)] * cage.positions[j];
      lin_err = std::max(lin_err, (r - q).norm() / diag);
    }
    for (std::size_t j = 0; j < cage.vertex_count(); ++j) {
      Eigen::VectorXd l = mvc_weights(cage.positions[j], cage);
      l[static_cast<Eigen::Index>(j)] -= 1.0;
      lagrange_err = std::max(lagrange_err, l.cwiseAbs().maxCoeff());
    }
  }
  const bool ok = sum_err <= 1e-9 && lin_err <= 1e-8 && lagrange_err <= 1e-12;
  return {ok, "partition " + fmt("%.2g", sum_err) + ", linear precision " + fmt("%.2g", lin_err) +
                  " x diag, lagrange " + fmt("%.2g", lagrange_err)};
}

Outcome expressivity(const Pipeline& p) {
  const std::vector<int> labels = json::parse(read_file(p.dir / "corpus/organ_in_body.labels.json")).get<std::vector<int>>();
  auto accuracy = [&](const std::string& m, bool organ_only) {
    const std::vector<int> pred = json::parse(read_file(p.dir / ("organ/predicted_" + m + ".json"))).get<std::vector<int>>();
    int hit = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (organ_only && labels[i] != 1) continue;
      ++total;
      hit += pred[i] == labels[i];
    }
    return 100.0 * hit / std::max(1, total);
  };
  const double mvc = accuracy("mvc", false), mvc_organ = accuracy("mvc", true);
  const double harm = accuracy("harmonic", false), harm_organ = accuracy("harmonic", true);
  const bool ok = mvc >= 99.0 && harm_organ <= mvc_organ - 5.0;
  return {ok, "mvc " + fmt("%.1f%%", mvc) + " (organ " + fmt("%.1f%%", mvc_organ) + "), harmonic " +
                  fmt("%.1f%%", harm) + " (organ " + fmt("%.1f%%", harm_organ) + "), organ gap " +
                  fmt("%.1f pp", mvc_organ - harm_organ)};
}

Objective on_matrix(std::function<double(const Eigen::MatrixXd&, Eigen::MatrixXd*)> loss, Eigen::Index rows,
                    Eigen::Index cols) {
  return [=](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    Eigen::MatrixXd gm;
    const double v = loss(x.reshaped(rows, cols).eval(), g ? &gm : nullptr);
    if (g) *g = gm.reshaped();
    return v;
  };
}

Outcome gradient_suite() {
  const double t0 = now();
  const fixtures::TubeFixture tube = fixtures::articulated_tubes(1, kSeed).front();
  CageParams cp;
  cp.target_faces = 300;
  cp.max_faces = 600;
  cp.grid_dims = 48;
  const TriangleMesh cage = generate_cage(tube.mesh, cp).mesh;
  const TrainConfig config;
  TrainingMesh item;
  item.mesh = tube.mesh;
  item.gt = tube.weights;
  item.symmetry = detect_symmetric_vertices(item.mesh, config.symmetry_tolerance);
  item.pairs = build_symmetry_pairs(item.gt, item.symmetry, config.delta_s, config.eps_s);
  item.cages.push_back(make_cage_sample(cage, cli::skin_features(cage, tube.skeleton, 32, 32),
                                        compute_mvc_matrix(item.mesh, cage)));
  const Eigen::MatrixXd face_gt = average_to_faces(item.mesh, item.gt);
  for (Eigen::Index f = 0; f < face_gt.rows(); ++f) {
    Eigen::Index best = 0;
    face_gt.row(f).maxCoeff(&best);
    item.face_labels.push_back(static_cast<int>(best));
  }

  const FeatureSet& feats = item.cages[0].features;
  PredictorHead head = make_head(static_cast<int>(feats.cols()), 16, 3, kSeed);
  head.feature_mean = feats.values.colwise().mean();
  head.feature_scale = ((feats.values.rowwise() - head.feature_mean.transpose()).array().square().colwise().mean().sqrt() + 1e-8).matrix().transpose();
  head.smoothing_steps = config.smoothing_steps;
  head.smoothing_step = config.smoothing_step;
  const Eigen::MatrixXd pred = predict_mesh(head, item.cages[0], item.mesh, Task::skinning);
  const Eigen::MatrixXd probs = average_to_faces(item.mesh, pred);
  const Eigen::Index n = pred.rows(), k = pred.cols();

  std::vector<std::pair<std::string, double>> errors;
  errors.emplace_back("cross-entropy", grad_check(on_matrix([&](const Eigen::MatrixXd& m, Eigen::MatrixXd* g) {
                        return loss_cross_entropy_faces(m, item.face_labels, g);
                      }, probs.rows(), k), probs.reshaped(), 0));
  errors.emplace_back("kl", grad_check(on_matrix([&](const Eigen::MatrixXd& m, Eigen::MatrixXd* g) {
                        return loss_kl(m, item.gt, g);
                      }, n, k), pred.reshaped(), 0));
  errors.emplace_back("lp", grad_check(on_matrix([&](const Eigen::MatrixXd& m, Eigen::MatrixXd* g) {
                        return loss_lp(m, 0.3, g);
                      }, n, k), pred.reshaped(), 0));
  errors.emplace_back("symmetry", grad_check(on_matrix([&](const Eigen::MatrixXd& m, Eigen::MatrixXd* g) {
                        return loss_symmetry(m, item.pairs, item.symmetry, g);
                      }, n, k), pred.reshaped(), 0));
  for (const Task task : {Task::skinning, Task::segmentation}) {
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      PredictorHead h = head;
      h.set_parameters(x);
      return evaluate_mesh(h, item, 0, config, task, g).total;
    };
    errors.emplace_back(std::string("total ") + task_name(task), grad_check(f, head.parameters(), 0));
  }
  const double secs = now() - t0;
  bool ok = secs <= 10.0 && !item.pairs.empty();
  std::string detail;
  for (const auto& [name, e] : errors) {
    ok = ok && e <= 1e-4;
    detail += name + " " + fmt("%.1e", e) + ", ";
  }
  return {ok, detail + fmt("%.1f s", secs)};
}

Outcome skinning(const Pipeline& p) {
  const json plain = read_json(p.dir / "skin/eval.json");
  const json sparse = read_json(p.dir / "skin/eval_sparse.json");
  const double l1 = plain["mean"]["avg_l1"].get<double>();
  int pattern = 0;
  const std::size_t count = plain["meshes"].size();
  for (std::size_t i = 0; i < count; ++i) {
    const json& a = plain["meshes"][i];
    const json& b = sparse["meshes"][i];
    pattern += b["precision"].get<double>() > a["precision"].get<double>() &&
               b["recall"].get<double>() < a["recall"].get<double>();
  }
  const double train_secs = p.seconds.at("train-skin");
  const bool ok = count == 10 && l1 <= 0.15 && pattern == static_cast<int>(count) && train_secs <= 600.0;
  return {ok, "test avg L1 " + fmt("%.4f", l1) + ", sparsify pattern " + std::to_string(pattern) + "/" +
                  std::to_string(count) + ", training " + fmt("%.0f s", train_secs)};
}

Outcome lbs_and_metrics() {
  const fixtures::TubeFixture tube = fixtures::articulated_tubes(1, kSeed).front();
  const auto n = static_cast<Eigen::Index>(tube.mesh.vertex_count());
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(n, 3, 1.0 / 3.0);
  AnimationClip identity;
  identity.frames.assign(3, Frame(3));
  const VertexDistance still = metric_vertex_distance(tube.mesh, uniform, tube.weights, identity);

  const PrecisionRecall pr = metric_prf1(tube.weights, tube.weights);
  const VertexDistance same = metric_vertex_distance(tube.mesh, tube.weights, tube.weights, tube.clip);
  const double l1 = metric_avg_l1(tube.weights, tube.weights);

  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Vec3(1, 2, -1).normalized()).toRotationMatrix();
  const Vec3 t(0.3, -1.2, 2.0);
  TriangleMesh moved = tube.mesh;
  for (Vec3& q : moved.positions) q = r * q + t;
  double equiv = 0.0;
  for (const Frame& frame : tube.clip.frames) {
    Frame conj;
    for (const BoneTransform& b : frame) conj.push_back({r * b.rotation * r.transpose(), r * b.translation + t - r * b.rotation * r.transpose() * t});
    const TriangleMesh a = lbs_deform(moved, tube.weights, conj);
    const TriangleMesh b = lbs_deform(tube.mesh, tube.weights, frame);
    for (std::size_t i = 0; i < a.vertex_count(); ++i) equiv = std::max(equiv, (a.positions[i] - (r * b.positions[i] + t)).norm());
  }
  const bool ok = still.max <= 1e-12 && l1 == 0.0 && pr.precision == 100.0 && pr.recall == 100.0 && pr.f1 == 100.0 &&
                  same.avg == 0.0 && same.max == 0.0 && equiv <= 1e-10;
  return {ok, "identity clip distance " + fmt("%.1e", still.max) + ", pred=gt L1 " + fmt("%g", l1) + " P/R/F1 " +
                  fmt("%g", pr.precision) + "/" + fmt("%g", pr.recall) + "/" + fmt("%g", pr.f1) + " dist " +
                  fmt("%g", same.max) + ", equivariance " + fmt("%.1e", equiv)};
}

Outcome spectral() {
  const TriangleMesh sphere = shapes::icosphere(4, 1.0);
  const CotanOperators ops = cotan_laplacian_mass(sphere);
  const SpectralBasis basis = eigenbasis(ops.stiffness, ops.mass, 16);
  double worst = std::abs(basis.eigenvalues[0]);
  bool ok = sphere.vertex_count() == 2562 && worst <= 1e-6;
  int idx = 1;
  double rel = 0.0;
  for (int l = 1; l <= 3; ++l) {
    for (int m = 0; m < 2 * l + 1; ++m, ++idx) {
      const double target = l * (l + 1.0);
      rel = std::max(rel, std::abs(basis.eigenvalues[idx] - target) / target);
    }
  }
  ok = ok && rel <= 0.05;

  // generic spectrum: radially jittered sphere
  TriangleMesh bumpy = shapes::icosphere(3, 0.5);
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (Vec3& q : bumpy.positions) q *= 1.0 + u(rng);
  const Eigen::Matrix3d r = Eigen::AngleAxisd(1.1, Vec3(0.3, -1, 0.5).normalized()).toRotationMatrix();
  TriangleMesh moved = bumpy;
  for (Vec3& q : moved.positions) q = r * q + Vec3(2.0, -0.5, 1.0);
  auto hks = [](const TriangleMesh& m) {
    const CotanOperators o = cotan_laplacian_mass(m);
    return hks_features(eigenbasis(o.stiffness, o.mass, 64), default_hks_times()).values;
  };
  const Eigen::MatrixXd a = hks(bumpy), b = hks(moved);
  const double inv = (a - b).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
  ok = ok && inv <= 1e-6;
  return {ok, "max relative eigenvalue error (l <= 3) " + fmt("%.2f%%", 100.0 * rel) + ", mu0 " + fmt("%.1e", worst) +
                  ", HKS rigid deviation " + fmt("%.1e", inv)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return files;
}

Outcome determinism(const Pipeline& a, const Pipeline& b) {
  const auto ta = tree(a.dir), tb = tree(b.dir);
  std::string first;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) {
      first = name;
      break;
    }
  }
  const bool ok = first.empty() && ta.size() == tb.size();
  return {ok, std::to_string(ta.size()) + " files compared" + (first.empty() ? "" : ", first difference " + first)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1])
                                  : fs::temp_directory_path() / ("cagenet_acceptance_" + std::to_string(::getpid()));
  Pipeline a{root / "run_a", {}, {}}, b{root / "run_b", {}, {}};
  std::string pipeline_error;
  const double t0 = now();
  try {
    run_pipeline(a);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  std::cout << "pipeline run A: " << fmt("%.0f s", now() - t0) << (pipeline_error.empty() ? "" : " error: " + pipeline_error)
            << std::endl;

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn, bool needs_pipeline) {
    Outcome o;
    if (needs_pipeline && !pipeline_error.empty()) {
      o = {false, "pipeline failed"};
    } else {
      try {
        o = fn();
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
  };

  report(1, "cage validity", [&] { return cage_validity(a); }, true);
  report(2, "offset growth", [&] { return offset_growth(a); }, true);
  report(3, "soup invariance", [&] { return soup_invariance(a); }, true);
  report(4, "mvc properties", [&] { return mvc_properties(a); }, true);
  report(5, "expressivity", [&] { return expressivity(a); }, true);
  report(6, "gradient suite", gradient_suite, false);
  report(7, "skinning", [&] { return skinning(a); }, true);
  report(8, "lbs and metrics", lbs_and_metrics, false);
  report(9, "spectral sanity", spectral, false);
  report(10, "determinism", [&] {
    run_pipeline(b);
    return determinism(a, b);
  }, true);

  if (argc <= 1) fs::remove_all(root);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
