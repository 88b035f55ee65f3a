// Command-line driver. Every stage turns its flags into a complete parameter
// object, runs from that object alone, and stores it as manifest.json next to
// its outputs; `rerun` replays a manifest into a new directory.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cello/censi.hpp"
#include "cello/cello_model.hpp"
#include "cello/covariance_sampling.hpp"
#include "cello/csv.hpp"
#include "cello/dataset.hpp"
#include "cello/descriptors.hpp"
#include "cello/evaluation.hpp"
#include "cello/io_util.hpp"
#include "cello/manifest.hpp"
#include "cello/random.hpp"
#include "cello/registration.hpp"
#include "cello/scene.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cello;

// Bad invocation or missing input; exits with status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Pair = std::pair<std::size_t, std::size_t>;

std::string pair_tag(const Pair& p) {
  return std::to_string(p.first) + "_" + std::to_string(p.second);
}

std::string pair_id(const Pair& p) {
  return std::to_string(p.first) + "-" + std::to_string(p.second);
}

Pair parse_pair(const std::string& text) {
  const auto f = csv::split(text);
  double a = 0;
  double b = 0;
  if (f.size() != 2 || !csv::parse_double(f[0], a) || !csv::parse_double(f[1], b) || a < 0 ||
      b <= a || a != std::floor(a) || b != std::floor(b)) {
    throw UsageError("bad pair '" + text + "': expected i,j with 0 <= i < j");
  }
  return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

std::string absolute_input(const std::string& path, bool directory) {
  const fs::path p = fs::absolute(path).lexically_normal();
  if (directory ? !fs::is_directory(p) : !fs::is_regular_file(p)) {
    throw UsageError(p.string() + ": missing " + (directory ? "directory" : "file"));
  }
  return p.string();
}

// Pairs named in the parameters, or every pair of the sequence.
std::vector<Pair> selected_pairs(const json& p, const SequenceDataset& ds) {
  std::vector<Pair> pairs;
  if (p.contains("pairs") && !p.at("pairs").empty()) {
    for (const auto& q : p.at("pairs")) {
      pairs.push_back(parse_pair(q.get<std::string>()));
    }
  } else {
    pairs = enumerate_pairs(ds.size());
  }
  for (const auto& q : pairs) {
    if (q.second >= ds.size()) {
      throw UsageError("pair " + pair_id(q) + " outside a sequence of " + std::to_string(ds.size()));
    }
  }
  return pairs;
}

std::string matrix_text(const Eigen::MatrixXd& m, const std::vector<std::string>& comments = {}) {
  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << '\n';
  write_matrix_csv(out, m);
  return out.str();
}

Covariance6 read_covariance(const fs::path& path) {
  std::istringstream in(read_file(path));
  const Eigen::MatrixXd m = read_matrix_csv(in);
  if (m.rows() != 6 || m.cols() != 6) {
    throw std::runtime_error(path.string() + ": expected a 6 x 6 matrix");
  }
  return m;
}

// Sampled covariances listed in a `sample` output directory.
std::vector<std::pair<Pair, Covariance6>> read_sampled(const fs::path& dir) {
  std::istringstream in(read_file(dir / "sampled.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<Pair, Covariance6>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    std::string id(f.at(0));
    const auto dash = id.find('-');
    if (dash == std::string::npos) throw std::runtime_error("sampled.csv: bad pair '" + id + "'");
    const Pair p = parse_pair(id.substr(0, dash) + "," + id.substr(dash + 1));
    out.emplace_back(p, read_covariance(dir / ("covariance_" + pair_tag(p) + ".csv")));
  }
  return out;
}

// Reference is cloud i, reading is cloud j, truth is the pose of j in i.
struct PairClouds {
  const PointCloud& reading;
  const PointCloud& reference;
  RigidTransform truth;
};

PairClouds clouds_of(const SequenceDataset& ds, const Pair& p) {
  return {ds.clouds[p.second], ds.clouds[p.first], ds.relative_pose(p.first, p.second)};
}

// ---- stages ---------------------------------------------------------------

void stage_gen_scene(const json& p, const fs::path& out) {
  const SceneSpec spec = scene_spec_from_json(p.at("scene"));
  const int length = p.at("corridor_length").get<int>();
  SequenceDataset ds;
  if (length > 0) {
    ds = generate_corridor_sequence(spec, length, p.at("step").get<double>(),
                                    p.at("pillar_spacing").get<double>());
  } else {
    const Scene sc = generate_scene(spec);
    ds.clouds = {sc.reference, sc.reading};
    ds.poses = {RigidTransform::identity(), sc.truth};
    ds.names = {"cloud_0000", "cloud_0001"};
  }
  save_dataset(ds, out);
}

void stage_sample(const json& p, const fs::path& out) {
  const SequenceDataset ds = load_dataset(p.at("dataset").get<std::string>());
  const IcpConfig icp = icp_config_from_json(p.at("icp"));
  const DbscanConfig db = dbscan_config_from_json(p.at("dbscan"));
  const int n = p.at("n").get<int>();
  const double a = p.at("a").get<double>();
  const auto seed = p.at("seed").get<std::uint64_t>();
  const int workers = p.at("workers").get<int>();

  std::ostringstream summary;
  summary << "pair,n_total,n_kept,kept_cluster,trace\n";
  for (const Pair& q : selected_pairs(p, ds)) {
    const PairClouds c = clouds_of(ds, q);
    const SampleSet raw = sample_registrations(
        c.reading, c.reference, c.truth, PerturbationModel{c.truth, a}, n, icp,
        derive_seed(seed, "sample", (q.first << 16) + q.second), workers);
    const SampleSet kept = dbscan_filter(raw, db);
    const SampledCovariance cov = sampled_covariance(kept);
    std::ostringstream samples;
    write_samples_csv(samples, kept);
    write_file_atomic(out / ("samples_" + pair_tag(q) + ".csv"), samples.str());
    write_file_atomic(out / ("covariance_" + pair_tag(q) + ".csv"),
                      matrix_text(cov.covariance, {"n_total: " + std::to_string(cov.n_total),
                                                   "n_kept: " + std::to_string(cov.n_kept)}));
    summary << pair_id(q) << ',' << cov.n_total << ',' << cov.n_kept << ',' << cov.kept_cluster
            << ',' << csv::format_double(cov.covariance.trace()) << '\n';
  }
  write_file_atomic(out / "sampled.csv", summary.str());
}

void stage_describe(const json& p, const fs::path& out) {
  const SequenceDataset ds = load_dataset(p.at("dataset").get<std::string>());
  const VoxelGridSpec grid = grid_from_json(p.at("grid"));
  const double radius = p.at("radius").get<double>();
  for (const Pair& q : selected_pairs(p, ds)) {
    const PairClouds c = clouds_of(ds, q);
    const CloudDescriptor d = describe_pair(c.reading, c.reference, c.truth, grid, radius);
    write_file_atomic(out / ("descriptor_" + pair_tag(q) + ".csv"),
                      matrix_text(d.values.transpose(),
                                  {std::string("empty_overlap: ") + (d.empty_overlap ? "1" : "0")}));
  }
}

std::vector<TrainingExample> build_examples(const json& p, const VoxelGridSpec& grid) {
  const auto& datasets = p.at("datasets");
  const auto& samples = p.at("samples");
  if (datasets.size() != samples.size() || datasets.empty()) {
    throw UsageError("need one --samples directory per --dataset");
  }
  const double radius = p.at("radius").get<double>();
  std::vector<TrainingExample> examples;
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    const SequenceDataset ds = load_dataset(datasets[k].get<std::string>());
    for (const auto& [q, cov] : read_sampled(samples[k].get<std::string>())) {
      if (q.second >= ds.size()) throw std::runtime_error("sampled pair outside its dataset");
      const PairClouds c = clouds_of(ds, q);
      TrainingExample ex;
      ex.overlap = std::make_shared<const PointCloud>(
          extract_overlap(c.reading, c.reference, c.truth, radius));
      ex.descriptor = describe_overlap(*ex.overlap, grid);
      ex.covariance = cov;
      ex.pair_id = std::to_string(k) + ":" + pair_id(q);
      examples.push_back(std::move(ex));
    }
  }
  return examples;
}

void stage_train(const json& p, const fs::path& out) {
  const VoxelGridSpec grid = grid_from_json(p.at("grid"));
  const TrainConfig cfg = train_config_from_json(p.at("train"));
  std::vector<TrainingExample> examples = build_examples(p, grid);
  const int augment = p.at("augment").get<int>();
  const std::size_t base = examples.size();
  for (int r = 1; r <= augment; ++r) {
    const double theta = 2.0 * std::numbers::pi * r / (augment + 1);
    for (std::size_t i = 0; i < base; ++i) {
      examples.push_back(augment_example(examples[i], theta, grid));
    }
  }
  TrainReport report;
  const PredictorModel model = train(examples, cfg, grid, &report);
  save_model(model, out / "model.txt");
  std::ostringstream log;
  log << "epoch,objective,mean_loss\n";
  for (std::size_t e = 0; e < report.epoch_objective.size(); ++e) {
    log << e << ',' << csv::format_double(report.epoch_objective[e]) << ','
        << csv::format_double(report.epoch_loss[e]) << '\n';
  }
  write_file_atomic(out / "training.csv", log.str());
}

void stage_predict(const json& p, const fs::path& out) {
  const PredictorModel model = load_model(p.at("model").get<std::string>());
  const SequenceDataset ds = load_dataset(p.at("dataset").get<std::string>());
  const double radius = p.at("radius").get<double>();
  for (const Pair& q : selected_pairs(p, ds)) {
    const PairClouds c = clouds_of(ds, q);
    const CloudDescriptor d = describe_pair(c.reading, c.reference, c.truth, model.grid, radius);
    const Prediction pr = predict_checked(d.values, model);
    write_file_atomic(out / ("prediction_" + pair_tag(q) + ".csv"),
                      matrix_text(pr.covariance, {std::string("uniform_fallback: ") +
                                                  (pr.uniform_fallback ? "1" : "0")}));
  }
}

void stage_eval_pairs(const json& p, const fs::path& out) {
  const PredictorModel model = load_model(p.at("model").get<std::string>());
  const std::vector<TrainingExample> test = build_examples(p, model.grid);
  std::vector<Covariance6> censi;
  const double sigma = p.at("censi_sigma").get<double>();
  if (sigma > 0.0) {
    const IcpConfig icp = icp_config_from_json(p.at("icp"));
    const auto& datasets = p.at("datasets");
    const auto& samples = p.at("samples");
    for (std::size_t k = 0; k < datasets.size(); ++k) {
      const SequenceDataset ds = load_dataset(datasets[k].get<std::string>());
      for (const auto& entry : read_sampled(samples[k].get<std::string>())) {
        const PairClouds c = clouds_of(ds, entry.first);
        censi.push_back(censi_covariance(c.reading, c.reference, c.truth,
                                         SensorNoiseModel{sigma}, icp).covariance);
      }
    }
  }
  const PredictorEvaluation e =
      evaluate_predictor(test, model, censi, p.at("leave_one_out").get<bool>());
  std::ostringstream table;
  write_pair_evaluation_csv(table, e);
  write_file_atomic(out / "pairs.csv", table.str());
  std::ostringstream summary;
  summary << "mean_kl_baseline,mean_kl_learned,mean_kl_censi\n"
          << csv::format_double(e.mean_kl_baseline) << ',' << csv::format_double(e.mean_kl_learned)
          << ',' << csv::format_double(e.mean_kl_censi) << '\n';
  write_file_atomic(out / "summary.csv", summary.str());
}

void stage_eval_traj(const json& p, const fs::path& out) {
  const PredictorModel model = load_model(p.at("model").get<std::string>());
  const SequenceDataset ds = load_dataset(p.at("dataset").get<std::string>());
  const IcpConfig icp = icp_config_from_json(p.at("icp"));
  const int count = p.at("trajectories").get<int>();
  const double a = p.at("a").get<double>();
  const auto seed = p.at("seed").get<std::uint64_t>();
  const StepRegistrar registrar = icp_step_registrar(icp);
  const StepPredictor predictor = model_step_predictor(model, p.at("radius").get<double>());
  std::vector<TrajectoryResult> results;
  int covered = 0;
  for (int k = 0; k < count; ++k) {
    results.push_back(run_trajectory(ds, registrar, predictor, a,
                                     derive_seed(seed, "trajectory", static_cast<std::uint64_t>(k))));
    const TrajectoryResult& r = results.back();
    const Eigen::Vector2d e = (r.final_estimate.translation() - r.final_truth.translation()).head<2>();
    covered += e.dot(ground_plane_covariance(r).ldlt().solve(e)) <= 4.0;
  }
  std::ostringstream traj;
  write_trajectory_csv(traj, results);
  write_file_atomic(out / "trajectories.csv", traj.str());
  std::ostringstream ell;
  write_ellipse_csv(ell, results);
  write_file_atomic(out / "ellipses.csv", ell.str());
  const ConsistencyReport rep = consistency_report(results, p.at("include_nonconverged").get<bool>());
  std::ostringstream summary;
  summary << "mean_d_m,mean_d_m_translation,mean_d_m_rotation,classification,included,excluded,"
             "coverage_2sigma\n"
          << csv::format_double(rep.mean_mahalanobis) << ','
          << csv::format_double(rep.mean_translation) << ','
          << csv::format_double(rep.mean_rotation) << ',' << to_string(rep.classification) << ','
          << rep.included << ',' << rep.excluded << ','
          << csv::format_double(static_cast<double>(covered) / count) << '\n';
  write_file_atomic(out / "consistency.csv", summary.str());
}

void stage_sweep_noise(const json& p, const fs::path& out) {
  NoiseSweepConfig cfg;
  cfg.samples = p.at("n").get<int>();
  cfg.a = p.at("a").get<double>();
  cfg.icp = icp_config_from_json(p.at("icp"));
  cfg.seed = p.at("seed").get<std::uint64_t>();
  cfg.workers = p.at("workers").get<int>();
  const auto rows = noise_sweep(scene_spec_from_json(p.at("scene")),
                                p.at("sigmas").get<std::vector<double>>(), cfg);
  std::ostringstream table;
  write_noise_sweep_csv(table, rows);
  write_file_atomic(out / "sweep.csv", table.str());
}

void stage_landscape(const json& p, const fs::path& out) {
  const SequenceDataset ds = load_dataset(p.at("dataset").get<std::string>());
  const IcpConfig icp = icp_config_from_json(p.at("icp"));
  const Pair q = parse_pair(p.at("pair").get<std::string>());
  if (q.second >= ds.size()) throw UsageError("pair outside the sequence");
  const auto axes = p.at("axes").get<std::array<int, 2>>();
  const double range = p.at("range").get<double>();
  const int steps = p.at("resolution").get<int>();
  if (steps < 2 || axes[0] == axes[1] || std::min(axes[0], axes[1]) < 0 ||
      std::max(axes[0], axes[1]) > 5) {
    throw UsageError("landscape: need resolution >= 2 and two distinct axes in 0..5");
  }
  const PairClouds c = clouds_of(ds, q);
  const IcpProblem problem(c.reading, c.reference, icp);
  std::ostringstream table;
  table << "d" << axes[0] << ",d" << axes[1] << ",cost\n";
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      Vector6d xi = Vector6d::Zero();
      xi(axes[0]) = -range + 2.0 * range * i / (steps - 1);
      xi(axes[1]) = -range + 2.0 * range * j / (steps - 1);
      table << csv::format_double(xi(axes[0])) << ',' << csv::format_double(xi(axes[1])) << ','
            << csv::format_double(problem.objective_value(exp_map(Twist(xi)) * c.truth)) << '\n';
    }
  }
  write_file_atomic(out / "landscape.csv", table.str());
}

const std::map<std::string, std::function<void(const json&, const fs::path&)>>& stages() {
  static const std::map<std::string, std::function<void(const json&, const fs::path&)>> s{
      {"gen-scene", stage_gen_scene},     {"sample", stage_sample},
      {"describe", stage_describe},       {"train", stage_train},
      {"predict", stage_predict},         {"eval-pairs", stage_eval_pairs},
      {"eval-traj", stage_eval_traj},     {"sweep-noise", stage_sweep_noise},
      {"landscape", stage_landscape}};
  return s;
}

void execute(const RunManifest& m, const fs::path& out) {
  const auto it = stages().find(m.command);
  if (it == stages().end()) {
    throw UsageError("unknown command '" + m.command + "'");
  }
  fs::create_directories(out);
  it->second(m.parameters, out);
  save_manifest(m, out / "manifest.json");
}

// ---- option groups --------------------------------------------------------

void add_icp_options(CLI::App* app, IcpConfig& c) {
  app->add_option("--knn", c.knn, "Nearest neighbours per reading point")->capture_default_str();
  app->add_option("--trim", c.trim_ratio, "Kept fraction of associations")->capture_default_str();
  app->add_option("--max-iterations", c.max_iterations)->capture_default_str();
  app->add_option("--translation-threshold", c.translation_threshold, "m")->capture_default_str();
  app->add_option("--rotation-threshold", c.rotation_threshold, "rad")->capture_default_str();
  app->add_flag("!--no-cycle-detection", c.detect_cycles, "Only stop on small increments");
  app->add_option("--subsample", c.subsample_ratio, "Random subsampling ratio")->capture_default_str();
  app->add_option("--max-density", c.max_density, "points / m^3, 0 disables")->capture_default_str();
  app->add_option("--normal-neighbors", c.normal_neighbors)->capture_default_str();
}

void add_grid_options(CLI::App* app, std::vector<int>& counts, std::vector<double>& lo,
                      std::vector<double>& extent) {
  app->add_option("--grid-counts", counts, "Cells per axis")->expected(3)->delimiter(',')->capture_default_str();
  app->add_option("--grid-min", lo, "Grid minimum corner, m")->expected(3)->delimiter(',')->capture_default_str();
  app->add_option("--grid-extent", extent, "Grid size, m")->expected(3)->delimiter(',')->capture_default_str();
}

json grid_json(const std::vector<int>& counts, const std::vector<double>& lo,
               const std::vector<double>& extent) {
  json g = {{"counts", counts}, {"min_corner", lo}, {"extent", extent}};
  return to_json(grid_from_json(g));
}

json pair_list(const std::vector<std::string>& pairs) {
  json j = json::array();
  for (const auto& s : pairs) {
    parse_pair(s);
    j.push_back(s);
  }
  return j;
}

json absolute_dirs(const std::vector<std::string>& dirs) {
  json j = json::array();
  for (const auto& d : dirs) j.push_back(absolute_input(d, true));
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Covariance estimation for 3D ICP registration"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string out;
  RunManifest manifest;
  std::function<void()> finalize;

  auto subcommand = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--out", out, "Output directory")->required();
    return sub;
  };

  // gen-scene
  SceneSpec scene;
  std::string archetype = "cube";
  std::vector<double> motion{0.1, 0.05, 0.0, 0.0, 0.0, 0.05};
  int corridor = 0;
  double step = 0.5;
  double pillar_spacing = 2.0;
  CLI::App* gen = subcommand("gen-scene", "Synthetic pair or corridor sequence as a dataset directory");
  gen->add_option("--archetype", archetype, "cube, cylinder_pair, hallway, corner, planes")->capture_default_str();
  gen->add_option("--size", scene.size, "m")->capture_default_str();
  gen->add_option("--points", scene.points)->capture_default_str();
  gen->add_option("--sigma", scene.sigma, "Per-axis noise, m")->capture_default_str();
  gen->add_option("--seed", scene.seed)->capture_default_str();
  gen->add_option("--motion", motion, "Twist u,omega of the reading")->expected(6)->delimiter(',')->capture_default_str();
  gen->add_option("--corridor", corridor, "Corridor sequence length (0: single pair)")->capture_default_str();
  gen->add_option("--step", step, "Corridor step, m")->capture_default_str();
  gen->add_option("--pillar-spacing", pillar_spacing, "In units of size, 0 for bare walls")->capture_default_str();
  gen->callback([&] {
    const auto a = parse_archetype(archetype);
    if (!a) throw UsageError("unknown archetype '" + archetype + "'");
    scene.archetype = *a;
    scene.motion = Twist(Eigen::Map<const Vector6d>(motion.data()));
    manifest.parameters = {{"scene", to_json(scene)},
                           {"corridor_length", corridor},
                           {"step", step},
                           {"pillar_spacing", pillar_spacing}};
    scene_spec_from_json(manifest.parameters.at("scene"));
  });

  // Shared inputs.
  std::string dataset;
  std::vector<std::string> datasets;
  std::vector<std::string> samples_dirs;
  std::vector<std::string> pairs;
  std::string model;
  IcpConfig icp;
  DbscanConfig dbscan;
  int n = 500;
  double a = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;
  double radius = kDefaultOverlapRadius;
  const VoxelGridSpec default_grid;
  std::vector<int> grid_counts(default_grid.counts.begin(), default_grid.counts.end());
  std::vector<double> grid_min{default_grid.min_corner.x(), default_grid.min_corner.y(),
                               default_grid.min_corner.z()};
  std::vector<double> grid_extent{default_grid.extent.x(), default_grid.extent.y(),
                                  default_grid.extent.z()};

  CLI::App* sample = subcommand("sample", "Monte-Carlo ICP covariance per pair");
  sample->add_option("--dataset", dataset, "Dataset directory")->required();
  sample->add_option("--pair", pairs, "i,j (repeatable; default all pairs)");
  sample->add_option("--n", n, "Registrations per pair")->capture_default_str();
  sample->add_option("--a", a, "Variance of the initial perturbation")->capture_default_str();
  sample->add_option("--seed", seed)->capture_default_str();
  sample->add_option("--workers", workers)->capture_default_str();
  sample->add_option("--eps", dbscan.eps, "DBSCAN radius")->capture_default_str();
  sample->add_option("--min-pts", dbscan.min_pts, "DBSCAN core size, 0 for max(5, n/500)")->capture_default_str();
  sample->add_option("--rotation-weight", dbscan.rotation_weight, "m per rad in DBSCAN")->capture_default_str();
  add_icp_options(sample, icp);
  sample->callback([&] {
    manifest.parameters = {{"dataset", absolute_input(dataset, true)}, {"pairs", pair_list(pairs)},
                           {"n", n}, {"a", a}, {"seed", seed}, {"workers", workers},
                           {"icp", to_json(icp)}, {"dbscan", to_json(dbscan)}};
  });

  CLI::App* describe = subcommand("describe", "Overlap descriptors per pair");
  describe->add_option("--dataset", dataset, "Dataset directory")->required();
  describe->add_option("--pair", pairs, "i,j (repeatable; default all pairs)");
  describe->add_option("--radius", radius, "Overlap radius, m")->capture_default_str();
  add_grid_options(describe, grid_counts, grid_min, grid_extent);
  describe->callback([&] {
    manifest.parameters = {{"dataset", absolute_input(dataset, true)}, {"pairs", pair_list(pairs)},
                           {"radius", radius}, {"grid", grid_json(grid_counts, grid_min, grid_extent)}};
  });

  TrainConfig train_cfg;
  int augment = 0;
  CLI::App* train_cmd = subcommand("train", "Learn the descriptor metric");
  train_cmd->add_option("--dataset", datasets, "Dataset directory (repeatable)")->required();
  train_cmd->add_option("--samples", samples_dirs, "Matching `sample` output (repeatable)")->required();
  train_cmd->add_option("--radius", radius, "Overlap radius, m")->capture_default_str();
  train_cmd->add_option("--augment", augment, "Extra rotated copies per example")->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.max_epochs)->capture_default_str();
  train_cmd->add_option("--lambda", train_cfg.regularization)->capture_default_str();
  train_cmd->add_option("--tolerance", train_cfg.tolerance)->capture_default_str();
  train_cmd->add_flag("--logdet", train_cfg.logdet_loss, "log det loss");
  train_cmd->add_flag("--diagonal", train_cfg.diagonal_only, "Diagonal metric only");
  train_cmd->add_option("--seed", train_cfg.seed)->capture_default_str();
  add_grid_options(train_cmd, grid_counts, grid_min, grid_extent);
  train_cmd->callback([&] {
    manifest.parameters = {{"datasets", absolute_dirs(datasets)},
                           {"samples", absolute_dirs(samples_dirs)},
                           {"radius", radius},
                           {"augment", augment},
                           {"grid", grid_json(grid_counts, grid_min, grid_extent)},
                           {"train", to_json(train_cfg)}};
  });

  CLI::App* predict_cmd = subcommand("predict", "Predicted covariance per pair at its ground-truth pose");
  predict_cmd->add_option("--model", model, "Model file")->required();
  predict_cmd->add_option("--dataset", dataset, "Dataset directory")->required();
  predict_cmd->add_option("--pair", pairs, "i,j (repeatable; default all pairs)");
  predict_cmd->add_option("--radius", radius, "Overlap radius, m")->capture_default_str();
  predict_cmd->callback([&] {
    manifest.parameters = {{"model", absolute_input(model, false)},
                           {"dataset", absolute_input(dataset, true)},
                           {"pairs", pair_list(pairs)},
                           {"radius", radius}};
  });

  double censi_sigma = 0.0;
  bool loo = false;
  CLI::App* eval_pairs = subcommand("eval-pairs", "Average KL of baseline, learned and closed-form covariances");
  eval_pairs->add_option("--model", model, "Model file")->required();
  eval_pairs->add_option("--dataset", datasets, "Dataset directory (repeatable)")->required();
  eval_pairs->add_option("--samples", samples_dirs, "Matching `sample` output (repeatable)")->required();
  eval_pairs->add_option("--radius", radius, "Overlap radius, m")->capture_default_str();
  eval_pairs->add_option("--censi-sigma", censi_sigma, "Sensor noise for the closed form, 0 skips it")->capture_default_str();
  eval_pairs->add_flag("--leave-one-out", loo, "Exclude each pair from its own prediction");
  add_icp_options(eval_pairs, icp);
  eval_pairs->callback([&] {
    manifest.parameters = {{"model", absolute_input(model, false)},
                           {"datasets", absolute_dirs(datasets)},
                           {"samples", absolute_dirs(samples_dirs)},
                           {"radius", radius},
                           {"censi_sigma", censi_sigma},
                           {"leave_one_out", loo},
                           {"icp", to_json(icp)}};
  });

  int trajectories = 100;
  bool include_nonconverged = false;
  CLI::App* eval_traj = subcommand("eval-traj", "Odometry with compounded predicted covariances");
  eval_traj->add_option("--model", model, "Model file")->required();
  eval_traj->add_option("--dataset", dataset, "Sequence directory")->required();
  eval_traj->add_option("--trajectories", trajectories)->capture_default_str();
  eval_traj->add_option("--a", a, "Variance of the initial perturbation")->capture_default_str();
  eval_traj->add_option("--seed", seed)->capture_default_str();
  eval_traj->add_option("--radius", radius, "Overlap radius, m")->capture_default_str();
  eval_traj->add_flag("--include-nonconverged", include_nonconverged);
  add_icp_options(eval_traj, icp);
  eval_traj->callback([&] {
    if (trajectories < 1) throw UsageError("--trajectories must be >= 1");
    manifest.parameters = {{"model", absolute_input(model, false)},
                           {"dataset", absolute_input(dataset, true)},
                           {"trajectories", trajectories},
                           {"a", a},
                           {"seed", seed},
                           {"radius", radius},
                           {"include_nonconverged", include_nonconverged},
                           {"icp", to_json(icp)}};
  });

  std::vector<double> sigmas{0.0, 0.0025, 0.005, 0.0075, 0.01};
  IcpConfig sweep_icp = NoiseSweepConfig{}.icp;
  SceneSpec sweep_scene;
  std::string sweep_archetype = "cube";
  CLI::App* sweep = subcommand("sweep-noise", "Sampled vs closed-form trace over sensor noise");
  sweep->add_option("--archetype", sweep_archetype)->capture_default_str();
  sweep->add_option("--size", sweep_scene.size, "m")->capture_default_str();
  sweep->add_option("--points", sweep_scene.points)->capture_default_str();
  sweep->add_option("--scene-seed", sweep_scene.seed)->capture_default_str();
  sweep->add_option("--sigmas", sigmas)->delimiter(',')->capture_default_str();
  sweep->add_option("--n", n, "Registrations per sigma")->capture_default_str();
  sweep->add_option("--a", a)->capture_default_str();
  sweep->add_option("--seed", seed)->capture_default_str();
  sweep->add_option("--workers", workers)->capture_default_str();
  add_icp_options(sweep, sweep_icp);
  sweep->callback([&] {
    const auto kind = parse_archetype(sweep_archetype);
    if (!kind) throw UsageError("unknown archetype '" + sweep_archetype + "'");
    sweep_scene.archetype = *kind;
    manifest.parameters = {{"scene", to_json(sweep_scene)}, {"sigmas", sigmas}, {"n", n},
                           {"a", a}, {"seed", seed}, {"workers", workers},
                           {"icp", to_json(sweep_icp)}};
  });

  std::string pair = "0,1";
  std::vector<int> axes{0, 1};
  double range = 0.5;
  int resolution = 41;
  CLI::App* landscape = subcommand("landscape", "ICP objective on a 2D grid of perturbations");
  landscape->add_option("--dataset", dataset, "Dataset directory")->required();
  landscape->add_option("--pair", pair, "i,j")->capture_default_str();
  landscape->add_option("--axes", axes, "Two twist indices: 0..2 translation, 3..5 rotation")
      ->expected(2)->delimiter(',')->capture_default_str();
  landscape->add_option("--range", range, "Half-width per axis")->capture_default_str();
  landscape->add_option("--resolution", resolution, "Grid points per axis")->capture_default_str();
  add_icp_options(landscape, icp);
  landscape->callback([&] {
    parse_pair(pair);
    manifest.parameters = {{"dataset", absolute_input(dataset, true)}, {"pair", pair},
                           {"axes", axes}, {"range", range}, {"resolution", resolution},
                           {"icp", to_json(icp)}};
  });

  std::string manifest_path;
  CLI::App* rerun = subcommand("rerun", "Replay a manifest.json into a new output directory");
  rerun->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required();
  rerun->callback([&] {
    manifest = load_manifest(absolute_input(manifest_path, false));
    if (manifest.tool_version != kToolVersion) {
      std::cerr << "warning: manifest written by version " << manifest.tool_version << '\n';
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  CLI::App* used = app.get_subcommands().front();
  if (used != rerun) {
    manifest.command = used->get_name();
  }
  execute(manifest, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
