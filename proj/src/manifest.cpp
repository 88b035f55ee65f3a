#include "cello/manifest.hpp"

#include <set>
#include <stdexcept>

#include "cello/io_util.hpp"

namespace cello {

using json = nlohmann::ordered_json;

namespace {

// Reads optional keys from an object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) {
      throw std::runtime_error(what_ + ": expected an object");
    }
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) {
      try {
        out = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw std::runtime_error(what_ + "." + key + ": " + e.what());
      }
    }
  }
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw std::runtime_error(what_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace

std::string RunManifest::to_string() const {
  json j;
  j["tool_version"] = tool_version;
  j["command"] = command;
  j["parameters"] = parameters;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }
  RunManifest m;
  Reader r(j, "manifest");
  r.get("tool_version", m.tool_version);
  r.get("command", m.command);
  r.get("parameters", m.parameters);
  r.finish();
  if (m.command.empty()) {
    throw std::runtime_error("manifest: missing command");
  }
  return m;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest.to_string());
}

RunManifest load_manifest(const std::filesystem::path& path) {
  return RunManifest::parse(read_file(path));
}

json to_json(const IcpConfig& c) {
  return {{"knn", c.knn},
          {"trim_ratio", c.trim_ratio},
          {"max_iterations", c.max_iterations},
          {"translation_threshold", c.translation_threshold},
          {"rotation_threshold", c.rotation_threshold},
          {"detect_cycles", c.detect_cycles},
          {"subsample_ratio", c.subsample_ratio},
          {"max_density", c.max_density},
          {"filter_seed", c.filter_seed},
          {"normal_neighbors", c.normal_neighbors}};
}

IcpConfig icp_config_from_json(const json& j) {
  IcpConfig c;
  Reader r(j, "icp");
  r.get("knn", c.knn);
  r.get("trim_ratio", c.trim_ratio);
  r.get("max_iterations", c.max_iterations);
  r.get("translation_threshold", c.translation_threshold);
  r.get("rotation_threshold", c.rotation_threshold);
  r.get("detect_cycles", c.detect_cycles);
  r.get("subsample_ratio", c.subsample_ratio);
  r.get("max_density", c.max_density);
  r.get("filter_seed", c.filter_seed);
  r.get("normal_neighbors", c.normal_neighbors);
  r.finish();
  c.validate();
  return c;
}

json to_json(const DbscanConfig& c) {
  return {{"eps", c.eps}, {"min_pts", c.min_pts}, {"rotation_weight", c.rotation_weight}};
}

DbscanConfig dbscan_config_from_json(const json& j) {
  DbscanConfig c;
  Reader r(j, "dbscan");
  r.get("eps", c.eps);
  r.get("min_pts", c.min_pts);
  r.get("rotation_weight", c.rotation_weight);
  r.finish();
  return c;
}

json to_json(const VoxelGridSpec& g) {
  return {{"counts", g.counts},
          {"min_corner", {g.min_corner.x(), g.min_corner.y(), g.min_corner.z()}},
          {"extent", {g.extent.x(), g.extent.y(), g.extent.z()}}};
}

VoxelGridSpec grid_from_json(const json& j) {
  VoxelGridSpec g;
  std::array<double, 3> lo{g.min_corner.x(), g.min_corner.y(), g.min_corner.z()};
  std::array<double, 3> ext{g.extent.x(), g.extent.y(), g.extent.z()};
  Reader r(j, "grid");
  r.get("counts", g.counts);
  r.get("min_corner", lo);
  r.get("extent", ext);
  r.finish();
  g.min_corner = Eigen::Vector3d(lo[0], lo[1], lo[2]);
  g.extent = Eigen::Vector3d(ext[0], ext[1], ext[2]);
  g.validate();
  return g;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"regularization", c.regularization}, {"tolerance", c.tolerance},
          {"logdet_loss", c.logdet_loss},     {"diagonal_only", c.diagonal_only},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Reader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("max_epochs", c.max_epochs);
  r.get("regularization", c.regularization);
  r.get("tolerance", c.tolerance);
  r.get("logdet_loss", c.logdet_loss);
  r.get("diagonal_only", c.diagonal_only);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

json to_json(const SceneSpec& s) {
  const Vector6d& m = s.motion.vector();
  return {{"archetype", std::string(to_string(s.archetype))},
          {"size", s.size},
          {"points", s.points},
          {"sigma", s.sigma},
          {"seed", s.seed},
          {"motion", {m(0), m(1), m(2), m(3), m(4), m(5)}}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  std::string archetype(to_string(s.archetype));
  std::array<double, 6> motion{};
  for (int i = 0; i < 6; ++i) motion[static_cast<std::size_t>(i)] = s.motion.vector()(i);
  Reader r(j, "scene");
  r.get("archetype", archetype);
  r.get("size", s.size);
  r.get("points", s.points);
  r.get("sigma", s.sigma);
  r.get("seed", s.seed);
  r.get("motion", motion);
  r.finish();
  const auto a = parse_archetype(archetype);
  if (!a) {
    throw std::runtime_error("scene: unknown archetype '" + archetype + "'");
  }
  s.archetype = *a;
  s.motion = Twist(Eigen::Map<const Vector6d>(motion.data()));
  s.validate();
  return s;
}

}  // namespace cello
