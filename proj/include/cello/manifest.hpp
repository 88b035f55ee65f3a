#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cello/cello_model.hpp"
#include "cello/covariance_sampling.hpp"
#include "cello/descriptors.hpp"
#include "cello/registration.hpp"
#include "cello/scene.hpp"

namespace cello {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything needed to re-run one CLI stage. `parameters` holds every
/// module setting with defaults filled in; the output directory is not part
/// of it, so re-runs elsewhere produce an identical manifest.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();

  [[nodiscard]] std::string to_string() const;
  static RunManifest parse(const std::string& text);
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

// Conversions; readers fill absent keys with defaults and reject unknown ones.
nlohmann::ordered_json to_json(const IcpConfig& c);
IcpConfig icp_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const DbscanConfig& c);
DbscanConfig dbscan_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const VoxelGridSpec& g);
VoxelGridSpec grid_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const nlohmann::ordered_json& j);

}  // namespace cello
