#pragma once

#include "lastomo/geometry.hpp"
#include "lastomo/phantom.hpp"
#include "lastomo/spectroscopy.hpp"
#include "lastomo/training.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lastomo {

// Everything a pipeline run depends on. Spectroscopic constants have no
// built-in values and must come from a config file.
struct PipelineConfig {
  std::uint64_t seed = 0;
  MeshConfig mesh;
  BeamConfig beams;
  std::array<TransitionLine, 2> lines;
  double pressure_atm = 1.0;
  PhantomParams phantom;
  DatasetCounts counts;
  TrainConfig train;
  double rcond = 1e-10;
  std::vector<double> sweep_snr_db = {20, 25, 30, 35, 40, 45, 50};
  std::vector<std::string> archs = {"pi-cnn", "d-cnn", "h-cnn"};
};

nlohmann::json to_json(const PipelineConfig& c);
// Unknown keys are rejected; keys starting with '_' are comments.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

void validate(const PipelineConfig& c);

nlohmann::json to_json(const TransitionLine& l);
TransitionLine line_from_json(const nlohmann::json& j, const std::string& name);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhantomParams& p);
PhantomParams phantom_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MeshConfig& m);
MeshConfig mesh_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BeamConfig& b);
BeamConfig beams_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetCounts& c);
DatasetCounts counts_from_json(const nlohmann::json& j);

}  // namespace lastomo
