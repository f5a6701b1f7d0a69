#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dmask/model.hpp"
#include "json.hpp"

namespace dmask {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Raw self-describing container: a JSON config header plus named shaped
/// arrays. Round-trips are bit-identical.
struct CheckpointData {
  nlohmann::json header;
  std::vector<std::pair<std::string, Mat>> arrays;
};

void save_checkpoint_raw(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData load_checkpoint_raw(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Saves every model parameter with the model config in the header.
void save_model(ModelParams& params, const std::filesystem::path& path);

/// Rebuilds the model from the header config and fills every parameter,
/// validating names and shapes against the header-derived layout.
ModelParams load_model(const std::filesystem::path& path);

}  // namespace dmask
