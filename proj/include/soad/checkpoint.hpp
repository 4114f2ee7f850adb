#pragma once

#include <filesystem>

#include <json.hpp>

#include "soad/augment.hpp"
#include "soad/network.hpp"
#include "soad/schedule.hpp"

namespace soad {

/// A trained denoiser together with everything needed to use it on new windows.
struct Checkpoint {
  WindowDenoiser denoiser;
  NoiseSchedule schedule;
  ChannelLayout layout;  ///< layout of one window step the denoiser was trained on
  NormalizationStats stats;
  OperatorList operators;  ///< observation operators of the augmented blocks (empty: state only)
  nlohmann::json training = nlohmann::json::object();  ///< config echo and loss summary
};

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ObservationOperator& op);
ObservationOperator operator_from_json(const nlohmann::json& j);

/// Round every parameter to float32, the precision checkpoints store.
void quantize_parameters(WindowDenoiser& denoiser);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace soad
