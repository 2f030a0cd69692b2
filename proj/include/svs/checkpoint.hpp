#pragma once

#include "svs/model.hpp"
#include "svs/trainer.hpp"

#include <json.hpp>

#include <memory>
#include <string>

namespace svs {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// "SVSC" checkpoint: magic, u32 version, canonical JSON block (config +
// training state + RNG + optional inventory), then named f32 tensors (name
// length-prefixed, u32 rank + dims, row-major data). Parameter values use
// their store names; Adam moments ride along as "<name>#m" / "<name>#v".
// Little-endian throughout. Writes are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const SvsModel<float>& model,
                     const TrainerState& state, const PhonemeInventory* inventory = nullptr);

std::unique_ptr<SvsModel<float>> load_checkpoint(const std::string& path, TrainerState* state,
                                                 PhonemeInventory* inventory = nullptr);

}  // namespace svs
