#pragma once

#include "bitfault/nn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace bitfault {

/// A model directory holds `model.json` (layer list, kinds, hyperparameters,
/// tensor file names, free-form metadata) and one FLT1 file per parameter
/// tensor. Output is byte-deterministic for equal inputs.
void save_model(const Model& model, const std::filesystem::path& dir, const nlohmann::json& meta = nlohmann::json::object());

struct LoadedModel {
    Model model;
    nlohmann::json meta;
};

/// Throws IoError when files are missing and FormatError on malformed content.
LoadedModel load_model(const std::filesystem::path& dir);

} // namespace bitfault
