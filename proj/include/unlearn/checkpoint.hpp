#pragma once

// Checkpoints: manifest.json (shapes, hyperparameters) plus params.bin, a
// little-endian float64 blob of every tensor in manifest order (row-major).

#include <filesystem>
#include <variant>

#include "json.hpp"
#include "unlearn/models.hpp"

namespace unlearn {

void save_checkpoint(const std::filesystem::path& dir, const ClassifierModel& model, const nlohmann::json& extra = {});
void save_checkpoint(const std::filesystem::path& dir, const SpanModel& model, const nlohmann::json& extra = {});

using AnyModel = std::variant<ClassifierModel, SpanModel>;

/// Rebuilds the model recorded in dir/manifest.json.
AnyModel load_checkpoint(const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace unlearn
