#pragma once

// Flat key=value run configuration.
//
//   # comment
//   env = pointmass
//   objective = trefree
//   delta = 0.01
//
// Later settings override earlier ones; unknown keys are rejected.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trefree/trainer.hpp"

namespace trefree::config {

using Setting = std::pair<std::string, std::string>;

// Parses "key=value" lines; blank lines and '#' comments are skipped.
std::vector<Setting> parse_settings(std::string_view text, std::string_view origin = "<config>");
std::vector<Setting> read_settings(const std::filesystem::path& path);

// Splits a single "key=value" override.
Setting parse_override(std::string_view text);

void apply(trainer::TrainConfig& config, std::string_view key, std::string_view value);
void apply(trainer::TrainConfig& config, const std::vector<Setting>& settings);

std::vector<std::string> known_keys();

nlohmann::json to_json(const trainer::TrainConfig& config);

}  // namespace trefree::config
