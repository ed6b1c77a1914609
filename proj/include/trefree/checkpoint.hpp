#pragma once

// Checkpoints of named parameter tensors.
//
// Binary layout (little-endian):
//   magic   "TRFCKPT1"                      8 bytes
//   obs_dim, act_dim, hidden                3 x uint32
//   count                                   uint32
//   per tensor:
//     name_len uint32, name bytes, rows uint32, cols uint32, rows*cols float64
//
// JSON layout: {"format": "trefree-checkpoint", "shape": {...},
//               "tensors": [{"name", "rows", "cols", "data": [...]}, ...]}
// Binary round trips are bit-exact.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "trefree/nn.hpp"

namespace trefree::nn {

void save_binary(const PolicyNet& net, const std::filesystem::path& path);
PolicyNet load_binary(const std::filesystem::path& path);

nlohmann::json to_json(const PolicyNet& net);
PolicyNet net_from_json(const nlohmann::json& j);

}  // namespace trefree::nn
