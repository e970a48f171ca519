#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "anm/nn/mlp.hpp"

namespace anm::nn {

/// Self-describing parameter record: format tag, layer sizes, activation,
/// dtype, flat parameters and an FNV-1a hash over sizes and parameters.
nlohmann::json to_json(const Mlp<double>& net);

/// Throws std::runtime_error on a hash mismatch, or when `expected_sizes` is
/// given and the stored shape differs.
Mlp<double> mlp_from_json(const nlohmann::json& j, const std::optional<std::vector<int>>& expected_sizes = {});

void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& net);
Mlp<double> load_checkpoint(const std::filesystem::path& path,
                            const std::optional<std::vector<int>>& expected_sizes = {});

std::uint64_t parameter_hash(const Mlp<double>& net);

}  // namespace anm::nn
