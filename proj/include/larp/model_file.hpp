#pragma once

// Text persistence for configurations and trained models.
//
// Both are JSON documents. A model file holds the full configuration
// (including wiring), one [midpoint, log_halfwidth] pair per kernel and the
// classifier; kernel noise is regenerated from the seed on load. Reals are
// written with 17 significant digits so a reload is bit-exact.

#include <filesystem>
#include <string>

#include "larp/network.hpp"

namespace larp {

inline constexpr int kModelFormatVersion = 1;

/// "%.17g"; rejects non-finite values.
std::string format_real(double value);

std::string serialize_config(const ModelConfig& config);
ModelConfig parse_config(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);

std::string serialize_model(const Model& model);
Model parse_model(const std::string& text);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace larp
