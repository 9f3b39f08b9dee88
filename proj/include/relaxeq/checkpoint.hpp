#pragma once

#include <string>

#include "json.hpp"
#include "relaxeq/config.hpp"
#include "relaxeq/layers.hpp"

namespace relaxeq {

inline constexpr int kCheckpointSchema = 1;

/// {"schema": 1, "config": ..., "theta": ..., "layers": [...]}; W is
/// omitted for layers that no longer carry it.
nlohmann::json checkpoint_to_json(const Model& model, const RunConfig& config);

/// Loads parameters into a model built from the same configuration.
/// Throws ConfigError when kinds, shapes or representations disagree.
void load_checkpoint(const nlohmann::json& checkpoint, Model& model);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace relaxeq
