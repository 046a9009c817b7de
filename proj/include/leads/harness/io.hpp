#pragma once

// JSON and CSV artifacts: datasets, models, train configs, metrics, bound params.
// Floats are written with 17 significant digits so a parse/serialize cycle is
// byte-identical.

#include "leads/models/models.hpp"
#include "leads/systems/systems.hpp"
#include "leads/theory/theory.hpp"
#include "leads/training/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <string>

namespace leads::harness {

using Json = nlohmann::json;

// Compact serialization with %.17g floats.
void write_json(std::ostream& os, const Json& j);
std::string dump_json(const Json& j);

Json to_json(const systems::Dataset& data);
systems::Dataset dataset_from_json(const Json& j);

Json to_json(const models::DecomposedModel& model);
models::DecomposedModel model_from_json(const Json& j);

Json to_json(const training::TrainConfig& cfg);
// Strict: unknown keys raise ConfigError. Missing keys keep `base` values.
training::TrainConfig config_from_json(const Json& j, training::TrainConfig base);

// File helpers. Unreadable/unwritable files and malformed documents raise IoError.
Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

systems::Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const systems::Dataset& data);
models::DecomposedModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const models::DecomposedModel& model);
void save_metrics(const std::filesystem::path& path, const training::Metrics& metrics);

void write_bound_csv(std::ostream& os, const std::vector<theory::BoundRow>& rows);

} // namespace leads::harness
