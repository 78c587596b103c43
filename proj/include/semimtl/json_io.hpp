#pragma once

#include <json.hpp>

#include "semimtl/scene.hpp"
#include "semimtl/trainer.hpp"

// ADL hooks so nlohmann::json can (de)serialize the config types. All file
// schemas carry a schema_version field at the document root; that is handled
// by the writers, not here.

namespace semimtl {

void to_json(nlohmann::json& j, const TaskSet& t);
void from_json(const nlohmann::json& j, TaskSet& t);

void to_json(nlohmann::json& j, const DomainConfig& d);
void from_json(const nlohmann::json& j, DomainConfig& d);

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

void to_json(nlohmann::json& j, const GeneratorConfig& g);
void from_json(const nlohmann::json& j, GeneratorConfig& g);

void to_json(nlohmann::json& j, const GenOptimSettings& s);
void from_json(const nlohmann::json& j, GenOptimSettings& s);

void to_json(nlohmann::json& j, const DiscOptimSettings& s);
void from_json(const nlohmann::json& j, DiscOptimSettings& s);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Canonical dump used everywhere a JSON document is written to disk: sorted
/// keys (nlohmann's default object ordering), two-space indent, trailing
/// newline. Keeping one dump shape makes save -> load -> save byte-identical.
std::string canonical_json(const nlohmann::json& j);

/// FNV-1a hash of the canonical dump, as fixed-width hex.
std::string json_hash(const nlohmann::json& j);

}  // namespace semimtl
