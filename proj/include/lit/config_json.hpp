#pragma once

#include <string>

#include <json.hpp>

#include "lit/convert.hpp"
#include "lit/dataset.hpp"
#include "lit/distill.hpp"
#include "lit/model_config.hpp"
#include "lit/optim.hpp"

namespace lit {

using Json = nlohmann::ordered_json;

// Field names mirror the struct members. Unknown keys raise ConfigError.
Json to_json(const ModelConfig& config);
// A "preset" key seeds the config before the remaining keys override it.
ModelConfig model_config_from_json(const Json& j);

Json to_json(const DistillConfig& config);
DistillConfig distill_config_from_json(const Json& j);

Json to_json(const InheritSpec& spec);
InheritSpec inherit_spec_from_json(const Json& j);

Json to_json(const AdamWConfig& config);
AdamWConfig adamw_config_from_json(const Json& j);

Json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const Json& j);

Json to_json(const ConversionReport& report);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace lit
