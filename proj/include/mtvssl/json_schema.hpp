#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace mtvssl {

// Validator for the subset of JSON Schema used by the published config and
// report schemas: type, enum, properties, additionalProperties (boolean),
// required, items, minItems, minimum, maximum, exclusiveMinimum,
// exclusiveMaximum. Annotation keywords are ignored.
// Returns human-readable errors, each prefixed by a dotted path.
std::vector<std::string> validate_json(const nlohmann::json& instance, const nlohmann::json& schema);

// Instance built from every `default` in the schema, recursing into objects.
nlohmann::json schema_defaults(const nlohmann::json& schema);

}  // namespace mtvssl
