#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace dxagent::schema {

// A small JSON Schema subset: type, properties, required,
// additionalProperties, enum, minimum, maximum, exclusiveMinimum,
// exclusiveMaximum, pattern, items, minItems, anyOf. Annotation keywords
// (title, description, default, examples, $schema, $id) are ignored.

/// Throws InvalidSchema if the schema uses unsupported keywords, is
/// malformed, or contradicts itself (e.g. minimum > maximum, a required
/// property that additionalProperties=false forbids).
void check(const nlohmann::json& schema);

/// Returns human-readable errors, each prefixed with the JSON path
/// ("$" is the root). Empty means valid.
std::vector<std::string> validate(const nlohmann::json& schema, const nlohmann::json& value);

inline bool conforms(const nlohmann::json& schema, const nlohmann::json& value) { return validate(schema, value).empty(); }

}  // namespace dxagent::schema
