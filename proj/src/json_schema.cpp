#include "mtvssl/json_schema.hpp"

#include <cmath>

namespace mtvssl {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && v.get<double>() == std::floor(v.get<double>());
  }
  if (type == "number") return v.is_number();
  return false;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string where(const std::string& path) { return path.empty() ? "<root>" : path; }

void check(const json& v, const json& schema, const std::string& path,
           std::vector<std::string>& errors) {
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = has_type(v, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || has_type(v, alt.get<std::string>());
    }
    if (!ok) {
      errors.push_back(where(path) + ": expected " + t.dump() + ", got " + v.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) {
      errors.push_back(where(path) + ": " + v.dump() + " is not one of " + schema["enum"].dump());
    }
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>()) {
      errors.push_back(where(path) + ": " + v.dump() + " < minimum " + schema["minimum"].dump());
    }
    if (schema.contains("maximum") && x > schema["maximum"].get<double>()) {
      errors.push_back(where(path) + ": " + v.dump() + " > maximum " + schema["maximum"].dump());
    }
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>()) {
      errors.push_back(where(path) + ": " + v.dump() + " must be > " +
                       schema["exclusiveMinimum"].dump());
    }
    if (schema.contains("exclusiveMaximum") && x >= schema["exclusiveMaximum"].get<double>()) {
      errors.push_back(where(path) + ": " + v.dump() + " must be < " +
                       schema["exclusiveMaximum"].dump());
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
      errors.push_back(where(path) + ": needs at least " + schema["minItems"].dump() + " items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        check(v[i], schema["items"], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }
  if (v.is_object()) {
    const json empty = json::object();
    const json& props = schema.contains("properties") ? schema["properties"] : empty;
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!v.contains(key.get<std::string>())) {
          errors.push_back(where(path) + ": missing required key '" + key.get<std::string>() + "'");
        }
      }
    }
    const bool closed = schema.contains("additionalProperties") &&
                        schema["additionalProperties"].is_boolean() &&
                        !schema["additionalProperties"].get<bool>();
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key)) {
        check(value, props[key], join(path, key), errors);
      } else if (closed) {
        errors.push_back(where(path) + ": unknown key '" + key + "'");
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_json(const nlohmann::json& instance,
                                       const nlohmann::json& schema) {
  std::vector<std::string> errors;
  check(instance, schema, "", errors);
  return errors;
}

nlohmann::json schema_defaults(const nlohmann::json& schema) {
  if (schema.contains("default")) return schema["default"];
  if (schema.value("type", json()) == "object" && schema.contains("properties")) {
    json out = json::object();
    for (const auto& [key, sub] : schema["properties"].items()) {
      json d = schema_defaults(sub);
      if (!d.is_null()) out[key] = std::move(d);
    }
    return out;
  }
  return nullptr;
}

}  // namespace mtvssl
