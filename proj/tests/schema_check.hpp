#pragma once

// Just enough of JSON Schema draft-07 to check the report files this project
// ships: type / required / properties / additionalProperties / items /
// minimum / maximum. Returns the first violation as "path: message".

#include <optional>
#include <string>

#include "goalgen/io.hpp"

namespace schema_check {

using goalgen::Json;

inline bool type_matches(const std::string& type, const Json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer() || v.is_number_unsigned();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

inline std::optional<std::string> first_violation(const Json& schema, const Json& value,
                                                  const std::string& path = "$") {
  if (schema.contains("type") && !type_matches(schema["type"].get<std::string>(), value))
    return path + ": expected " + schema["type"].get<std::string>();

  if (value.is_number() && !value.is_boolean()) {
    const double x = value.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      return path + ": below minimum";
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      return path + ": above maximum";
  }

  if (value.is_object()) {
    if (schema.contains("required"))
      for (const Json& key : schema["required"])
        if (!value.contains(key.get<std::string>()))
          return path + ": missing required key " + key.get<std::string>();
    const Json props = schema.value("properties", Json::object());
    for (const auto& [key, sub] : value.items()) {
      if (props.contains(key)) {
        if (auto err = first_violation(props[key], sub, path + "." + key)) return err;
      } else if (schema.value("additionalProperties", Json(true)) == Json(false)) {
        return path + ": unexpected key " + key;
      }
    }
  }

  if (value.is_array() && schema.contains("items")) {
    int i = 0;
    for (const Json& item : value) {
      if (auto err =
              first_violation(schema["items"], item, path + "[" + std::to_string(i) + "]"))
        return err;
      ++i;
    }
  }
  return std::nullopt;
}

}  // namespace schema_check
