#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalgen/geometry.hpp"

namespace goalgen {

using Json = nlohmann::json;

// --- FPC1 binary point-cloud format ---------------------------------------
// magic "FPC1" | u32 N | u32 d | N*3 f32 coords | N*d f32 features, all LE.
std::vector<std::uint8_t> encode_fpc1(const PointCloud& pc);
PointCloud decode_fpc1(const std::vector<std::uint8_t>& bytes);
void write_fpc1(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_fpc1(const std::filesystem::path& path);

// Quantize through the on-disk f32 representation (useful for exactness tests).
PointCloud fpc1_roundtrip(const PointCloud& pc);

// --- JSON helpers -----------------------------------------------------------
Json pose_to_json(const RigidTransform& t);  // {"rotation_wxyz": [...], "translation": [...]}
RigidTransform pose_from_json(const Json& j);

Json vec3_to_json(const Eigen::Vector3d& v);
Eigen::Vector3d vec3_from_json(const Json& j);

// --- files ------------------------------------------------------------------
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
Json read_json_file(const std::filesystem::path& path);
// Deterministic dump: nlohmann::json orders object keys lexicographically.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace goalgen
