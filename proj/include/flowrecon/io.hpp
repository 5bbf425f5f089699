#pragma once

#include "flowrecon/geometry.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace flowrecon {

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

nlohmann::ordered_json to_json(const RadiusFunction& radius);
RadiusFunction radius_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const GeometryBounds& bounds);
GeometryBounds bounds_from_json(const nlohmann::json& j);

/// Throws IoFailure when the file cannot be opened or parsed.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace flowrecon
