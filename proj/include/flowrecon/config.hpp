#pragma once

// JSON forms of the solver configurations shared by the CLI subcommands.

#include "flowrecon/geo_ident.hpp"
#include "flowrecon/phantom.hpp"
#include "flowrecon/velocity.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace flowrecon {

/// Rejects keys outside `allowed` so typos surface as configuration errors.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& context);

/// Typed field access; InvalidArgument names the offending key.
double get_double(const nlohmann::json& j, const char* key, double fallback);
int get_int(const nlohmann::json& j, const char* key, int fallback);
bool get_bool(const nlohmann::json& j, const char* key, bool fallback);
std::string get_string(const nlohmann::json& j, const char* key, const std::string& fallback);

GeoIdentConfig geo_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const GeoIdentConfig& cfg);

VelocityReconConfig velocity_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const VelocityReconConfig& cfg);

NoiseSpec noise_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const NoiseSpec& noise);

NormBounds norm_bounds_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const VelocityCoefficients& v);
VelocityCoefficients velocity_from_json(const nlohmann::json& j);

} // namespace flowrecon
