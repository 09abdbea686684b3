#pragma once

#include <nlohmann/json.hpp>

#include "tirelevel/dataset.hpp"
#include "tirelevel/road_profile.hpp"
#include "tirelevel/vehicle_dynamics.hpp"

namespace tirelevel {

// nlohmann/json adapters. Doubles are written with round-trip precision.

void to_json(nlohmann::json& j, const RoadPsdParams& p);
void from_json(const nlohmann::json& j, RoadPsdParams& p);

void to_json(nlohmann::json& j, const VehicleParams& p);
void from_json(const nlohmann::json& j, VehicleParams& p);

void to_json(nlohmann::json& j, const GenerationConfig& c);
void from_json(const nlohmann::json& j, GenerationConfig& c);

void to_json(nlohmann::json& j, const ChannelStats& s);
void from_json(const nlohmann::json& j, ChannelStats& s);

void to_json(nlohmann::json& j, const NormalizationStats& s);
void from_json(const nlohmann::json& j, NormalizationStats& s);

}  // namespace tirelevel
