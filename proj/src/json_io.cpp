#include "tirelevel/json_io.hpp"

namespace tirelevel {

using nlohmann::json;

namespace {

// Missing keys keep the field's current value so partial config documents work.
template <typename T>
void read_opt(const json& j, const char* key, T& field) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        field = it->get<T>();
    }
}

}  // namespace

void to_json(json& j, const RoadPsdParams& p) {
    j = json{{"nu", p.nu},
             {"gamma", p.gamma},
             {"lambda0", p.lambda0},
             {"lambda_min", p.lambda_min},
             {"lambda_max", p.lambda_max},
             {"n_components", p.n_components}};
}

void from_json(const json& j, RoadPsdParams& p) {
    read_opt(j, "nu", p.nu);
    read_opt(j, "gamma", p.gamma);
    read_opt(j, "lambda0", p.lambda0);
    read_opt(j, "lambda_min", p.lambda_min);
    read_opt(j, "lambda_max", p.lambda_max);
    read_opt(j, "n_components", p.n_components);
}

void to_json(json& j, const VehicleParams& p) {
    j = json{{"m_s", p.m_s},       {"m_us", p.m_us},       {"c_s", p.c_s},
             {"k_s", p.k_s},       {"k_us", p.k_us},       {"beta1", p.beta1},
             {"beta2", p.beta2},   {"v_plus", p.v_plus},   {"v_minus", p.v_minus},
             {"alpha", p.alpha}};
    j["class_id"] = p.class_id ? json(*p.class_id) : json(nullptr);
}

void from_json(const json& j, VehicleParams& p) {
    read_opt(j, "m_s", p.m_s);
    read_opt(j, "m_us", p.m_us);
    read_opt(j, "c_s", p.c_s);
    read_opt(j, "k_s", p.k_s);
    read_opt(j, "k_us", p.k_us);
    read_opt(j, "beta1", p.beta1);
    read_opt(j, "beta2", p.beta2);
    read_opt(j, "v_plus", p.v_plus);
    read_opt(j, "v_minus", p.v_minus);
    read_opt(j, "alpha", p.alpha);
    if (auto it = j.find("class_id"); it != j.end()) {
        p.class_id = it->is_null() ? std::nullopt : std::optional<int>(it->get<int>());
    }
}

void to_json(json& j, const GenerationConfig& c) {
    j = json{{"psd", c.psd},
             {"gamma_min", c.gamma_min},
             {"gamma_max", c.gamma_max},
             {"speed", c.speed},
             {"sample_rate", c.sample_rate},
             {"spacing", c.spacing},
             {"dt_internal", c.dt_internal},
             {"signal_length", c.signal_length},
             {"preroll", c.preroll},
             {"max_attempts", c.max_attempts}};
}

void from_json(const json& j, GenerationConfig& c) {
    read_opt(j, "psd", c.psd);
    read_opt(j, "gamma_min", c.gamma_min);
    read_opt(j, "gamma_max", c.gamma_max);
    read_opt(j, "speed", c.speed);
    read_opt(j, "sample_rate", c.sample_rate);
    read_opt(j, "spacing", c.spacing);
    read_opt(j, "dt_internal", c.dt_internal);
    read_opt(j, "signal_length", c.signal_length);
    read_opt(j, "preroll", c.preroll);
    read_opt(j, "max_attempts", c.max_attempts);
}

void to_json(json& j, const ChannelStats& s) { j = json{{"mean", s.mean}, {"std", s.std}}; }

void from_json(const json& j, ChannelStats& s) {
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
}

void to_json(json& j, const NormalizationStats& s) {
    j = json{{"road", s.road}, {"cabin", s.cabin}, {"unsprung", s.unsprung}};
}

void from_json(const json& j, NormalizationStats& s) {
    s.road = j.at("road").get<ChannelStats>();
    s.cabin = j.at("cabin").get<ChannelStats>();
    s.unsprung = j.at("unsprung").get<ChannelStats>();
}

}  // namespace tirelevel
