#include "tirelevel/road_profile.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "tirelevel/errors.hpp"
#include "tirelevel/random.hpp"

namespace tirelevel {

void RoadPsdParams::validate() const {
    require(lambda_min > 0.0, ErrorCode::Config, "lambda_min must be positive");
    require(lambda_max > lambda_min, ErrorCode::Config, "lambda_max must exceed lambda_min");
    require(n_components >= 2, ErrorCode::Config, "n_components must be at least 2");
    require(gamma >= 0.0, ErrorCode::Config, "gamma must be non-negative");
    require(lambda0 > 0.0, ErrorCode::Config, "lambda0 must be positive");
    require(std::isfinite(nu), ErrorCode::Config, "nu must be finite");
}

void RoadInputSeries::validate() const {
    require(sample_rate > 0.0, ErrorCode::Config, "sample_rate must be positive");
    require(velocity.size() == elevation.size() && acceleration.size() == elevation.size(),
            ErrorCode::Config, "road input series lengths differ");
}

double psd_value(const RoadPsdParams& params, double lambda) {
    require(lambda > 0.0, ErrorCode::Domain, "spatial frequency must be positive");
    return params.g_lambda0() * std::pow(lambda / params.lambda0, params.nu);
}

RoadProfile synthesize_profile(const RoadPsdParams& params, double length, double spacing,
                               std::uint64_t seed) {
    params.validate();
    require(length > 0.0, ErrorCode::Config, "profile length must be positive");
    require(spacing > 0.0, ErrorCode::Config, "profile spacing must be positive");
    if (!(spacing < 1.0 / (2.0 * params.lambda_max))) {
        std::ostringstream msg;
        msg << "spacing " << spacing << " m violates the spatial Nyquist limit for lambda_max "
            << params.lambda_max << " cycle/m";
        fail(ErrorCode::Config, msg.str());
    }

    const auto n_points = static_cast<std::size_t>(std::ceil(length / spacing)) + 1;
    RoadProfile profile{std::vector<double>(n_points, 0.0), spacing, seed};

    const int n = params.n_components;
    const double dl = params.delta_lambda();
    constexpr double two_pi = 2.0 * std::numbers::pi;

    // Phases are drawn for every component regardless of gamma so that the
    // same seed yields the same realization shape at any roughness.
    Rng rng(seed);
    std::uniform_real_distribution<double> phase_dist(0.0, two_pi);
    std::vector<double> freq(n), amp(n), phase(n);
    for (int k = 0; k < n; ++k) {
        freq[k] = params.lambda_min + k * dl;
        amp[k] = std::sqrt(2.0 * psd_value(params, freq[k]) * dl);
        phase[k] = phase_dist(rng);
    }
    if (params.gamma == 0.0) {
        return profile;
    }

    for (std::size_t j = 0; j < n_points; ++j) {
        const double x = static_cast<double>(j) * spacing;
        double z = 0.0;
        for (int k = 0; k < n; ++k) {
            z += amp[k] * std::cos(two_pi * freq[k] * x + phase[k]);
        }
        profile.elevations[j] = z;
    }
    return profile;
}

RoadInputSeries road_input_series(const RoadProfile& profile, double speed, double sample_rate,
                                  std::size_t n_samples) {
    require(speed > 0.0, ErrorCode::Config, "speed must be positive");
    require(sample_rate > 0.0, ErrorCode::Config, "sample_rate must be positive");
    require(profile.spacing > 0.0, ErrorCode::Config, "profile spacing must be positive");
    require(profile.elevations.size() >= 5, ErrorCode::Range,
            "profile needs at least 5 points for cubic interpolation");

    const double last_x = speed * static_cast<double>(n_samples == 0 ? 0 : n_samples - 1) / sample_rate;
    // Allow rounding slack of a millionth of a grid step.
    if (last_x > profile.extent() + 1e-6 * profile.spacing) {
        std::ostringstream msg;
        msg << "requested duration needs " << last_x << " m of road but the profile covers "
            << profile.extent() << " m";
        fail(ErrorCode::Range, msg.str());
    }

    RoadInputSeries out;
    out.sample_rate = sample_rate;
    out.speed = speed;
    out.elevation.resize(n_samples);
    out.velocity.resize(n_samples);
    out.acceleration.resize(n_samples);

    const boost::math::interpolators::cardinal_cubic_b_spline<double> spline(
        profile.elevations.data(), profile.elevations.size(), 0.0, profile.spacing);
    const double u2 = speed * speed;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double x = std::min(speed * static_cast<double>(n) / sample_rate, profile.extent());
        out.elevation[n] = spline(x);
        out.velocity[n] = speed * spline.prime(x);
        out.acceleration[n] = u2 * spline.double_prime(x);
    }
    return out;
}

}  // namespace tirelevel
