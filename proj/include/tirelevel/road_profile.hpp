#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tirelevel {

/// Spectral description of a road surface, G(lambda) = G0 * (lambda / lambda0)^nu
/// with G0 = gamma * 6e-3 m^3/cycle. Frequencies are spatial (cycle/m).
struct RoadPsdParams {
    double nu = -2.0;
    double gamma = 1.0;
    double lambda0 = 0.1;
    double lambda_min = 0.01;
    double lambda_max = 1.0;
    int n_components = 512;

    static constexpr double kAmplitudeScale = 6e-3;

    double g_lambda0() const noexcept { return gamma * kAmplitudeScale; }
    double delta_lambda() const noexcept { return (lambda_max - lambda_min) / (n_components - 1); }

    /// Throws ConfigError when an invariant is violated.
    void validate() const;

    bool operator==(const RoadPsdParams&) const = default;
};

struct RoadProfile {
    std::vector<double> elevations;  // m
    double spacing = 0.05;           // m
    std::uint64_t seed = 0;

    /// Distance covered from the first to the last point.
    double extent() const noexcept {
        return elevations.empty() ? 0.0 : spacing * static_cast<double>(elevations.size() - 1);
    }

    bool operator==(const RoadProfile&) const = default;
};

/// Road input seen at the tire of a vehicle travelling at constant speed.
struct RoadInputSeries {
    std::vector<double> elevation;     // m
    std::vector<double> velocity;      // m/s
    std::vector<double> acceleration;  // m/s^2
    double sample_rate = 100.0;        // Hz
    double speed = 5.0;                // m/s

    std::size_t size() const noexcept { return elevation.size(); }
    double dt() const noexcept { return 1.0 / sample_rate; }

    /// Throws ConfigError when series lengths differ or the rate is not positive.
    void validate() const;
};

double psd_value(const RoadPsdParams& params, double lambda);

/// Spectral-representation synthesis: sum_k sqrt(2 G(l_k) dl) cos(2 pi l_k x + phi_k),
/// with l_k equally spaced on [lambda_min, lambda_max] and phi_k ~ U[0, 2 pi).
/// Produces ceil(length / spacing) + 1 points.
RoadProfile synthesize_profile(const RoadPsdParams& params, double length, double spacing,
                               std::uint64_t seed);

/// Samples the profile along x = u t, t = n / sample_rate for n < n_samples, through a
/// cubic spline. Velocity and acceleration come from the spline's analytic derivatives.
RoadInputSeries road_input_series(const RoadProfile& profile, double speed, double sample_rate,
                                  std::size_t n_samples);

/// Distance travelled while recording n_samples at sample_rate.
inline double traversed_distance(double speed, double sample_rate, std::size_t n_samples) {
    return speed * static_cast<double>(n_samples) / sample_rate;
}

}  // namespace tirelevel
