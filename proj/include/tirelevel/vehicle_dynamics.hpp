#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tirelevel/road_profile.hpp"

namespace tirelevel {

/// Mechanical parameters of one nonlinear quarter-car class.
struct VehicleParams {
    double m_s = 0.0;    // sprung mass, kg
    double m_us = 0.0;   // unsprung mass, kg
    double c_s = 0.0;    // suspension damping, N s/m
    double k_s = 0.0;    // suspension stiffness, N/m
    double k_us = 0.0;   // tire stiffness, N/m
    double beta1 = 4.23;     // damping slope multiplier above v_plus
    double beta2 = 15.49;    // damping slope multiplier below v_minus
    double v_plus = 0.0045;  // m/s
    double v_minus = -0.005; // m/s
    double alpha = 0.1;      // tire quadratic stiffness coefficient, 1/m
    std::optional<int> class_id;

    void validate() const;

    /// Same masses and stiffnesses with alpha = 0 and unit damping slopes.
    VehicleParams linear_limit() const;

    bool operator==(const VehicleParams&) const = default;
};

inline constexpr int kNumReferenceClasses = 5;

/// The five reference vehicle classes (ids 1..5).
const std::array<VehicleParams, kNumReferenceClasses>& reference_vehicles();
const VehicleParams& reference_vehicle(int class_id);

struct QuarterCarState {
    double x_s = 0.0;
    double v_s = 0.0;
    double x_us = 0.0;
    double v_us = 0.0;

    bool operator==(const QuarterCarState&) const = default;
};

struct StateTrajectory {
    std::vector<QuarterCarState> states;
    std::vector<double> accel_s;   // sprung (cabin) acceleration, m/s^2
    std::vector<double> accel_us;  // unsprung acceleration, m/s^2
    double sample_rate = 100.0;

    std::size_t size() const noexcept { return states.size(); }
};

/// Continuous piecewise-linear suspension damper force for relative velocity v_s - v_us.
double damping_force(const VehicleParams& p, double v_rel);

/// Tire force k_us (d + alpha d^2) for deflection d = x_us - r.
double tire_force(const VehicleParams& p, double deflection);

inline constexpr double kDefaultInternalStep = 2.5e-4;

/// Fixed-step RK4 integration of the quarter car over the road input. The internal step
/// must divide the output period exactly; the road elevation between samples is a cubic
/// Hermite interpolant of (elevation, velocity). Accelerations are evaluated from the
/// equations of motion at each output instant.
StateTrajectory simulate(const VehicleParams& p, const RoadInputSeries& road,
                         double dt_internal = kDefaultInternalStep,
                         const QuarterCarState& initial = {});

struct ModalProperties {
    std::array<double, 2> natural_hz{};     // undamped natural frequencies, ascending
    std::array<double, 2> damping_ratio{};
    std::array<double, 2> damped_hz{};      // imaginary part / 2 pi; 0 for overdamped modes
};

/// Eigen-analysis of the linearized (alpha = 0, slope c_s) state matrix.
ModalProperties linearized_modes(const VehicleParams& p);

struct TransferCurve {
    std::vector<double> freq_hz;
    std::vector<double> magnitude;
};

/// |FFT(cabin accel)| / |FFT(road accel)| for one single-sample road-acceleration impulse
/// of the given amplitude (m/s^2). Record length is 2 (n_freq - 1) samples.
TransferCurve impulse_transfer_curve(const VehicleParams& p, double amplitude, std::size_t n_freq,
                                     double sample_rate = 100.0,
                                     double dt_internal = kDefaultInternalStep);

/// Pointwise mean of impulse_transfer_curve over the amplitudes.
TransferCurve transfer_function(const VehicleParams& p, std::span<const double> amplitudes,
                                std::size_t n_freq, double sample_rate = 100.0,
                                double dt_internal = kDefaultInternalStep);

/// Total mechanical energy (kinetic + suspension + linear tire spring) relative to road height r.
double mechanical_energy(const VehicleParams& p, const QuarterCarState& s, double r = 0.0);

}  // namespace tirelevel
