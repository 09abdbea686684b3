#include "tirelevel/vehicle_dynamics.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "tirelevel/errors.hpp"

namespace tirelevel {

namespace {

VehicleParams make_class(int id, double m_s, double m_us, double c_s, double k_s, double k_us) {
    VehicleParams p;
    p.m_s = m_s;
    p.m_us = m_us;
    p.c_s = c_s;
    p.k_s = k_s;
    p.k_us = k_us;
    p.class_id = id;
    return p;
}

struct Derivative {
    double dx_s, dv_s, dx_us, dv_us;
};

struct Accelerations {
    double sprung, unsprung;
};

Accelerations accelerations(const VehicleParams& p, const QuarterCarState& s, double r) {
    const double f_damper = damping_force(p, s.v_s - s.v_us);
    const double f_spring = p.k_s * (s.x_s - s.x_us);
    return {(-f_damper - f_spring) / p.m_s,
            (f_damper + f_spring - tire_force(p, s.x_us - r)) / p.m_us};
}

Derivative rhs(const VehicleParams& p, const QuarterCarState& s, double r) {
    const auto a = accelerations(p, s, r);
    return {s.v_s, a.sprung, s.v_us, a.unsprung};
}

QuarterCarState advance(const QuarterCarState& s, const Derivative& d, double h) {
    return {s.x_s + h * d.dx_s, s.v_s + h * d.dv_s, s.x_us + h * d.dx_us, s.v_us + h * d.dv_us};
}

bool finite_state(const QuarterCarState& s) {
    constexpr double kBlowUp = 1e6;
    for (double v : {s.x_s, s.v_s, s.x_us, s.v_us}) {
        if (!std::isfinite(v) || std::abs(v) > kBlowUp) return false;
    }
    return true;
}

// Cubic Hermite interpolation of the elevation on one sample interval.
struct HermiteSegment {
    double r0, r1, m0, m1, h;

    double operator()(double tau) const {
        const double s = tau / h;
        const double s2 = s * s;
        const double s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * r0 + (s3 - 2 * s2 + s) * h * m0 + (-2 * s3 + 3 * s2) * r1 +
               (s3 - s2) * h * m1;
    }
};

}  // namespace

void VehicleParams::validate() const {
    require(m_s > 0 && m_us > 0, ErrorCode::Config, "masses must be positive");
    require(c_s > 0 && k_s > 0 && k_us > 0, ErrorCode::Config,
            "damping and stiffness coefficients must be positive");
    require(v_minus < 0.0 && v_plus > 0.0, ErrorCode::Config, "require v_minus < 0 < v_plus");
    require(beta1 > 0 && beta2 > 0, ErrorCode::Config, "damping slope multipliers must be positive");
    require(alpha >= 0.0, ErrorCode::Config, "alpha must be non-negative");
    if (class_id) {
        require(*class_id >= 1 && *class_id <= kNumReferenceClasses, ErrorCode::Config,
                "class_id must be in 1..5");
    }
}

VehicleParams VehicleParams::linear_limit() const {
    VehicleParams q = *this;
    q.alpha = 0.0;
    q.beta1 = 1.0;
    q.beta2 = 1.0;
    return q;
}

const std::array<VehicleParams, kNumReferenceClasses>& reference_vehicles() {
    static const std::array<VehicleParams, kNumReferenceClasses> classes = {
        make_class(1, 305.6, 150.6, 1.61e3, 1.77e4, 1.48e5),
        make_class(2, 429.8, 13.39, 2.46e3, 3.48e4, 2.68e5),
        make_class(3, 487.2, 129.7, 5.79e3, 2.32e4, 3.11e5),
        make_class(4, 2141.0, 74.08, 4.34e3, 1.22e5, 4.93e5),
        make_class(5, 372.9, 206.5, 2.76e3, 1.76e4, 1.69e6),
    };
    return classes;
}

const VehicleParams& reference_vehicle(int class_id) {
    require(class_id >= 1 && class_id <= kNumReferenceClasses, ErrorCode::Config,
            "class_id must be in 1..5");
    return reference_vehicles()[static_cast<std::size_t>(class_id - 1)];
}

double damping_force(const VehicleParams& p, double v_rel) {
    if (v_rel > p.v_plus) {
        return p.c_s * p.v_plus + p.beta1 * p.c_s * (v_rel - p.v_plus);
    }
    if (v_rel < p.v_minus) {
        return p.c_s * p.v_minus + p.beta2 * p.c_s * (v_rel - p.v_minus);
    }
    return p.c_s * v_rel;
}

double tire_force(const VehicleParams& p, double deflection) {
    return p.k_us * (deflection + p.alpha * deflection * deflection);
}

double mechanical_energy(const VehicleParams& p, const QuarterCarState& s, double r) {
    const double d_susp = s.x_s - s.x_us;
    const double d_tire = s.x_us - r;
    const double tire_pe =
        p.k_us * (0.5 * d_tire * d_tire + p.alpha * d_tire * d_tire * d_tire / 3.0);
    return 0.5 * p.m_s * s.v_s * s.v_s + 0.5 * p.m_us * s.v_us * s.v_us +
           0.5 * p.k_s * d_susp * d_susp + tire_pe;
}

StateTrajectory simulate(const VehicleParams& p, const RoadInputSeries& road, double dt_internal,
                         const QuarterCarState& initial) {
    p.validate();
    road.validate();
    require(road.size() > 0, ErrorCode::Config, "road series is empty");
    const double period = road.dt();
    require(dt_internal > 0.0 && dt_internal <= 0.5 * period, ErrorCode::Config,
            "dt_internal must be positive and at most half the output period");
    const auto substeps = static_cast<std::size_t>(std::llround(period / dt_internal));
    require(std::abs(static_cast<double>(substeps) * dt_internal - period) <= 1e-9 * period,
            ErrorCode::Config, "dt_internal must divide the output period exactly");
    const double h = period / static_cast<double>(substeps);

    const std::size_t n = road.size();
    StateTrajectory traj;
    traj.sample_rate = road.sample_rate;
    traj.states.resize(n);
    traj.accel_s.resize(n);
    traj.accel_us.resize(n);

    auto record = [&](std::size_t i, const QuarterCarState& s) {
        traj.states[i] = s;
        const auto a = accelerations(p, s, road.elevation[i]);
        traj.accel_s[i] = a.sprung;
        traj.accel_us[i] = a.unsprung;
    };

    QuarterCarState s = initial;
    require(finite_state(s), ErrorCode::Config, "initial state must be finite");
    record(0, s);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const HermiteSegment seg{road.elevation[i], road.elevation[i + 1], road.velocity[i],
                                 road.velocity[i + 1], period};
        for (std::size_t k = 0; k < substeps; ++k) {
            const double tau = static_cast<double>(k) * h;
            const double r_a = seg(tau);
            const double r_m = seg(tau + 0.5 * h);
            const double r_b = (k + 1 == substeps) ? road.elevation[i + 1] : seg(tau + h);
            const auto k1 = rhs(p, s, r_a);
            const auto k2 = rhs(p, advance(s, k1, 0.5 * h), r_m);
            const auto k3 = rhs(p, advance(s, k2, 0.5 * h), r_m);
            const auto k4 = rhs(p, advance(s, k3, h), r_b);
            s.x_s += h / 6.0 * (k1.dx_s + 2 * k2.dx_s + 2 * k3.dx_s + k4.dx_s);
            s.v_s += h / 6.0 * (k1.dv_s + 2 * k2.dv_s + 2 * k3.dv_s + k4.dv_s);
            s.x_us += h / 6.0 * (k1.dx_us + 2 * k2.dx_us + 2 * k3.dx_us + k4.dx_us);
            s.v_us += h / 6.0 * (k1.dv_us + 2 * k2.dv_us + 2 * k3.dv_us + k4.dv_us);
        }
        if (!finite_state(s)) {
            std::ostringstream msg;
            msg << "simulation diverged at output step " << (i + 1);
            fail(ErrorCode::SimulationDiverged, msg.str());
        }
        record(i + 1, s);
    }
    return traj;
}

ModalProperties linearized_modes(const VehicleParams& p) {
    p.validate();
    Eigen::Matrix4d a;
    // state = (x_s, v_s, x_us, v_us)
    a << 0, 1, 0, 0,
        -p.k_s / p.m_s, -p.c_s / p.m_s, p.k_s / p.m_s, p.c_s / p.m_s,
        0, 0, 0, 1,
        p.k_s / p.m_us, p.c_s / p.m_us, -(p.k_s + p.k_us) / p.m_us, -p.c_s / p.m_us;
    const Eigen::EigenSolver<Eigen::Matrix4d> solver(a, false);
    const auto ev = solver.eigenvalues();

    struct Mode {
        double wn, zeta, wd;
    };
    std::vector<Mode> modes;
    std::vector<double> real_roots;
    for (int i = 0; i < 4; ++i) {
        const std::complex<double> l = ev[i];
        if (l.imag() > 1e-12 * std::abs(l)) {
            modes.push_back({std::abs(l), -l.real() / std::abs(l), l.imag()});
        } else if (std::abs(l.imag()) <= 1e-12 * std::abs(l)) {
            real_roots.push_back(l.real());
        }
    }
    // Overdamped modes appear as pairs of real roots; pair neighbours.
    std::sort(real_roots.begin(), real_roots.end());
    for (std::size_t i = 0; i + 1 < real_roots.size(); i += 2) {
        const double wn = std::sqrt(real_roots[i] * real_roots[i + 1]);
        modes.push_back({wn, -(real_roots[i] + real_roots[i + 1]) / (2.0 * wn), 0.0});
    }
    require(modes.size() == 2, ErrorCode::Domain, "unexpected eigenstructure of the quarter car");
    std::sort(modes.begin(), modes.end(), [](const Mode& x, const Mode& y) { return x.wn < y.wn; });

    constexpr double two_pi = 2.0 * std::numbers::pi;
    ModalProperties out;
    for (std::size_t i = 0; i < 2; ++i) {
        out.natural_hz[i] = modes[i].wn / two_pi;
        out.damping_ratio[i] = modes[i].zeta;
        out.damped_hz[i] = modes[i].wd / two_pi;
    }
    return out;
}

TransferCurve impulse_transfer_curve(const VehicleParams& p, double amplitude, std::size_t n_freq,
                                     double sample_rate, double dt_internal) {
    require(amplitude > 0.0, ErrorCode::Config, "impulse amplitude must be positive");
    require(n_freq >= 2, ErrorCode::Config, "n_freq must be at least 2");
    const std::size_t n = 2 * (n_freq - 1);
    const double dt = 1.0 / sample_rate;

    RoadInputSeries road;
    road.sample_rate = sample_rate;
    road.acceleration.assign(n, 0.0);
    // Index 1 so that trapezoidal integration carries the full impulse area into the ramp.
    road.acceleration[1] = amplitude;
    road.velocity.assign(n, 0.0);
    road.elevation.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        road.velocity[i] =
            road.velocity[i - 1] + 0.5 * dt * (road.acceleration[i - 1] + road.acceleration[i]);
        road.elevation[i] =
            road.elevation[i - 1] + 0.5 * dt * (road.velocity[i - 1] + road.velocity[i]);
    }

    const auto traj = simulate(p, road, dt_internal);

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> out_spec, in_spec;
    fft.fwd(out_spec, traj.accel_s);
    fft.fwd(in_spec, road.acceleration);

    TransferCurve curve;
    curve.freq_hz.resize(n_freq);
    curve.magnitude.resize(n_freq);
    for (std::size_t k = 0; k < n_freq; ++k) {
        curve.freq_hz[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);
        curve.magnitude[k] = std::abs(out_spec[k]) / std::abs(in_spec[k]);
    }
    return curve;
}

TransferCurve transfer_function(const VehicleParams& p, std::span<const double> amplitudes,
                                std::size_t n_freq, double sample_rate, double dt_internal) {
    require(!amplitudes.empty(), ErrorCode::Config, "at least one impulse amplitude is required");
    TransferCurve mean;
    for (double a : amplitudes) {
        auto c = impulse_transfer_curve(p, a, n_freq, sample_rate, dt_internal);
        if (mean.freq_hz.empty()) {
            mean = std::move(c);
            continue;
        }
        for (std::size_t k = 0; k < n_freq; ++k) mean.magnitude[k] += c.magnitude[k];
    }
    for (auto& m : mean.magnitude) m /= static_cast<double>(amplitudes.size());
    return mean;
}

}  // namespace tirelevel
