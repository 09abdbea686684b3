#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tirelevel/road_profile.hpp"
#include "tirelevel/vehicle_dynamics.hpp"

namespace tirelevel {

/// One training record. Series are stored as float32, the on-disk precision.
struct Sample {
    std::vector<float> road_accel;      // r''(ut), m/s^2
    std::vector<float> cabin_accel;     // sprung acceleration, m/s^2
    std::vector<float> unsprung_accel;  // m/s^2
    int class_id = 1;
    std::uint64_t seed = 0;
    double gamma = 0.0;

    bool operator==(const Sample&) const = default;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

enum class Channel : int { Road = 0, Cabin = 1, Unsprung = 2 };

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;

    bool operator==(const ChannelStats&) const = default;
};

struct NormalizationStats {
    ChannelStats road, cabin, unsprung;

    const ChannelStats& operator[](Channel c) const;
    bool operator==(const NormalizationStats&) const = default;
};

/// Everything needed to regenerate a corpus from a seed.
struct GenerationConfig {
    RoadPsdParams psd;             // gamma here is ignored; drawn per sample
    double gamma_min = 0.0;
    double gamma_max = 1.0;
    double speed = 5.0;            // m/s
    double sample_rate = 100.0;    // Hz
    double spacing = 0.05;         // m
    double dt_internal = kDefaultInternalStep;
    std::size_t signal_length = 1024;
    std::size_t preroll = 200;     // samples simulated and discarded before recording
    int max_attempts = 5;          // per sample, on divergence

    bool operator==(const GenerationConfig&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<Split> split;
    std::vector<VehicleParams> vehicles;
    GenerationConfig config;
    std::optional<NormalizationStats> stats;
    bool normalized = false;
    std::size_t diverged_regenerations = 0;

    std::size_t size() const noexcept { return samples.size(); }
    std::size_t signal_length() const noexcept { return config.signal_length; }
    std::vector<std::size_t> indices(Split s) const;
    /// Distinct class ids in ascending order.
    std::vector<int> class_ids() const;

    bool operator==(const Dataset&) const = default;
};

/// Everything behind one record: the road profile, the full road input and trajectory
/// (preroll included) and the recorded sample.
struct SampleTrace {
    RoadProfile profile;
    RoadInputSeries road;
    StateTrajectory trajectory;
    Sample sample;
};

SampleTrace trace_sample(const VehicleParams& vehicle, const GenerationConfig& config,
                         std::uint64_t seed);

/// Simulates one record for the vehicle. Throws SimulationDiverged on blow-up.
Sample generate_sample(const VehicleParams& vehicle, const GenerationConfig& config,
                       std::uint64_t seed);

/// n_per_class independent samples per vehicle; stratified 7:3 split (test = floor(0.3 n)).
/// Diverged samples are regenerated with fresh seeds; more than 1% diverged aborts.
Dataset generate_dataset(std::span<const VehicleParams> classes, std::size_t n_per_class,
                         std::uint64_t seed, const GenerationConfig& config = {},
                         unsigned threads = 1);

/// Per-channel mean/std over the training split.
NormalizationStats compute_stats(const Dataset& ds);

/// Copy with every channel standardized by training-split statistics.
Dataset normalize(const Dataset& ds);

std::vector<double> normalize_series(std::span<const float> series, const ChannelStats& stats);
std::vector<double> denormalize(std::span<const double> series, const ChannelStats& stats);

/// Stratified batches: each class's members are shuffled and interleaved so that
/// every batch holds classes in proportion (+-1 sample).
std::vector<std::vector<std::size_t>> stratified_batches(const Dataset& ds,
                                                         std::span<const std::size_t> members,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed);

/// Writes `path` (binary) and `path + ".json"` (sidecar metadata).
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

/// Multiplies m_s, m_us, c_s, k_s, k_us by independent (1 + U(-fraction, fraction)) factors.
VehicleParams perturb_vehicle(const VehicleParams& p, double fraction, std::uint64_t seed);

}  // namespace tirelevel
