#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirelevel/dataset.hpp"
#include "tirelevel/neural.hpp"

namespace tirelevel {

/// Road acceleration estimated from a raw cabin signal: normalize, R-EC_V, DC_R,
/// then denormalize with the road channel statistics.
std::vector<double> estimate_tire_input(const nn::ModelWeights& w, std::span<const double> cabin,
                                        const NormalizationStats& stats);

/// Class probabilities (index k is class id k + 1).
std::vector<double> classify_vehicle(const nn::ModelWeights& w, std::span<const double> cabin,
                                     const NormalizationStats& stats);

/// Sample Pearson correlation. Throws Length on unequal or short input and
/// UndefinedCorrelation when either series has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

inline constexpr int kHistogramBins = 30;

struct ClassCorrelations {
    int class_id = 0;
    std::vector<double> r;  // one per test sample, dataset order
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::array<int, kHistogramBins> histogram{};  // equal bins on [-1, 1]
};

/// Histogram bin of a correlation value; 1 falls into the last bin.
int histogram_bin(double r);

struct ProbeConfig {
    int hidden = 64;
    int steps = 2000;  // full-batch Adam steps
    double lr = 1e-3;
    std::uint64_t seed = 123;
};

struct SweepPoint {
    double fraction = 0.0;
    double accuracy = 0.0;
    std::size_t n = 0;
};

struct EvalReport {
    std::vector<ClassCorrelations> per_class;
    std::vector<int> class_ids;
    std::vector<std::vector<int>> confusion;  // rows true class, columns predicted
    double cl_accuracy = 0.0;
    double probe_rlf_accuracy = 0.0;
    double probe_vlf_accuracy = 0.0;
    std::size_t n_test = 0;
    std::vector<SweepPoint> sweep;

    nlohmann::json to_json() const;
    /// eval_report.json and corr_hist_class<k>.csv.
    void write(const std::filesystem::path& dir) const;
};

/// Test split of `ds` (raw or normalized; raw data is normalized with `stats`).
EvalReport evaluate(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats,
                    const ProbeConfig& probe = {});

/// Trains a fresh latent -> hidden -> class classifier on the training columns and returns
/// its accuracy on the test columns. Features are standardized with training statistics.
double probe_accuracy(const nn::Matrix& train_x, std::span<const int> train_labels,
                      const nn::Matrix& test_x, std::span<const int> test_labels, int n_classes,
                      const ProbeConfig& cfg = {});

/// Classification accuracy on freshly simulated samples of perturbed vehicles, labelled by
/// their parent class. Fractions must be ascending and in [0, 1).
std::vector<SweepPoint> perturbation_sweep(const nn::ModelWeights& w, const NormalizationStats& stats,
                                           std::span<const VehicleParams> base_classes,
                                           std::span<const double> fractions, std::size_t n_per_cell,
                                           std::uint64_t seed, const GenerationConfig& gen = {},
                                           unsigned threads = 1);

void write_sweep_csv(std::span<const SweepPoint> sweep, const std::filesystem::path& path);

struct LatentExport {
    nn::Matrix vlf;         // D_v x n
    nn::Matrix rlf;         // D_r x n
    nn::Matrix projection;  // 2 x n, top principal components of VLF
    Eigen::Vector2d projection_variance;
    std::vector<int> class_ids;
    std::vector<Split> split;
};

LatentExport compute_latents(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats);

/// Writes latents.csv-style rows: index, class_id, split, vlf_*, rlf_*, pc1, pc2.
LatentExport export_latents(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats,
                            const std::filesystem::path& path);

/// One channel of the selected samples as columns, normalized with `stats` when `ds` is raw.
nn::Matrix dataset_channel(const Dataset& ds, Channel ch, std::span<const std::size_t> indices,
                           const NormalizationStats& stats);

}  // namespace tirelevel
