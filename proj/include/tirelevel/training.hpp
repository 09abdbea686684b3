#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirelevel/dataset.hpp"
#include "tirelevel/neural.hpp"

namespace tirelevel {

/// Multipliers of the five terms in L1 + L2 + L3 - L4 + L5.
struct LossWeights {
    double reconstruct_road = 1.0;   // L1
    double reconstruct_cabin = 1.0;  // L2
    double align_latents = 1.0;      // L3
    double adversarial = 1.0;        // L4 (subtracted)
    double classify = 1.0;           // L5

    bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1e-3;
    double adversarial_lr = 1e-3;
    int K = 5;                             // main-phase epochs per cycle
    int adversarial_epochs_per_phase = 1;
    std::uint64_t seed = 0;
    LossWeights weights;
    nn::Architecture arch;
    int patience = 20;                     // epochs without validation improvement; 0 disables
    double road_encoder_weight_decay = 1.0;  // decoupled decay on R-EC_V only

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

enum class Phase : std::uint8_t { Main = 0, Adversarial = 1 };

std::string_view phase_name(Phase p);

/// Phase of a 0-based epoch under the K-periodic schedule.
Phase phase_for_epoch(int epoch, const TrainConfig& cfg);

struct LossTerms {
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, l5 = 0.0;

    double total(const LossWeights& w = {}) const;
    bool operator==(const LossTerms&) const = default;
};

struct EpochRecord {
    int epoch = 0;
    LossTerms train;         // batch-size weighted mean over the epoch's steps
    double total = 0.0;      // weighted L1 + L2 + L3 - L4 + L5 of `train`
    double val_total = 0.0;  // same objective on the validation split
    double cl_acc = 0.0;     // validation accuracy of CL
    double cladv_acc = 0.0;  // validation accuracy of CL_adv
    Phase phase = Phase::Main;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int best_epoch = -1;
    bool early_stopped = false;

    void write_csv(const std::filesystem::path& path) const;
    bool operator==(const TrainHistory&) const = default;
};

/// Normalized batch in column-per-sample layout.
struct Batch {
    nn::Matrix road;
    nn::Matrix cabin;
    nn::Matrix vehicle_input;  // V-EC_V input (spectral features or raw cabin)
    std::vector<int> labels;   // class_id - 1
};

/// Label used for a class id; throws LabelError outside [1, n_classes].
int class_label(int class_id, int n_classes);

Batch make_batch(const Dataset& normalized, std::span<const std::size_t> indices,
                 const nn::ModelWeights& w);

/// Slices columns of precomputed full-dataset matrices.
Batch slice_batch(const Batch& all, std::span<const std::size_t> indices);

using NetGradients = std::array<nn::MlpGradients, nn::kNumNets>;

NetGradients zero_gradients(const nn::ModelWeights& w);

/// Forward pass of all seven networks. When `grads` is set it receives the gradient of
/// the weighted main objective w.r.t. every network except CL_adv (left zero).
LossTerms batch_losses(const nn::ModelWeights& w, const Batch& batch,
                       const LossWeights& lw = {}, NetGradients* grads = nullptr);

/// One optimizer step on every network except CL_adv. Throws NonFinite on a non-finite loss.
LossTerms main_phase_step(nn::ModelWeights& w, const Batch& batch, const TrainConfig& cfg);

/// One optimizer step on CL_adv alone, minimizing L4 on the current road latents.
LossTerms adversarial_phase_step(nn::ModelWeights& w, const Batch& batch, const TrainConfig& cfg);

struct FitResult {
    nn::ModelWeights weights;  // best by validation objective
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Alternates K main epochs with adversarial epochs; the test split serves as validation.
/// If `checkpoint` is given the best weights are written there whenever they improve,
/// with `manifest` merged into the checkpoint's JSON manifest.
FitResult fit(const Dataset& normalized, const TrainConfig& cfg,
              const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
              const EpochCallback& on_epoch = {},
              const nlohmann::json& manifest = nlohmann::json::object());

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace tirelevel
