#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirelevel/random.hpp"

namespace tirelevel::nn {

// Column-major batches: one sample per column.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { Rectifier = 0, Tanh = 1, Identity = 2 };

struct LayerSpec {
    int input_dim = 1;
    int output_dim = 1;
    Activation activation = Activation::Identity;

    bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
    Matrix weight;  // output_dim x input_dim
    Vector bias;    // output_dim
    Activation activation = Activation::Identity;

    bool operator==(const DenseLayer&) const = default;
};

/// Fully connected feed-forward network.
struct Mlp {
    std::vector<DenseLayer> layers;

    /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static Mlp create(std::span<const LayerSpec> specs, Rng& rng);

    int input_dim() const;
    int output_dim() const;
    std::size_t parameter_count() const;
    std::vector<LayerSpec> specs() const;

    bool operator==(const Mlp&) const = default;
};

/// Per-layer inputs and pre-activations recorded by forward().
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preactivations;
};

struct MlpGradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    static MlpGradients zeros_like(const Mlp& net);
    void set_zero();
    double squared_norm() const;
};

/// Throws ShapeError when x.rows() != input_dim.
Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
Matrix backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad,
                MlpGradients& grads);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW); 0 gives plain Adam
};

struct AdamState {
    std::vector<Matrix> m_weight, v_weight;
    std::vector<Vector> m_bias, v_bias;
    std::int64_t step = 0;

    static AdamState zeros_like(const Mlp& net);
    bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update. Throws ShapeError on mismatched gradients.
void adam_step(Mlp& net, AdamState& state, const MlpGradients& grads, const AdamConfig& cfg);

/// Column-wise softmax.
Matrix softmax(const Matrix& logits);

/// Mean softmax cross-entropy over the batch; labels are 0-based class indices.
/// If grad is given it receives d(loss)/d(logits). Throws LabelError for bad labels.
double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad = nullptr);

/// Mean squared error over all entries; optional gradient w.r.t. pred.
double mse(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

/// Fraction of columns whose arg-max equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels);

/// Fixed (non-trainable) front end: standardized log-magnitude spectrum of each column.
/// Gives the vehicle encoder a shift-invariant view of the cabin signal.
struct SpectralFrontEnd {
    int input_length = 0;
    double floor = 1e-3;
    Vector mean;     // per bin
    Vector inv_std;  // per bin

    int output_dim() const { return input_length / 2 + 1; }
    bool fitted() const { return mean.size() == output_dim(); }

    /// Raw log-magnitude spectrum (before standardization).
    Matrix log_magnitude(const Matrix& x) const;
    /// Estimates per-bin standardization from training columns.
    void fit(const Matrix& x_train);
    Matrix apply(const Matrix& x) const;

    bool operator==(const SpectralFrontEnd&) const = default;
};

enum class NetId : int {
    RoadEncoder = 0,          // EC_R
    RoadDecoder = 1,          // DC_R
    CabinRoadEncoder = 2,     // R-EC_V
    CabinVehicleEncoder = 3,  // V-EC_V
    CabinDecoder = 4,         // DC_V
    Classifier = 5,           // CL
    AdversarialClassifier = 6 // CL_adv
};

inline constexpr std::size_t kNumNets = 7;
inline constexpr std::array<NetId, kNumNets> kAllNets = {
    NetId::RoadEncoder,         NetId::RoadDecoder, NetId::CabinRoadEncoder,
    NetId::CabinVehicleEncoder, NetId::CabinDecoder, NetId::Classifier,
    NetId::AdversarialClassifier};

std::string_view net_name(NetId id);

/// Layer widths of the seven networks.
struct Architecture {
    int signal_length = 1024;
    int road_latent = 128;
    int vehicle_latent = 16;
    std::vector<int> encoder_hidden = {512};  // decoders mirror this
    std::vector<int> cabin_road_encoder_hidden = {};  // empty: R-EC_V is a linear map
    std::vector<int> classifier_hidden = {64};
    int n_classes = 5;
    Activation hidden_activation = Activation::Rectifier;
    bool spectral_vehicle_encoder = true;

    std::vector<LayerSpec> layer_specs(NetId id) const;
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

struct ModelWeights {
    Architecture arch;
    std::array<Mlp, kNumNets> nets;
    std::array<AdamState, kNumNets> adam;
    SpectralFrontEnd vehicle_features;

    static ModelWeights initialize(const Architecture& arch, std::uint64_t seed);

    Mlp& net(NetId id) { return nets[static_cast<std::size_t>(id)]; }
    const Mlp& net(NetId id) const { return nets[static_cast<std::size_t>(id)]; }
    AdamState& optimizer(NetId id) { return adam[static_cast<std::size_t>(id)]; }

    /// Input to V-EC_V for a batch of normalized cabin signals.
    Matrix vehicle_encoder_input(const Matrix& cabin) const;

    /// FNV-1a hash of the parameter bytes of one network.
    std::uint64_t checksum(NetId id) const;

    bool operator==(const ModelWeights&) const = default;
};

/// Versioned little-endian checkpoint (magic "SUSPCKV1"); manifest goes to path + ".json".
void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path,
                     const nlohmann::json& manifest = nlohmann::json::object());
ModelWeights load_checkpoint(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

}  // namespace tirelevel::nn
