#include "tirelevel/neural.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include "tirelevel/binary_io.hpp"
#include "tirelevel/errors.hpp"

namespace tirelevel::nn {

namespace {

constexpr std::string_view kCheckpointMagic = "SUSPCKV1";
constexpr std::string_view kCheckpointPrefix = "SUSPCK";

void apply_activation(Activation a, Matrix& z) {
    switch (a) {
        case Activation::Rectifier: z = z.cwiseMax(0.0); break;
        case Activation::Tanh: z = z.array().tanh().matrix(); break;
        case Activation::Identity: break;
    }
}

// Multiplies `grad` in place by the activation derivative evaluated at pre-activation `z`.
void apply_activation_grad(Activation a, const Matrix& z, Matrix& grad) {
    switch (a) {
        case Activation::Rectifier:
            grad = (z.array() > 0.0).select(grad, 0.0);
            break;
        case Activation::Tanh:
            grad.array() *= 1.0 - z.array().tanh().square();
            break;
        case Activation::Identity: break;
    }
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    std::ostringstream s;
    s << r << "x" << c;
    return s.str();
}

void check_label(int label, int n_classes) {
    if (label < 0 || label >= n_classes) {
        std::ostringstream msg;
        msg << "label " << label << " outside [0, " << n_classes << ")";
        fail(ErrorCode::Label, msg.str());
    }
}

void write_matrix(io::Writer& w, const Matrix& m) {
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    w.put_all(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

Matrix read_matrix(io::Reader& r) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    require(static_cast<std::uint64_t>(rows) * cols <= (1ULL << 28), ErrorCode::Format,
            "checkpoint matrix size is implausible");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    return m;
}

Vector read_vector(io::Reader& r) {
    Matrix m = read_matrix(r);
    require(m.cols() == 1 || m.size() == 0, ErrorCode::Format, "checkpoint vector has wrong shape");
    return m.size() == 0 ? Vector() : Vector(m.col(0));
}

}  // namespace

Mlp Mlp::create(std::span<const LayerSpec> specs, Rng& rng) {
    require(!specs.empty(), ErrorCode::Config, "network needs at least one layer");
    Mlp net;
    int prev = specs.front().input_dim;
    for (const auto& s : specs) {
        require(s.input_dim > 0 && s.output_dim > 0, ErrorCode::Config, "layer widths must be positive");
        require(s.input_dim == prev, ErrorCode::Shape, "consecutive layer widths do not chain");
        const double limit = 1.0 / std::sqrt(static_cast<double>(s.input_dim));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer;
        layer.activation = s.activation;
        layer.weight.resize(s.output_dim, s.input_dim);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
        layer.bias.resize(s.output_dim);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = dist(rng);
        net.layers.push_back(std::move(layer));
        prev = s.output_dim;
    }
    return net;
}

int Mlp::input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
int Mlp::output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

std::vector<LayerSpec> Mlp::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers) {
        out.push_back({static_cast<int>(l.weight.cols()), static_cast<int>(l.weight.rows()), l.activation});
    }
    return out;
}

MlpGradients MlpGradients::zeros_like(const Mlp& net) {
    MlpGradients g;
    for (const auto& l : net.layers) {
        g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
}

void MlpGradients::set_zero() {
    for (auto& w : weight) w.setZero();
    for (auto& b : bias) b.setZero();
}

double MlpGradients::squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
}

Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache) {
    if (x.rows() != net.input_dim()) {
        fail(ErrorCode::Shape, "network expects " + std::to_string(net.input_dim()) +
                                   " input rows, got " + shape_str(x.rows(), x.cols()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    Matrix h = x;
    for (const auto& l : net.layers) {
        Matrix z = l.weight * h;
        z.colwise() += l.bias;
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->preactivations.push_back(z);
        }
        apply_activation(l.activation, z);
        h = std::move(z);
    }
    return h;
}

Matrix backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad,
                MlpGradients& grads) {
    const std::size_t n = net.layers.size();
    require(cache.inputs.size() == n && cache.preactivations.size() == n, ErrorCode::Shape,
            "forward cache does not match network depth");
    require(grads.weight.size() == n && grads.bias.size() == n, ErrorCode::Shape,
            "gradient buffers do not match network depth");
    if (output_grad.rows() != net.output_dim() || output_grad.cols() != cache.inputs.front().cols()) {
        fail(ErrorCode::Shape, "output gradient has shape " +
                                   shape_str(output_grad.rows(), output_grad.cols()));
    }
    Matrix g = output_grad;
    for (std::size_t i = n; i-- > 0;) {
        const auto& l = net.layers[i];
        apply_activation_grad(l.activation, cache.preactivations[i], g);
        grads.weight[i].noalias() += g * cache.inputs[i].transpose();
        grads.bias[i].noalias() += g.rowwise().sum();
        g = l.weight.transpose() * g;
    }
    return g;
}

AdamState AdamState::zeros_like(const Mlp& net) {
    AdamState s;
    for (const auto& l : net.layers) {
        s.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        s.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        s.m_bias.push_back(Vector::Zero(l.bias.size()));
        s.v_bias.push_back(Vector::Zero(l.bias.size()));
    }
    return s;
}

void adam_step(Mlp& net, AdamState& state, const MlpGradients& grads, const AdamConfig& cfg) {
    const std::size_t n = net.layers.size();
    require(grads.weight.size() == n && grads.bias.size() == n && state.m_weight.size() == n,
            ErrorCode::Shape, "optimizer state does not match network");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;

    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
        require(p.rows() == g.rows() && p.cols() == g.cols(), ErrorCode::Shape,
                "gradient shape does not match parameter");
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        if (cfg.weight_decay != 0.0) p *= decay;
        p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
    };
    for (std::size_t i = 0; i < n; ++i) {
        update(net.layers[i].weight, state.m_weight[i], state.v_weight[i], grads.weight[i]);
        update(net.layers[i].bias, state.m_bias[i], state.v_bias[i], grads.bias[i]);
    }
}

Matrix softmax(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double m = p.col(c).maxCoeff();
        p.col(c) = (p.col(c).array() - m).exp().matrix();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad) {
    require(static_cast<Eigen::Index>(labels.size()) == logits.cols(), ErrorCode::Shape,
            "label count does not match batch size");
    require(logits.cols() > 0, ErrorCode::Shape, "empty batch");
    const int k = static_cast<int>(logits.rows());
    double loss = 0.0;
    if (grad) grad->resize(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        check_label(labels[c], k);
        const double m = logits.col(c).maxCoeff();
        const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
        loss += lse - logits(labels[c], c);
        if (grad) {
            grad->col(c) = (logits.col(c).array() - lse).exp().matrix();
            (*grad)(labels[c], c) -= 1.0;
        }
    }
    const double n = static_cast<double>(logits.cols());
    if (grad) *grad /= n;
    return loss / n;
}

double mse(const Matrix& pred, const Matrix& target, Matrix* grad) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        fail(ErrorCode::Shape, "prediction " + shape_str(pred.rows(), pred.cols()) +
                                   " vs target " + shape_str(target.rows(), target.cols()));
    }
    require(pred.size() > 0, ErrorCode::Shape, "empty batch");
    const double n = static_cast<double>(pred.size());
    Matrix diff = pred - target;
    const double loss = diff.squaredNorm() / n;
    if (grad) *grad = (2.0 / n) * diff;
    return loss;
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
    require(static_cast<Eigen::Index>(labels.size()) == logits.cols(), ErrorCode::Shape,
            "label count does not match batch size");
    if (labels.empty()) return 0.0;
    std::size_t hit = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        Eigen::Index best = 0;
        logits.col(c).maxCoeff(&best);
        hit += best == labels[c];
    }
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

Matrix SpectralFrontEnd::log_magnitude(const Matrix& x) const {
    require(x.rows() == input_length, ErrorCode::Shape,
            "spectral front end expects " + std::to_string(input_length) + " rows");
    const int bins = output_dim();
    Matrix out(bins, x.cols());
    Eigen::FFT<double> fft;
    std::vector<double> col(static_cast<std::size_t>(input_length));
    std::vector<std::complex<double>> spec;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Eigen::Map<Vector>(col.data(), input_length) = x.col(c);
        fft.fwd(spec, col);
        for (int b = 0; b < bins; ++b) out(b, c) = std::log(std::abs(spec[b]) + floor);
    }
    return out;
}

void SpectralFrontEnd::fit(const Matrix& x_train) {
    require(x_train.cols() >= 2, ErrorCode::Shape, "need at least two columns to fit spectral scaling");
    const Matrix f = log_magnitude(x_train);
    mean = f.rowwise().mean();
    const Matrix centered = f.colwise() - mean;
    const Vector var = centered.rowwise().squaredNorm() / static_cast<double>(f.cols() - 1);
    inv_std = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
}

Matrix SpectralFrontEnd::apply(const Matrix& x) const {
    require(fitted(), ErrorCode::Config, "spectral front end has not been fitted");
    Matrix f = log_magnitude(x);
    f.colwise() -= mean;
    return inv_std.asDiagonal() * f;
}

std::string_view net_name(NetId id) {
    switch (id) {
        case NetId::RoadEncoder: return "EC_R";
        case NetId::RoadDecoder: return "DC_R";
        case NetId::CabinRoadEncoder: return "R-EC_V";
        case NetId::CabinVehicleEncoder: return "V-EC_V";
        case NetId::CabinDecoder: return "DC_V";
        case NetId::Classifier: return "CL";
        case NetId::AdversarialClassifier: return "CL_adv";
    }
    return "?";
}

void Architecture::validate() const {
    require(signal_length >= 4, ErrorCode::Config, "signal_length must be at least 4");
    require(road_latent > 0 && vehicle_latent > 0, ErrorCode::Config, "latent sizes must be positive");
    require(n_classes >= 2, ErrorCode::Config, "need at least two classes");
    for (int h : encoder_hidden) require(h > 0, ErrorCode::Config, "hidden widths must be positive");
    for (int h : cabin_road_encoder_hidden) require(h > 0, ErrorCode::Config, "hidden widths must be positive");
    for (int h : classifier_hidden) require(h > 0, ErrorCode::Config, "hidden widths must be positive");
}

std::vector<LayerSpec> Architecture::layer_specs(NetId id) const {
    auto chain = [&](int in, const std::vector<int>& hidden, int out) {
        std::vector<LayerSpec> specs;
        int prev = in;
        for (int h : hidden) {
            specs.push_back({prev, h, hidden_activation});
            prev = h;
        }
        specs.push_back({prev, out, Activation::Identity});
        return specs;
    };
    const std::vector<int> decoder_hidden(encoder_hidden.rbegin(), encoder_hidden.rend());
    const int vehicle_in = spectral_vehicle_encoder ? signal_length / 2 + 1 : signal_length;
    switch (id) {
        case NetId::RoadEncoder: return chain(signal_length, encoder_hidden, road_latent);
        case NetId::CabinRoadEncoder: return chain(signal_length, cabin_road_encoder_hidden, road_latent);
        case NetId::RoadDecoder: return chain(road_latent, decoder_hidden, signal_length);
        case NetId::CabinVehicleEncoder: return chain(vehicle_in, encoder_hidden, vehicle_latent);
        case NetId::CabinDecoder: return chain(road_latent + vehicle_latent, decoder_hidden, signal_length);
        case NetId::Classifier: return chain(vehicle_latent, classifier_hidden, n_classes);
        case NetId::AdversarialClassifier: return chain(road_latent, classifier_hidden, n_classes);
    }
    return {};
}

ModelWeights ModelWeights::initialize(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    ModelWeights w;
    w.arch = arch;
    for (NetId id : kAllNets) {
        Rng rng(derive_seed(seed, {0x4e4554, static_cast<std::uint64_t>(id)}));
        const auto specs = arch.layer_specs(id);
        w.net(id) = Mlp::create(specs, rng);
        w.optimizer(id) = AdamState::zeros_like(w.net(id));
    }
    w.vehicle_features.input_length = arch.signal_length;
    return w;
}

Matrix ModelWeights::vehicle_encoder_input(const Matrix& cabin) const {
    return arch.spectral_vehicle_encoder ? vehicle_features.apply(cabin) : cabin;
}

std::uint64_t ModelWeights::checksum(NetId id) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const double* p, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (char b : io::to_le_bytes(p[i])) {
                h ^= static_cast<unsigned char>(b);
                h *= 0x100000001b3ULL;
            }
        }
    };
    for (const auto& l : net(id).layers) {
        feed(l.weight.data(), l.weight.size());
        feed(l.bias.data(), l.bias.size());
    }
    return h;
}

void to_json(nlohmann::json& j, const Architecture& a) {
    j = nlohmann::json{{"signal_length", a.signal_length},
                       {"road_latent", a.road_latent},
                       {"vehicle_latent", a.vehicle_latent},
                       {"encoder_hidden", a.encoder_hidden},
                       {"cabin_road_encoder_hidden", a.cabin_road_encoder_hidden},
                       {"classifier_hidden", a.classifier_hidden},
                       {"n_classes", a.n_classes},
                       {"hidden_activation", a.hidden_activation == Activation::Tanh ? "tanh" : "relu"},
                       {"spectral_vehicle_encoder", a.spectral_vehicle_encoder}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
    auto opt = [&](const char* key, auto& field) {
        if (auto it = j.find(key); it != j.end() && !it->is_null()) {
            field = it->get<std::remove_reference_t<decltype(field)>>();
        }
    };
    opt("signal_length", a.signal_length);
    opt("road_latent", a.road_latent);
    opt("vehicle_latent", a.vehicle_latent);
    opt("encoder_hidden", a.encoder_hidden);
    opt("cabin_road_encoder_hidden", a.cabin_road_encoder_hidden);
    opt("classifier_hidden", a.classifier_hidden);
    opt("n_classes", a.n_classes);
    opt("spectral_vehicle_encoder", a.spectral_vehicle_encoder);
    if (auto it = j.find("hidden_activation"); it != j.end()) {
        const auto s = it->get<std::string>();
        if (s == "relu") {
            a.hidden_activation = Activation::Rectifier;
        } else if (s == "tanh") {
            a.hidden_activation = Activation::Tanh;
        } else {
            fail(ErrorCode::Config, "unknown hidden_activation '" + s + "'");
        }
    }
}

void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path,
                     const nlohmann::json& manifest) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    io::Writer out(os);
    out.put_raw(kCheckpointMagic);
    out.put_string(nlohmann::json(w.arch).dump());
    out.put(static_cast<std::uint32_t>(kNumNets));
    for (NetId id : kAllNets) {
        const auto& net = w.net(id);
        const auto& st = w.adam[static_cast<std::size_t>(id)];
        out.put_string(net_name(id));
        out.put(static_cast<std::uint32_t>(net.layers.size()));
        for (const auto& l : net.layers) {
            out.put(static_cast<std::uint8_t>(l.activation));
            write_matrix(out, l.weight);
            write_matrix(out, l.bias);
        }
        out.put(static_cast<std::int64_t>(st.step));
        const bool has_state = st.m_weight.size() == net.layers.size();
        out.put(static_cast<std::uint8_t>(has_state));
        if (has_state) {
            for (std::size_t i = 0; i < net.layers.size(); ++i) {
                write_matrix(out, st.m_weight[i]);
                write_matrix(out, st.v_weight[i]);
                write_matrix(out, st.m_bias[i]);
                write_matrix(out, st.v_bias[i]);
            }
        }
    }
    out.put(static_cast<std::int32_t>(w.vehicle_features.input_length));
    out.put(w.vehicle_features.floor);
    write_matrix(out, w.vehicle_features.mean);
    write_matrix(out, w.vehicle_features.inv_std);
    require(out.good(), ErrorCode::Io, "write to " + path.string() + " failed");
    os.close();

    nlohmann::json side = manifest;
    side["format"] = std::string(kCheckpointMagic);
    side["architecture"] = w.arch;
    auto& nets = side["networks"];
    for (NetId id : kAllNets) {
        nlohmann::json shapes = nlohmann::json::array();
        for (const auto& s : w.net(id).specs()) shapes.push_back({s.input_dim, s.output_dim});
        nets[std::string(net_name(id))] = {{"layers", shapes},
                                            {"parameters", w.net(id).parameter_count()},
                                            {"checksum", w.checksum(id)}};
    }
    std::ofstream js(path.string() + ".json");
    require(js.good(), ErrorCode::Io, "cannot write checkpoint manifest for " + path.string());
    js << side.dump(2) << '\n';
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::Io, "cannot open checkpoint " + path.string());
    io::Reader in(is);
    const std::string magic = in.get_raw(kCheckpointMagic.size());
    if (magic != kCheckpointMagic) {
        if (magic.starts_with(kCheckpointPrefix)) {
            fail(ErrorCode::Version, "unsupported checkpoint version '" + magic + "'");
        }
        fail(ErrorCode::Format, path.string() + " is not a checkpoint file");
    }
    ModelWeights w;
    try {
        w.arch = nlohmann::json::parse(in.get_string()).get<Architecture>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("checkpoint architecture block is invalid: ") + e.what());
    }
    w.arch.validate();
    require(in.get<std::uint32_t>() == kNumNets, ErrorCode::Format, "checkpoint network count mismatch");
    for (NetId id : kAllNets) {
        const std::string name = in.get_string();
        require(name == net_name(id), ErrorCode::Format, "unexpected network '" + name + "' in checkpoint");
        const auto n_layers = in.get<std::uint32_t>();
        require(n_layers >= 1 && n_layers <= 64, ErrorCode::Format, "implausible layer count");
        Mlp net;
        for (std::uint32_t i = 0; i < n_layers; ++i) {
            DenseLayer l;
            const auto act = in.get<std::uint8_t>();
            require(act <= 2, ErrorCode::Format, "unknown activation code");
            l.activation = static_cast<Activation>(act);
            l.weight = read_matrix(in);
            l.bias = read_vector(in);
            require(l.bias.size() == l.weight.rows(), ErrorCode::Format, "bias length mismatch");
            net.layers.push_back(std::move(l));
        }
        require(net.specs() == w.arch.layer_specs(id), ErrorCode::Format,
                "network " + name + " does not match the stored architecture");
        AdamState st;
        st.step = in.get<std::int64_t>();
        if (in.get<std::uint8_t>() != 0) {
            for (std::uint32_t i = 0; i < n_layers; ++i) {
                st.m_weight.push_back(read_matrix(in));
                st.v_weight.push_back(read_matrix(in));
                st.m_bias.push_back(read_vector(in));
                st.v_bias.push_back(read_vector(in));
            }
        } else {
            st = AdamState::zeros_like(net);
        }
        w.net(id) = std::move(net);
        w.optimizer(id) = std::move(st);
    }
    w.vehicle_features.input_length = in.get<std::int32_t>();
    w.vehicle_features.floor = in.get<double>();
    w.vehicle_features.mean = read_vector(in);
    w.vehicle_features.inv_std = read_vector(in);
    require(w.vehicle_features.input_length == w.arch.signal_length, ErrorCode::Format,
            "spectral front end length mismatch");
    require(in.at_eof(), ErrorCode::Format, "trailing bytes after checkpoint payload");
    return w;
}

}  // namespace tirelevel::nn
