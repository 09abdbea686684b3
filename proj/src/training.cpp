#include "tirelevel/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tirelevel/errors.hpp"
#include "tirelevel/random.hpp"

namespace tirelevel {

using nn::Matrix;
using nn::NetId;

namespace {

std::size_t idx(NetId id) { return static_cast<std::size_t>(id); }

nn::AdamConfig adam_for(NetId id, const TrainConfig& cfg) {
    nn::AdamConfig a;
    a.lr = id == NetId::AdversarialClassifier ? cfg.adversarial_lr : cfg.lr;
    a.weight_decay = id == NetId::CabinRoadEncoder ? cfg.road_encoder_weight_decay : 0.0;
    return a;
}

void check_finite(const LossTerms& t, std::string_view where) {
    for (double v : {t.l1, t.l2, t.l3, t.l4, t.l5}) {
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << where << ": non-finite loss (L1=" << t.l1 << " L2=" << t.l2 << " L3=" << t.l3
                << " L4=" << t.l4 << " L5=" << t.l5 << ")";
            fail(ErrorCode::NonFinite, msg.str());
        }
    }
}

Matrix columns_of(std::span<const std::size_t> indices, std::size_t rows,
                  const std::function<const std::vector<float>&(std::size_t)>& get) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t c = 0; c < indices.size(); ++c) {
        const auto& s = get(indices[c]);
        require(s.size() == rows, ErrorCode::Length, "sample length differs from dataset signal length");
        for (std::size_t r = 0; r < rows; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s[r];
    }
    return m;
}

}  // namespace

void TrainConfig::validate() const {
    require(epochs >= 1, ErrorCode::Config, "epochs must be at least 1");
    require(batch_size >= 1, ErrorCode::Config, "batch_size must be at least 1");
    require(K >= 1, ErrorCode::Config, "K must be at least 1");
    require(adversarial_epochs_per_phase >= 0, ErrorCode::Config,
            "adversarial_epochs_per_phase must be non-negative");
    require(lr >= 0.0 && adversarial_lr >= 0.0, ErrorCode::Config, "learning rates must be non-negative");
    require(patience >= 0, ErrorCode::Config, "patience must be non-negative");
    require(road_encoder_weight_decay >= 0.0, ErrorCode::Config, "weight decay must be non-negative");
    for (double w : {weights.reconstruct_road, weights.reconstruct_cabin, weights.align_latents,
                     weights.adversarial, weights.classify}) {
        require(w >= 0.0, ErrorCode::Config, "loss weights must be non-negative");
    }
    arch.validate();
}

std::string_view phase_name(Phase p) { return p == Phase::Main ? "main" : "adversarial"; }

Phase phase_for_epoch(int epoch, const TrainConfig& cfg) {
    const int period = cfg.K + cfg.adversarial_epochs_per_phase;
    return epoch % period < cfg.K ? Phase::Main : Phase::Adversarial;
}

double LossTerms::total(const LossWeights& w) const {
    return w.reconstruct_road * l1 + w.reconstruct_cabin * l2 + w.align_latents * l3 -
           w.adversarial * l4 + w.classify * l5;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    require(os.good(), ErrorCode::Io, "cannot write " + path.string());
    os << "epoch,L1,L2,L3,L4,L5,total,val_total,cl_acc,cladv_acc,phase\n";
    os << std::setprecision(17);
    for (const auto& r : records) {
        os << r.epoch << ',' << r.train.l1 << ',' << r.train.l2 << ',' << r.train.l3 << ','
           << r.train.l4 << ',' << r.train.l5 << ',' << r.total << ',' << r.val_total << ','
           << r.cl_acc << ',' << r.cladv_acc << ',' << phase_name(r.phase) << '\n';
    }
    require(os.good(), ErrorCode::Io, "write to " + path.string() + " failed");
}

int class_label(int class_id, int n_classes) {
    if (class_id < 1 || class_id > n_classes) {
        fail(ErrorCode::Label, "class id " + std::to_string(class_id) + " outside [1, " +
                                   std::to_string(n_classes) + "]");
    }
    return class_id - 1;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, const nn::ModelWeights& w) {
    require(static_cast<int>(ds.signal_length()) == w.arch.signal_length, ErrorCode::Length,
            "dataset signal length " + std::to_string(ds.signal_length()) +
                " does not match the model input length " + std::to_string(w.arch.signal_length));
    Batch b;
    const std::size_t L = ds.signal_length();
    b.road = columns_of(indices, L, [&](std::size_t i) -> const std::vector<float>& { return ds.samples.at(i).road_accel; });
    b.cabin = columns_of(indices, L, [&](std::size_t i) -> const std::vector<float>& { return ds.samples.at(i).cabin_accel; });
    b.vehicle_input = w.vehicle_encoder_input(b.cabin);
    for (auto i : indices) b.labels.push_back(class_label(ds.samples[i].class_id, w.arch.n_classes));
    return b;
}

Batch slice_batch(const Batch& all, std::span<const std::size_t> indices) {
    Batch b;
    const auto n = static_cast<Eigen::Index>(indices.size());
    b.road.resize(all.road.rows(), n);
    b.cabin.resize(all.cabin.rows(), n);
    b.vehicle_input.resize(all.vehicle_input.rows(), n);
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto k = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(c)]);
        b.road.col(c) = all.road.col(k);
        b.cabin.col(c) = all.cabin.col(k);
        b.vehicle_input.col(c) = all.vehicle_input.col(k);
        b.labels.push_back(all.labels.at(static_cast<std::size_t>(k)));
    }
    return b;
}

NetGradients zero_gradients(const nn::ModelWeights& w) {
    NetGradients g;
    for (NetId id : nn::kAllNets) g[idx(id)] = nn::MlpGradients::zeros_like(w.net(id));
    return g;
}

LossTerms batch_losses(const nn::ModelWeights& w, const Batch& b, const LossWeights& lw,
                       NetGradients* grads) {
    require(b.road.cols() == b.cabin.cols() && b.road.cols() == b.vehicle_input.cols() &&
                static_cast<std::size_t>(b.road.cols()) == b.labels.size(),
            ErrorCode::Shape, "batch members have inconsistent sample counts");
    const Eigen::Index dr = w.arch.road_latent;
    nn::ForwardCache c_ecr, c_dcr, c_recv, c_vecv, c_dcv, c_cl, c_cla;
    const bool need = grads != nullptr;

    const Matrix zr = nn::forward(w.net(NetId::RoadEncoder), b.road, need ? &c_ecr : nullptr);
    const Matrix road_hat = nn::forward(w.net(NetId::RoadDecoder), zr, need ? &c_dcr : nullptr);
    const Matrix zc = nn::forward(w.net(NetId::CabinRoadEncoder), b.cabin, need ? &c_recv : nullptr);
    const Matrix zv = nn::forward(w.net(NetId::CabinVehicleEncoder), b.vehicle_input, need ? &c_vecv : nullptr);
    Matrix joint(zc.rows() + zv.rows(), zc.cols());
    joint << zc, zv;
    const Matrix cabin_hat = nn::forward(w.net(NetId::CabinDecoder), joint, need ? &c_dcv : nullptr);
    const Matrix adv_logits = nn::forward(w.net(NetId::AdversarialClassifier), zc, need ? &c_cla : nullptr);
    const Matrix cl_logits = nn::forward(w.net(NetId::Classifier), zv, need ? &c_cl : nullptr);

    LossTerms t;
    Matrix g_road_hat, g_cabin_hat, g_align, g_adv, g_cl;
    t.l1 = nn::mse(road_hat, b.road, need ? &g_road_hat : nullptr);
    t.l2 = nn::mse(cabin_hat, b.cabin, need ? &g_cabin_hat : nullptr);
    t.l3 = nn::mse(zr, zc, need ? &g_align : nullptr);
    t.l4 = nn::cross_entropy(adv_logits, b.labels, need ? &g_adv : nullptr);
    t.l5 = nn::cross_entropy(cl_logits, b.labels, need ? &g_cl : nullptr);
    if (!need) return t;

    auto& g = *grads;
    for (NetId id : nn::kAllNets) {
        if (g[idx(id)].weight.size() != w.net(id).layers.size()) {
            g[idx(id)] = nn::MlpGradients::zeros_like(w.net(id));
        }
    }

    // Road autoencoder and latent alignment. L3 flows into both encoders.
    Matrix g_zr = nn::backward(w.net(NetId::RoadDecoder), c_dcr, lw.reconstruct_road * g_road_hat,
                               g[idx(NetId::RoadDecoder)]);
    g_zr += lw.align_latents * g_align;
    nn::backward(w.net(NetId::RoadEncoder), c_ecr, g_zr, g[idx(NetId::RoadEncoder)]);

    // Cabin decoder splits its input gradient between the two latents.
    const Matrix g_joint = nn::backward(w.net(NetId::CabinDecoder), c_dcv,
                                        lw.reconstruct_cabin * g_cabin_hat, g[idx(NetId::CabinDecoder)]);
    Matrix g_zc = g_joint.topRows(dr);
    Matrix g_zv = g_joint.bottomRows(g_joint.rows() - dr);
    g_zc -= lw.align_latents * g_align;

    // The adversary's input gradient for -L4 reaches R-EC_V; its own parameter
    // gradient is discarded because CL_adv is not trained in this objective.
    auto scratch = nn::MlpGradients::zeros_like(w.net(NetId::AdversarialClassifier));
    g_zc += nn::backward(w.net(NetId::AdversarialClassifier), c_cla, -lw.adversarial * g_adv, scratch);
    nn::backward(w.net(NetId::CabinRoadEncoder), c_recv, g_zc, g[idx(NetId::CabinRoadEncoder)]);

    g_zv += nn::backward(w.net(NetId::Classifier), c_cl, lw.classify * g_cl, g[idx(NetId::Classifier)]);
    nn::backward(w.net(NetId::CabinVehicleEncoder), c_vecv, g_zv, g[idx(NetId::CabinVehicleEncoder)]);
    return t;
}

LossTerms main_phase_step(nn::ModelWeights& w, const Batch& b, const TrainConfig& cfg) {
    NetGradients g = zero_gradients(w);
    const LossTerms t = batch_losses(w, b, cfg.weights, &g);
    check_finite(t, "main phase");
    for (NetId id : nn::kAllNets) {
        if (id == NetId::AdversarialClassifier) continue;
        nn::adam_step(w.net(id), w.optimizer(id), g[idx(id)], adam_for(id, cfg));
    }
    return t;
}

LossTerms adversarial_phase_step(nn::ModelWeights& w, const Batch& b, const TrainConfig& cfg) {
    LossTerms t = batch_losses(w, b, cfg.weights, nullptr);
    check_finite(t, "adversarial phase");
    const Matrix zc = nn::forward(w.net(NetId::CabinRoadEncoder), b.cabin);
    nn::ForwardCache cache;
    const Matrix logits = nn::forward(w.net(NetId::AdversarialClassifier), zc, &cache);
    Matrix g_logits;
    nn::cross_entropy(logits, b.labels, &g_logits);
    auto g = nn::MlpGradients::zeros_like(w.net(NetId::AdversarialClassifier));
    nn::backward(w.net(NetId::AdversarialClassifier), cache, g_logits, g);
    nn::adam_step(w.net(NetId::AdversarialClassifier), w.optimizer(NetId::AdversarialClassifier), g,
                  adam_for(NetId::AdversarialClassifier, cfg));
    return t;
}

FitResult fit(const Dataset& ds, const TrainConfig& cfg,
              const std::optional<std::filesystem::path>& checkpoint, const EpochCallback& on_epoch,
              const nlohmann::json& manifest) {
    cfg.validate();
    require(ds.normalized, ErrorCode::Config, "training requires a normalized dataset");
    const auto train_idx = ds.indices(Split::Train);
    const auto val_idx = ds.indices(Split::Test);
    require(!train_idx.empty(), ErrorCode::Config, "training split is empty");

    nn::Architecture arch = cfg.arch;
    arch.signal_length = static_cast<int>(ds.signal_length());
    FitResult result{nn::ModelWeights::initialize(arch, cfg.seed), {}};
    nn::ModelWeights& w = result.weights;

    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Batch data;
    data.road = columns_of(all, ds.signal_length(), [&](std::size_t i) -> const std::vector<float>& { return ds.samples[i].road_accel; });
    data.cabin = columns_of(all, ds.signal_length(), [&](std::size_t i) -> const std::vector<float>& { return ds.samples[i].cabin_accel; });
    for (const auto& s : ds.samples) data.labels.push_back(class_label(s.class_id, arch.n_classes));
    if (arch.spectral_vehicle_encoder) {
        Matrix train_cabin(data.cabin.rows(), static_cast<Eigen::Index>(train_idx.size()));
        for (std::size_t c = 0; c < train_idx.size(); ++c) {
            train_cabin.col(static_cast<Eigen::Index>(c)) = data.cabin.col(static_cast<Eigen::Index>(train_idx[c]));
        }
        w.vehicle_features.fit(train_cabin);
    }
    data.vehicle_input = w.vehicle_encoder_input(data.cabin);
    const Batch val = slice_batch(data, val_idx.empty() ? train_idx : val_idx);

    nn::ModelWeights best = w;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Phase phase = phase_for_epoch(epoch, cfg);
        const auto batches = stratified_batches(ds, train_idx, static_cast<std::size_t>(cfg.batch_size),
                                                derive_seed(cfg.seed, {0x4550, static_cast<std::uint64_t>(epoch)}));
        LossTerms sum;
        double n_seen = 0.0;
        for (const auto& members : batches) {
            const Batch b = slice_batch(data, members);
            const LossTerms t = phase == Phase::Main ? main_phase_step(w, b, cfg)
                                                     : adversarial_phase_step(w, b, cfg);
            const double n = static_cast<double>(members.size());
            sum.l1 += n * t.l1;
            sum.l2 += n * t.l2;
            sum.l3 += n * t.l3;
            sum.l4 += n * t.l4;
            sum.l5 += n * t.l5;
            n_seen += n;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = phase;
        rec.train = {sum.l1 / n_seen, sum.l2 / n_seen, sum.l3 / n_seen, sum.l4 / n_seen, sum.l5 / n_seen};
        rec.total = rec.train.total(cfg.weights);

        const LossTerms vt = batch_losses(w, val, cfg.weights);
        check_finite(vt, "validation");
        rec.val_total = vt.total(cfg.weights);
        const Matrix zc = nn::forward(w.net(NetId::CabinRoadEncoder), val.cabin);
        const Matrix zv = nn::forward(w.net(NetId::CabinVehicleEncoder), val.vehicle_input);
        rec.cl_acc = nn::accuracy(nn::forward(w.net(NetId::Classifier), zv), val.labels);
        rec.cladv_acc = nn::accuracy(nn::forward(w.net(NetId::AdversarialClassifier), zc), val.labels);
        result.history.records.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_total < best_val) {
            best_val = rec.val_total;
            best = w;
            result.history.best_epoch = epoch;
            since_best = 0;
            if (checkpoint) {
                nlohmann::json m = manifest;
                m["train_config"] = cfg;
                m["best_epoch"] = epoch;
                nn::save_checkpoint(best, *checkpoint, m);
            }
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            result.history.early_stopped = true;
            break;
        }
    }
    result.weights = std::move(best);
    return result;
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = nlohmann::json{{"L1", w.reconstruct_road}, {"L2", w.reconstruct_cabin}, {"L3", w.align_latents},
                       {"L4", w.adversarial},      {"L5", w.classify}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    auto opt = [&](const char* k, double& f) {
        if (auto it = j.find(k); it != j.end()) f = it->get<double>();
    };
    opt("L1", w.reconstruct_road);
    opt("L2", w.reconstruct_cabin);
    opt("L3", w.align_latents);
    opt("L4", w.adversarial);
    opt("L5", w.classify);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"lr", c.lr},
                       {"adversarial_lr", c.adversarial_lr},
                       {"K", c.K},
                       {"adversarial_epochs_per_phase", c.adversarial_epochs_per_phase},
                       {"seed", c.seed},
                       {"loss_weights", c.weights},
                       {"architecture", c.arch},
                       {"patience", c.patience},
                       {"road_encoder_weight_decay", c.road_encoder_weight_decay}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    auto opt = [&](const char* key, auto& field) {
        if (auto it = j.find(key); it != j.end() && !it->is_null()) {
            field = it->get<std::remove_reference_t<decltype(field)>>();
        }
    };
    opt("epochs", c.epochs);
    opt("batch_size", c.batch_size);
    opt("lr", c.lr);
    opt("adversarial_lr", c.adversarial_lr);
    opt("K", c.K);
    opt("adversarial_epochs_per_phase", c.adversarial_epochs_per_phase);
    opt("seed", c.seed);
    opt("loss_weights", c.weights);
    opt("architecture", c.arch);
    opt("patience", c.patience);
    opt("road_encoder_weight_decay", c.road_encoder_weight_decay);
}

}  // namespace tirelevel
