#include "tirelevel/inference_eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "tirelevel/errors.hpp"
#include "tirelevel/json_io.hpp"
#include "tirelevel/random.hpp"
#include "tirelevel/training.hpp"

namespace tirelevel {

using nn::Matrix;
using nn::NetId;

namespace {

Matrix normalized_column(const nn::ModelWeights& w, std::span<const double> cabin,
                         const NormalizationStats& stats) {
    if (static_cast<int>(cabin.size()) != w.arch.signal_length) {
        fail(ErrorCode::Length, "cabin signal has " + std::to_string(cabin.size()) +
                                    " samples, the model expects " + std::to_string(w.arch.signal_length));
    }
    Matrix x(static_cast<Eigen::Index>(cabin.size()), 1);
    for (std::size_t i = 0; i < cabin.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = (cabin[i] - stats.cabin.mean) / stats.cabin.std;
    }
    return x;
}

double median_of(std::vector<double> v) {
    require(!v.empty(), ErrorCode::Config, "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ranks(std::span<const double> a) {
    std::vector<std::size_t> order(a.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a[i] < a[j]; });
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && a[order[j + 1]] == a[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::optional<Error> err;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                if (!err) err = e;
                next = n;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (err) throw *err;
}

std::vector<int> labels_of(const Dataset& ds, std::span<const std::size_t> idx, int n_classes) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(class_label(ds.samples[i].class_id, n_classes));
    return out;
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(idx[c]));
    return out;
}

}  // namespace

std::vector<double> estimate_tire_input(const nn::ModelWeights& w, std::span<const double> cabin,
                                        const NormalizationStats& stats) {
    const Matrix x = normalized_column(w, cabin, stats);
    const Matrix est = nn::forward(w.net(NetId::RoadDecoder), nn::forward(w.net(NetId::CabinRoadEncoder), x));
    std::vector<double> out(static_cast<std::size_t>(est.rows()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = est(static_cast<Eigen::Index>(i), 0) * stats.road.std + stats.road.mean;
    }
    return out;
}

std::vector<double> classify_vehicle(const nn::ModelWeights& w, std::span<const double> cabin,
                                     const NormalizationStats& stats) {
    const Matrix x = normalized_column(w, cabin, stats);
    const Matrix zv = nn::forward(w.net(NetId::CabinVehicleEncoder), w.vehicle_encoder_input(x));
    const Matrix p = nn::softmax(nn::forward(w.net(NetId::Classifier), zv));
    return {p.data(), p.data() + p.size()};
}

double pearson(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::Length, "pearson inputs differ in length");
    require(a.size() >= 2, ErrorCode::Length, "pearson needs at least two points");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) {
        fail(ErrorCode::UndefinedCorrelation, "correlation is undefined for a constant series");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::Length, "spearman inputs differ in length");
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    return pearson(ra, rb);
}

int histogram_bin(double r) {
    const int bin = static_cast<int>(std::floor((r + 1.0) / 2.0 * kHistogramBins));
    return std::clamp(bin, 0, kHistogramBins - 1);
}

Matrix dataset_channel(const Dataset& ds, Channel ch, std::span<const std::size_t> indices,
                       const NormalizationStats& stats) {
    const auto L = static_cast<Eigen::Index>(ds.signal_length());
    const ChannelStats st = ds.normalized ? ChannelStats{} : stats[ch];
    Matrix m(L, static_cast<Eigen::Index>(indices.size()));
    for (std::size_t c = 0; c < indices.size(); ++c) {
        const Sample& s = ds.samples.at(indices[c]);
        const auto& v = ch == Channel::Road ? s.road_accel : ch == Channel::Cabin ? s.cabin_accel : s.unsprung_accel;
        require(static_cast<Eigen::Index>(v.size()) == L, ErrorCode::Length, "sample length differs from dataset signal length");
        for (Eigen::Index r = 0; r < L; ++r) {
            m(r, static_cast<Eigen::Index>(c)) = (static_cast<double>(v[static_cast<std::size_t>(r)]) - st.mean) / st.std;
        }
    }
    return m;
}

double probe_accuracy(const Matrix& train_x, std::span<const int> train_labels, const Matrix& test_x,
                      std::span<const int> test_labels, int n_classes, const ProbeConfig& cfg) {
    require(train_x.cols() >= 2, ErrorCode::Config, "probe needs at least two training samples");
    require(train_x.rows() == test_x.rows(), ErrorCode::Shape, "probe train/test feature sizes differ");
    const nn::Vector mean = train_x.rowwise().mean();
    const nn::Vector sd = ((train_x.colwise() - mean).rowwise().squaredNorm() /
                           static_cast<double>(train_x.cols() - 1))
                              .cwiseSqrt();
    const nn::Vector inv = sd.unaryExpr([](double s) { return 1.0 / (s + 1e-8); });
    const Matrix xtr = inv.asDiagonal() * (train_x.colwise() - mean);
    const Matrix xte = inv.asDiagonal() * (test_x.colwise() - mean);

    const std::vector<nn::LayerSpec> specs = {
        {static_cast<int>(train_x.rows()), cfg.hidden, nn::Activation::Rectifier},
        {cfg.hidden, n_classes, nn::Activation::Identity}};
    Rng rng(cfg.seed);
    nn::Mlp net = nn::Mlp::create(specs, rng);
    nn::AdamState st = nn::AdamState::zeros_like(net);
    nn::AdamConfig adam;
    adam.lr = cfg.lr;
    nn::ForwardCache cache;
    auto g = nn::MlpGradients::zeros_like(net);
    Matrix g_logits;
    for (int step = 0; step < cfg.steps; ++step) {
        const Matrix logits = nn::forward(net, xtr, &cache);
        nn::cross_entropy(logits, train_labels, &g_logits);
        g.set_zero();
        nn::backward(net, cache, g_logits, g);
        nn::adam_step(net, st, g, adam);
    }
    return nn::accuracy(nn::forward(net, xte), test_labels);
}

EvalReport evaluate(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats,
                    const ProbeConfig& probe) {
    require(static_cast<int>(ds.signal_length()) == w.arch.signal_length, ErrorCode::Length,
            "dataset signal length does not match the model");
    const auto te = ds.indices(Split::Test);
    const auto tr = ds.indices(Split::Train);
    require(!te.empty(), ErrorCode::Config, "dataset has no test samples");
    const int k = w.arch.n_classes;

    EvalReport rep;
    rep.n_test = te.size();
    rep.class_ids = ds.class_ids();

    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    const Matrix cabin = dataset_channel(ds, Channel::Cabin, all, stats);
    const Matrix rlf = nn::forward(w.net(NetId::CabinRoadEncoder), cabin);
    const Matrix vlf = nn::forward(w.net(NetId::CabinVehicleEncoder), w.vehicle_encoder_input(cabin));

    const Matrix road_te = dataset_channel(ds, Channel::Road, te, stats);
    const Matrix est = nn::forward(w.net(NetId::RoadDecoder), select_columns(rlf, te));
    const auto labels_te = labels_of(ds, te, k);
    const auto labels_tr = labels_of(ds, tr, k);

    for (int id : rep.class_ids) {
        ClassCorrelations cc;
        cc.class_id = id;
        for (std::size_t c = 0; c < te.size(); ++c) {
            if (ds.samples[te[c]].class_id != id) continue;
            const auto ci = static_cast<Eigen::Index>(c);
            const double r = pearson(std::span<const double>(est.col(ci).data(), static_cast<std::size_t>(est.rows())),
                                     std::span<const double>(road_te.col(ci).data(), static_cast<std::size_t>(road_te.rows())));
            cc.r.push_back(r);
            ++cc.histogram[static_cast<std::size_t>(histogram_bin(r))];
        }
        if (!cc.r.empty()) {
            cc.median = median_of(cc.r);
            cc.min = *std::min_element(cc.r.begin(), cc.r.end());
            cc.max = *std::max_element(cc.r.begin(), cc.r.end());
        }
        rep.per_class.push_back(std::move(cc));
    }

    const Matrix logits = nn::forward(w.net(NetId::Classifier), select_columns(vlf, te));
    rep.confusion.assign(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(k), 0));
    for (std::size_t c = 0; c < te.size(); ++c) {
        Eigen::Index pred = 0;
        logits.col(static_cast<Eigen::Index>(c)).maxCoeff(&pred);
        ++rep.confusion[static_cast<std::size_t>(labels_te[c])][static_cast<std::size_t>(pred)];
    }
    rep.cl_accuracy = nn::accuracy(logits, labels_te);

    if (tr.size() >= 2 && probe.steps > 0) {
        rep.probe_rlf_accuracy = probe_accuracy(select_columns(rlf, tr), labels_tr, select_columns(rlf, te),
                                                labels_te, k, probe);
        rep.probe_vlf_accuracy = probe_accuracy(select_columns(vlf, tr), labels_tr, select_columns(vlf, te),
                                                labels_te, k, probe);
    }
    return rep;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["n_test"] = n_test;
    j["cl_accuracy"] = cl_accuracy;
    j["confusion"] = confusion;
    j["probe_accuracy"] = {{"rlf", probe_rlf_accuracy}, {"vlf", probe_vlf_accuracy}};
    auto& classes = j["classes"] = nlohmann::json::array();
    for (const auto& c : per_class) {
        classes.push_back({{"class_id", c.class_id},
                           {"n", c.r.size()},
                           {"median", c.median},
                           {"min", c.min},
                           {"max", c.max},
                           {"histogram", c.histogram},
                           {"correlations", c.r}});
    }
    auto& sw = j["perturbation_sweep"] = nlohmann::json::array();
    for (const auto& p : sweep) sw.push_back({{"fraction", p.fraction}, {"accuracy", p.accuracy}, {"n", p.n}});
    return j;
}

void EvalReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "eval_report.json");
        require(os.good(), ErrorCode::Io, "cannot write " + (dir / "eval_report.json").string());
        os << to_json().dump(2) << '\n';
    }
    for (const auto& c : per_class) {
        const auto path = dir / ("corr_hist_class" + std::to_string(c.class_id) + ".csv");
        std::ofstream os(path);
        require(os.good(), ErrorCode::Io, "cannot write " + path.string());
        os << "bin_lo,bin_hi,count\n" << std::setprecision(6);
        for (int b = 0; b < kHistogramBins; ++b) {
            const double lo = -1.0 + 2.0 * b / kHistogramBins;
            const double hi = -1.0 + 2.0 * (b + 1) / kHistogramBins;
            os << lo << ',' << hi << ',' << c.histogram[static_cast<std::size_t>(b)] << '\n';
        }
    }
}

std::vector<SweepPoint> perturbation_sweep(const nn::ModelWeights& w, const NormalizationStats& stats,
                                           std::span<const VehicleParams> base_classes,
                                           std::span<const double> fractions, std::size_t n_per_cell,
                                           std::uint64_t seed, const GenerationConfig& gen, unsigned threads) {
    require(std::is_sorted(fractions.begin(), fractions.end()), ErrorCode::Config,
            "perturbation fractions must be ascending");
    require(n_per_cell >= 1, ErrorCode::Config, "n_per_cell must be at least 1");
    require(static_cast<int>(gen.signal_length) == w.arch.signal_length, ErrorCode::Length,
            "generation signal_length does not match the model");
    const std::size_t n_cls = base_classes.size();
    const std::size_t per_fraction = n_cls * n_per_cell;
    const std::size_t total = fractions.size() * per_fraction;

    std::vector<std::vector<float>> cabins(total);
    std::vector<int> parents(total);
    parallel_for(total, threads, [&](std::size_t job) {
        const std::size_t fi = job / per_fraction;
        const std::size_t c = (job % per_fraction) / n_per_cell;
        const std::size_t j = job % n_per_cell;
        const auto& base = base_classes[c];
        const int parent = base.class_id.value_or(static_cast<int>(c + 1));
        const std::uint64_t cell_seed = derive_seed(seed, {fi, c, j});
        for (int attempt = 0;; ++attempt) {
            const std::uint64_t s = derive_seed(cell_seed, {static_cast<std::uint64_t>(attempt)});
            VehicleParams v = perturb_vehicle(base, fractions[fi], derive_seed(s, {0x5645}));
            v.class_id = parent;
            try {
                cabins[job] = generate_sample(v, gen, s).cabin_accel;
                parents[job] = parent;
                return;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SimulationDiverged || attempt + 1 >= gen.max_attempts) throw;
            }
        }
    });

    std::vector<SweepPoint> out;
    const auto L = static_cast<Eigen::Index>(gen.signal_length);
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        Matrix x(L, static_cast<Eigen::Index>(per_fraction));
        std::vector<int> labels(per_fraction);
        for (std::size_t k = 0; k < per_fraction; ++k) {
            const auto& cab = cabins[fi * per_fraction + k];
            for (Eigen::Index r = 0; r < L; ++r) {
                x(r, static_cast<Eigen::Index>(k)) = (cab[static_cast<std::size_t>(r)] - stats.cabin.mean) / stats.cabin.std;
            }
            labels[k] = class_label(parents[fi * per_fraction + k], w.arch.n_classes);
        }
        const Matrix zv = nn::forward(w.net(NetId::CabinVehicleEncoder), w.vehicle_encoder_input(x));
        out.push_back({fractions[fi], nn::accuracy(nn::forward(w.net(NetId::Classifier), zv), labels), per_fraction});
    }
    return out;
}

void write_sweep_csv(std::span<const SweepPoint> sweep, const std::filesystem::path& path) {
    std::ofstream os(path);
    require(os.good(), ErrorCode::Io, "cannot write " + path.string());
    os << "fraction,accuracy,n\n" << std::setprecision(10);
    for (const auto& p : sweep) os << p.fraction << ',' << p.accuracy << ',' << p.n << '\n';
}

LatentExport compute_latents(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats) {
    require(static_cast<int>(ds.signal_length()) == w.arch.signal_length, ErrorCode::Length,
            "dataset signal length does not match the model");
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    const Matrix cabin = dataset_channel(ds, Channel::Cabin, all, stats);
    LatentExport ex;
    ex.rlf = nn::forward(w.net(NetId::CabinRoadEncoder), cabin);
    ex.vlf = nn::forward(w.net(NetId::CabinVehicleEncoder), w.vehicle_encoder_input(cabin));
    for (const auto& s : ds.samples) ex.class_ids.push_back(s.class_id);
    ex.split = ds.split;

    const Matrix centered = ex.vlf.colwise() - ex.vlf.rowwise().mean();
    const double denom = std::max<double>(1.0, static_cast<double>(centered.cols() - 1));
    const Matrix cov = centered * centered.transpose() / denom;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Eigen::Index d = cov.rows();
    const Eigen::Index n_pc = std::min<Eigen::Index>(2, d);
    Matrix basis = Matrix::Zero(d, 2);
    ex.projection_variance.setZero();
    for (Eigen::Index p = 0; p < n_pc; ++p) {
        nn::Vector v = eig.eigenvectors().col(d - 1 - p);
        Eigen::Index big = 0;
        v.cwiseAbs().maxCoeff(&big);
        if (v(big) < 0) v = -v;  // fixed sign for reproducible output
        basis.col(p) = v;
        ex.projection_variance(p) = std::max(0.0, eig.eigenvalues()(d - 1 - p));
    }
    ex.projection = basis.transpose() * centered;
    return ex;
}

LatentExport export_latents(const nn::ModelWeights& w, const Dataset& ds, const NormalizationStats& stats,
                            const std::filesystem::path& path) {
    LatentExport ex = compute_latents(w, ds, stats);
    std::ofstream os(path);
    require(os.good(), ErrorCode::Io, "cannot write " + path.string());
    os << "index,class_id,split";
    for (Eigen::Index i = 0; i < ex.vlf.rows(); ++i) os << ",vlf_" << i;
    for (Eigen::Index i = 0; i < ex.rlf.rows(); ++i) os << ",rlf_" << i;
    os << ",pc1,pc2\n" << std::setprecision(9);
    for (Eigen::Index c = 0; c < ex.vlf.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        os << c << ',' << ex.class_ids[k] << ',' << (ex.split[k] == Split::Train ? "train" : "test");
        for (Eigen::Index i = 0; i < ex.vlf.rows(); ++i) os << ',' << ex.vlf(i, c);
        for (Eigen::Index i = 0; i < ex.rlf.rows(); ++i) os << ',' << ex.rlf(i, c);
        os << ',' << ex.projection(0, c) << ',' << ex.projection(1, c) << '\n';
    }
    require(os.good(), ErrorCode::Io, "write to " + path.string() + " failed");
    return ex;
}

}  // namespace tirelevel
