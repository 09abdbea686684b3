#include "tirelevel/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "tirelevel/binary_io.hpp"
#include "tirelevel/errors.hpp"
#include "tirelevel/json_io.hpp"
#include "tirelevel/random.hpp"

namespace tirelevel {

namespace {

constexpr char kMagic[] = "SUSPDSV1";
constexpr std::size_t kMagicLen = 8;
constexpr std::uint64_t kSplitStream = 0x5350u;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

const std::vector<float>& channel_of(const Sample& s, Channel c) {
    switch (c) {
        case Channel::Road: return s.road_accel;
        case Channel::Cabin: return s.cabin_accel;
        case Channel::Unsprung: return s.unsprung_accel;
    }
    return s.road_accel;
}

std::vector<float>& channel_of(Sample& s, Channel c) {
    return const_cast<std::vector<float>&>(channel_of(std::as_const(s), c));
}

ChannelStats channel_stats(const Dataset& ds, const std::vector<std::size_t>& train, Channel c,
                           const char* name) {
    double sum = 0.0;
    std::size_t count = 0;
    for (auto i : train) {
        for (float v : channel_of(ds.samples[i], c)) sum += v;
        count += channel_of(ds.samples[i], c).size();
    }
    require(count > 1, ErrorCode::ZeroVariance, std::string("channel ") + name + " has no training data");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (auto i : train) {
        for (float v : channel_of(ds.samples[i], c)) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    require(sd > 0.0 && std::isfinite(sd), ErrorCode::ZeroVariance,
            std::string("channel ") + name + " has zero variance on the training split");
    return {mean, sd};
}

}  // namespace

const ChannelStats& NormalizationStats::operator[](Channel c) const {
    switch (c) {
        case Channel::Road: return road;
        case Channel::Cabin: return cabin;
        case Channel::Unsprung: return unsprung;
    }
    return road;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) out.push_back(i);
    }
    return out;
}

std::vector<int> Dataset::class_ids() const {
    std::vector<int> ids;
    for (const auto& s : samples) ids.push_back(s.class_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

SampleTrace trace_sample(const VehicleParams& vehicle, const GenerationConfig& config,
                         std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> gamma_dist(config.gamma_min, config.gamma_max);
    RoadPsdParams psd = config.psd;
    psd.gamma = config.gamma_max > config.gamma_min ? gamma_dist(rng) : config.gamma_min;

    const std::size_t total = config.preroll + config.signal_length;
    const double length =
        traversed_distance(config.speed, config.sample_rate, total) + 4.0 * config.spacing;
    SampleTrace tr;
    tr.profile = synthesize_profile(psd, length, config.spacing, derive_seed(seed, {1}));
    tr.road = road_input_series(tr.profile, config.speed, config.sample_rate, total);

    QuarterCarState start;
    start.x_s = tr.road.elevation.front();
    start.x_us = tr.road.elevation.front();
    tr.trajectory = simulate(vehicle, tr.road, config.dt_internal, start);

    Sample& s = tr.sample;
    s.class_id = vehicle.class_id.value_or(0);
    s.seed = seed;
    s.gamma = psd.gamma;
    const auto first = static_cast<std::ptrdiff_t>(config.preroll);
    s.road_accel.assign(tr.road.acceleration.begin() + first, tr.road.acceleration.end());
    s.cabin_accel.assign(tr.trajectory.accel_s.begin() + first, tr.trajectory.accel_s.end());
    s.unsprung_accel.assign(tr.trajectory.accel_us.begin() + first, tr.trajectory.accel_us.end());
    return tr;
}

Sample generate_sample(const VehicleParams& vehicle, const GenerationConfig& config,
                       std::uint64_t seed) {
    return trace_sample(vehicle, config, seed).sample;
}

Dataset generate_dataset(std::span<const VehicleParams> classes, std::size_t n_per_class,
                         std::uint64_t seed, const GenerationConfig& config, unsigned threads) {
    require(n_per_class >= 1, ErrorCode::Config, "n_per_class must be at least 1");
    require(!classes.empty(), ErrorCode::Config, "at least one vehicle class is required");
    require(config.signal_length >= 2, ErrorCode::Config, "signal_length must be at least 2");
    config.psd.validate();

    Dataset ds;
    ds.config = config;
    ds.vehicles.assign(classes.begin(), classes.end());
    for (std::size_t c = 0; c < ds.vehicles.size(); ++c) {
        if (!ds.vehicles[c].class_id) ds.vehicles[c].class_id = static_cast<int>(c + 1);
        ds.vehicles[c].validate();
    }

    const std::size_t total = ds.vehicles.size() * n_per_class;
    ds.samples.resize(total);
    std::vector<int> attempts(total, 0);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex err_mutex;
    std::optional<Error> first_error;

    auto worker = [&] {
        for (std::size_t idx = next++; idx < total && !abort; idx = next++) {
            const std::size_t c = idx / n_per_class;
            const std::size_t k = idx % n_per_class;
            const auto class_id = static_cast<std::uint64_t>(*ds.vehicles[c].class_id);
            for (int attempt = 0;; ++attempt) {
                try {
                    ds.samples[idx] = generate_sample(
                        ds.vehicles[c], config,
                        derive_seed(seed, {class_id, k, static_cast<std::uint64_t>(attempt)}));
                    attempts[idx] = attempt;
                    break;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::SimulationDiverged || attempt + 1 >= config.max_attempts) {
                        std::lock_guard lock(err_mutex);
                        if (!first_error) first_error = e;
                        abort = true;
                        return;
                    }
                }
            }
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (first_error) throw *first_error;

    const auto diverged = static_cast<std::size_t>(std::count_if(
        attempts.begin(), attempts.end(), [](int a) { return a > 0; }));
    ds.diverged_regenerations = diverged;
    if (diverged * 100 > total) {
        std::ostringstream msg;
        msg << diverged << " of " << total << " samples diverged (more than 1%)";
        fail(ErrorCode::SimulationDiverged, msg.str());
    }

    ds.split.assign(total, Split::Train);
    for (std::size_t c = 0; c < ds.vehicles.size(); ++c) {
        std::vector<std::size_t> members(n_per_class);
        std::iota(members.begin(), members.end(), c * n_per_class);
        Rng rng(derive_seed(seed, {kSplitStream, c}));
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t n_test = (3 * n_per_class) / 10;
        for (std::size_t i = 0; i < n_test; ++i) ds.split[members[i]] = Split::Test;
    }
    return ds;
}

NormalizationStats compute_stats(const Dataset& ds) {
    const auto train = ds.indices(Split::Train);
    require(!train.empty(), ErrorCode::ZeroVariance, "training split is empty");
    return {channel_stats(ds, train, Channel::Road, "road"),
            channel_stats(ds, train, Channel::Cabin, "cabin"),
            channel_stats(ds, train, Channel::Unsprung, "unsprung")};
}

Dataset normalize(const Dataset& ds) {
    require(!ds.normalized, ErrorCode::Config, "dataset is already normalized");
    Dataset out = ds;
    const auto stats = compute_stats(ds);
    for (auto& s : out.samples) {
        for (Channel c : {Channel::Road, Channel::Cabin, Channel::Unsprung}) {
            const auto& st = stats[c];
            for (float& v : channel_of(s, c)) {
                v = static_cast<float>((static_cast<double>(v) - st.mean) / st.std);
            }
        }
    }
    out.stats = stats;
    out.normalized = true;
    return out;
}

std::vector<double> normalize_series(std::span<const float> series, const ChannelStats& stats) {
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        out[i] = (static_cast<double>(series[i]) - stats.mean) / stats.std;
    }
    return out;
}

std::vector<double> denormalize(std::span<const double> series, const ChannelStats& stats) {
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) out[i] = series[i] * stats.std + stats.mean;
    return out;
}

std::vector<std::vector<std::size_t>> stratified_batches(const Dataset& ds,
                                                         std::span<const std::size_t> members,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed) {
    require(batch_size >= 1, ErrorCode::Config, "batch_size must be at least 1");
    Rng rng(seed);
    std::map<int, std::vector<std::size_t>> by_class;
    for (auto i : members) by_class[ds.samples.at(i).class_id].push_back(i);

    // Each member gets a key (rank + 0.5) / class_size; sorting by key interleaves the
    // classes proportionally. The class order for ties is itself shuffled.
    std::vector<int> class_order;
    for (auto& [id, list] : by_class) {
        std::shuffle(list.begin(), list.end(), rng);
        class_order.push_back(id);
    }
    std::shuffle(class_order.begin(), class_order.end(), rng);
    std::map<int, std::size_t> tie_rank;
    for (std::size_t r = 0; r < class_order.size(); ++r) tie_rank[class_order[r]] = r;

    struct Keyed {
        double key;
        std::size_t tie;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(members.size());
    for (const auto& [id, list] : by_class) {
        for (std::size_t r = 0; r < list.size(); ++r) {
            keyed.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(list.size()),
                             tie_rank[id], list[r]});
        }
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return a.key != b.key ? a.key < b.key : a.tie < b.tie;
    });

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < keyed.size(); i += batch_size) {
        std::vector<std::size_t> b;
        for (std::size_t j = i; j < std::min(keyed.size(), i + batch_size); ++j) {
            b.push_back(keyed[j].index);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    io::Writer w(os);
    w.put_raw(std::string_view(kMagic, kMagicLen));
    w.put(static_cast<std::uint64_t>(ds.samples.size()));
    w.put(static_cast<std::uint64_t>(ds.config.signal_length));
    w.put(ds.config.sample_rate);
    w.put(static_cast<std::uint8_t>(ds.normalized ? 1 : 0));
    w.put(static_cast<std::uint64_t>(ds.diverged_regenerations));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        require(s.road_accel.size() == ds.config.signal_length &&
                    s.cabin_accel.size() == ds.config.signal_length &&
                    s.unsprung_accel.size() == ds.config.signal_length,
                ErrorCode::Length, "sample series length differs from signal_length");
        w.put(static_cast<std::int32_t>(s.class_id));
        w.put(s.seed);
        w.put(s.gamma);
        w.put(static_cast<std::uint8_t>(ds.split.at(i)));
        w.put_all<float>(s.road_accel);
        w.put_all<float>(s.cabin_accel);
        w.put_all<float>(s.unsprung_accel);
    }
    require(w.good(), ErrorCode::Io, "write failed for " + path.string());

    nlohmann::json meta;
    meta["format"] = kMagic;
    meta["n_samples"] = ds.samples.size();
    meta["vehicles"] = ds.vehicles;
    meta["generation"] = ds.config;
    meta["normalized"] = ds.normalized;
    meta["normalization"] = ds.stats ? nlohmann::json(*ds.stats) : nlohmann::json(nullptr);
    meta["split"] = {{"train", ds.indices(Split::Train)}, {"test", ds.indices(Split::Test)}};
    std::ofstream js(sidecar_path(path), std::ios::trunc);
    require(js.good(), ErrorCode::Io, "cannot open sidecar for " + path.string());
    js << meta.dump(2) << '\n';
    require(js.good(), ErrorCode::Io, "sidecar write failed for " + path.string());
}

Dataset load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::Io, "cannot open " + path.string());
    io::Reader r(is);
    const auto magic = r.get_raw(kMagicLen);
    if (magic.substr(0, 6) == std::string_view(kMagic, 6) && magic != std::string_view(kMagic, kMagicLen)) {
        fail(ErrorCode::Version, "unsupported dataset version '" + magic + "'");
    }
    require(magic == std::string_view(kMagic, kMagicLen), ErrorCode::Format,
            path.string() + " is not a dataset file (bad magic)");

    Dataset ds;
    const auto n = r.get<std::uint64_t>();
    const auto length = r.get<std::uint64_t>();
    const auto sample_rate = r.get<double>();
    const auto normalized = r.get<std::uint8_t>();
    ds.diverged_regenerations = r.get<std::uint64_t>();
    require(normalized <= 1, ErrorCode::Format, "invalid normalized flag");
    require(length <= (1u << 24) && n <= (1u << 26), ErrorCode::Format, "implausible header counts");
    ds.normalized = normalized == 1;
    ds.samples.resize(n);
    ds.split.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.class_id = r.get<std::int32_t>();
        s.seed = r.get<std::uint64_t>();
        s.gamma = r.get<double>();
        const auto sp = r.get<std::uint8_t>();
        require(sp <= 1, ErrorCode::Format, "invalid split tag");
        ds.split[i] = static_cast<Split>(sp);
        s.road_accel = r.get_vector<float>(length);
        s.cabin_accel = r.get_vector<float>(length);
        s.unsprung_accel = r.get_vector<float>(length);
    }
    require(r.at_eof(), ErrorCode::Format, "trailing bytes after dataset payload");

    std::ifstream js(sidecar_path(path));
    require(js.good(), ErrorCode::Io, "missing sidecar " + sidecar_path(path).string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(js);
        require(meta.at("format").get<std::string>() == kMagic, ErrorCode::Version,
                "sidecar format tag does not match");
        ds.vehicles = meta.at("vehicles").get<std::vector<VehicleParams>>();
        ds.config = meta.at("generation").get<GenerationConfig>();
        if (!meta.at("normalization").is_null()) {
            ds.stats = meta.at("normalization").get<NormalizationStats>();
        }
        require(meta.at("n_samples").get<std::size_t>() == n, ErrorCode::Format,
                "sidecar sample count does not match the binary");
        require(meta.at("split").at("test").get<std::vector<std::size_t>>() == ds.indices(Split::Test),
                ErrorCode::Format, "sidecar split does not match the binary");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed dataset sidecar: ") + e.what());
    }
    require(ds.config.signal_length == length && ds.config.sample_rate == sample_rate,
            ErrorCode::Format, "sidecar generation config disagrees with the binary header");
    return ds;
}

VehicleParams perturb_vehicle(const VehicleParams& p, double fraction, std::uint64_t seed) {
    require(fraction >= 0.0 && fraction < 1.0, ErrorCode::Config, "fraction must be in [0, 1)");
    VehicleParams q = p;
    if (fraction == 0.0) return q;
    Rng rng(seed);
    std::uniform_real_distribution<double> eps(-fraction, fraction);
    for (double* field : {&q.m_s, &q.m_us, &q.c_s, &q.k_s, &q.k_us}) {
        *field *= 1.0 + eps(rng);
    }
    return q;
}

}  // namespace tirelevel
