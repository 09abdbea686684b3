#include "tirelevel/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "tirelevel/dataset.hpp"
#include "tirelevel/errors.hpp"
#include "tirelevel/inference_eval.hpp"
#include "tirelevel/json_io.hpp"
#include "tirelevel/neural.hpp"
#include "tirelevel/training.hpp"
#include "tirelevel/vehicle_dynamics.hpp"

namespace tirelevel::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string default_output_dir() {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "out";
}

json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    require(is.good(), ErrorCode::Io, "cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Config, path.string() + " is not valid JSON: " + e.what());
    }
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

template <typename T>
T get_as(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::Config, std::string("config key '") + key + "': " + e.what());
    }
}

std::uint64_t required_seed(const json& cfg) {
    require(cfg.contains("seed") && !cfg["seed"].is_null(), ErrorCode::Config,
            "a seed is required (config key 'seed' or --seed)");
    return get_as<std::uint64_t>(cfg, "seed");
}

unsigned thread_count(const json& cfg) {
    const int t = get_as<int>(cfg, "threads");
    require(t >= 0, ErrorCode::Config, "threads must be non-negative");
    if (t == 0) return std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(t);
}

fs::path out_dir(const json& cfg) { return get_as<std::string>(cfg, "output_dir"); }

fs::path path_or(const json& cfg, const char* key, const fs::path& fallback) {
    if (cfg.contains(key) && !cfg[key].is_null() && !cfg[key].get<std::string>().empty()) {
        return cfg[key].get<std::string>();
    }
    return fallback;
}

std::vector<VehicleParams> vehicles_from(const json& gen) {
    std::vector<VehicleParams> v;
    if (gen.contains("vehicles") && !gen["vehicles"].empty()) {
        for (const auto& item : gen["vehicles"]) {
            VehicleParams p = item.get<VehicleParams>();
            p.validate();
            v.push_back(p);
        }
        return v;
    }
    for (int id : gen.at("classes").get<std::vector<int>>()) v.push_back(reference_vehicle(id));
    return v;
}

struct LoadedModel {
    nn::ModelWeights weights;
    json manifest;
    NormalizationStats stats;
};

LoadedModel load_model(const fs::path& ckpt) {
    LoadedModel m{nn::load_checkpoint(ckpt), read_json_file(ckpt.string() + ".json"), {}};
    require(m.manifest.contains("normalization"), ErrorCode::Format,
            "checkpoint manifest lacks normalization statistics");
    m.stats = m.manifest["normalization"].get<NormalizationStats>();
    return m;
}

std::vector<double> read_series_csv(const fs::path& path) {
    std::ifstream is(path);
    require(is.good(), ErrorCode::Io, "cannot open " + path.string());
    std::vector<double> v;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string cell = line.substr(0, line.find(','));
        char* end = nullptr;
        const double x = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str() || *end != '\0') {
            require(first, ErrorCode::Format, "non-numeric value '" + cell + "' in " + path.string());
            first = false;
            continue;  // header row
        }
        first = false;
        v.push_back(x);
    }
    return v;
}

// First sample of each class, re-simulated from its stored seed: the road profile
// (position_m, elevation_m) and the recorded window of the trajectory.
void write_examples(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& v : ds.vehicles) {
        const int id = v.class_id.value_or(0);
        const auto it = std::find_if(ds.samples.begin(), ds.samples.end(),
                                     [&](const Sample& s) { return s.class_id == id; });
        if (it == ds.samples.end()) continue;
        const SampleTrace tr = trace_sample(v, ds.config, it->seed);
        const auto suffix = "_class" + std::to_string(id) + ".csv";
        std::ofstream prof(dir / ("profile" + suffix));
        require(prof.good(), ErrorCode::Io, "cannot write profile" + suffix);
        prof << "position_m,elevation_m\n" << std::setprecision(10);
        for (std::size_t j = 0; j < tr.profile.elevations.size(); ++j) {
            prof << static_cast<double>(j) * tr.profile.spacing << ',' << tr.profile.elevations[j] << '\n';
        }
        std::ofstream traj(dir / ("trajectory" + suffix));
        require(traj.good(), ErrorCode::Io, "cannot write trajectory" + suffix);
        traj << "t,road_accel,unsprung_accel,cabin_accel\n" << std::setprecision(10);
        const std::size_t first = ds.config.preroll;
        for (std::size_t i = first; i < tr.road.size(); ++i) {
            traj << static_cast<double>(i - first) / ds.config.sample_rate << ',' << tr.road.acceleration[i] << ','
                 << tr.trajectory.accel_us[i] << ',' << tr.trajectory.accel_s[i] << '\n';
        }
    }
}

// ---- subcommands ---------------------------------------------------------

int cmd_generate(const json& cfg, std::ostream& out) {
    const json& g = cfg.at("generation");
    GenerationConfig gen = g.get<GenerationConfig>();
    const auto vehicles = vehicles_from(g);
    const auto n = get_as<std::size_t>(g, "n_per_class");
    const fs::path path = path_or(cfg, "dataset_path", out_dir(cfg) / "dataset.bin");
    ensure_parent(path);
    const Dataset ds = generate_dataset(vehicles, n, required_seed(cfg), gen, thread_count(cfg));
    save(ds, path);
    if (get_as<bool>(g, "export_examples")) write_examples(ds, out_dir(cfg));
    out << json{{"dataset", path.string()},
                {"n_samples", ds.size()},
                {"n_train", ds.indices(Split::Train).size()},
                {"n_test", ds.indices(Split::Test).size()},
                {"diverged_regenerations", ds.diverged_regenerations}}
               .dump()
        << '\n';
    return 0;
}

int cmd_train(const json& cfg, std::ostream& out, std::ostream& err) {
    const fs::path ds_path = path_or(cfg, "dataset_path", out_dir(cfg) / "dataset.bin");
    const Dataset raw = load(ds_path);
    const Dataset norm = raw.normalized ? raw : normalize(raw);
    TrainConfig tc = cfg.at("train").get<TrainConfig>();
    tc.seed = required_seed(cfg);
    tc.arch.n_classes = std::max(tc.arch.n_classes, norm.class_ids().back());

    const fs::path ckpt = path_or(cfg, "checkpoint_path", out_dir(cfg) / "model.ckpt");
    ensure_parent(ckpt);
    json manifest{{"version", kConfigVersion},
                  {"normalization", *norm.stats},
                  {"generation", norm.config},
                  {"vehicles", norm.vehicles},
                  {"dataset", ds_path.string()}};
    const bool quiet = get_as<bool>(cfg, "quiet");
    auto progress = [&](const EpochRecord& r) {
        if (quiet || (r.epoch + 1) % 10 != 0) return;
        err << "epoch " << r.epoch + 1 << " " << phase_name(r.phase) << " total " << r.total
            << " val " << r.val_total << " cl_acc " << r.cl_acc << '\n';
    };
    const FitResult res = fit(norm, tc, ckpt, progress, manifest);
    manifest["train_config"] = tc;
    manifest["best_epoch"] = res.history.best_epoch;
    manifest["epochs_run"] = res.history.records.size();
    manifest["early_stopped"] = res.history.early_stopped;
    nn::save_checkpoint(res.weights, ckpt, manifest);

    const fs::path hist = path_or(cfg, "history_path", out_dir(cfg) / "history.csv");
    ensure_parent(hist);
    res.history.write_csv(hist);
    out << json{{"checkpoint", ckpt.string()},
                {"history", hist.string()},
                {"best_epoch", res.history.best_epoch},
                {"epochs_run", res.history.records.size()}}
               .dump()
        << '\n';
    return 0;
}

int cmd_evaluate(const json& cfg, std::ostream& out) {
    const auto model = load_model(path_or(cfg, "checkpoint_path", out_dir(cfg) / "model.ckpt"));
    const Dataset ds = load(path_or(cfg, "dataset_path", out_dir(cfg) / "dataset.bin"));
    ProbeConfig probe;
    probe.steps = get_as<int>(cfg.at("evaluate"), "probe_steps");
    probe.seed = derive_seed(required_seed(cfg), {0x5052});
    const EvalReport rep = evaluate(model.weights, ds, model.stats, probe);
    const fs::path dir = out_dir(cfg);
    rep.write(dir);
    export_latents(model.weights, ds, model.stats, dir / "latents.csv");
    json summary{{"report", (dir / "eval_report.json").string()},
                 {"cl_accuracy", rep.cl_accuracy},
                 {"probe_rlf_accuracy", rep.probe_rlf_accuracy},
                 {"probe_vlf_accuracy", rep.probe_vlf_accuracy}};
    for (const auto& c : rep.per_class) summary["median_r"][std::to_string(c.class_id)] = c.median;
    out << summary.dump() << '\n';
    return 0;
}

int cmd_infer(const json& cfg, std::ostream& out) {
    const auto model = load_model(path_or(cfg, "checkpoint_path", out_dir(cfg) / "model.ckpt"));
    require(cfg.contains("input_path") && !cfg["input_path"].is_null(), ErrorCode::Config,
            "infer needs an input cabin CSV (--input)");
    const auto cabin = read_series_csv(get_as<std::string>(cfg, "input_path"));
    const auto est = estimate_tire_input(model.weights, cabin, model.stats);
    const auto prob = classify_vehicle(model.weights, cabin, model.stats);
    const fs::path path = path_or(cfg, "estimate_path", out_dir(cfg) / "estimate.csv");
    ensure_parent(path);
    {
        std::ofstream os(path);
        require(os.good(), ErrorCode::Io, "cannot write " + path.string());
        os << "index,road_accel_estimate\n" << std::setprecision(9);
        for (std::size_t i = 0; i < est.size(); ++i) os << i << ',' << est[i] << '\n';
    }
    const auto best = std::max_element(prob.begin(), prob.end()) - prob.begin();
    out << json{{"estimate", path.string()}, {"predicted_class", best + 1}, {"probabilities", prob}}.dump()
        << '\n';
    return 0;
}

int cmd_transfer_fn(const json& cfg, std::ostream& out) {
    const json& t = cfg.at("transfer_fn");
    std::vector<VehicleParams> vehicles;
    if (t.contains("params_path") && !t["params_path"].is_null()) {
        VehicleParams p = read_json_file(t["params_path"].get<std::string>()).get<VehicleParams>();
        p.validate();
        vehicles.push_back(p);
    } else {
        for (int id : t.at("classes").get<std::vector<int>>()) vehicles.push_back(reference_vehicle(id));
    }
    const auto amps = t.at("amplitudes").get<std::vector<double>>();
    require(!amps.empty(), ErrorCode::Config, "at least one impulse amplitude is required");
    const auto n_freq = get_as<std::size_t>(t, "n_freq");
    const bool linear = get_as<bool>(t, "linear_limit");
    const double fs_hz = get_as<double>(t, "sample_rate");
    const double dt = get_as<double>(t, "dt_internal");
    const fs::path dir = out_dir(cfg);
    fs::create_directories(dir);

    json summary = json::array();
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        const VehicleParams p = linear ? vehicles[i].linear_limit() : vehicles[i];
        const int id = p.class_id.value_or(static_cast<int>(i + 1));
        std::vector<TransferCurve> curves;
        for (double a : amps) curves.push_back(impulse_transfer_curve(p, a, n_freq, fs_hz, dt));
        const TransferCurve mean = transfer_function(p, amps, n_freq, fs_hz, dt);
        const fs::path path = dir / ("transfer_fn_class" + std::to_string(id) + ".csv");
        std::ofstream os(path);
        require(os.good(), ErrorCode::Io, "cannot write " + path.string());
        os << "freq_hz,magnitude";
        for (double a : amps) os << ",magnitude_amp_" << a;
        os << '\n' << std::setprecision(10);
        for (std::size_t k = 0; k < mean.freq_hz.size(); ++k) {
            os << mean.freq_hz[k] << ',' << mean.magnitude[k];
            for (const auto& c : curves) os << ',' << c.magnitude[k];
            os << '\n';
        }
        const ModalProperties modes = linearized_modes(p);
        summary.push_back({{"class_id", id},
                           {"path", path.string()},
                           {"natural_hz", modes.natural_hz},
                           {"damped_hz", modes.damped_hz},
                           {"damping_ratio", modes.damping_ratio}});
    }
    out << summary.dump() << '\n';
    return 0;
}

int cmd_sweep(const json& cfg, std::ostream& out) {
    const auto model = load_model(path_or(cfg, "checkpoint_path", out_dir(cfg) / "model.ckpt"));
    const json& s = cfg.at("sweep");
    const auto fractions = s.at("fractions").get<std::vector<double>>();
    const auto n = get_as<std::size_t>(s, "n_per_cell");
    std::vector<VehicleParams> base = model.manifest.at("vehicles").get<std::vector<VehicleParams>>();
    GenerationConfig gen = model.manifest.at("generation").get<GenerationConfig>();
    const auto points = perturbation_sweep(model.weights, model.stats, base, fractions, n,
                                           required_seed(cfg), gen, thread_count(cfg));
    const fs::path path = path_or(cfg, "sweep_path", out_dir(cfg) / "sweep.csv");
    ensure_parent(path);
    write_sweep_csv(points, path);
    json summary{{"sweep", path.string()}};
    std::vector<double> f, acc;
    for (const auto& p : points) {
        summary["accuracy"].push_back({p.fraction, p.accuracy});
        f.push_back(p.fraction);
        acc.push_back(p.accuracy);
    }
    if (points.size() >= 2) {
        try {
            summary["rank_correlation"] = spearman(f, acc);
        } catch (const Error&) {
            summary["rank_correlation"] = nullptr;  // constant accuracy
        }
    }
    out << summary.dump() << '\n';
    return 0;
}

std::string keys_footer(std::initializer_list<const char*> keys) {
    std::string s = "Config keys read:";
    for (const char* k : keys) s += std::string("\n  ") + k;
    return s;
}

int report_error(std::ostream& err, ErrorCode code, const std::string& message) {
    err << json{{"error", error_code_name(code)}, {"exit_code", static_cast<int>(code)}, {"message", message}}.dump()
        << '\n';
    return static_cast<int>(code);
}

}  // namespace

json default_config() {
    TrainConfig tc;
    return json{
        {"version", kConfigVersion},
        {"seed", nullptr},
        {"threads", 1},
        {"quiet", false},
        {"output_dir", default_output_dir()},
        {"dataset_path", nullptr},
        {"checkpoint_path", nullptr},
        {"history_path", nullptr},
        {"input_path", nullptr},
        {"estimate_path", nullptr},
        {"sweep_path", nullptr},
        {"generation", [] {
             json g = GenerationConfig{};
             g["n_per_class"] = 200;
             g["classes"] = {1, 2, 3, 4, 5};
             g["vehicles"] = json::array();
             g["export_examples"] = false;
             return g;
         }()},
        {"train", tc},
        {"evaluate", {{"probe_steps", 2000}}},
        {"sweep", {{"fractions", {0.0, 0.01, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40}}, {"n_per_cell", 40}}},
        {"transfer_fn",
         {{"classes", {1, 2, 3, 4, 5}},
          {"params_path", nullptr},
          {"amplitudes", {1.0, 5.0, 10.0, 20.0}},
          {"n_freq", 2049},
          {"sample_rate", 100.0},
          {"dt_internal", kDefaultInternalStep},
          {"linear_limit", false}}}};
}

json load_config(const fs::path& path) {
    json j = read_json_file(path);
    require(j.is_object(), ErrorCode::Config, "config must be a JSON object");
    require(j.contains("version"), ErrorCode::Config, "config lacks a 'version' field");
    require(j["version"].is_number_integer(), ErrorCode::Config, "config 'version' must be an integer");
    const int v = j["version"].get<int>();
    if (v != kConfigVersion) {
        fail(ErrorCode::Version, "config version " + std::to_string(v) + " is not supported (expected " +
                                     std::to_string(kConfigVersion) + ")");
    }
    return j;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tire-level road input estimation from cabin acceleration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tirelevel 1.0 (config version " + std::to_string(kConfigVersion) + ")");

    // Flags override config keys; unset optionals leave the config untouched.
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir, dataset, checkpoint, input, history, estimate, sweep_out, params;
    std::optional<std::size_t> n_per_class, n_per_cell, n_freq;
    std::optional<int> epochs, k_period, adv_epochs, batch, patience, probe_steps;
    std::optional<double> lr, lambda_max;
    std::optional<std::vector<double>> fractions, amplitudes;
    std::optional<std::vector<int>> classes;
    bool linear = false, quiet = false, export_examples = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration (must carry \"version\": 1)");
        sub->add_option("--out-dir", output_dir, std::string("output directory (default $") + kOutputDirEnv + " or ./out)");
        sub->add_option("--threads", threads, "worker thread cap (0 = all cores)");
    };

    auto* gen = app.add_subcommand("generate", "simulate a labelled dataset");
    common(gen);
    gen->add_option("--seed", seed, "base seed");
    gen->add_option("--out", dataset, "dataset path");
    gen->add_option("--n-per-class", n_per_class, "samples per vehicle class");
    gen->add_option("--classes", classes, "reference class ids");
    gen->add_option("--lambda-max", lambda_max, "upper spatial frequency of the road PSD, cycle/m");
    gen->add_flag("--export-examples", export_examples,
                  "also write profile_class<k>.csv and trajectory_class<k>.csv for one sample per class");
    gen->footer(keys_footer({"version", "seed", "threads", "output_dir", "dataset_path", "generation.n_per_class",
                             "generation.export_examples", "generation.classes", "generation.vehicles", "generation.psd.{nu,gamma,lambda0,lambda_min,lambda_max,n_components}",
                             "generation.{gamma_min,gamma_max,speed,sample_rate,spacing,dt_internal,signal_length,preroll,max_attempts}"}));

    auto* train = app.add_subcommand("train", "fit the seven networks");
    common(train);
    train->add_option("--seed", seed, "training seed");
    train->add_option("--dataset", dataset, "dataset path");
    train->add_option("--out", checkpoint, "checkpoint path");
    train->add_option("--history", history, "history CSV path");
    train->add_option("--epochs", epochs, "maximum epochs");
    train->add_option("-K,--K", k_period, "main-phase epochs per adversarial cycle");
    train->add_option("--adversarial-epochs", adv_epochs, "adversarial epochs per cycle");
    train->add_option("--batch-size", batch, "mini-batch size");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--patience", patience, "early-stop patience in epochs (0 disables)");
    train->add_flag("--quiet", quiet, "suppress progress lines");
    train->footer(keys_footer({"version", "seed", "output_dir", "dataset_path", "checkpoint_path", "history_path", "quiet",
                               "train.{epochs,batch_size,lr,adversarial_lr,K,adversarial_epochs_per_phase,patience,road_encoder_weight_decay}",
                               "train.loss_weights.{L1,L2,L3,L4,L5}",
                               "train.architecture.{road_latent,vehicle_latent,encoder_hidden,cabin_road_encoder_hidden,classifier_hidden,n_classes,hidden_activation,spectral_vehicle_encoder}"}));

    auto* eval = app.add_subcommand("evaluate", "cross-inference report, histograms and latents");
    common(eval);
    eval->add_option("--seed", seed, "probe seed");
    eval->add_option("--checkpoint", checkpoint, "checkpoint path");
    eval->add_option("--dataset", dataset, "dataset path");
    eval->add_option("--probe-steps", probe_steps, "optimizer steps for the latent probes");
    eval->footer(keys_footer({"version", "seed", "output_dir", "checkpoint_path", "dataset_path", "evaluate.probe_steps"}));

    auto* infer = app.add_subcommand("infer", "estimate the road input of one cabin recording");
    common(infer);
    infer->add_option("--checkpoint", checkpoint, "checkpoint path");
    infer->add_option("--input", input, "cabin acceleration CSV (first column, optional header)");
    infer->add_option("--out", estimate, "estimate CSV path");
    infer->footer(keys_footer({"version", "output_dir", "checkpoint_path", "input_path", "estimate_path"}));

    auto* tf = app.add_subcommand("transfer-fn", "impulse-response transfer functions");
    common(tf);
    tf->add_option("--classes", classes, "reference class ids");
    tf->add_option("--params", params, "JSON file with custom vehicle parameters");
    tf->add_option("--amplitudes", amplitudes, "impulse amplitudes, m/s^2");
    tf->add_option("--n-freq", n_freq, "frequency bins");
    tf->add_flag("--linear", linear, "use the linear limit (alpha = 0, beta1 = beta2 = 1)");
    tf->footer(keys_footer({"version", "output_dir", "transfer_fn.{classes,params_path,amplitudes,n_freq,sample_rate,dt_internal,linear_limit}"}));

    auto* sw = app.add_subcommand("sweep", "classification accuracy under parameter perturbation");
    common(sw);
    sw->add_option("--seed", seed, "sweep seed");
    sw->add_option("--checkpoint", checkpoint, "checkpoint path");
    sw->add_option("--fractions", fractions, "ascending perturbation fractions");
    sw->add_option("--n-per-cell", n_per_cell, "samples per (fraction, class)");
    sw->add_option("--out", sweep_out, "sweep CSV path");
    sw->footer(keys_footer({"version", "seed", "threads", "output_dir", "checkpoint_path", "sweep_path", "sweep.fractions", "sweep.n_per_cell"}));

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();  // delegates to the selected subcommand
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << json{{"error", "usage"}, {"exit_code", kUsageExit}, {"message", e.what()}}.dump() << '\n';
        return kUsageExit;
    }

    try {
        json cfg = default_config();
        if (!config_path.empty()) cfg.merge_patch(load_config(config_path));
        auto set = [&](const json::json_pointer& ptr, const auto& v) {
            if (v) cfg[ptr] = *v;
        };
        set("/seed"_json_pointer, seed);
        set("/threads"_json_pointer, threads);
        set("/output_dir"_json_pointer, output_dir);
        set("/dataset_path"_json_pointer, dataset);
        set("/checkpoint_path"_json_pointer, checkpoint);
        set("/history_path"_json_pointer, history);
        set("/input_path"_json_pointer, input);
        set("/estimate_path"_json_pointer, estimate);
        set("/sweep_path"_json_pointer, sweep_out);
        set("/generation/n_per_class"_json_pointer, n_per_class);
        set("/generation/psd/lambda_max"_json_pointer, lambda_max);
        set("/train/epochs"_json_pointer, epochs);
        set("/train/K"_json_pointer, k_period);
        set("/train/adversarial_epochs_per_phase"_json_pointer, adv_epochs);
        set("/train/batch_size"_json_pointer, batch);
        set("/train/lr"_json_pointer, lr);
        set("/train/patience"_json_pointer, patience);
        set("/evaluate/probe_steps"_json_pointer, probe_steps);
        set("/sweep/fractions"_json_pointer, fractions);
        set("/sweep/n_per_cell"_json_pointer, n_per_cell);
        set("/transfer_fn/params_path"_json_pointer, params);
        set("/transfer_fn/amplitudes"_json_pointer, amplitudes);
        set("/transfer_fn/n_freq"_json_pointer, n_freq);
        if (quiet) cfg["quiet"] = true;
        if (export_examples) cfg["generation"]["export_examples"] = true;
        if (linear) cfg["transfer_fn"]["linear_limit"] = true;
        if (classes) {
            cfg["generation"]["classes"] = *classes;
            cfg["transfer_fn"]["classes"] = *classes;
        }

        if (gen->parsed()) return cmd_generate(cfg, out);
        if (train->parsed()) return cmd_train(cfg, out, err);
        if (eval->parsed()) return cmd_evaluate(cfg, out);
        if (infer->parsed()) return cmd_infer(cfg, out);
        if (tf->parsed()) return cmd_transfer_fn(cfg, out);
        if (sw->parsed()) return cmd_sweep(cfg, out);
        return kUsageExit;
    } catch (const Error& e) {
        return report_error(err, e.code(), e.what());
    } catch (const json::exception& e) {
        return report_error(err, ErrorCode::Config, e.what());
    } catch (const fs::filesystem_error& e) {
        return report_error(err, ErrorCode::Io, e.what());
    }
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace tirelevel::cli
