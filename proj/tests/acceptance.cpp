// End-to-end acceptance run. Prints one PASS/FAIL line per criterion (with sub-checks
// indented beneath it) and exits nonzero if any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "tirelevel/cli.hpp"
#include "tirelevel/dataset.hpp"
#include "tirelevel/inference_eval.hpp"
#include "tirelevel/neural.hpp"
#include "tirelevel/random.hpp"
#include "tirelevel/road_profile.hpp"
#include "tirelevel/training.hpp"
#include "tirelevel/vehicle_dynamics.hpp"

using namespace tirelevel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Check {
    std::string label;
    bool pass;
    std::string detail;
};

struct Criterion {
    std::string id, title;
    double budget_s;
    std::vector<Check> checks;
    double seconds = 0.0;

    bool pass() const {
        return seconds <= budget_s &&
               std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void report(const Criterion& c) {
    std::printf("[%s] %s %s (%.1f s, budget %.0f s)\n", c.pass() ? "PASS" : "FAIL", c.id.c_str(),
                c.title.c_str(), c.seconds, c.budget_s);
    for (const auto& k : c.checks) {
        std::printf("    [%s] %s: %s\n", k.pass ? "pass" : "fail", k.label.c_str(), k.detail.c_str());
    }
    std::fflush(stdout);
}

Criterion timed(std::string id, std::string title, double budget, const std::function<void(std::vector<Check>&)>& body) {
    Criterion c{std::move(id), std::move(title), budget, {}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c.checks);
    } catch (const std::exception& e) {
        c.checks.push_back({"exception", false, e.what()});
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(c);
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

// ---- criterion 1 -----------------------------------------------------------

double objective_gradient_error(nn::Activation act, std::uint64_t seed) {
    nn::Architecture a;
    a.signal_length = 16;
    a.road_latent = 4;
    a.vehicle_latent = 3;
    a.encoder_hidden = {7};
    a.cabin_road_encoder_hidden = {5};
    a.classifier_hidden = {4};
    a.hidden_activation = act;
    auto w = nn::ModelWeights::initialize(a, seed);
    Rng rng(seed + 1);
    std::normal_distribution<double> d(0.0, 1.0);
    auto random = [&](Eigen::Index r, Eigen::Index c) {
        nn::Matrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
        return m;
    };
    w.vehicle_features.fit(random(16, 8));
    Batch b;
    b.road = random(16, 2);
    b.cabin = random(16, 2);
    b.vehicle_input = w.vehicle_encoder_input(b.cabin);
    b.labels = {static_cast<int>(seed % 5), static_cast<int>((seed + 2) % 5)};

    const LossWeights lw;
    NetGradients g = zero_gradients(w);
    batch_losses(w, b, lw, &g);
    auto objective = [&] { return batch_losses(w, b, lw).total(lw); };
    double worst = 0.0;
    for (auto id : nn::kAllNets) {
        if (id == nn::NetId::AdversarialClassifier) continue;
        auto& net = w.net(id);
        const auto& gi = g[static_cast<std::size_t>(id)];
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            for (Eigen::Index i = 0; i < net.layers[l].weight.size(); ++i) {
                const double fd = oracle::central_difference(objective, net.layers[l].weight.data() + i, 1e-5);
                worst = std::max(worst, oracle::relative_error(gi.weight[l].data()[i], fd));
            }
            for (Eigen::Index i = 0; i < net.layers[l].bias.size(); ++i) {
                const double fd = oracle::central_difference(objective, net.layers[l].bias.data() + i, 1e-5);
                worst = std::max(worst, oracle::relative_error(gi.bias[l](i), fd));
            }
        }
    }
    return worst;
}

// ---- criterion 6 -----------------------------------------------------------

struct Peak {
    std::size_t bin;
    double freq, value, prominence;
};

// Local maxima whose topographic prominence is at least `min_rel` of their height.
std::vector<Peak> find_peaks(const TransferCurve& c, double min_rel) {
    std::vector<Peak> peaks;
    const auto& m = c.magnitude;
    for (std::size_t k = 1; k + 1 < m.size(); ++k) {
        if (!(m[k] > m[k - 1] && m[k] >= m[k + 1])) continue;
        double left = m[k], right = m[k];
        for (std::size_t j = k; j-- > 0;) {
            if (m[j] > m[k]) break;
            left = std::min(left, m[j]);
        }
        for (std::size_t j = k + 1; j < m.size(); ++j) {
            if (m[j] > m[k]) break;
            right = std::min(right, m[j]);
        }
        const double prom = m[k] - std::max(left, right);
        if (prom >= min_rel * m[k]) peaks.push_back({k, c.freq_hz[k], m[k], prom});
    }
    return peaks;
}

bool near(double f, double target, double tol) { return target > 0.0 && std::abs(f - target) <= tol * target; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance run"};
    std::string work = "acceptance_work";
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    std::uint64_t data_seed = 42, train_seed = 7, sweep_seed = 11;
    int epochs = 100;
    app.add_option("--work-dir", work, "scratch directory for generated artifacts");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--epochs", epochs, "training epochs for the desk-scale run");
    CLI11_PARSE(app, argc, argv);
    const fs::path dir(work);
    fs::create_directories(dir);

    std::vector<Criterion> results;

    results.push_back(timed("1", "gradient correctness of the full objective", 60, [](auto& checks) {
        double worst = 0.0;
        for (auto act : {nn::Activation::Tanh, nn::Activation::Rectifier}) {
            for (std::uint64_t seed = 1; seed <= 3; ++seed) worst = std::max(worst, objective_gradient_error(act, seed));
        }
        checks.push_back({"max relative error vs central differences", worst < 1e-4, fmt("%.3e < 1e-4", worst)});
    }));

    results.push_back(timed("2", "physics oracle and integrator convergence", 60, [](auto& checks) {
        double worst = 0.0;
        int worst_class = 0;
        double worst_f = 0.0;
        for (const auto& ref : reference_vehicles()) {
            const auto p = ref.linear_limit();
            const oracle::Linear2Dof lin{p.m_s, p.m_us, p.c_s, p.k_s, p.k_us};
            for (int k = 0; k < 20; ++k) {
                const double f = 0.5 * std::pow(40.0, k / 19.0);
                const double w = kTwoPi * f, amp = 0.01;
                RoadInputSeries road;
                for (int i = 0; i < 4000; ++i) {
                    const double t = i / 100.0;
                    road.elevation.push_back(amp * std::sin(w * t));
                    road.velocity.push_back(amp * w * std::cos(w * t));
                    road.acceleration.push_back(-amp * w * w * std::sin(w * t));
                }
                const auto traj = simulate(p, road);
                const std::vector<double> tail(traj.accel_s.end() - 1000, traj.accel_s.end());
                const double measured = oracle::fitted_amplitude(tail, w, 0.01);
                const double expected = w * w * amp * std::abs(oracle::sprung_response(lin, w));
                const double err = std::abs(measured / expected - 1.0);
                if (err > worst) {
                    worst = err;
                    worst_class = *ref.class_id;
                    worst_f = f;
                }
            }
        }
        checks.push_back({"steady-state amplitude vs closed form, 5 classes x 20 frequencies", worst < 0.02,
                          fmt("max rel error %.4f (class %d, %.2f Hz) < 0.02", worst, worst_class, worst_f)});

        RoadPsdParams psd;
        psd.gamma = 0.5;
        const auto prof = synthesize_profile(psd, 30.0, 0.05, 21);
        const auto road = road_input_series(prof, 5.0, 100.0, 512);
        const auto p = reference_vehicle(1).linear_limit();
        const auto a = simulate(p, road, 1e-3).accel_s;
        const auto b = simulate(p, road, 5e-4).accel_s;
        const auto c = simulate(p, road, 2.5e-4).accel_s;
        double e1 = 0.0, e2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            e1 += (a[i] - b[i]) * (a[i] - b[i]);
            e2 += (b[i] - c[i]) * (b[i] - c[i]);
        }
        const double ratio = std::sqrt(e1 / e2);
        checks.push_back({"RK self-convergence ratio on dt halving", ratio >= 8.0, fmt("%.2f >= 8", ratio)});
    }));

    results.push_back(timed("3", "road PSD fidelity over 200 profiles", 60, [](auto& checks) {
        RoadPsdParams p;
        p.gamma = 0.5;
        const double spacing = 0.05;
        const std::size_t segment = 2048;
        const auto max_bin = static_cast<std::size_t>(p.lambda_max / 2.0 * spacing * segment) + 1;
        std::vector<double> mean(max_bin + 1, 0.0), freq;
        for (int r = 0; r < 200; ++r) {
            const auto prof = synthesize_profile(p, 512.0, spacing, 5000 + static_cast<std::uint64_t>(r));
            const auto s = oracle::welch_psd(prof.elevations, 1.0 / spacing, segment, max_bin);
            freq = s.freq;
            for (std::size_t k = 0; k <= max_bin; ++k) mean[k] += s.density[k] / 200.0;
        }
        double worst_db = 0.0;
        std::vector<double> lx, ly;
        for (std::size_t k = 1; k <= max_bin; ++k) {
            if (freq[k] < 2.0 * p.lambda_min || freq[k] > p.lambda_max / 2.0) continue;
            worst_db = std::max(worst_db, std::abs(10.0 * std::log10(mean[k] / psd_value(p, freq[k]))));
            lx.push_back(std::log(freq[k]));
            ly.push_back(std::log(mean[k]));
        }
        const double slope = oracle::ls_slope(lx, ly);
        checks.push_back({"ensemble Welch PSD within +-3 dB on [2 lambda_min, lambda_max / 2]", worst_db < 3.0,
                          fmt("max |deviation| %.2f dB over %zu bins", worst_db, lx.size())});
        checks.push_back({"log-log slope", std::abs(slope + 2.0) <= 0.2, fmt("%.3f in [-2.2, -1.8]", slope)});
    }));

    // Desk-scale run; its artifacts feed criteria 5 and 7.
    Dataset raw;
    NormalizationStats stats;
    nn::ModelWeights weights;
    EvalReport rep;
    bool trained = false;
    results.push_back(timed("4", "desk-scale training (5 classes x 200, 1024 points)", 1800, [&](auto& checks) {
        const auto& r = reference_vehicles();
        const std::vector<VehicleParams> classes(r.begin(), r.end());
        raw = generate_dataset(classes, 200, data_seed, GenerationConfig{}, threads);
        stats = compute_stats(raw);
        TrainConfig cfg;
        cfg.seed = train_seed;
        cfg.epochs = epochs;
        const auto fitres = fit(normalize(raw), cfg);
        weights = fitres.weights;
        trained = true;
        ProbeConfig probe;
        probe.seed = derive_seed(train_seed, {0x5052});
        rep = evaluate(weights, raw, stats, probe);
        rep.write(dir);
        export_latents(weights, raw, stats, dir / "latents.csv");
        fitres.history.write_csv(dir / "history.csv");

        std::map<int, double> med;
        double lo = 1.0, hi = -1.0;
        bool in_range = true;
        for (const auto& c : rep.per_class) {
            med[c.class_id] = c.median;
            for (double v : c.r) in_range = in_range && v >= -1.0 && v <= 1.0;
            lo = std::min(lo, c.min);
            hi = std::max(hi, c.max);
        }
        checks.push_back({"4a CL test accuracy", rep.cl_accuracy >= 0.90, fmt("%.3f >= 0.90", rep.cl_accuracy)});
        checks.push_back({"4b probe on frozen RLF", rep.probe_rlf_accuracy <= 0.30,
                          fmt("%.3f <= 0.30 (chance 0.20)", rep.probe_rlf_accuracy)});
        checks.push_back({"4c class-2 median Pearson", med[2] >= 0.75, fmt("%.3f >= 0.75", med[2])});
        checks.push_back({"4c correlations in [-1, 1] spanning a wide range", in_range && hi >= 0.8 && lo <= 0.3,
                          fmt("min %.3f <= 0.3, max %.3f >= 0.8", lo, hi)});
        const double low_max = std::max({med[1], med[4], med[5]});
        checks.push_back({"4d medians of classes 2 and 3 exceed classes 1, 4, 5",
                          std::min(med[2], med[3]) > low_max,
                          fmt("[%.3f, %.3f, %.3f, %.3f, %.3f]", med[1], med[2], med[3], med[4], med[5])});
        checks.push_back({"probe on frozen VLF", rep.probe_vlf_accuracy >= 0.90, fmt("%.3f >= 0.90", rep.probe_vlf_accuracy)});
        std::vector<double> first, last;
        const auto& recs = fitres.history.records;
        for (std::size_t e = 0; e < std::min<std::size_t>(10, recs.size()); ++e) first.push_back(recs[e].total);
        for (std::size_t e = recs.size() >= 10 ? recs.size() - 10 : 0; e < recs.size(); ++e) last.push_back(recs[e].total);
        std::sort(first.begin(), first.end());
        std::sort(last.begin(), last.end());
        const double mf = first[first.size() / 2], ml = last[last.size() / 2];
        checks.push_back({"total loss trend (median last 10 < first 10 epochs)", ml < mf, fmt("%.4f < %.4f", ml, mf)});
    }));

    results.push_back(timed("5", "perturbation sweep trend", 900, [&](auto& checks) {
        if (!trained) {
            checks.push_back({"trained model", false, "criterion 4 did not produce a model"});
            return;
        }
        const std::vector<double> fractions = {0.0, 0.01, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40};
        const auto pts = perturbation_sweep(weights, stats, raw.vehicles, fractions, 40, sweep_seed,
                                            raw.config, threads);
        write_sweep_csv(pts, dir / "sweep.csv");
        std::string seq;
        for (const auto& p : pts) seq += fmt("%g:%.3f ", p.fraction, p.accuracy);
        std::vector<double> f, acc;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            f.push_back(pts[i].fraction);
            acc.push_back(pts[i].accuracy);
        }
        const double rho = spearman(f, acc);
        checks.push_back({"accuracy at 40% below accuracy at 1%", pts.back().accuracy < pts[1].accuracy, seq});
        checks.push_back({"rank correlation over 1..40%", rho <= 0.0, fmt("%.3f <= 0", rho)});
        checks.push_back({"fraction 0 matches CL test accuracy within 3%",
                          std::abs(pts[0].accuracy - rep.cl_accuracy) <= 0.03,
                          fmt("|%.3f - %.3f| <= 0.03", pts[0].accuracy, rep.cl_accuracy)});
    }));

    results.push_back(timed("6", "transfer-function resonances and amplitude dependence", 120, [&](auto& checks) {
        const std::vector<double> amps = {1.0, 5.0, 10.0, 20.0};
        for (const auto& ref : reference_vehicles()) {
            const auto lin = ref.linear_limit();
            const auto curve = transfer_function(lin, amps, 2049);
            const auto modes = linearized_modes(lin);
            const auto peaks = find_peaks(curve, 0.01);
            // Each mode needs its own peak within 10% of its natural or damped frequency.
            std::vector<bool> used(peaks.size(), false);
            int matched = 0;
            std::string found;
            for (int m = 0; m < 2; ++m) {
                for (std::size_t k = 0; k < peaks.size(); ++k) {
                    if (used[k]) continue;
                    if (near(peaks[k].freq, modes.natural_hz[m], 0.1) || near(peaks[k].freq, modes.damped_hz[m], 0.1)) {
                        used[k] = true;
                        ++matched;
                        break;
                    }
                }
            }
            for (const auto& p : peaks) found += fmt("%.3f ", p.freq);
            checks.push_back({fmt("class %d linear limit shows both modes", *ref.class_id), matched == 2,
                              fmt("peaks [%s] Hz; modes natural %.3f/%.3f, damped %.3f/%.3f, zeta %.2f/%.2f",
                                  found.c_str(), modes.natural_hz[0], modes.natural_hz[1], modes.damped_hz[0],
                                  modes.damped_hz[1], modes.damping_ratio[0], modes.damping_ratio[1])});
        }
        for (const auto& ref : reference_vehicles()) {
            const auto a = impulse_transfer_curve(ref, amps.front(), 2049);
            const auto b = impulse_transfer_curve(ref, amps.back(), 2049);
            const double floor = 1e-6 * *std::max_element(a.magnitude.begin(), a.magnitude.end());
            double worst = 0.0;
            for (std::size_t k = 0; k < a.magnitude.size(); ++k) {
                if (a.magnitude[k] < floor) continue;
                worst = std::max(worst, std::abs(a.magnitude[k] - b.magnitude[k]) / a.magnitude[k]);
            }
            checks.push_back({fmt("class %d nonlinear curves differ across amplitudes", *ref.class_id), worst > 1e-3,
                              fmt("max pointwise difference %.2f%% > 0.1%%", 100.0 * worst)});
        }
    }));

    results.push_back(timed("7", "determinism and persistence", 600, [&](auto& checks) {
        if (trained) {
            save(raw, dir / "dataset.bin");
            const auto back = load(dir / "dataset.bin");
            save(back, dir / "dataset_again.bin");
            checks.push_back({"dataset round-trip", back == raw && slurp(dir / "dataset.bin") == slurp(dir / "dataset_again.bin"),
                              fmt("%zu samples, equal after load and byte-identical on re-save", raw.size())});
            nn::save_checkpoint(weights, dir / "model.ckpt");
            const auto wb = nn::load_checkpoint(dir / "model.ckpt");
            nn::save_checkpoint(wb, dir / "model_again.ckpt");
            checks.push_back({"checkpoint round-trip", wb == weights && slurp(dir / "model.ckpt") == slurp(dir / "model_again.ckpt"),
                              "equal after load and byte-identical on re-save"});
        }

        // The full CLI pipeline run twice in the same directory must reproduce every byte.
        const fs::path cdir = dir / "cli";
        fs::remove_all(cdir);
        fs::create_directories(cdir);
        const json cfg = {
            {"version", 1},
            {"seed", 5},
            {"threads", 1},
            {"quiet", true},
            {"output_dir", cdir.string()},
            {"generation", {{"n_per_class", 20}, {"export_examples", true}}},
            {"train", {{"epochs", 10}}},
            {"evaluate", {{"probe_steps", 300}}},
            {"sweep", {{"fractions", {0.0, 0.2, 0.4}}, {"n_per_cell", 4}}},
            {"transfer_fn", {{"n_freq", 513}}}};
        std::ofstream(cdir / "run.json") << cfg.dump(2);
        {
            std::ofstream csv(cdir / "cabin.csv");
            csv << "cabin_accel\n";
            for (int i = 0; i < 1024; ++i) csv << 0.05 * std::sin(0.37 * i) << '\n';
        }
        const std::string c = (cdir / "run.json").string();
        const std::vector<std::vector<std::string>> cmds = {
            {"generate", "--config", c}, {"train", "--config", c}, {"evaluate", "--config", c},
            {"infer", "--config", c, "--input", (cdir / "cabin.csv").string()},
            {"transfer-fn", "--config", c}, {"sweep", "--config", c}};
        auto run_all = [&] {
            std::map<std::string, std::string> snapshot;
            std::string stdout_all;
            for (const auto& args : cmds) {
                std::ostringstream out, err;
                const int code = cli::run(args, out, err);
                if (code != 0) throw std::runtime_error(args[0] + " failed: " + err.str());
                stdout_all += out.str();
            }
            for (const auto& e : fs::directory_iterator(cdir)) {
                if (e.is_regular_file()) snapshot[e.path().filename().string()] = slurp(e.path());
            }
            snapshot["<stdout>"] = stdout_all;
            return snapshot;
        };
        const auto first = run_all();
        const auto second = run_all();
        std::vector<std::string> differing;
        for (const auto& [name, bytes] : first) {
            const auto it = second.find(name);
            if (it == second.end() || it->second != bytes) differing.push_back(name);
        }
        std::string diff_list;
        for (const auto& n : differing) diff_list += n + " ";
        checks.push_back({"CLI rerun reproduces every output byte", differing.empty() && first.size() == second.size(),
                          differing.empty() ? fmt("%zu files compared", first.size() - 1) : "differs: " + diff_list});
    }));

    int failed = 0;
    std::printf("\nSummary:\n");
    for (const auto& r : results) {
        std::printf("  %s %s %s\n", r.pass() ? "PASS" : "FAIL", r.id.c_str(), r.title.c_str());
        failed += r.pass() ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 1;
}
