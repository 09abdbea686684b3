#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirelevel/cli.hpp"
#include "tirelevel/errors.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
namespace cli = tirelevel::cli;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "tirelevel_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small but complete run configuration.
fs::path write_config(const fs::path& dir, json overrides = json::object()) {
    json cfg = {
        {"version", 1},
        {"seed", 17},
        {"threads", 1},
        {"quiet", true},
        {"output_dir", dir.string()},
        {"generation", {{"n_per_class", 6}, {"signal_length", 128}, {"preroll", 50}, {"export_examples", true}}},
        {"train",
         {{"epochs", 3},
          {"batch_size", 8},
          {"architecture",
           {{"road_latent", 8}, {"vehicle_latent", 4}, {"encoder_hidden", {32}}, {"classifier_hidden", {8}}}}}},
        {"evaluate", {{"probe_steps", 50}}},
        {"sweep", {{"fractions", {0.0, 0.2}}, {"n_per_cell", 2}}},
        {"transfer_fn", {{"classes", {1, 4}}, {"n_freq", 129}, {"amplitudes", {1.0, 10.0}}}}};
    cfg.merge_patch(overrides);
    const auto path = dir / "run.json";
    std::ofstream(path) << cfg.dump(2);
    return path;
}

int error_exit(const Result& r) {
    const auto j = json::parse(r.err);
    EXPECT_EQ(j.at("exit_code").get<int>(), r.code);
    EXPECT_TRUE(j.contains("error"));
    EXPECT_TRUE(j.contains("message"));
    return r.code;
}

void run_pipeline(const fs::path& dir) {
    const auto cfg = write_config(dir).string();
    for (const char* cmd : {"generate", "train", "evaluate", "transfer-fn", "sweep"}) {
        const auto r = run({cmd, "--config", cfg});
        ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
    {
        std::ofstream csv(dir / "cabin.csv");
        csv << "cabin_accel\n";
        for (int i = 0; i < 128; ++i) csv << 0.01 * ((i * 37) % 11 - 5) << '\n';
    }
    const auto r = run({"infer", "--config", cfg, "--input", (dir / "cabin.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_GE(j.at("predicted_class").get<int>(), 1);
    EXPECT_LE(j.at("predicted_class").get<int>(), 5);
}

const std::vector<std::string>& pipeline_outputs() {
    static const std::vector<std::string> files = {
        "dataset.bin", "model.ckpt", "history.csv", "eval_report.json", "latents.csv",
        "corr_hist_class1.csv", "corr_hist_class5.csv", "transfer_fn_class1.csv", "transfer_fn_class4.csv",
        "sweep.csv", "estimate.csv", "profile_class2.csv", "trajectory_class3.csv"};
    return files;
}

}  // namespace

TEST(Cli, PipelineEmitsAllOutputsAndIsReproducible) {
    const auto a = scratch("run_a");
    const auto b = scratch("run_b");
    run_pipeline(a);
    run_pipeline(b);
    for (const auto& f : pipeline_outputs()) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    std::ifstream hist(a / "history.csv");
    std::string header;
    std::getline(hist, header);
    EXPECT_EQ(header, "epoch,L1,L2,L3,L4,L5,total,val_total,cl_acc,cladv_acc,phase");
    std::ifstream prof(a / "profile_class1.csv");
    std::getline(prof, header);
    EXPECT_EQ(header, "position_m,elevation_m");
    std::ifstream traj(a / "trajectory_class1.csv");
    std::getline(traj, header);
    EXPECT_EQ(header, "t,road_accel,unsprung_accel,cabin_accel");
}

TEST(Cli, FlagsOverrideConfig) {
    const auto dir = scratch("override");
    const auto cfg = write_config(dir, {{"generation", {{"export_examples", false}}}}).string();
    const auto r = run({"generate", "--config", cfg, "--n-per-class", "3", "--classes", "2", "5",
                        "--out", (dir / "small.bin").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("n_samples").get<int>(), 6);
    EXPECT_TRUE(fs::exists(dir / "small.bin"));
    EXPECT_FALSE(fs::exists(dir / "profile_class2.csv"));
}

TEST(Cli, InferWrongLengthIsLengthError) {
    const auto dir = scratch("infer_len");
    const auto cfg = write_config(dir, {{"generation", {{"n_per_class", 3}}}, {"train", {{"epochs", 1}}}}).string();
    ASSERT_EQ(run({"generate", "--config", cfg}).code, 0);
    ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
    {
        std::ofstream csv(dir / "short.csv");
        for (int i = 0; i < 100; ++i) csv << 0.1 * i << '\n';
    }
    const auto r = run({"infer", "--config", cfg, "--input", (dir / "short.csv").string()});
    EXPECT_EQ(error_exit(r), static_cast<int>(tirelevel::ErrorCode::Length));
}

TEST(Cli, ConfigErrorsHaveDistinctExitCodes) {
    const auto dir = scratch("errors");
    const auto wrong_version = write_config(dir, {{"version", 2}});
    EXPECT_EQ(error_exit(run({"generate", "--config", wrong_version.string()})),
              static_cast<int>(tirelevel::ErrorCode::Version));

    EXPECT_EQ(error_exit(run({"generate", "--config", (dir / "missing.json").string()})),
              static_cast<int>(tirelevel::ErrorCode::Io));

    std::ofstream(dir / "broken.json") << "{\"version\": 1, ";
    EXPECT_EQ(error_exit(run({"generate", "--config", (dir / "broken.json").string()})),
              static_cast<int>(tirelevel::ErrorCode::Config));

    std::ofstream(dir / "noversion.json") << "{\"seed\": 3}";
    EXPECT_EQ(error_exit(run({"generate", "--config", (dir / "noversion.json").string()})),
              static_cast<int>(tirelevel::ErrorCode::Config));

    const auto no_seed = write_config(dir, {{"seed", nullptr}});
    EXPECT_EQ(error_exit(run({"generate", "--config", no_seed.string()})),
              static_cast<int>(tirelevel::ErrorCode::Config));

    const auto cfg = write_config(dir);
    EXPECT_EQ(error_exit(run({"train", "--config", cfg.string(), "--dataset", (dir / "none.bin").string()})),
              static_cast<int>(tirelevel::ErrorCode::Io));

    const auto usage = run({"generate", "--no-such-flag"});
    EXPECT_EQ(usage.code, cli::kUsageExit);
}

TEST(Cli, HelpListsConfigKeys) {
    const std::map<std::string, std::vector<std::string>> keys = {
        {"generate", {"version", "seed", "threads", "output_dir", "dataset_path", "generation.n_per_class",
                      "generation.classes", "generation.psd", "generation.export_examples"}},
        {"train", {"version", "seed", "dataset_path", "checkpoint_path", "history_path", "train.", "loss_weights",
                   "architecture"}},
        {"evaluate", {"version", "seed", "checkpoint_path", "dataset_path", "evaluate.probe_steps"}},
        {"infer", {"version", "checkpoint_path", "input_path", "estimate_path"}},
        {"transfer-fn", {"version", "transfer_fn.", "amplitudes", "n_freq", "linear_limit"}},
        {"sweep", {"version", "seed", "checkpoint_path", "sweep_path", "sweep.fractions", "sweep.n_per_cell"}},
    };
    for (const auto& [cmd, expected] : keys) {
        const auto r = run({cmd, "--help"});
        ASSERT_EQ(r.code, 0) << cmd;
        for (const auto& k : expected) EXPECT_NE(r.out.find(k), std::string::npos) << cmd << " missing " << k;
    }
}

TEST(Cli, TransferFunctionLinearFlag) {
    const auto dir = scratch("tf");
    const auto r = run({"transfer-fn", "--out-dir", dir.string(), "--classes", "1", "--n-freq", "65", "--linear"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    ASSERT_EQ(j.size(), 1u);
    EXPECT_EQ(j[0].at("class_id").get<int>(), 1);
    std::ifstream is(dir / "transfer_fn_class1.csv");
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header.rfind("freq_hz,magnitude", 0), 0u);
}
