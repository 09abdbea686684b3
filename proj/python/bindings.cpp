#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirelevel/cli.hpp"
#include "tirelevel/dataset.hpp"
#include "tirelevel/errors.hpp"
#include "tirelevel/inference_eval.hpp"
#include "tirelevel/json_io.hpp"
#include "tirelevel/neural.hpp"
#include "tirelevel/road_profile.hpp"
#include "tirelevel/training.hpp"
#include "tirelevel/vehicle_dynamics.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;
using namespace tirelevel;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<double> to_numpy(const std::vector<T>& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    auto out = a.mutable_unchecked<1>();
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<py::ssize_t>(i)) = static_cast<double>(v[i]);
    return a;
}

std::vector<double> to_vector(const Array& a) {
    if (a.ndim() != 1) throw Error(ErrorCode::Shape, "expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

py::dict trajectory_dict(const StateTrajectory& t) {
    std::vector<double> xs, vs, xu, vu;
    for (const auto& s : t.states) {
        xs.push_back(s.x_s);
        vs.push_back(s.v_s);
        xu.push_back(s.x_us);
        vu.push_back(s.v_us);
    }
    py::dict d;
    d["x_s"] = to_numpy(xs);
    d["v_s"] = to_numpy(vs);
    d["x_us"] = to_numpy(xu);
    d["v_us"] = to_numpy(vu);
    d["accel_s"] = to_numpy(t.accel_s);
    d["accel_us"] = to_numpy(t.accel_us);
    d["sample_rate"] = t.sample_rate;
    return d;
}

py::dict road_dict(const RoadInputSeries& r) {
    py::dict d;
    d["elevation"] = to_numpy(r.elevation);
    d["velocity"] = to_numpy(r.velocity);
    d["acceleration"] = to_numpy(r.acceleration);
    d["sample_rate"] = r.sample_rate;
    d["speed"] = r.speed;
    return d;
}

GenerationConfig generation_config(const std::string& config_json) {
    GenerationConfig c;
    if (!config_json.empty()) c = json::parse(config_json).get<GenerationConfig>();
    return c;
}

py::array_t<double> matrix_rows(const std::vector<Sample>& samples, std::vector<float> Sample::*field) {
    const std::size_t n = samples.size();
    const std::size_t len = n ? (samples[0].*field).size() : 0;
    py::array_t<double> a({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(len)});
    auto out = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < len; ++k) {
            out(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(k)) = (samples[i].*field)[k];
        }
    }
    return a;
}

struct Model {
    nn::ModelWeights weights;
    NormalizationStats stats;
    json manifest;

    static Model load(const fs::path& path) {
        Model m{nn::load_checkpoint(path), {}, {}};
        std::ifstream is(path.string() + ".json");
        require(is.good(), ErrorCode::Io, "cannot open checkpoint manifest for " + path.string());
        try {
            m.manifest = json::parse(is);
        } catch (const json::exception& e) {
            fail(ErrorCode::Format, std::string("malformed checkpoint manifest: ") + e.what());
        }
        require(m.manifest.contains("normalization"), ErrorCode::Format,
                "checkpoint manifest lacks normalization statistics");
        m.stats = m.manifest["normalization"].get<NormalizationStats>();
        return m;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Quarter-car road simulation and latent-separation networks";

    static py::exception<Error> error_type(m, "TirelevelError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            // args: (code name, numeric code, message)
            const py::tuple args = py::make_tuple(std::string(error_code_name(e.code())),
                                                  static_cast<int>(e.code()), e.what());
            PyErr_SetObject(error_type.ptr(), args.ptr());
        }
    });

    py::class_<VehicleParams>(m, "Vehicle")
        .def(py::init<>())
        .def_readwrite("m_s", &VehicleParams::m_s)
        .def_readwrite("m_us", &VehicleParams::m_us)
        .def_readwrite("c_s", &VehicleParams::c_s)
        .def_readwrite("k_s", &VehicleParams::k_s)
        .def_readwrite("k_us", &VehicleParams::k_us)
        .def_readwrite("beta1", &VehicleParams::beta1)
        .def_readwrite("beta2", &VehicleParams::beta2)
        .def_readwrite("v_plus", &VehicleParams::v_plus)
        .def_readwrite("v_minus", &VehicleParams::v_minus)
        .def_readwrite("alpha", &VehicleParams::alpha)
        .def_readwrite("class_id", &VehicleParams::class_id)
        .def("validate", &VehicleParams::validate)
        .def("linear_limit", &VehicleParams::linear_limit)
        .def("__eq__", [](const VehicleParams& a, const VehicleParams& b) { return a == b; })
        .def("__repr__", [](const VehicleParams& p) { return "Vehicle(" + json(p).dump() + ")"; });

    m.def("reference_vehicle", &reference_vehicle, py::arg("class_id"));
    m.def("reference_vehicles", [] {
        const auto& r = reference_vehicles();
        return std::vector<VehicleParams>(r.begin(), r.end());
    });

    m.def(
        "psd",
        [](const Array& lambda, double gamma, double nu, double lambda0) {
            RoadPsdParams p;
            p.gamma = gamma;
            p.nu = nu;
            p.lambda0 = lambda0;
            std::vector<double> out;
            for (double l : to_vector(lambda)) out.push_back(psd_value(p, l));
            return to_numpy(out);
        },
        py::arg("wavenumber"), py::arg("gamma") = 1.0, py::arg("nu") = -2.0, py::arg("lambda0") = 0.1,
        "Road displacement PSD (m^3/cycle) at spatial frequencies in cycle/m.");

    m.def(
        "synthesize_profile",
        [](double length, double spacing, std::uint64_t seed, double gamma, int n_components) {
            RoadPsdParams p;
            p.gamma = gamma;
            p.n_components = n_components;
            return to_numpy(synthesize_profile(p, length, spacing, seed).elevations);
        },
        py::arg("length"), py::arg("spacing") = 0.05, py::arg("seed") = 0, py::arg("gamma") = 1.0,
        py::arg("n_components") = 512);

    m.def(
        "road_input",
        [](const Array& elevations, double spacing, double speed, double sample_rate, std::size_t n_samples) {
            RoadProfile prof{to_vector(elevations), spacing, 0};
            return road_dict(road_input_series(prof, speed, sample_rate, n_samples));
        },
        py::arg("elevations"), py::arg("spacing"), py::arg("speed") = 5.0, py::arg("sample_rate") = 100.0,
        py::arg("n_samples"));

    m.def(
        "simulate",
        [](const VehicleParams& v, const Array& elevation, const Array& velocity, const Array& acceleration,
           double sample_rate, double dt_internal) {
            RoadInputSeries r;
            r.elevation = to_vector(elevation);
            r.velocity = to_vector(velocity);
            r.acceleration = to_vector(acceleration);
            r.sample_rate = sample_rate;
            StateTrajectory t;
            {
                py::gil_scoped_release release;
                t = simulate(v, r, dt_internal);
            }
            return trajectory_dict(t);
        },
        py::arg("vehicle"), py::arg("elevation"), py::arg("velocity"), py::arg("acceleration"),
        py::arg("sample_rate") = 100.0, py::arg("dt_internal") = kDefaultInternalStep);

    m.def(
        "_trace_sample",
        [](const VehicleParams& v, std::uint64_t seed, const std::string& config_json) {
            const auto tr = trace_sample(v, generation_config(config_json), seed);
            py::dict d;
            d["profile"] = to_numpy(tr.profile.elevations);
            d["spacing"] = tr.profile.spacing;
            d["road"] = road_dict(tr.road);
            d["trajectory"] = trajectory_dict(tr.trajectory);
            d["road_accel"] = to_numpy(tr.sample.road_accel);
            d["cabin_accel"] = to_numpy(tr.sample.cabin_accel);
            d["unsprung_accel"] = to_numpy(tr.sample.unsprung_accel);
            d["gamma"] = tr.sample.gamma;
            return d;
        },
        py::arg("vehicle"), py::arg("seed"), py::arg("config_json") = "");

    m.def(
        "_generate",
        [](const fs::path& path, const std::vector<int>& classes, std::size_t n_per_class, std::uint64_t seed,
           const std::string& config_json, unsigned threads) {
            std::vector<VehicleParams> v;
            for (int c : classes) v.push_back(reference_vehicle(c));
            const auto cfg = generation_config(config_json);
            Dataset ds;
            {
                py::gil_scoped_release release;
                ds = generate_dataset(v, n_per_class, seed, cfg, threads);
                save(ds, path);
            }
            return ds.size();
        },
        py::arg("path"), py::arg("classes"), py::arg("n_per_class"), py::arg("seed"), py::arg("config_json") = "",
        py::arg("threads") = 1);

    m.def(
        "load_dataset",
        [](const fs::path& path) {
            const Dataset ds = load(path);
            py::dict d;
            d["road_accel"] = matrix_rows(ds.samples, &Sample::road_accel);
            d["cabin_accel"] = matrix_rows(ds.samples, &Sample::cabin_accel);
            d["unsprung_accel"] = matrix_rows(ds.samples, &Sample::unsprung_accel);
            std::vector<int> ids, split;
            std::vector<double> gamma;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                ids.push_back(ds.samples[i].class_id);
                split.push_back(static_cast<int>(ds.split[i]));
                gamma.push_back(ds.samples[i].gamma);
            }
            d["class_id"] = py::array_t<int>(static_cast<py::ssize_t>(ids.size()), ids.data());
            d["is_test"] = py::array_t<int>(static_cast<py::ssize_t>(split.size()), split.data());
            d["gamma"] = to_numpy(gamma);
            d["normalized"] = ds.normalized;
            return d;
        },
        py::arg("path"));

    m.def(
        "_fit",
        [](const fs::path& dataset, const fs::path& checkpoint, const std::string& train_json) {
            const Dataset raw = load(dataset);
            const Dataset norm = raw.normalized ? raw : normalize(raw);
            auto tc = json::parse(train_json).get<TrainConfig>();
            tc.arch.n_classes = std::max(tc.arch.n_classes, norm.class_ids().back());
            json manifest{{"version", cli::kConfigVersion},
                          {"normalization", *norm.stats},
                          {"generation", norm.config},
                          {"vehicles", norm.vehicles},
                          {"dataset", dataset.string()}};
            FitResult res;
            {
                py::gil_scoped_release release;
                res = fit(norm, tc, checkpoint, {}, manifest);
                manifest["train_config"] = tc;
                manifest["best_epoch"] = res.history.best_epoch;
                manifest["epochs_run"] = res.history.records.size();
                manifest["early_stopped"] = res.history.early_stopped;
                nn::save_checkpoint(res.weights, checkpoint, manifest);
            }
            json hist = json::array();
            for (const auto& r : res.history.records) {
                hist.push_back({{"epoch", r.epoch},
                                {"L1", r.train.l1},
                                {"L2", r.train.l2},
                                {"L3", r.train.l3},
                                {"L4", r.train.l4},
                                {"L5", r.train.l5},
                                {"total", r.total},
                                {"val_total", r.val_total},
                                {"cl_acc", r.cl_acc},
                                {"cladv_acc", r.cladv_acc},
                                {"phase", std::string(phase_name(r.phase))}});
            }
            return json{{"best_epoch", res.history.best_epoch}, {"history", hist}}.dump();
        },
        py::arg("dataset"), py::arg("checkpoint"), py::arg("train_json"));

    py::class_<Model>(m, "Model")
        .def_static("load", &Model::load, py::arg("path"))
        .def_property_readonly("signal_length", [](const Model& md) { return md.weights.arch.signal_length; })
        .def_property_readonly("_manifest_json", [](const Model& md) { return md.manifest.dump(); })
        .def(
            "estimate",
            [](const Model& md, const Array& cabin) {
                return to_numpy(estimate_tire_input(md.weights, to_vector(cabin), md.stats));
            },
            py::arg("cabin"), "Road acceleration estimated from a raw cabin acceleration signal.")
        .def(
            "classify",
            [](const Model& md, const Array& cabin) {
                return to_numpy(classify_vehicle(md.weights, to_vector(cabin), md.stats));
            },
            py::arg("cabin"), "Class probabilities; index k is class id k + 1.")
        .def(
            "_evaluate",
            [](const Model& md, const fs::path& dataset, int probe_steps, std::uint64_t probe_seed) {
                const Dataset ds = load(dataset);
                ProbeConfig probe;
                probe.steps = probe_steps;
                probe.seed = probe_seed;
                py::gil_scoped_release release;
                return evaluate(md.weights, ds, md.stats, probe).to_json().dump();
            },
            py::arg("dataset"), py::arg("probe_steps") = 2000, py::arg("probe_seed") = 123);

    m.def(
        "transfer_function",
        [](const VehicleParams& v, const std::vector<double>& amplitudes, std::size_t n_freq) {
            const auto c = transfer_function(v, amplitudes, n_freq);
            return py::make_tuple(to_numpy(c.freq_hz), to_numpy(c.magnitude));
        },
        py::arg("vehicle"), py::arg("amplitudes") = std::vector<double>{1.0, 5.0, 10.0, 20.0},
        py::arg("n_freq") = 2049, "Mean impulse transfer magnitude |cabin| / |road| over the amplitudes.");

    m.def(
        "linearized_modes",
        [](const VehicleParams& v) {
            const auto md = linearized_modes(v);
            py::dict d;
            d["natural_hz"] = std::vector<double>(md.natural_hz.begin(), md.natural_hz.end());
            d["damping_ratio"] = std::vector<double>(md.damping_ratio.begin(), md.damping_ratio.end());
            d["damped_hz"] = std::vector<double>(md.damped_hz.begin(), md.damped_hz.end());
            return d;
        },
        py::arg("vehicle"));

    m.def(
        "pearson", [](const Array& a, const Array& b) { return pearson(to_vector(a), to_vector(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "spearman", [](const Array& a, const Array& b) { return spearman(to_vector(a), to_vector(b)); },
        py::arg("a"), py::arg("b"));

    m.def("_default_train_config", [] { return json(TrainConfig{}).dump(); });
    m.def("_default_generation_config", [] { return json(GenerationConfig{}).dump(); });

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one CLI subcommand in-process; returns (exit code, stdout, stderr).");
}
