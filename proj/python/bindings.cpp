// SPDX-License-Identifier: Apache-2.0
//
// Python bindings: streams and tensors as numpy arrays, the pipeline
// stages, evaluation helpers and the command line.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "sdp/benchkit.hpp"
#include "sdp/cli.hpp"
#include "sdp/config.hpp"
#include "sdp/error.hpp"
#include "sdp/pipeline.hpp"
#include "sdp/sanitizer.hpp"

namespace py = pybind11;
using namespace sdp;

namespace {

py::object* g_base = nullptr;  // SdpError
py::dict* g_errors = nullptr;  // error name -> exception type

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

// [frames, pairs * k_raw] complex128
py::array_t<cplx> stream_values(const RawCsiStream& s) {
    const auto rows = static_cast<py::ssize_t>(s.frames.size());
    const auto cols = static_cast<py::ssize_t>(s.profile.frame_size());
    py::array_t<cplx> out({rows, cols});
    auto w = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < rows; ++i)
        for (py::ssize_t j = 0; j < cols; ++j) w(i, j) = s.frames[static_cast<std::size_t>(i)].values[j];
    return out;
}

// [a, k, t] complex64
py::array_t<cplxf> tensor_values(const CanonicalTensor& t) {
    py::array_t<cplxf> out({static_cast<py::ssize_t>(t.a), static_cast<py::ssize_t>(t.k),
                            static_cast<py::ssize_t>(t.t)});
    std::copy(t.values.begin(), t.values.end(), out.mutable_data());
    return out;
}

SanitizeConfig sanitize_config(const std::string& mode, std::size_t reference_antenna) {
    SanitizeConfig c;
    c.mode = parse_sanitize_mode(mode);
    c.reference_antenna = reference_antenna;
    return c;
}

CanonicalizeOptions canon_options(std::size_t k, std::size_t window_t, std::optional<std::size_t> hop,
                                  const std::string& mode, std::size_t reference_antenna) {
    CanonicalizeOptions o;
    o.sanitize = sanitize_config(mode, reference_antenna);
    o.grid.k = k;
    o.window.t = window_t;
    o.window.hop = hop.value_or(window_t);
    return o;
}

}  // namespace

PYBIND11_MODULE(_sdp, m) {
    m.doc() = "Standardized CSI data protocol: simulation, sanitization, canonical tensors and evaluation.";

    // ---------------------------------------------------------------- errors
    // Leaked on purpose: these must outlive module teardown at interpreter exit.
    g_base = new py::object(py::exception<Error>(m, "SdpError"));
    g_errors = new py::dict();
    for (const char* name : {"InvalidArgument", "ZeroMagnitudeSubcarrier", "DegenerateBand",
                             "IdenticalClassSignatures", "BadMagic", "UnsupportedVersion", "TruncatedFile",
                             "ShapeMismatch", "IoError", "ParseError", "EmptyTrain", "EmptySplit", "NonFiniteLoss",
                             "SequenceTooLong", "EventClassMissing", "SampleRateMismatch"})
        (*g_errors)[name] = py::exception<Error>(m, name, g_base->ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::str key(e.name());
            PyErr_SetString(g_errors->contains(key) ? (*g_errors)[key].ptr() : g_base->ptr(), e.what());
        }
    });

    // ------------------------------------------------------------- csi model
    py::class_<DeviceProfile>(m, "DeviceProfile")
        .def(py::init([](std::vector<double> offsets, int n_tx, int n_rx, double sample_rate, double carrier_hz) {
                 DeviceProfile p;
                 p.subcarrier_offsets = std::move(offsets);
                 p.n_tx = n_tx;
                 p.n_rx = n_rx;
                 p.sample_rate = sample_rate;
                 p.carrier_hz = carrier_hz;
                 p.validate();
                 return p;
             }),
             py::arg("subcarrier_offsets"), py::arg("n_tx") = 1, py::arg("n_rx") = 1, py::arg("sample_rate") = 100.0,
             py::arg("carrier_hz") = 5.32e9)
        .def_static(
            "uniform",
            [](std::size_t count, double spacing, int n_tx, int n_rx, double sample_rate) {
                DeviceProfile p;
                p.subcarrier_offsets = DeviceProfile::uniform_offsets(count, spacing);
                p.n_tx = n_tx;
                p.n_rx = n_rx;
                p.sample_rate = sample_rate;
                p.validate();
                return p;
            },
            py::arg("count"), py::arg("spacing"), py::arg("n_tx") = 1, py::arg("n_rx") = 1,
            py::arg("sample_rate") = 100.0)
        .def_readwrite("carrier_hz", &DeviceProfile::carrier_hz)
        .def_readwrite("subcarrier_offsets", &DeviceProfile::subcarrier_offsets)
        .def_readwrite("n_tx", &DeviceProfile::n_tx)
        .def_readwrite("n_rx", &DeviceProfile::n_rx)
        .def_readwrite("sample_rate", &DeviceProfile::sample_rate)
        .def_property_readonly("k_raw", &DeviceProfile::k_raw)
        .def_property_readonly("pairs", &DeviceProfile::pairs);

    py::class_<PathParams>(m, "PathParams")
        .def(py::init([](cplx amplitude, double delay, double doppler, double active_from, double active_until) {
                 PathParams p;
                 p.amplitude = amplitude;
                 p.delay = delay;
                 p.doppler = doppler;
                 p.active_from = active_from;
                 p.active_until = active_until;
                 return p;
             }),
             py::arg("amplitude") = cplx{1.0, 0.0}, py::arg("delay") = 0.0, py::arg("doppler") = 0.0,
             py::arg("active_from") = 0.0, py::arg("active_until") = std::numeric_limits<double>::infinity())
        .def_readwrite("amplitude", &PathParams::amplitude)
        .def_readwrite("delay", &PathParams::delay)
        .def_readwrite("doppler", &PathParams::doppler)
        .def_readwrite("amplitude_rate", &PathParams::amplitude_rate)
        .def_readwrite("delay_rate", &PathParams::delay_rate)
        .def_readwrite("doppler_rate", &PathParams::doppler_rate)
        .def_readwrite("active_from", &PathParams::active_from)
        .def_readwrite("active_until", &PathParams::active_until);

    py::class_<ImpairmentSet>(m, "ImpairmentSet")
        .def(py::init([](double sto, double sto_jitter, double cfo, double pll_phase, double noise_std) {
                 return ImpairmentSet{sto, sto_jitter, cfo, pll_phase, noise_std};
             }),
             py::arg("sto") = 0.0, py::arg("sto_jitter") = 0.0, py::arg("cfo") = 0.0, py::arg("pll_phase") = 0.0,
             py::arg("noise_std") = 0.0)
        .def_readwrite("sto", &ImpairmentSet::sto)
        .def_readwrite("sto_jitter", &ImpairmentSet::sto_jitter)
        .def_readwrite("cfo", &ImpairmentSet::cfo)
        .def_readwrite("pll_phase", &ImpairmentSet::pll_phase)
        .def_readwrite("noise_std", &ImpairmentSet::noise_std);

    py::class_<RawCsiStream>(m, "RawCsiStream")
        .def_readonly("profile", &RawCsiStream::profile)
        .def_readonly("provenance", &RawCsiStream::provenance)
        .def_property_readonly("frame_count", [](const RawCsiStream& s) { return s.frames.size(); })
        .def_property_readonly("timestamps",
                               [](const RawCsiStream& s) {
                                   std::vector<double> t;
                                   for (const auto& f : s.frames) t.push_back(f.timestamp);
                                   return to_array(t);
                               })
        .def("values", &stream_values, "Complex values as [frames, pairs * k_raw], pair index rx-major.");

    m.def("synth_channel",
          [](const std::vector<PathParams>& paths, const DeviceProfile& profile, double t) {
              return to_array(synth_channel(paths, profile, t));
          },
          py::arg("paths"), py::arg("profile"), py::arg("t"));
    m.def("generate_stream",
          [](const std::vector<PathParams>& paths, const DeviceProfile& profile, const ImpairmentSet& impairments,
             double duration, std::uint64_t seed) {
              return generate_stream(paths, profile, impairments, duration, seed);
          },
          py::arg("paths"), py::arg("profile"), py::arg("impairments") = ImpairmentSet{}, py::arg("duration") = 1.0,
          py::arg("seed") = 0);
    m.def("generate_from_config",
          [](const std::string& text, std::optional<std::uint64_t> seed) {
              std::istringstream is(text);
              auto scene = parse_scene(KeyValueFile::parse(is));
              if (seed) scene.seed = *seed;
              return generate_stream(scene);
          },
          py::arg("text"), py::arg("seed") = py::none(), "Generate a stream from scene-file text.");
    m.def("frame_count", &frame_count, py::arg("duration"), py::arg("sample_rate"));

    // -------------------------------------------------------------- sanitizer
    m.def("unwrap_phase", [](const std::vector<double>& p) { return to_array(unwrap_phase(p)); }, py::arg("phases"));
    m.def("fit_linear_phase",
          [](const std::vector<cplx>& values, const std::vector<double>& offsets) {
              const auto f = fit_linear_phase(values, offsets);
              return py::make_tuple(f.slope, f.intercept, f.residual_rms);
          },
          py::arg("values"), py::arg("offsets"), "Returns (slope rad/Hz, intercept rad, residual rms).");
    m.def("sanitize_stream",
          [](const RawCsiStream& s, const std::string& mode, std::size_t reference_antenna) {
              return sanitize_stream(s, sanitize_config(mode, reference_antenna));
          },
          py::arg("stream"), py::arg("mode") = "slope_intercept", py::arg("reference_antenna") = 0);

    // ---------------------------------------------------------- canonicalizer
    py::class_<CanonicalTensor>(m, "CanonicalTensor")
        .def_readonly("a", &CanonicalTensor::a)
        .def_readonly("k", &CanonicalTensor::k)
        .def_readonly("t", &CanonicalTensor::t)
        .def_readwrite("label", &CanonicalTensor::label)
        .def_readwrite("subject", &CanonicalTensor::subject)
        .def_readonly("window_start", &CanonicalTensor::window_start)
        .def_readonly("source", &CanonicalTensor::source)
        .def("values", &tensor_values, "Complex64 values as [a, k, t].")
        .def("__eq__", [](const CanonicalTensor& x, const CanonicalTensor& y) { return x == y; });

    m.def("project_frequency",
          [](const std::vector<cplx>& h, const std::vector<double>& offsets, std::size_t k) {
              return to_array(project_frequency(h, offsets, CanonicalGridSpec{k}));
          },
          py::arg("values"), py::arg("offsets"), py::arg("k") = 30);
    m.def("canonicalize",
          [](const RawCsiStream& s, std::size_t k, std::size_t window_t, std::optional<std::size_t> hop,
             const std::string& mode, std::size_t reference_antenna) {
              return canonicalize(s, canon_options(k, window_t, hop, mode, reference_antenna));
          },
          py::arg("stream"), py::arg("k") = 30, py::arg("window_t") = 500, py::arg("hop") = py::none(),
          py::arg("mode") = "slope_intercept", py::arg("reference_antenna") = 0);

    // --------------------------------------------------------------- trace io
    m.def("write_raw_trace", py::overload_cast<const RawCsiStream&, const std::filesystem::path&>(&write_raw_trace),
          py::arg("stream"), py::arg("path"));
    m.def("read_raw_trace", py::overload_cast<const std::filesystem::path&>(&read_raw_trace), py::arg("path"));
    m.def("write_tensor", py::overload_cast<const CanonicalTensor&, const std::filesystem::path&>(&write_tensor),
          py::arg("tensor"), py::arg("path"));
    m.def("read_tensor", py::overload_cast<const std::filesystem::path&>(&read_tensor), py::arg("path"));
    m.def("raw_trace_bytes", [](const RawCsiStream& s) {
        std::ostringstream os;
        write_raw_trace(s, os);
        return py::bytes(os.str());
    });
    m.def("tensor_bytes", [](const CanonicalTensor& t) {
        std::ostringstream os;
        write_tensor(t, os);
        return py::bytes(os.str());
    });
    m.def("raw_trace_from_bytes", [](const py::bytes& b) {
        std::istringstream is{std::string(b)};
        return read_raw_trace(is);
    });
    m.def("tensor_from_bytes", [](const py::bytes& b) {
        std::istringstream is{std::string(b)};
        return read_tensor(is);
    });

    // ------------------------------------------------------------------ probe
    m.def("flops_estimate",
          [](std::size_t depth, std::size_t dim, std::size_t heads, std::size_t ffn_dim, std::size_t token_dim,
             std::size_t t, std::size_t outputs) {
              ModelConfig c;
              c.depth = depth;
              c.dim = dim;
              c.heads = heads;
              c.ffn_dim = ffn_dim;
              c.token_dim = token_dim;
              c.max_t = t;
              c.outputs = outputs;
              c.validate();
              return flops_estimate(c, t);
          },
          py::arg("depth") = 4, py::arg("dim") = 64, py::arg("heads") = 4, py::arg("ffn_dim") = 128,
          py::arg("token_dim") = 180, py::arg("t") = 500, py::arg("outputs") = 2);
    m.def("grad_check",
          [](std::size_t depth, std::size_t dim, std::size_t heads, std::size_t ffn_dim, std::size_t token_dim,
             std::size_t outputs, bool regression, std::uint64_t seed) {
              ModelConfig c;
              c.depth = depth;
              c.dim = dim;
              c.heads = heads;
              c.ffn_dim = ffn_dim;
              c.token_dim = token_dim;
              c.max_t = 16;
              c.outputs = outputs;
              c.task = regression ? TaskKind::regression : TaskKind::classification;
              GradCheckOptions o;
              o.seed = seed;
              return grad_check(c, o);
          },
          py::arg("depth") = 1, py::arg("dim") = 8, py::arg("heads") = 2, py::arg("ffn_dim") = 16,
          py::arg("token_dim") = 6, py::arg("outputs") = 3, py::arg("regression") = false, py::arg("seed") = 1,
          "Max relative error between analytic and finite-difference gradients.");

    // --------------------------------------------------------------- benchkit
    m.def("aggregate_seeds",
          [](const std::vector<double>& v) {
              const auto s = aggregate_seeds(v);
              return py::make_tuple(s.mean, s.std, s.ci95);
          },
          py::arg("values"), "Returns (mean, sample std, 95% CI half-width).");
    m.def("student_t_975", &student_t_975, py::arg("dof"));
    m.def("rank_consistency",
          [](const std::vector<std::vector<double>>& acc) {
              const auto r = rank_consistency(acc);
              return py::make_tuple(r.ranks, r.variance);
          },
          py::arg("accuracy"), "accuracy[variant][seed] -> (ranks, per-variant rank variance).");
    m.def("top1", [](const std::vector<int>& p, const std::vector<int>& y) { return top1(p, y); }, py::arg("preds"),
          py::arg("labels"));
    m.def("macro_f1",
          [](const std::vector<int>& p, const std::vector<int>& y, std::size_t classes) {
              return macro_f1(p, y, classes);
          },
          py::arg("preds"), py::arg("labels"), py::arg("classes"));
    m.def("dfs_spectrogram",
          [](const RawCsiStream& s, const std::string& mode, std::size_t reference_antenna, std::size_t window,
             std::size_t hop, double taper, std::optional<std::size_t> pair) {
              DfsOptions o;
              o.sanitize = sanitize_config(mode, reference_antenna);
              o.window = window;
              o.hop = hop;
              o.taper = taper;
              o.pair = pair;
              const auto spec = dfs_spectrogram(s, o);
              py::array_t<double> mag({static_cast<py::ssize_t>(spec.times.size()),
                                       static_cast<py::ssize_t>(spec.frequencies.size())});
              auto w = mag.mutable_unchecked<2>();
              for (py::ssize_t i = 0; i < w.shape(0); ++i)
                  for (py::ssize_t j = 0; j < w.shape(1); ++j)
                      w(i, j) = spec.magnitude[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
              return py::make_tuple(to_array(spec.times), to_array(spec.frequencies), mag);
          },
          py::arg("stream"), py::arg("mode") = "conjugate_reference", py::arg("reference_antenna") = 0,
          py::arg("window") = 128, py::arg("hop") = 16, py::arg("taper") = 0.2, py::arg("pair") = py::none(),
          "Returns (times, doppler frequencies, magnitude[time, frequency]).");
    m.def("fingerprint", &fingerprint, py::arg("text"));

    // -------------------------------------------------------------------- cli
    m.def("cli",
          [](const std::vector<std::string>& args) {
              std::ostringstream out, err;
              int code;
              {
                  py::gil_scoped_release release;
                  code = cli::dispatch(args, out, err);
              }
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Runs one command line; returns (exit code, stdout, stderr).");
}
