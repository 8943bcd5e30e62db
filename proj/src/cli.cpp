// SPDX-License-Identifier: Apache-2.0
#include "sdp/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "sdp/benchkit.hpp"
#include "sdp/config.hpp"
#include "sdp/error.hpp"
#include "sdp/pipeline.hpp"
#include "sdp/task.hpp"
#include "sdp/trace_io.hpp"
#include "sdp/train.hpp"

namespace sdp::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error("UsageError", what) {}
};

struct Options {
    // shared
    std::optional<std::uint64_t> seed;
    std::string in, out, out_dir, manifest, config, task, log, checkpoint;
    std::string sanitize_mode = "slope_intercept";
    std::size_t ref_antenna = 0;
    std::size_t k = 30;
    std::size_t window_t = 500;
    std::optional<std::size_t> hop;
    // split
    std::vector<std::int32_t> holdout;
    double val_fraction = 0.2;
    // model / training
    std::size_t depth = 4, dim = 64, heads = 4, ffn_dim = 128;
    std::size_t epochs = 30, batch_size = 8;
    double lr_max = 1e-3, lr_min = 1e-5, weight_decay = 0.01;
    std::vector<std::uint64_t> seeds{std::begin(kBenchmarkSeeds), std::end(kBenchmarkSeeds)};
    // stream
    std::string event_class = "Fall";
    double tau = 0.5;
    // spectrogram
    std::optional<std::size_t> pair;
    std::size_t stft_window = 128, stft_hop = 16;
    double stft_taper = 0.2;
    // flops
    std::size_t token_dim = 180, t = 500, outputs = 2;
    // report
    std::vector<std::string> runs, names;
};

void add_model_flags(CLI::App* sub, Options& o) {
    sub->add_option("--depth", o.depth, "Encoder layers L")->capture_default_str();
    sub->add_option("--dim", o.dim, "Embedding dimension D")->capture_default_str();
    sub->add_option("--heads", o.heads, "Attention heads H")->capture_default_str();
    sub->add_option("--ffn-dim", o.ffn_dim, "Feed-forward hidden width")->capture_default_str();
}

void add_train_flags(CLI::App* sub, Options& o) {
    sub->add_option("--epochs", o.epochs, "Training epochs E")->capture_default_str();
    sub->add_option("--batch-size", o.batch_size, "Minibatch size B")->capture_default_str();
    sub->add_option("--lr-max", o.lr_max, "Peak learning rate")->capture_default_str();
    sub->add_option("--lr-min", o.lr_min, "Final learning rate of the cosine schedule")->capture_default_str();
    sub->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
}

void add_sanitize_flags(CLI::App* sub, Options& o, const std::string& default_mode) {
    o.sanitize_mode = default_mode;
    sub->add_option("--sanitize-mode", o.sanitize_mode, "slope_intercept | conjugate_reference | none")
        ->capture_default_str();
    sub->add_option("--ref-antenna", o.ref_antenna, "Reference antenna pair for conjugate_reference")
        ->capture_default_str();
}

void add_canon_flags(CLI::App* sub, Options& o) {
    sub->add_option("--k", o.k, "Canonical subcarrier count")->capture_default_str();
    sub->add_option("--window-t", o.window_t, "Frames per canonical window")->capture_default_str();
    sub->add_option("--hop", o.hop, "Frames between window starts (default: window length)");
}

void add_seed_flag(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed, "Random seed (falls back to $SDP_SEED)")->envname("SDP_SEED");
}

struct App {
    CLI::App app{"Sensing data protocol pipeline", "sdp"};
    Options o;
    std::string which;

    App() {
        app.require_subcommand(1);
        app.set_version_flag("--version", std::string("sdp 0.1.0"));

        auto* gen = app.add_subcommand("gen", "Generate a synthetic raw trace (scene) or a labelled task");
        gen->add_option("--config", o.config, "Scene description file")->check(CLI::ExistingFile);
        gen->add_option("--task", o.task, "Task description file")->check(CLI::ExistingFile);
        gen->add_option("--out", o.out, "Output SDPR file (scene mode)");
        gen->add_option("--out-dir", o.out_dir, "Output directory (task mode)");
        add_seed_flag(gen, o);

        auto* san = app.add_subcommand("sanitize", "Remove hardware phase distortions from a raw trace");
        san->add_option("--in", o.in, "Input SDPR file")->required()->check(CLI::ExistingFile);
        san->add_option("--out", o.out, "Output SDPR file")->required();
        add_sanitize_flags(san, o, "slope_intercept");

        auto* canon = app.add_subcommand("canon", "Canonicalize raw traces into SDPC tensors");
        canon->add_option("--in", o.in, "Input SDPR file")->check(CLI::ExistingFile);
        canon->add_option("--manifest", o.manifest, "Raw-trace manifest (canonicalize every entry)")
            ->check(CLI::ExistingFile);
        canon->add_option("--out", o.out, "Output directory")->required();
        add_canon_flags(canon, o);
        add_sanitize_flags(canon, o, "slope_intercept");

        auto* split = app.add_subcommand("split", "Assign a cross-user train/val/test split");
        split->add_option("--manifest", o.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
        split->add_option("--out", o.out, "Output manifest")->required();
        split->add_option("--holdout", o.holdout, "Test subject ids")->required()->delimiter(',');
        split->add_option("--val-fraction", o.val_fraction, "Fraction of training samples held for validation")
            ->capture_default_str();
        add_seed_flag(split, o);

        auto* train = app.add_subcommand("train", "Train the probe on a split tensor manifest");
        train->add_option("--manifest", o.manifest, "Tensor manifest with splits")->required()->check(CLI::ExistingFile);
        train->add_option("--out", o.out, "Output checkpoint")->required();
        train->add_option("--log", o.log, "Training log (TSV)");
        add_seed_flag(train, o);
        add_model_flags(train, o);
        add_train_flags(train, o);

        auto* eval = app.add_subcommand("eval", "Train and test once per seed and write a report bundle");
        eval->add_option("--manifest", o.manifest, "Tensor manifest with splits")->required()->check(CLI::ExistingFile);
        eval->add_option("--seeds", o.seeds, "Seed list")->delimiter(',')->capture_default_str();
        eval->add_option("--out", o.out, "Report directory")->required();
        add_model_flags(eval, o);
        add_train_flags(eval, o);

        auto* stream = app.add_subcommand("stream", "Sliding-window event detection over a continuous trace");
        stream->add_option("--in", o.in, "Input SDPR file")->required()->check(CLI::ExistingFile);
        stream->add_option("--checkpoint", o.checkpoint, "Trained model")->required()->check(CLI::ExistingFile);
        stream->add_option("--event-class", o.event_class, "Event class name")->capture_default_str();
        stream->add_option("--tau", o.tau, "Trigger threshold")->capture_default_str();
        stream->add_option("--out", o.out, "Per-window probability trace (TSV)");
        add_canon_flags(stream, o);
        add_sanitize_flags(stream, o, "slope_intercept");

        auto* spec = app.add_subcommand("spectrogram", "Doppler spectrogram of one antenna pair");
        spec->add_option("--in", o.in, "Input SDPR file")->required()->check(CLI::ExistingFile);
        spec->add_option("--out", o.out, "Output TSV")->required();
        spec->add_option("--pair", o.pair, "Antenna pair (default: first non-reference pair)");
        spec->add_option("--window", o.stft_window, "STFT window length in frames")->capture_default_str();
        spec->add_option("--hop", o.stft_hop, "STFT hop in frames")->capture_default_str();
        spec->add_option("--taper", o.stft_taper, "Tukey taper fraction (1 = Hann)")
            ->capture_default_str()
            ->check(CLI::Range(0.0, 1.0));
        add_sanitize_flags(spec, o, "conjugate_reference");

        auto* flops = app.add_subcommand("flops", "Analytic FLOPs of one forward pass");
        add_model_flags(flops, o);
        flops->add_option("--token-dim", o.token_dim, "Token width (2*A*K)")->capture_default_str();
        flops->add_option("--t", o.t, "Sequence length")->capture_default_str();
        flops->add_option("--outputs", o.outputs, "Head width")->capture_default_str();

        auto* report = app.add_subcommand("report", "Rank consistency across eval report directories");
        report->add_option("--runs", o.runs, "Eval output directories, one per pipeline variant")
            ->required()
            ->delimiter(',');
        report->add_option("--names", o.names, "Variant names")->delimiter(',');
        report->add_option("--out", o.out, "Report directory")->required();
    }
};

std::uint64_t require_seed(const Options& o, std::optional<std::uint64_t> fallback = std::nullopt) {
    if (o.seed) return *o.seed;
    if (fallback) return *fallback;
    throw UsageError("--seed is required (or set SDP_SEED)");
}

CanonicalizeOptions canon_options(const Options& o) {
    CanonicalizeOptions c;
    c.sanitize.mode = parse_sanitize_mode(o.sanitize_mode);
    c.sanitize.reference_antenna = o.ref_antenna;
    c.grid.k = o.k;
    c.window.t = o.window_t;
    c.window.hop = o.hop.value_or(o.window_t);
    c.window.validate();
    return c;
}

ModelConfig model_options(const Options& o) {
    ModelConfig m;
    m.depth = o.depth;
    m.dim = o.dim;
    m.heads = o.heads;
    m.ffn_dim = o.ffn_dim;
    return m;
}

TrainConfig train_options(const Options& o) {
    TrainConfig t;
    t.epochs = o.epochs;
    t.batch_size = o.batch_size;
    t.lr_max = o.lr_max;
    t.lr_min = o.lr_min;
    t.weight_decay = o.weight_decay;
    return t;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string file_digest(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return fingerprint(ss.str());
}

SplitTensors load_tensors(const fs::path& manifest_path, DatasetManifest& manifest) {
    manifest = read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    SplitTensors set;
    set.class_names = manifest.class_names();
    for (const auto& e : manifest.entries) {
        auto t = read_tensor(resolve(base, e.path));
        t.label = e.label_id;
        t.subject = e.subject;
        set.tensors.push_back(std::move(t));
        set.splits.push_back(e.split);
    }
    if (set.tensors.empty()) throw EmptySplit("manifest has no entries");
    return set;
}

int cmd_gen(const Options& o, std::ostream& out) {
    if (o.config.empty() == o.task.empty()) throw UsageError("gen needs exactly one of --config or --task");
    if (!o.config.empty()) {
        if (o.out.empty()) throw UsageError("gen --config needs --out");
        const auto kv = KeyValueFile::load(o.config);
        Scene scene = parse_scene(kv);
        scene.seed = require_seed(o, kv.has("seed") ? std::optional<std::uint64_t>(scene.seed) : std::nullopt);
        auto stream = generate_stream(scene);
        write_raw_trace(stream, fs::path(o.out));
        out << "frames: " << stream.frames.size() << '\n';
        return kExitOk;
    }
    if (o.out_dir.empty()) throw UsageError("gen --task needs --out-dir");
    const auto kv = KeyValueFile::load(o.task);
    TaskSpec spec = parse_task(kv);
    spec.seed = require_seed(o, kv.has("seed") ? std::optional<std::uint64_t>(spec.seed) : std::nullopt);
    const auto task = make_synthetic_task(spec);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < task.streams.size(); ++i)
        write_raw_trace(task.streams[i], dir / task.manifest.entries[i].path);
    write_manifest(task.manifest, dir / "manifest.tsv");
    out << "streams: " << task.streams.size() << '\n' << "manifest: " << (dir / "manifest.tsv").string() << '\n';
    return kExitOk;
}

int cmd_sanitize(const Options& o, std::ostream& out) {
    SanitizeConfig cfg;
    cfg.mode = parse_sanitize_mode(o.sanitize_mode);
    cfg.reference_antenna = o.ref_antenna;
    const auto clean = sanitize_stream(read_raw_trace(fs::path(o.in)), cfg);
    write_raw_trace(clean, fs::path(o.out));
    out << "frames: " << clean.frames.size() << '\n';
    return kExitOk;
}

std::string window_name(const std::string& stem, std::size_t w) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_w%04zu.sdpc", w);
    return stem + buf;
}

int cmd_canon(const Options& o, std::ostream& out) {
    if (o.in.empty() == o.manifest.empty()) throw UsageError("canon needs exactly one of --in or --manifest");
    const auto opts = canon_options(o);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    if (!o.in.empty()) {
        const auto tensors = canonicalize(read_raw_trace(fs::path(o.in)), opts);
        for (std::size_t w = 0; w < tensors.size(); ++w) write_tensor(tensors[w], dir / window_name("window", w));
        out << "tensors: " << tensors.size() << '\n';
        return kExitOk;
    }
    const fs::path manifest_path(o.manifest);
    const auto raw = read_manifest(manifest_path);
    DatasetManifest result;
    result.task_kind = raw.task_kind;
    for (const auto& e : raw.entries) {
        CanonicalizeOptions c = opts;
        c.label = e.label_id;
        c.subject = e.subject;
        const auto tensors = canonicalize(read_raw_trace(resolve(manifest_path.parent_path(), e.path)), c);
        const std::string stem = fs::path(e.path).stem().string();
        for (std::size_t w = 0; w < tensors.size(); ++w) {
            ManifestEntry te = e;
            te.path = window_name(stem, w);
            write_tensor(tensors[w], dir / te.path);
            result.entries.push_back(std::move(te));
        }
    }
    write_manifest(result, dir / "manifest.tsv");
    out << "tensors: " << result.entries.size() << '\n' << "manifest: " << (dir / "manifest.tsv").string() << '\n';
    return kExitOk;
}

int cmd_split(const Options& o, std::ostream& out) {
    SplitAssignment a;
    a.holdout_subjects.insert(o.holdout.begin(), o.holdout.end());
    a.val_fraction = o.val_fraction;
    a.seed = require_seed(o);
    const auto m = cross_user_split(read_manifest(fs::path(o.manifest)), a);
    write_manifest(m, fs::path(o.out));
    out << "train: " << m.select(Split::train).size() << "\nval: " << m.select(Split::val).size()
        << "\ntest: " << m.select(Split::test).size() << '\n';
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    DatasetManifest manifest;
    const auto set = load_tensors(fs::path(o.manifest), manifest);
    const auto prepared = prepare(set);
    const auto model = model_for(set.tensors.front(), manifest.class_count(), model_options(o));
    auto tcfg = train_options(o);
    tcfg.seed = require_seed(o);
    const auto result = train(prepared.data, model, tcfg);
    write_checkpoint(result.params, set.class_names, fs::path(o.out));
    if (!o.log.empty()) {
        std::ofstream log(o.log, std::ios::trunc);
        if (!log) throw IoError("cannot open '" + o.log + "' for writing");
        write_train_log(result.log, log);
    }
    out << std::setprecision(10) << "best_epoch: " << result.best_epoch
        << "\nbest_val_metric: " << result.log[result.best_epoch].val_metric << '\n';
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    DatasetManifest manifest;
    const fs::path manifest_path(o.manifest);
    const auto set = load_tensors(manifest_path, manifest);
    const auto prepared = prepare(set);
    const auto model = model_for(set.tensors.front(), manifest.class_count(), model_options(o));
    const auto tcfg = train_options(o);
    std::string seed_list;
    for (auto s : o.seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
    const std::string config_text = describe(model) + describe(tcfg) + "seeds: " + seed_list +
                                    "\nmanifest_digest: " + file_digest(manifest_path) + "\n";
    auto report = run_seeds(prepared.data, prepared.test, model, tcfg, o.seeds, config_text);
    ReportBundle bundle;
    bundle.report = report;
    bundle.class_names = set.class_names;
    emit_report(bundle, fs::path(o.out));
    out << std::setprecision(10) << "top1: " << report.top1.mean << " +- " << report.top1.std
        << " (ci95 " << report.top1.ci95 << ")\n";
    return kExitOk;
}

int cmd_stream(const Options& o, std::ostream& out) {
    const auto ck = read_checkpoint(fs::path(o.checkpoint));
    const auto stream = read_raw_trace(fs::path(o.in));
    Options adjusted = o;
    if (!o.hop) adjusted.hop = std::max<std::size_t>(1, o.window_t / 4);
    const auto opts = canon_options(adjusted);
    const auto d = stream_infer(stream, ck, opts, o.event_class, o.tau);
    if (!o.out.empty()) {
        std::ofstream os(o.out, std::ios::trunc);
        if (!os) throw IoError("cannot open '" + o.out + "' for writing");
        os << std::setprecision(10) << "window_start\tp_event\n";
        for (std::size_t i = 0; i < d.trace.size(); ++i) os << d.window_starts[i] << '\t' << d.trace[i] << '\n';
    }
    out << std::setprecision(10) << "windows: " << d.trace.size() << "\np_max: " << d.p_max
        << "\npeak_time: " << d.peak_time << "\ntau: " << d.tau << "\ntriggered: " << (d.triggered ? "true" : "false")
        << '\n';
    return kExitOk;
}

int cmd_spectrogram(const Options& o, std::ostream& out) {
    DfsOptions opts;
    opts.sanitize.mode = parse_sanitize_mode(o.sanitize_mode);
    opts.sanitize.reference_antenna = o.ref_antenna;
    opts.window = o.stft_window;
    opts.hop = o.stft_hop;
    opts.taper = o.stft_taper;
    opts.pair = o.pair;
    const auto spec = dfs_spectrogram(read_raw_trace(fs::path(o.in)), opts);
    std::ofstream os(o.out, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + o.out + "' for writing");
    os << std::setprecision(10) << "time\\doppler_hz";
    for (double f : spec.frequencies) os << '\t' << f;
    os << '\n';
    for (std::size_t i = 0; i < spec.times.size(); ++i) {
        os << spec.times[i];
        for (double m : spec.magnitude[i]) os << '\t' << m;
        os << '\n';
    }
    out << "columns: " << spec.times.size() << '\n';
    return kExitOk;
}

int cmd_flops(const Options& o, std::ostream& out) {
    ModelConfig m = model_options(o);
    m.token_dim = o.token_dim;
    m.max_t = o.t;
    m.outputs = o.outputs;
    out << "flops: " << flops_estimate(m, o.t) << '\n';
    return kExitOk;
}

std::vector<SeedRunResult> read_metrics(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    std::getline(is, line);
    std::vector<SeedRunResult> runs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        SeedRunResult r;
        std::string mae_text;
        if (!(ls >> r.seed >> r.top1 >> r.macro_f1 >> mae_text >> r.best_epoch))
            throw ParseError("malformed metrics row in '" + path.string() + "'");
        if (mae_text != "NA") r.mae = parse_number(mae_text, "mae");
        runs.push_back(r);
    }
    return runs;
}

int cmd_report(const Options& o, std::ostream& out) {
    std::vector<std::vector<SeedRunResult>> variants;
    for (const auto& dir : o.runs) variants.push_back(read_metrics(fs::path(dir) / "metrics.tsv"));
    std::vector<std::vector<double>> acc;
    for (const auto& v : variants) {
        if (v.size() != variants.front().size()) throw ShapeMismatch("variants have different seed counts");
        std::vector<double> row;
        for (const auto& r : v) row.push_back(r.top1);
        acc.push_back(std::move(row));
    }
    ReportBundle bundle;
    std::string config_text;
    for (std::size_t i = 0; i < o.runs.size(); ++i) {
        const std::string name = i < o.names.size() ? o.names[i] : fs::path(o.runs[i]).filename().string();
        bundle.variant_names.push_back(name);
        config_text += "variant: " + name + " metrics_digest=" + file_digest(fs::path(o.runs[i]) / "metrics.tsv") + "\n";
    }
    bundle.report = make_report(variants.front(), config_text);
    bundle.ranks = rank_consistency(acc);
    emit_report(bundle, fs::path(o.out));
    for (std::size_t v = 0; v < bundle.variant_names.size(); ++v)
        out << bundle.variant_names[v] << " rank_variance: " << bundle.ranks->variance[v] << '\n';
    return kExitOk;
}

}  // namespace

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
    App a;
    try {
        a.app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << (a.app.get_subcommands().empty() ? a.app.help() : a.app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "sdp 0.1.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        err << "error: UsageError: " << msg << '\n';
        return kExitUsage;
    }

    auto* sub = a.app.get_subcommands().front();
    const std::string name = sub->get_name();
    out << "fingerprint: " << fingerprint(name + "\n" + sub->config_to_str(true, false)) << '\n';
    try {
        if (name == "gen") return cmd_gen(a.o, out);
        if (name == "sanitize") return cmd_sanitize(a.o, out);
        if (name == "canon") return cmd_canon(a.o, out);
        if (name == "split") return cmd_split(a.o, out);
        if (name == "train") return cmd_train(a.o, out);
        if (name == "eval") return cmd_eval(a.o, out);
        if (name == "stream") return cmd_stream(a.o, out);
        if (name == "spectrogram") return cmd_spectrogram(a.o, out);
        if (name == "flops") return cmd_flops(a.o, out);
        if (name == "report") return cmd_report(a.o, out);
    } catch (const UsageError& e) {
        err << "error: UsageError: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.name() << ": " << e.what() << '\n';
        return kExitPipelineError;
    } catch (const std::exception& e) {
        err << "error: InternalError: " << e.what() << '\n';
        return kExitPipelineError;
    }
    err << "error: UsageError: unknown subcommand\n";
    return kExitUsage;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("sdp");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::vector<std::pair<std::string, std::vector<std::string>>> describe_flags() {
    App a;
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    for (const auto* sub : a.app.get_subcommands({})) {
        std::vector<std::string> flags;
        for (const auto* opt : sub->get_options()) {
            for (const auto& l : opt->get_lnames()) flags.push_back("--" + l);
        }
        out.emplace_back(sub->get_name(), std::move(flags));
    }
    return out;
}

}  // namespace sdp::cli
