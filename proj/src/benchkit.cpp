// SPDX-License-Identifier: Apache-2.0
#include "sdp/benchkit.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "sdp/error.hpp"

namespace sdp {

double top1(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size() || preds.empty()) throw InvalidArgument("top1 needs equal, nonempty inputs");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

Confusion confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t classes) {
    if (preds.size() != labels.size()) throw InvalidArgument("confusion inputs differ in length");
    Confusion c(classes, std::vector<std::uint64_t>(classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || labels[i] < 0 || static_cast<std::size_t>(preds[i]) >= classes ||
            static_cast<std::size_t>(labels[i]) >= classes)
            throw InvalidArgument("class id out of range in confusion matrix");
        ++c[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
    }
    return c;
}

double macro_f1(std::span<const int> preds, std::span<const int> labels, std::size_t classes) {
    if (classes == 0) throw InvalidArgument("macro_f1 needs at least one class");
    const auto c = confusion_matrix(preds, labels, classes);
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        const double tp = static_cast<double>(c[k][k]);
        double fp = 0.0, fn = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == k) continue;
            fp += static_cast<double>(c[j][k]);
            fn += static_cast<double>(c[k][j]);
        }
        const double denom = 2.0 * tp + fp + fn;
        sum += denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return sum / static_cast<double>(classes);
}

double mae(std::span<const double> preds, std::span<const double> targets) {
    if (preds.size() != targets.size() || preds.empty()) throw InvalidArgument("mae needs equal, nonempty inputs");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
    return s / static_cast<double>(preds.size());
}

std::vector<std::vector<double>> normalize_rows(const Confusion& c) {
    std::vector<std::vector<double>> out;
    for (const auto& row : c) {
        std::uint64_t total = 0;
        for (auto v : row) total += v;
        std::vector<double> r(row.size(), 0.0);
        if (total > 0)
            for (std::size_t j = 0; j < row.size(); ++j) r[j] = static_cast<double>(row[j]) / static_cast<double>(total);
        out.push_back(std::move(r));
    }
    return out;
}

double student_t_975(std::size_t dof) {
    static constexpr std::array<double, 30> kTable = {
        12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004, 2.262157, 2.228139,
        2.200985,  2.178813, 2.160369, 2.144787, 2.131450, 2.119905, 2.109816, 2.100922, 2.093024, 2.085963,
        2.079614,  2.073873, 2.068658, 2.063899, 2.059539, 2.055529, 2.051831, 2.048407, 2.045230, 2.042272};
    if (dof < 1 || dof > kTable.size()) throw InvalidArgument("Student-t table covers 1..30 degrees of freedom");
    return kTable[dof - 1];
}

SeedStats aggregate_seeds(std::span<const double> values) {
    if (values.size() < 2) throw InvalidArgument("aggregate_seeds needs at least 2 values");
    const double n = static_cast<double>(values.size());
    SeedStats s;
    for (double v : values) s.mean += v;
    s.mean /= n;
    // identical inputs must give exactly zero spread
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) s.mean = values.front();
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
    s.ci95 = student_t_975(values.size() - 1) * s.std / std::sqrt(n);
    return s;
}

RankTable rank_consistency(const std::vector<std::vector<double>>& accuracy) {
    if (accuracy.empty()) throw InvalidArgument("rank_consistency needs at least one variant");
    const std::size_t seeds = accuracy.front().size();
    for (const auto& row : accuracy)
        if (row.size() != seeds) throw ShapeMismatch("every variant needs one accuracy per seed");
    RankTable t;
    t.ranks.assign(accuracy.size(), std::vector<int>(seeds, 1));
    for (std::size_t s = 0; s < seeds; ++s)
        for (std::size_t v = 0; v < accuracy.size(); ++v) {
            int better = 0;
            for (std::size_t o = 0; o < accuracy.size(); ++o) better += accuracy[o][s] > accuracy[v][s] ? 1 : 0;
            t.ranks[v][s] = 1 + better;
        }
    for (const auto& r : t.ranks) {
        if (r.size() < 2) {
            t.variance.push_back(0.0);
            continue;
        }
        double mean = 0.0;
        for (int x : r) mean += x;
        mean /= static_cast<double>(r.size());
        double ss = 0.0;
        for (int x : r) ss += (x - mean) * (x - mean);
        t.variance.push_back(ss / static_cast<double>(r.size() - 1));
    }
    return t;
}

// ------------------------------------------------------------ spectrograms

std::size_t Spectrogram::peak_bin(std::size_t column) const {
    const auto& col = magnitude.at(column);
    return static_cast<std::size_t>(std::max_element(col.begin(), col.end()) - col.begin());
}

double Spectrogram::zero_doppler_fraction(std::size_t column, std::size_t halfwidth) const {
    const auto& col = magnitude.at(column);
    const std::size_t z = zero_bin();
    double total = 0.0, near = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) {
        const double e = col[i] * col[i];
        total += e;
        const std::size_t dist = i > z ? i - z : z - i;
        if (dist <= halfwidth) near += e;
    }
    return total > 0.0 ? near / total : 0.0;
}

namespace {

class FftPlan {
public:
    explicit FftPlan(std::size_t n)
        : n_(n),
          in_(fftw_alloc_complex(n)),
          out_(fftw_alloc_complex(n)),
          plan_(fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE)) {}
    ~FftPlan() {
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    fftw_complex* input() { return in_; }
    const fftw_complex* output() const { return out_; }
    void run() { fftw_execute(plan_); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    fftw_complex* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

// Periodic Tukey window; cosine ramps over the first and last taper/2 of the span.
std::vector<double> tukey_window(std::size_t n, double taper) {
    std::vector<double> w(n, 1.0);
    if (taper <= 0.0) return w;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n);
        const double edge = std::min(x, 1.0 - x);
        if (edge < taper / 2) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * edge / taper);
    }
    return w;
}

}  // namespace

Spectrogram dfs_spectrogram(const RawCsiStream& stream, const DfsOptions& opts) {
    const auto& profile = stream.profile;
    profile.validate();
    if (opts.window < 2 || opts.hop < 1) throw InvalidArgument("STFT window must be >= 2 and hop >= 1");
    if (!(opts.taper >= 0.0 && opts.taper <= 1.0)) throw InvalidArgument("STFT taper must lie in [0, 1]");
    if (stream.frames.size() < opts.window)
        throw InvalidArgument("stream has " + std::to_string(stream.frames.size()) + " frames, STFT window needs " +
                              std::to_string(opts.window));
    const std::size_t pairs = profile.pairs();
    std::size_t pair = 0;
    if (opts.pair) {
        pair = *opts.pair;
    } else if (opts.sanitize.mode == SanitizeMode::conjugate_reference && pairs > 1) {
        pair = opts.sanitize.reference_antenna == 0 ? 1 : 0;
    }
    if (pair >= pairs) throw InvalidArgument("antenna pair " + std::to_string(pair) + " out of range");

    const std::size_t k_raw = profile.k_raw();
    std::vector<cplx> series(stream.frames.size());
    for (std::size_t n = 0; n < stream.frames.size(); ++n) {
        const auto clean = sanitize_frame(stream.frames[n], profile, opts.sanitize);
        cplx acc{0.0, 0.0};
        for (std::size_t k = 0; k < k_raw; ++k) acc += clean.values[pair * k_raw + k];
        series[n] = acc / static_cast<double>(k_raw);
    }

    const std::size_t w = opts.window;
    const auto taper = tukey_window(w, opts.taper);

    Spectrogram spec;
    spec.frequencies.resize(w);
    const auto half = static_cast<std::ptrdiff_t>(w / 2);
    for (std::size_t i = 0; i < w; ++i)
        spec.frequencies[i] = static_cast<double>(static_cast<std::ptrdiff_t>(i) - half) * profile.sample_rate /
                              static_cast<double>(w);

    FftPlan fft(w);
    for (std::size_t start = 0; start + w <= series.size(); start += opts.hop) {
        for (std::size_t i = 0; i < w; ++i) {
            fft.input()[i][0] = series[start + i].real() * taper[i];
            fft.input()[i][1] = series[start + i].imag() * taper[i];
        }
        fft.run();
        std::vector<double> col(w);
        for (std::size_t i = 0; i < w; ++i) {
            // shift so that zero Doppler sits at index w/2
            const std::size_t src = (i + w - static_cast<std::size_t>(half)) % w;
            col[i] = std::hypot(fft.output()[src][0], fft.output()[src][1]);
        }
        spec.times.push_back(stream.frames[start].timestamp);
        spec.magnitude.push_back(std::move(col));
    }
    return spec;
}

// ---------------------------------------------------------- stream inference

StreamDecision decide(std::vector<double> trace, std::vector<double> window_starts, double tau) {
    if (trace.size() != window_starts.size()) throw ShapeMismatch("trace and window starts differ in length");
    StreamDecision d;
    d.tau = tau;
    d.trace = std::move(trace);
    d.window_starts = std::move(window_starts);
    if (d.trace.empty()) return d;
    const auto it = std::max_element(d.trace.begin(), d.trace.end());  // first maximum
    d.peak_index = static_cast<std::size_t>(it - d.trace.begin());
    d.p_max = *it;
    d.peak_time = d.window_starts[d.peak_index];
    d.triggered = d.p_max > tau;
    return d;
}

StreamDecision stream_infer(const RawCsiStream& stream, const Checkpoint& model, const CanonicalizeOptions& pipeline,
                            const std::string& event_class, double tau) {
    const auto it = std::find(model.class_names.begin(), model.class_names.end(), event_class);
    if (it == model.class_names.end()) throw EventClassMissing("model has no class named '" + event_class + "'");
    const auto event = static_cast<Eigen::Index>(it - model.class_names.begin());
    if (model.params.config.task != TaskKind::classification)
        throw InvalidArgument("stream inference needs a classification model");

    const auto tensors = canonicalize(stream, pipeline);
    std::vector<double> trace, starts;
    for (const auto& t : tensors) {
        const Vec p = predict(tokenize(t), model.params);
        trace.push_back(p(event));
        starts.push_back(t.window_start);
    }
    return decide(std::move(trace), std::move(starts), tau);
}

// ------------------------------------------------------------- seed runs

SeedRunResult evaluate_model(const ModelParams& params, std::span<const Example> test, std::uint64_t seed) {
    if (test.empty()) throw EmptySplit("test split is empty");
    SeedRunResult r;
    r.seed = seed;
    if (params.config.task == TaskKind::classification) {
        std::vector<int> preds, labels;
        for (const auto& ex : test) {
            const Vec p = predict(ex.tokens, params);
            Eigen::Index arg = 0;
            p.maxCoeff(&arg);
            preds.push_back(static_cast<int>(arg));
            labels.push_back(ex.label);
        }
        r.top1 = top1(preds, labels);
        r.macro_f1 = macro_f1(preds, labels, params.config.outputs);
        r.confusion = confusion_matrix(preds, labels, params.config.outputs);
    } else {
        std::vector<double> p, t;
        for (const auto& ex : test) {
            const Vec out = predict(ex.tokens, params);
            for (Eigen::Index i = 0; i < out.size(); ++i) {
                p.push_back(out(i));
                t.push_back(ex.target(i));
            }
        }
        r.mae = mae(p, t);
    }
    return r;
}

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

EvalReport make_report(std::vector<SeedRunResult> runs, std::string config_text) {
    EvalReport rep;
    rep.runs = std::move(runs);
    rep.config_text = std::move(config_text);
    rep.fingerprint = fingerprint(rep.config_text);
    std::vector<double> t1, f1, ma;
    for (const auto& r : rep.runs) {
        t1.push_back(r.top1);
        f1.push_back(r.macro_f1);
        if (r.mae) ma.push_back(*r.mae);
    }
    if (rep.runs.size() >= 2) {
        rep.top1 = aggregate_seeds(t1);
        rep.macro_f1 = aggregate_seeds(f1);
        if (ma.size() == rep.runs.size()) rep.mae = aggregate_seeds(ma);
    } else if (rep.runs.size() == 1) {
        rep.top1 = {t1[0], 0.0, 0.0};
        rep.macro_f1 = {f1[0], 0.0, 0.0};
        if (!ma.empty()) rep.mae = SeedStats{ma[0], 0.0, 0.0};
    }
    return rep;
}

EvalReport run_seeds(const Dataset& data, std::span<const Example> test, const ModelConfig& model,
                     const TrainConfig& train_cfg, std::span<const std::uint64_t> seeds, const std::string& config_text) {
    std::vector<SeedRunResult> runs;
    for (const auto seed : seeds) {
        TrainConfig cfg = train_cfg;
        cfg.seed = seed;
        const auto trained = train(data, model, cfg);
        auto r = evaluate_model(trained.params, test, seed);
        r.best_epoch = trained.best_epoch;
        runs.push_back(std::move(r));
    }
    return make_report(std::move(runs), config_text);
}

// ------------------------------------------------------------------ report

namespace {

std::ofstream open_report_file(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << std::setprecision(10);
    return os;
}

void write_stats(std::ostream& os, const std::string& name, const SeedStats& s) {
    os << name << ".mean: " << s.mean << '\n' << name << ".std: " << s.std << '\n' << name << ".ci95: " << s.ci95 << '\n';
}

}  // namespace

void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& rep = bundle.report;

    {
        auto os = open_report_file(dir / "metrics.tsv");
        os << "seed\ttop1\tmacro_f1\tmae\tbest_epoch\n";
        for (const auto& r : rep.runs) {
            os << r.seed << '\t' << r.top1 << '\t' << r.macro_f1 << '\t';
            if (r.mae) os << *r.mae; else os << "NA";
            os << '\t' << r.best_epoch << '\n';
        }
    }

    for (const auto& r : rep.runs) {
        if (r.confusion.empty()) continue;
        auto os = open_report_file(dir / ("confusion_" + std::to_string(r.seed) + ".tsv"));
        auto label = [&](std::size_t i) {
            return i < bundle.class_names.size() ? bundle.class_names[i] : std::to_string(i);
        };
        os << "# counts\ntrue\\pred";
        for (std::size_t j = 0; j < r.confusion.size(); ++j) os << '\t' << label(j);
        os << '\n';
        for (std::size_t i = 0; i < r.confusion.size(); ++i) {
            os << label(i);
            for (auto v : r.confusion[i]) os << '\t' << v;
            os << '\n';
        }
        os << "# normalized\ntrue\\pred";
        for (std::size_t j = 0; j < r.confusion.size(); ++j) os << '\t' << label(j);
        os << '\n';
        const auto norm = normalize_rows(r.confusion);
        for (std::size_t i = 0; i < norm.size(); ++i) {
            os << label(i);
            for (auto v : norm[i]) os << '\t' << v;
            os << '\n';
        }
    }

    {
        auto os = open_report_file(dir / "ranks.tsv");
        os << "variant";
        for (const auto& r : rep.runs) os << "\tseed_" << r.seed;
        os << "\trank_variance\n";
        if (bundle.ranks) {
            for (std::size_t v = 0; v < bundle.ranks->ranks.size(); ++v) {
                os << (v < bundle.variant_names.size() ? bundle.variant_names[v] : "variant_" + std::to_string(v));
                for (int x : bundle.ranks->ranks[v]) os << '\t' << x;
                os << '\t' << bundle.ranks->variance[v] << '\n';
            }
        }
    }

    for (const auto& [tag, spec] : bundle.spectrograms) {
        auto os = open_report_file(dir / ("spectrogram_" + tag + ".tsv"));
        os << "time\\doppler_hz";
        for (double f : spec.frequencies) os << '\t' << f;
        os << '\n';
        for (std::size_t i = 0; i < spec.times.size(); ++i) {
            os << spec.times[i];
            for (double m : spec.magnitude[i]) os << '\t' << m;
            os << '\n';
        }
    }

    {
        auto os = open_report_file(dir / "summary.txt");
        os << "fingerprint: " << rep.fingerprint << '\n';
        os << "seeds: " << rep.runs.size() << '\n';
        os << "seed_list:";
        for (const auto& r : rep.runs) os << ' ' << r.seed;
        os << '\n';
        write_stats(os, "top1", rep.top1);
        write_stats(os, "macro_f1", rep.macro_f1);
        if (rep.mae) write_stats(os, "mae", *rep.mae);
        os << "config:\n" << rep.config_text;
        if (!rep.config_text.empty() && rep.config_text.back() != '\n') os << '\n';
    }

    {
        auto os = open_report_file(dir / "fingerprint.txt");
        os << rep.fingerprint << '\n';
    }
}

}  // namespace sdp
