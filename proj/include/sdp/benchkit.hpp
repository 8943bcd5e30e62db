// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocol: metrics, multi-seed aggregation with Student-t
// intervals, rank consistency, DFS spectrograms, continuous-stream
// inference and report bundles.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdp/canonicalizer.hpp"
#include "sdp/probe.hpp"
#include "sdp/sanitizer.hpp"
#include "sdp/train.hpp"

namespace sdp {

// ------------------------------------------------------------------ metrics

using Confusion = std::vector<std::vector<std::uint64_t>>;  // [true][pred]

double top1(std::span<const int> preds, std::span<const int> labels);
/// Per-class F1 averaged over all `classes`; a class with neither support
/// nor predictions contributes 0.
double macro_f1(std::span<const int> preds, std::span<const int> labels, std::size_t classes);
double mae(std::span<const double> preds, std::span<const double> targets);
Confusion confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t classes);
/// Rows scaled to sum to 1 (all-zero rows stay zero).
std::vector<std::vector<double>> normalize_rows(const Confusion& c);

// -------------------------------------------------------------- aggregation

/// Two-sided 95% Student-t quantile, dof 1..30.
double student_t_975(std::size_t dof);

struct SeedStats {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1)
    double ci95 = 0.0; // half-width
};

SeedStats aggregate_seeds(std::span<const double> values);

struct RankTable {
    std::vector<std::vector<int>> ranks;  // [variant][seed], 1 = best
    std::vector<double> variance;         // sample variance per variant
};

/// Ties share the minimum rank.
RankTable rank_consistency(const std::vector<std::vector<double>>& accuracy);

// ------------------------------------------------------------ spectrograms

struct DfsOptions {
    SanitizeConfig sanitize{SanitizeMode::conjugate_reference, 0};
    std::size_t window = 128;
    std::size_t hop = 16;
    /// Tukey taper fraction: 1 is a Hann window, 0 a rectangular one.
    double taper = 0.2;
    std::optional<std::size_t> pair;  // default: first pair that is not the reference
};

struct Spectrogram {
    std::vector<double> times;        // start time of each STFT frame
    std::vector<double> frequencies;  // Hz, ascending, zero Doppler at index window/2
    std::vector<std::vector<double>> magnitude;  // [time][frequency]

    std::size_t zero_bin() const { return frequencies.size() / 2; }
    std::size_t peak_bin(std::size_t column) const;
    /// Share of a column's energy within `halfwidth` bins of zero Doppler.
    double zero_doppler_fraction(std::size_t column, std::size_t halfwidth = 0) const;
};

/// Sanitize, average the selected pair over subcarriers, Tukey-windowed STFT.
/// Only full windows are emitted.
Spectrogram dfs_spectrogram(const RawCsiStream& stream, const DfsOptions& opts = {});

// ---------------------------------------------------------- stream inference

struct StreamDecision {
    std::vector<double> trace;        // event-class probability per window
    std::vector<double> window_starts;
    double p_max = 0.0;
    std::size_t peak_index = 0;
    double peak_time = 0.0;
    double tau = 0.5;
    bool triggered = false;
};

/// Peak search and threshold test (first maximum wins on ties).
StreamDecision decide(std::vector<double> trace, std::vector<double> window_starts, double tau);

StreamDecision stream_infer(const RawCsiStream& stream, const Checkpoint& model, const CanonicalizeOptions& pipeline,
                            const std::string& event_class, double tau = 0.5);

// ------------------------------------------------------------- seed runs

struct SeedRunResult {
    std::uint64_t seed = 0;
    double top1 = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> mae;
    Confusion confusion;
    std::size_t best_epoch = 0;
};

SeedRunResult evaluate_model(const ModelParams& params, std::span<const Example> test, std::uint64_t seed);

struct EvalReport {
    std::vector<SeedRunResult> runs;
    SeedStats top1;
    SeedStats macro_f1;
    std::optional<SeedStats> mae;
    std::string config_text;   // canonical description of every config
    std::string fingerprint;   // hex FNV-1a 64 of config_text
};

EvalReport make_report(std::vector<SeedRunResult> runs, std::string config_text);

/// Trains one model per seed on `data` and evaluates it on `test`.
EvalReport run_seeds(const Dataset& data, std::span<const Example> test, const ModelConfig& model,
                     const TrainConfig& train_cfg, std::span<const std::uint64_t> seeds, const std::string& config_text);

std::string fingerprint(const std::string& text);

struct ReportBundle {
    EvalReport report;
    std::vector<std::string> class_names;
    std::optional<RankTable> ranks;
    std::vector<std::string> variant_names;
    std::vector<std::pair<std::string, Spectrogram>> spectrograms;
};

/// Writes metrics.tsv, confusion_<seed>.tsv, ranks.tsv, spectrogram_<tag>.tsv,
/// summary.txt and fingerprint.txt under `dir`.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir);

}  // namespace sdp
