// SPDX-License-Identifier: Apache-2.0
//
// Locked training procedure: seeded init, seeded per-epoch shuffle, AdamW
// with per-epoch cosine annealing, best-on-validation selection.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdp/probe.hpp"

namespace sdp {

inline constexpr std::uint64_t kBenchmarkSeeds[] = {992, 863, 702, 443, 542};

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Decoupled weight decay: p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                double weight_decay, const AdamHyper& hyper = {});

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / epochs)) / 2
double cosine_lr(std::size_t epoch, std::size_t epochs, double lr_max, double lr_min);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    double weight_decay = 0.01;
    std::uint64_t seed = 992;
    TaskKind task = TaskKind::classification;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_metric = 0.0;  // top-1 or MAE
};

struct TrainResult {
    ModelParams params;  // best on validation
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
};

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> val;
    std::vector<std::string> class_names;
};

/// Top-1 on classification, MAE on regression.
double validation_metric(const ModelParams& params, std::span<const Example> examples);

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg);

void write_train_log(const std::vector<EpochLog>& log, std::ostream& os);

// ------------------------------------------------------------ gradient check

using GradientFn = std::function<LossAndGrad(const ModelParams&, std::span<const Example* const>)>;

struct GradCheckOptions {
    std::size_t t = 4;
    std::size_t batch = 3;
    std::size_t max_coordinates = 400;  // sampled when the model is larger
    double step = 1e-4;
    std::uint64_t seed = 1;
    /// Denominator floor, above the difference quotient's roundoff (~eps*|L|/step)
    /// so that gradients that vanish by symmetry (e.g. key biases) compare as equal.
    double floor = 1e-8;
};

/// Max over sampled coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// using a five-point central difference.
double grad_check(const ModelConfig& cfg, const GradCheckOptions& opts = {}, const GradientFn& analytic = loss_and_grad);

// --------------------------------------------------------------- checkpoints

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "SDPM" u16 version u8 task, u32 x {depth dim heads ffn_dim token_dim max_t outputs},
/// u16 class count + (u16 len, bytes) names, u64 param count, f32 payload in layout order.
void write_checkpoint(const ModelParams& params, std::span<const std::string> class_names, std::ostream& os);
void write_checkpoint(const ModelParams& params, std::span<const std::string> class_names,
                      const std::filesystem::path& path);

struct Checkpoint {
    ModelParams params;
    std::vector<std::string> class_names;
};

Checkpoint read_checkpoint(std::istream& is);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sdp
