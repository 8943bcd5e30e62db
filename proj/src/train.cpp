// SPDX-License-Identifier: Apache-2.0
#include "sdp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "sdp/error.hpp"
#include "sdp/rng.hpp"

namespace sdp {

void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                double weight_decay, const AdamHyper& hyper) {
    if (params.size() != grads.size()) throw ShapeMismatch("params and grads differ in length");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * weight_decay * params[i];
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

double cosine_lr(std::size_t epoch, std::size_t epochs, double lr_max, double lr_min) {
    if (epochs == 0) throw InvalidArgument("cosine schedule needs epochs >= 1");
    const double frac = static_cast<double>(std::min(epoch, epochs)) / static_cast<double>(epochs);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(lr_min <= lr_max)) throw InvalidArgument("lr_min must not exceed lr_max");
    if (weight_decay < 0.0) throw InvalidArgument("weight_decay must be >= 0");
}

double validation_metric(const ModelParams& params, std::span<const Example> examples) {
    if (examples.empty()) throw EmptySplit("no examples to evaluate");
    if (params.config.task == TaskKind::classification) {
        std::size_t correct = 0;
        for (const auto& ex : examples) {
            const Vec p = predict(ex.tokens, params);
            Eigen::Index arg = 0;
            p.maxCoeff(&arg);
            if (arg == ex.label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(examples.size());
    }
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& ex : examples) {
        const Vec p = predict(ex.tokens, params);
        total += (p - ex.target).cwiseAbs().sum();
        n += static_cast<std::size_t>(p.size());
    }
    return total / static_cast<double>(n);
}

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (data.train.empty()) throw EmptySplit("training split is empty");
    if (data.val.empty()) throw EmptySplit("validation split is empty");
    if (model.task != cfg.task) throw InvalidArgument("model and training task kinds differ");

    TrainResult result;
    ModelParams params = init_params(model, cfg.seed);
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    AdamState adam;

    std::vector<std::size_t> order(data.train.size());
    const bool classification = cfg.task == TaskKind::classification;
    double best = classification ? -1.0 : std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        double loss_sum = 0.0;
        std::vector<const Example*> batch;
        for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                batch.push_back(&data.train[order[i]]);
            auto lg = loss_and_grad(params, batch);
            if (!std::isfinite(lg.loss))
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
            loss_sum += lg.loss * static_cast<double>(batch.size());
            adamw_step(params.values, lg.grad, adam, lr, cfg.weight_decay);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / static_cast<double>(order.size());
        entry.val_metric = validation_metric(params, data.val);
        result.log.push_back(entry);

        const bool improved = classification ? entry.val_metric > best : entry.val_metric < best;
        if (improved) {
            best = entry.val_metric;
            result.params = params;
            result.best_epoch = epoch;
        }
    }
    return result;
}

void write_train_log(const std::vector<EpochLog>& log, std::ostream& os) {
    os << "epoch\tlr\ttrain_loss\tval_metric\n";
    os << std::setprecision(17);
    for (const auto& e : log) os << e.epoch << '\t' << e.lr << '\t' << e.train_loss << '\t' << e.val_metric << '\n';
}

double grad_check(const ModelConfig& cfg, const GradCheckOptions& opts, const GradientFn& analytic) {
    cfg.validate();
    if (opts.t > cfg.max_t) throw SequenceTooLong("grad_check sequence exceeds max_t");
    ModelParams params = init_params(cfg, opts.seed);
    Rng rng(derive_seed(opts.seed, 7));
    // move away from the symmetric init so layer-norm parameters get exercised
    for (auto& v : params.values) v += 0.05 * rng.normal();

    std::vector<Example> examples(opts.batch);
    for (auto& ex : examples) {
        ex.tokens = Mat(static_cast<Eigen::Index>(opts.t), static_cast<Eigen::Index>(cfg.token_dim));
        for (Eigen::Index i = 0; i < ex.tokens.size(); ++i) ex.tokens.data()[i] = rng.normal();
        ex.label = static_cast<int>(rng.below(cfg.outputs));
        ex.target = Vec(static_cast<Eigen::Index>(cfg.outputs));
        for (Eigen::Index i = 0; i < ex.target.size(); ++i) ex.target(i) = rng.normal();
    }
    std::vector<const Example*> batch;
    for (const auto& ex : examples) batch.push_back(&ex);

    const auto lg = analytic(params, batch);
    std::vector<std::size_t> coords(params.values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.max_coordinates) {
        rng.shuffle(std::span<std::size_t>(coords));
        coords.resize(opts.max_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    double worst = 0.0;
    const double h = opts.step;
    for (const std::size_t i : coords) {
        const double orig = params.values[i];
        auto at = [&](double delta) {
            params.values[i] = orig + delta;
            return batch_loss(params, batch);
        };
        // pairwise differences first: an unused coordinate then gives exactly 0
        const double near = at(h) - at(-h);
        const double far = at(2 * h) - at(-2 * h);
        const double numeric = (8.0 * near - far) / (12 * h);
        params.values[i] = orig;
        const double a = lg.grad[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------- checkpoint

namespace {
template <typename T>
void put(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw TruncatedFile(std::string("checkpoint truncated while reading ") + what);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}
}  // namespace

void write_checkpoint(const ModelParams& params, std::span<const std::string> class_names, std::ostream& os) {
    const auto& c = params.config;
    os.write("SDPM", 4);
    put<std::uint16_t>(os, kCheckpointVersion);
    put<std::uint8_t>(os, c.task == TaskKind::classification ? 0 : 1);
    for (std::size_t v : {c.depth, c.dim, c.heads, c.ffn_dim, c.token_dim, c.max_t, c.outputs})
        put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    put<std::uint16_t>(os, static_cast<std::uint16_t>(class_names.size()));
    for (const auto& n : class_names) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(n.size()));
        os.write(n.data(), static_cast<std::streamsize>(n.size()));
    }
    put<std::uint64_t>(os, params.values.size());
    for (double v : params.values) put<float>(os, static_cast<float>(v));
    if (!os) throw IoError("checkpoint write failed");
}

void write_checkpoint(const ModelParams& params, std::span<const std::string> class_names,
                      const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_checkpoint(params, class_names, os);
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "SDPM", 4) != 0) throw BadMagic("expected magic 'SDPM' at offset 0");
    const auto version = get<std::uint16_t>(is, "version");
    if (version != kCheckpointVersion) throw UnsupportedVersion("checkpoint version " + std::to_string(version));
    Checkpoint ck;
    auto& c = ck.params.config;
    c.task = get<std::uint8_t>(is, "task") == 0 ? TaskKind::classification : TaskKind::regression;
    c.depth = get<std::uint32_t>(is, "depth");
    c.dim = get<std::uint32_t>(is, "dim");
    c.heads = get<std::uint32_t>(is, "heads");
    c.ffn_dim = get<std::uint32_t>(is, "ffn_dim");
    c.token_dim = get<std::uint32_t>(is, "token_dim");
    c.max_t = get<std::uint32_t>(is, "max_t");
    c.outputs = get<std::uint32_t>(is, "outputs");
    const auto n_names = get<std::uint16_t>(is, "class count");
    for (std::uint16_t i = 0; i < n_names; ++i) {
        const auto len = get<std::uint16_t>(is, "class name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (is.gcount() != len) throw TruncatedFile("checkpoint truncated in class names");
        ck.class_names.push_back(std::move(name));
    }
    const auto count = get<std::uint64_t>(is, "parameter count");
    const ParamLayout lay(c);
    if (count != lay.total)
        throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                            std::to_string(lay.total));
    ck.params.values.resize(count);
    for (auto& v : ck.params.values) v = get<float>(is, "parameters");
    return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_checkpoint(is);
}

}  // namespace sdp
