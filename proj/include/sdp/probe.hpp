// SPDX-License-Identifier: Apache-2.0
//
// Fixed Transformer probe: token embedding, pre-norm encoder stack,
// global average pooling and a linear task head. Everything runs in double
// precision with an explicit backward pass.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdp/canonicalizer.hpp"
#include "sdp/trace_io.hpp"

namespace sdp {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ModelConfig {
    std::size_t depth = 4;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t ffn_dim = 128;
    std::size_t token_dim = 0;  // 2 * A * K
    std::size_t max_t = 500;
    std::size_t outputs = 2;    // classes, or regression width
    TaskKind task = TaskKind::classification;

    void validate() const;
    std::size_t head_dim() const { return dim / heads; }
};

/// Offsets of every tensor inside the flat parameter vector. Matrices are
/// row-major; the order below is the checkpoint order.
struct LayerOffsets {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct ParamLayout {
    std::size_t w_proj = 0, b_proj = 0, e_pos = 0;
    std::vector<LayerOffsets> layers;
    std::size_t w_head = 0, b_head = 0;  // w_head is outputs x dim
    std::size_t total = 0;

    explicit ParamLayout(const ModelConfig& cfg);
};

struct ModelParams {
    ModelConfig config;
    std::vector<double> values;

    ModelParams() = default;
    explicit ModelParams(const ModelConfig& cfg);  // all zeros

    ParamLayout layout() const { return ParamLayout(config); }
};

/// Seeded initialisation: affine weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases 0, positional table N(0, 0.02^2), layer-norm scale 1 offset 0.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Counts multiply-adds (2 FLOPs each) of matrix products plus the
/// pooling additions. Softmax, layer norm, GELU and bias adds are not counted.
struct FlopCounter {
    std::uint64_t flops = 0;
};

/// Row t holds the A*K values at time t: all real parts, then all imaginary parts.
Mat tokenize(const CanonicalTensor& tensor);

Mat embed(const Mat& tokens, const ModelParams& params, FlopCounter* counter = nullptr);

/// Forward of one encoder layer. When `attention` is non-null it receives
/// the per-head attention matrices.
Mat encoder_layer(const Mat& z, const ModelParams& params, std::size_t layer, std::vector<Mat>* attention = nullptr,
                  FlopCounter* counter = nullptr);

Vec backbone_forward(const Mat& tokens, const ModelParams& params, FlopCounter* counter = nullptr);

/// Softmax probabilities (classification) or the linear output (regression).
Vec head_forward(const Vec& z, const ModelParams& params, FlopCounter* counter = nullptr);

Vec softmax(const Vec& logits);

/// Mean cross-entropy over a batch of probability rows.
double cross_entropy(const std::vector<Vec>& probs, std::span<const int> labels);
double mse(const std::vector<Vec>& preds, const std::vector<Vec>& targets);

/// Full forward for one sample.
Vec predict(const Mat& tokens, const ModelParams& params, FlopCounter* counter = nullptr);

struct Example {
    Mat tokens;
    int label = 0;
    Vec target;  // regression only
};

/// Mean loss over the batch and its gradient w.r.t. every parameter
/// (same layout as params.values).
struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example* const> batch);
double batch_loss(const ModelParams& params, std::span<const Example* const> batch);

// FLOPs accounting (one multiply-add = 2 FLOPs).
std::uint64_t affine_flops(std::size_t t, std::size_t in, std::size_t out);
std::uint64_t flops_estimate(const ModelConfig& cfg, std::size_t t);

double gelu(double x);
double gelu_grad(double x);

}  // namespace sdp
