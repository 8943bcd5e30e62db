// SPDX-License-Identifier: Apache-2.0
#include "sdp/probe.hpp"

#include <cmath>
#include <numbers>

#include "sdp/error.hpp"
#include "sdp/rng.hpp"

namespace sdp {

namespace {

constexpr double kLayerNormEps = 1e-5;

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using MapVec = Eigen::Map<Vec>;
using CMapVec = Eigen::Map<const Vec>;

CMapMat cmat(const std::vector<double>& v, std::size_t off, std::size_t rows, std::size_t cols) {
    return CMapMat(v.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
CMapVec cvec(const std::vector<double>& v, std::size_t off, std::size_t n) {
    return CMapVec(v.data() + off, static_cast<Eigen::Index>(n));
}
MapMat mmat(std::vector<double>& v, std::size_t off, std::size_t rows, std::size_t cols) {
    return MapMat(v.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapVec mvec(std::vector<double>& v, std::size_t off, std::size_t n) {
    return MapVec(v.data() + off, static_cast<Eigen::Index>(n));
}

void count(FlopCounter* c, std::uint64_t m, std::uint64_t k, std::uint64_t n) {
    if (c) c->flops += 2 * m * k * n;
}

struct LayerNormCache {
    Mat xhat;
    Vec rstd;
};

Mat layer_norm(const Mat& x, const CMapVec& g, const CMapVec& b, LayerNormCache* cache) {
    const auto rows = x.rows();
    const double d = static_cast<double>(x.cols());
    Mat xhat(rows, x.cols());
    Vec rstd(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x.row(r).sum() / d;
        const double var = (x.row(r).array() - mu).square().sum() / d;
        rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        xhat.row(r) = (x.row(r).array() - mu) * rstd(r);
    }
    Mat y = (xhat.array().rowwise() * g.transpose().array()).rowwise() + b.transpose().array();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

// Returns dx and accumulates dg, db.
Mat layer_norm_backward(const Mat& dy, const LayerNormCache& c, const CMapVec& g, MapVec dg, MapVec db) {
    dg += (dy.array() * c.xhat.array()).colwise().sum().transpose().matrix();
    db += dy.colwise().sum().transpose();
    const Mat dxhat = dy.array().rowwise() * g.transpose().array();
    const double d = static_cast<double>(dy.cols());
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / d;
        const double mean_dx = dxhat.row(r).dot(c.xhat.row(r)) / d;
        dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx);
    }
    return dx;
}

void softmax_rows(Mat& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
    }
}

struct LayerCache {
    Mat z_in;
    LayerNormCache ln1;
    Mat y1, q, k, v;
    std::vector<Mat> attn;
    Mat o, z_mid;
    LayerNormCache ln2;
    Mat y2, h1, g;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Mat z_out;
    Vec pooled;
    Vec output;  // probabilities or regression values
};

Mat layer_forward(const Mat& z, const ModelParams& params, const ParamLayout& lay, std::size_t l, LayerCache* cache,
                  std::vector<Mat>* attention, FlopCounter* counter) {
    const auto& cfg = params.config;
    const auto& p = params.values;
    const auto& o = lay.layers[l];
    const std::size_t d = cfg.dim, f = cfg.ffn_dim, dh = cfg.head_dim();
    const auto t = static_cast<std::size_t>(z.rows());

    LayerNormCache ln1;
    Mat y1 = layer_norm(z, cvec(p, o.ln1_g, d), cvec(p, o.ln1_b, d), &ln1);
    Mat q = (y1 * cmat(p, o.wq, d, d)).rowwise() + cvec(p, o.bq, d).transpose();
    Mat k = (y1 * cmat(p, o.wk, d, d)).rowwise() + cvec(p, o.bk, d).transpose();
    Mat v = (y1 * cmat(p, o.wv, d, d)).rowwise() + cvec(p, o.bv, d).transpose();
    count(counter, t, d, 3 * d);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat attn_out(t, d);
    std::vector<Mat> attn(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * dh);
        const auto w = static_cast<Eigen::Index>(dh);
        Mat s = q.middleCols(c0, w) * k.middleCols(c0, w).transpose() * scale;
        count(counter, t, dh, t);
        softmax_rows(s);
        attn_out.middleCols(c0, w) = s * v.middleCols(c0, w);
        count(counter, t, t, dh);
        attn[h] = std::move(s);
    }
    Mat z_mid = z + ((attn_out * cmat(p, o.wo, d, d)).rowwise() + cvec(p, o.bo, d).transpose());
    count(counter, t, d, d);

    LayerNormCache ln2;
    Mat y2 = layer_norm(z_mid, cvec(p, o.ln2_g, d), cvec(p, o.ln2_b, d), &ln2);
    Mat h1 = (y2 * cmat(p, o.w1, d, f)).rowwise() + cvec(p, o.b1, f).transpose();
    count(counter, t, d, f);
    Mat g = h1.unaryExpr([](double x) { return gelu(x); });
    Mat out = z_mid + ((g * cmat(p, o.w2, f, d)).rowwise() + cvec(p, o.b2, d).transpose());
    count(counter, t, f, d);

    if (attention) *attention = attn;
    if (cache) {
        cache->z_in = z;
        cache->ln1 = std::move(ln1);
        cache->y1 = std::move(y1);
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->attn = std::move(attn);
        cache->o = std::move(attn_out);
        cache->z_mid = std::move(z_mid);
        cache->ln2 = std::move(ln2);
        cache->y2 = std::move(y2);
        cache->h1 = std::move(h1);
        cache->g = std::move(g);
    }
    return out;
}

Vec forward(const Mat& tokens, const ModelParams& params, ForwardCache* cache, FlopCounter* counter) {
    const ParamLayout lay(params.config);
    Mat z = embed(tokens, params, counter);
    if (cache) cache->layers.resize(params.config.depth);
    for (std::size_t l = 0; l < params.config.depth; ++l)
        z = layer_forward(z, params, lay, l, cache ? &cache->layers[l] : nullptr, nullptr, counter);
    Vec pooled = z.colwise().sum().transpose() / static_cast<double>(z.rows());
    if (counter) counter->flops += static_cast<std::uint64_t>(z.rows() * z.cols());
    Vec out = head_forward(pooled, params, counter);
    if (cache) {
        cache->z_out = std::move(z);
        cache->pooled = pooled;
        cache->output = out;
    }
    return out;
}

// Accumulates the gradient of one sample into `grad` given dL/d(head pre-activation).
void backward(const Mat& tokens, const ModelParams& params, const ForwardCache& cache, const Vec& d_pre,
              std::vector<double>& grad) {
    const auto& cfg = params.config;
    const auto& p = params.values;
    const ParamLayout lay(cfg);
    const std::size_t d = cfg.dim, f = cfg.ffn_dim, dh = cfg.head_dim();
    const auto t = static_cast<std::size_t>(tokens.rows());

    // head: pre = W z + b, W is outputs x dim
    mmat(grad, lay.w_head, cfg.outputs, d) += d_pre * cache.pooled.transpose();
    mvec(grad, lay.b_head, cfg.outputs) += d_pre;
    const Vec d_pooled = cmat(p, lay.w_head, cfg.outputs, d).transpose() * d_pre;

    // mean pooling
    Mat dz = d_pooled.transpose().replicate(static_cast<Eigen::Index>(t), 1) / static_cast<double>(t);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t li = cfg.depth; li-- > 0;) {
        const auto& o = lay.layers[li];
        const auto& c = cache.layers[li];

        // FFN branch: out = z_mid + G W2 + b2
        mmat(grad, o.w2, f, d) += c.g.transpose() * dz;
        mvec(grad, o.b2, d) += dz.colwise().sum().transpose();
        Mat dg = dz * cmat(p, o.w2, f, d).transpose();
        Mat dh1 = dg.array() * c.h1.unaryExpr([](double x) { return gelu_grad(x); }).array();
        mmat(grad, o.w1, d, f) += c.y2.transpose() * dh1;
        mvec(grad, o.b1, f) += dh1.colwise().sum().transpose();
        Mat dy2 = dh1 * cmat(p, o.w1, d, f).transpose();
        Mat dz_mid = dz + layer_norm_backward(dy2, c.ln2, cvec(p, o.ln2_g, d), mvec(grad, o.ln2_g, d), mvec(grad, o.ln2_b, d));

        // attention branch: z_mid = z_in + O Wo + bo
        mmat(grad, o.wo, d, d) += c.o.transpose() * dz_mid;
        mvec(grad, o.bo, d) += dz_mid.colwise().sum().transpose();
        Mat d_o = dz_mid * cmat(p, o.wo, d, d).transpose();

        Mat dq(t, d), dk(t, d), dv(t, d);
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * dh);
            const auto w = static_cast<Eigen::Index>(dh);
            const Mat& a = c.attn[h];
            const Mat d_oh = d_o.middleCols(c0, w);
            dv.middleCols(c0, w) = a.transpose() * d_oh;
            Mat da = d_oh * c.v.middleCols(c0, w).transpose();
            // softmax backward, row-wise
            Vec rowdot = (da.array() * a.array()).rowwise().sum();
            Mat ds = a.array() * (da.array().colwise() - rowdot.array());
            ds *= scale;
            dq.middleCols(c0, w) = ds * c.k.middleCols(c0, w);
            dk.middleCols(c0, w) = ds.transpose() * c.q.middleCols(c0, w);
        }
        mmat(grad, o.wq, d, d) += c.y1.transpose() * dq;
        mmat(grad, o.wk, d, d) += c.y1.transpose() * dk;
        mmat(grad, o.wv, d, d) += c.y1.transpose() * dv;
        mvec(grad, o.bq, d) += dq.colwise().sum().transpose();
        mvec(grad, o.bk, d) += dk.colwise().sum().transpose();
        mvec(grad, o.bv, d) += dv.colwise().sum().transpose();
        Mat dy1 = dq * cmat(p, o.wq, d, d).transpose() + dk * cmat(p, o.wk, d, d).transpose() +
                  dv * cmat(p, o.wv, d, d).transpose();
        dz = dz_mid + layer_norm_backward(dy1, c.ln1, cvec(p, o.ln1_g, d), mvec(grad, o.ln1_g, d), mvec(grad, o.ln1_b, d));
    }

    // embedding: E = X Wp + bp + Epos[0:t]
    mmat(grad, lay.w_proj, cfg.token_dim, d) += tokens.transpose() * dz;
    mvec(grad, lay.b_proj, d) += dz.colwise().sum().transpose();
    mmat(grad, lay.e_pos, cfg.max_t, d).topRows(static_cast<Eigen::Index>(t)) += dz;
}

}  // namespace

void ModelConfig::validate() const {
    if (depth < 1 || dim < 1 || heads < 1 || ffn_dim < 1 || token_dim < 1 || max_t < 1 || outputs < 1)
        throw InvalidArgument("model config counts must all be >= 1");
    if (dim % heads != 0) throw InvalidArgument("embed dim must be divisible by heads");
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
    cfg.validate();
    std::size_t at = 0;
    auto take = [&at](std::size_t n) {
        const std::size_t o = at;
        at += n;
        return o;
    };
    const std::size_t d = cfg.dim, f = cfg.ffn_dim;
    w_proj = take(cfg.token_dim * d);
    b_proj = take(d);
    e_pos = take(cfg.max_t * d);
    layers.resize(cfg.depth);
    for (auto& l : layers) {
        l.ln1_g = take(d);
        l.ln1_b = take(d);
        l.wq = take(d * d);
        l.bq = take(d);
        l.wk = take(d * d);
        l.bk = take(d);
        l.wv = take(d * d);
        l.bv = take(d);
        l.wo = take(d * d);
        l.bo = take(d);
        l.ln2_g = take(d);
        l.ln2_b = take(d);
        l.w1 = take(d * f);
        l.b1 = take(f);
        l.w2 = take(f * d);
        l.b2 = take(d);
    }
    w_head = take(cfg.outputs * d);
    b_head = take(cfg.outputs);
    total = at;
}

ModelParams::ModelParams(const ModelConfig& cfg) : config(cfg), values(ParamLayout(cfg).total, 0.0) {}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams params(cfg);
    const ParamLayout lay(cfg);
    auto& v = params.values;
    Rng rng(seed);
    auto fill_uniform = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) v[off + i] = rng.uniform(-bound, bound);
    };
    const std::size_t d = cfg.dim, f = cfg.ffn_dim;
    fill_uniform(lay.w_proj, cfg.token_dim * d, cfg.token_dim);
    for (std::size_t i = 0; i < cfg.max_t * d; ++i) v[lay.e_pos + i] = 0.02 * rng.normal();
    for (const auto& l : lay.layers) {
        for (std::size_t i = 0; i < d; ++i) {
            v[l.ln1_g + i] = 1.0;
            v[l.ln2_g + i] = 1.0;
        }
        fill_uniform(l.wq, d * d, d);
        fill_uniform(l.wk, d * d, d);
        fill_uniform(l.wv, d * d, d);
        fill_uniform(l.wo, d * d, d);
        fill_uniform(l.w1, d * f, d);
        fill_uniform(l.w2, f * d, f);
    }
    fill_uniform(lay.w_head, cfg.outputs * d, d);
    return params;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

Mat tokenize(const CanonicalTensor& tensor) {
    if (tensor.values.size() != tensor.a * tensor.k * tensor.t) throw ShapeMismatch("tensor payload does not match shape");
    const std::size_t ak = tensor.a * tensor.k;
    Mat x(static_cast<Eigen::Index>(tensor.t), static_cast<Eigen::Index>(2 * ak));
    for (std::size_t a = 0; a < tensor.a; ++a)
        for (std::size_t k = 0; k < tensor.k; ++k) {
            const auto col = static_cast<Eigen::Index>(a * tensor.k + k);
            for (std::size_t t = 0; t < tensor.t; ++t) {
                const auto& v = tensor.at(a, k, t);
                x(static_cast<Eigen::Index>(t), col) = v.real();
                x(static_cast<Eigen::Index>(t), col + static_cast<Eigen::Index>(ak)) = v.imag();
            }
        }
    return x;
}

Mat embed(const Mat& tokens, const ModelParams& params, FlopCounter* counter) {
    const auto& cfg = params.config;
    const auto t = static_cast<std::size_t>(tokens.rows());
    if (t > cfg.max_t)
        throw SequenceTooLong("sequence of " + std::to_string(t) + " tokens exceeds max_t " + std::to_string(cfg.max_t));
    if (static_cast<std::size_t>(tokens.cols()) != cfg.token_dim)
        throw ShapeMismatch("token width " + std::to_string(tokens.cols()) + " does not match model token_dim " +
                            std::to_string(cfg.token_dim));
    const ParamLayout lay(cfg);
    const auto& p = params.values;
    Mat e = (tokens * cmat(p, lay.w_proj, cfg.token_dim, cfg.dim)).rowwise() + cvec(p, lay.b_proj, cfg.dim).transpose();
    count(counter, t, cfg.token_dim, cfg.dim);
    e += cmat(p, lay.e_pos, cfg.max_t, cfg.dim).topRows(static_cast<Eigen::Index>(t));
    return e;
}

Mat encoder_layer(const Mat& z, const ModelParams& params, std::size_t layer, std::vector<Mat>* attention,
                  FlopCounter* counter) {
    const ParamLayout lay(params.config);
    if (layer >= lay.layers.size()) throw InvalidArgument("layer index out of range");
    if (static_cast<std::size_t>(z.cols()) != params.config.dim) throw ShapeMismatch("encoder input width mismatch");
    return layer_forward(z, params, lay, layer, nullptr, attention, counter);
}

Vec backbone_forward(const Mat& tokens, const ModelParams& params, FlopCounter* counter) {
    const ParamLayout lay(params.config);
    Mat z = embed(tokens, params, counter);
    for (std::size_t l = 0; l < params.config.depth; ++l) z = layer_forward(z, params, lay, l, nullptr, nullptr, counter);
    if (counter) counter->flops += static_cast<std::uint64_t>(z.rows() * z.cols());
    return z.colwise().sum().transpose() / static_cast<double>(z.rows());
}

Vec softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    Vec e = (logits.array() - m).exp();
    return e / e.sum();
}

Vec head_forward(const Vec& z, const ModelParams& params, FlopCounter* counter) {
    const auto& cfg = params.config;
    const ParamLayout lay(cfg);
    const auto& p = params.values;
    Vec pre = cmat(p, lay.w_head, cfg.outputs, cfg.dim) * z + cvec(p, lay.b_head, cfg.outputs);
    count(counter, 1, cfg.dim, cfg.outputs);
    return cfg.task == TaskKind::classification ? softmax(pre) : pre;
}

Vec predict(const Mat& tokens, const ModelParams& params, FlopCounter* counter) {
    return forward(tokens, params, nullptr, counter);
}

double cross_entropy(const std::vector<Vec>& probs, std::span<const int> labels) {
    if (probs.size() != labels.size() || probs.empty()) throw InvalidArgument("cross_entropy batch size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double pt = probs[i](labels[i]);
        total += -std::log(std::max(pt, 1e-300));
    }
    return total / static_cast<double>(probs.size());
}

double mse(const std::vector<Vec>& preds, const std::vector<Vec>& targets) {
    if (preds.size() != targets.size() || preds.empty()) throw InvalidArgument("mse batch size mismatch");
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        total += (preds[i] - targets[i]).squaredNorm();
        n += static_cast<std::size_t>(preds[i].size());
    }
    return total / static_cast<double>(n);
}

double batch_loss(const ModelParams& params, std::span<const Example* const> batch) {
    std::vector<Vec> outs;
    outs.reserve(batch.size());
    for (const auto* ex : batch) outs.push_back(predict(ex->tokens, params));
    if (params.config.task == TaskKind::classification) {
        std::vector<int> labels;
        for (const auto* ex : batch) labels.push_back(ex->label);
        return cross_entropy(outs, labels);
    }
    std::vector<Vec> targets;
    for (const auto* ex : batch) targets.push_back(ex->target);
    return mse(outs, targets);
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example* const> batch) {
    if (batch.empty()) throw InvalidArgument("empty batch");
    const auto& cfg = params.config;
    LossAndGrad res;
    res.grad.assign(params.values.size(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto* ex : batch) {
        ForwardCache cache;
        forward(ex->tokens, params, &cache, nullptr);
        Vec d_pre;
        if (cfg.task == TaskKind::classification) {
            const double pt = cache.output(ex->label);
            res.loss += -std::log(std::max(pt, 1e-300)) * inv_b;
            d_pre = cache.output;
            d_pre(ex->label) -= 1.0;
            d_pre *= inv_b;
        } else {
            const Vec diff = cache.output - ex->target;
            const double n = static_cast<double>(diff.size());
            res.loss += diff.squaredNorm() / n * inv_b;
            d_pre = 2.0 * diff / n * inv_b;
        }
        backward(ex->tokens, params, cache, d_pre, res.grad);
    }
    return res;
}

std::uint64_t affine_flops(std::size_t t, std::size_t in, std::size_t out) {
    return 2ULL * t * in * out;
}

std::uint64_t flops_estimate(const ModelConfig& cfg, std::size_t t) {
    cfg.validate();
    const std::uint64_t d = cfg.dim, tt = t;
    const std::uint64_t embedding = affine_flops(t, cfg.token_dim, cfg.dim);
    const std::uint64_t projections = 4 * affine_flops(t, cfg.dim, cfg.dim);  // q, k, v, out
    const std::uint64_t attention = 2 * (2 * tt * tt * d);                   // scores + weighted sum, all heads
    const std::uint64_t ffn = affine_flops(t, cfg.dim, cfg.ffn_dim) + affine_flops(t, cfg.ffn_dim, cfg.dim);
    const std::uint64_t pooling = tt * d;
    const std::uint64_t head = affine_flops(1, cfg.dim, cfg.outputs);
    return embedding + cfg.depth * (projections + attention + ffn) + pooling + head;
}

}  // namespace sdp
