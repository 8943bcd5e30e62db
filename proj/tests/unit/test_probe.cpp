#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdp/error.hpp"
#include "sdp/probe.hpp"
#include "sdp/train.hpp"

using namespace sdp;

namespace {

ModelConfig tiny(std::size_t token_dim = 6, std::size_t outputs = 3) {
    ModelConfig c;
    c.depth = 1;
    c.dim = 8;
    c.heads = 2;
    c.ffn_dim = 16;
    c.token_dim = token_dim;
    c.max_t = 16;
    c.outputs = outputs;
    return c;
}

Mat random_tokens(Rng& rng, std::size_t t, std::size_t d) {
    Mat m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

/// Zero the value/output projections and the feed-forward block of every layer.
void zero_residual_branches(ModelParams& p) {
    const auto lay = p.layout();
    const auto& c = p.config;
    auto zero = [&](std::size_t off, std::size_t n) { std::fill_n(p.values.begin() + off, n, 0.0); };
    for (const auto& l : lay.layers) {
        zero(l.wv, c.dim * c.dim);
        zero(l.bv, c.dim);
        zero(l.wo, c.dim * c.dim);
        zero(l.bo, c.dim);
        zero(l.w1, c.dim * c.ffn_dim);
        zero(l.b1, c.ffn_dim);
        zero(l.w2, c.ffn_dim * c.dim);
        zero(l.b2, c.dim);
    }
}

}  // namespace

TEST_CASE("tokenize: real parts then imaginary parts per time step") {
    CanonicalTensor t(1, 2, 3);
    for (std::size_t ti = 0; ti < 3; ++ti) {
        t.at(0, 0, ti) = {1, 2};
        t.at(0, 1, ti) = {3, 4};
    }
    const Mat m = tokenize(t);
    REQUIRE(m.rows() == 3);
    REQUIRE(m.cols() == 4);
    for (Eigen::Index r = 0; r < 3; ++r) {
        CHECK(m(r, 0) == 1);
        CHECK(m(r, 1) == 3);
        CHECK(m(r, 2) == 2);
        CHECK(m(r, 3) == 4);
    }
    CHECK(tokenize(CanonicalTensor(2, 3, 5)).isZero());
}

TEST_CASE("tokenize: permuting time permutes rows") {
    Rng rng(1);
    CanonicalTensor t(2, 3, 4);
    for (auto& v : t.values) v = {float(rng.normal()), float(rng.normal())};
    CanonicalTensor p = t;
    const std::size_t perm[] = {2, 0, 3, 1};
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < 4; ++i) p.at(a, k, i) = t.at(a, k, perm[i]);
    const Mat mt = tokenize(t), mp = tokenize(p);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mp.row(Eigen::Index(i)) == mt.row(Eigen::Index(perm[i])));
}

TEST_CASE("embed: additive and linear structure") {
    auto cfg = tiny(8);
    ModelParams p = init_params(cfg, 3);
    const auto lay = p.layout();
    Mat zero = Mat::Zero(5, 8);
    const Mat e0 = embed(zero, p);
    for (Eigen::Index r = 0; r < 5; ++r)
        for (Eigen::Index c = 0; c < 8; ++c) CHECK(e0(r, c) == p.values[lay.e_pos + r * 8 + c]);

    // E_pos = 0, W_proj = I -> identity
    std::fill_n(p.values.begin() + lay.e_pos, cfg.max_t * cfg.dim, 0.0);
    std::fill_n(p.values.begin() + lay.w_proj, 64, 0.0);
    for (int i = 0; i < 8; ++i) p.values[lay.w_proj + i * 8 + i] = 1.0;
    Rng rng(2);
    const Mat x = random_tokens(rng, 5, 8);
    CHECK((embed(x, p) - x).cwiseAbs().maxCoeff() == 0.0);

    // linearity with E_pos = 0
    p = init_params(cfg, 3);
    std::fill_n(p.values.begin() + lay.e_pos, cfg.max_t * cfg.dim, 0.0);
    CHECK((embed(2.0 * x, p) - 2.0 * embed(x, p)).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(embed(Mat::Zero(17, 8), p), SequenceTooLong);
}

TEST_CASE("encoder_layer: zero residual branches give the identity") {
    ModelParams p = init_params(tiny(), 4);
    zero_residual_branches(p);
    Rng rng(5);
    const Mat z = random_tokens(rng, 6, 8);
    CHECK((encoder_layer(z, p, 0) - z).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("encoder_layer: attention rows are stochastic; one token attends to itself") {
    ModelParams p = init_params(tiny(), 6);
    Rng rng(7);
    std::vector<Mat> att;
    encoder_layer(random_tokens(rng, 9, 8), p, 0, &att);
    REQUIRE(att.size() == 2);
    for (const auto& a : att) {
        CHECK(a.rows() == 9);
        CHECK(a.cols() == 9);
        for (Eigen::Index r = 0; r < 9; ++r) CHECK(std::abs(a.row(r).sum() - 1.0) <= 1e-6);
        CHECK(a.minCoeff() >= 0.0);
    }
    encoder_layer(random_tokens(rng, 1, 8), p, 0, &att);
    for (const auto& a : att) CHECK(a(0, 0) == 1.0);
}

TEST_CASE("backbone_forward: pooled positional rows and order sensitivity") {
    auto cfg = tiny(6);
    cfg.depth = 2;
    ModelParams p(cfg);
    const auto lay = p.layout();
    Rng rng(8);
    for (std::size_t i = 0; i < cfg.max_t * cfg.dim; ++i) p.values[lay.e_pos + i] = rng.normal();
    const Vec z = backbone_forward(Mat::Zero(4, 6), p);
    for (std::size_t c = 0; c < 8; ++c) {
        double mean = 0;
        for (std::size_t r = 0; r < 4; ++r) mean += p.values[lay.e_pos + r * 8 + c];
        CHECK(z(Eigen::Index(c)) == doctest::Approx(mean / 4).epsilon(1e-12));
    }

    const ModelParams q = init_params(cfg, 9);
    const Mat x = random_tokens(rng, 4, 6);
    Mat swapped = x;
    swapped.row(0) = x.row(3);
    swapped.row(3) = x.row(0);
    CHECK((backbone_forward(x, q) - backbone_forward(swapped, q)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("head_forward: uniform, shift-invariant, regression identity") {
    auto cfg = tiny(6, 4);
    ModelParams p(cfg);
    Rng rng(10);
    Vec z(8);
    for (int i = 0; i < 8; ++i) z(i) = rng.normal();
    const Vec probs = head_forward(z, p);
    for (int i = 0; i < 4; ++i) CHECK(probs(i) == doctest::Approx(0.25).epsilon(1e-15));

    Vec logits(5);
    logits << 0.3, -1.0, 2.0, 0.0, 5.0;
    const Vec a = softmax(logits);
    const Vec b = softmax(logits.array() + 123.0);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(a.sum() - 1.0) <= 1e-12);
    CHECK(a.minCoeff() > 0.0);

    auto rc = tiny(6, 8);
    rc.task = TaskKind::regression;
    ModelParams r(rc);
    const auto lay = r.layout();
    for (int i = 0; i < 8; ++i) r.values[lay.w_head + i * 8 + i] = 1.0;
    CHECK((head_forward(z, r) - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("losses") {
    const std::vector<Vec> uniform{Vec::Constant(3, 1.0 / 3), Vec::Constant(3, 1.0 / 3)};
    const int labels[] = {0, 2};
    CHECK(cross_entropy(uniform, labels) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    Vec sharp(3);
    sharp << 1e-12, 1.0 - 2e-12, 1e-12;
    const int one[] = {1};
    CHECK(cross_entropy({sharp}, one) >= 0.0);
    CHECK(cross_entropy({sharp}, one) < 1e-11);
    Vec v(2);
    v << 1, 2;
    CHECK(mse({v}, {v}) == 0.0);
    Vec w(2);
    w << 1, 4;
    CHECK(mse({v}, {w}) == doctest::Approx(2.0));
}

TEST_CASE("adamw_step: hand-computed cases") {
    std::vector<double> p{0.0};
    std::vector<double> g{1.0};
    AdamState s;
    adamw_step(p, g, s, 0.1, 0.0);
    CHECK(p[0] == doctest::Approx(-0.0999999990).epsilon(1e-12));
    CHECK(std::abs(p[0] - (-0.1 / (1 + 1e-8))) < 1e-17);

    p = {0.75};
    g = {0.0};
    AdamState s2;
    adamw_step(p, g, s2, 0.1, 0.0);
    CHECK(p[0] == 0.75);

    p = {1.0};
    AdamState s3;
    adamw_step(p, g, s3, 0.1, 0.1);
    CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("cosine_lr: endpoints, midpoint, monotone") {
    CHECK(cosine_lr(0, 30, 1e-3, 1e-5) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(cosine_lr(30, 30, 1e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(cosine_lr(15, 30, 1e-3, 1e-5) == doctest::Approx((1e-3 + 1e-5) / 2).epsilon(1e-12));
    for (std::size_t e = 1; e <= 30; ++e) CHECK(cosine_lr(e, 30, 1e-3, 1e-5) <= cosine_lr(e - 1, 30, 1e-3, 1e-5));
}

TEST_CASE("init_params: seeded and structured") {
    const auto cfg = tiny();
    const auto a = init_params(cfg, 992);
    const auto b = init_params(cfg, 992);
    const auto c = init_params(cfg, 863);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    const auto lay = a.layout();
    CHECK(lay.total == a.values.size());
    for (std::size_t i = 0; i < cfg.dim; ++i) {
        CHECK(a.values[lay.layers[0].ln1_g + i] == 1.0);
        CHECK(a.values[lay.layers[0].ln1_b + i] == 0.0);
        CHECK(a.values[lay.b_proj + i] == 0.0);
    }
    const double bound = 1.0 / std::sqrt(double(cfg.token_dim));
    for (std::size_t i = 0; i < cfg.token_dim * cfg.dim; ++i) CHECK(std::abs(a.values[lay.w_proj + i]) <= bound);
}

TEST_CASE("ModelConfig validation") {
    auto c = tiny();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = tiny();
    c.depth = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("flops: affine count and quadratic attention") {
    CHECK(affine_flops(1, 4, 2) == 16);
    const auto cfg = tiny(6);
    CHECK(flops_estimate(cfg, 8) > 2 * flops_estimate(cfg, 4));
    ModelConfig def;
    def.token_dim = 180;
    CHECK(flops_estimate(def, 500) == 398624256ULL);
}

TEST_CASE("flops: estimator equals the instrumented forward counter") {
    Rng rng(12);
    for (auto [depth, dim, heads, ffn, td, t, out] :
         {std::tuple{1, 8, 2, 16, 6, 4, 3}, std::tuple{2, 12, 3, 20, 10, 7, 2}, std::tuple{3, 16, 4, 8, 4, 1, 5}}) {
        ModelConfig c;
        c.depth = depth;
        c.dim = dim;
        c.heads = heads;
        c.ffn_dim = ffn;
        c.token_dim = td;
        c.max_t = 16;
        c.outputs = out;
        const auto p = init_params(c, 1);
        FlopCounter counter;
        predict(random_tokens(rng, t, td), p, &counter);
        CHECK(counter.flops == flops_estimate(c, t));
    }
}

TEST_CASE("grad_check: tiny configs pass in double precision") {
    CHECK(grad_check(tiny()) <= 1e-4);
    auto reg = tiny(6, 2);
    reg.task = TaskKind::regression;
    CHECK(grad_check(reg) <= 1e-4);
    auto deep = tiny(4, 2);
    deep.depth = 2;
    deep.heads = 4;
    CHECK(grad_check(deep, {.t = 5, .batch = 2, .max_coordinates = 300, .step = 1e-4, .seed = 3}) <= 1e-4);
}

TEST_CASE("key biases get a zero gradient: softmax ignores a per-query shift") {
    Rng rng(4);
    const auto cfg = tiny();
    auto p = init_params(cfg, 2);
    for (auto& v : p.values) v += 0.05 * rng.normal();
    Example ex;
    ex.tokens = random_tokens(rng, 5, cfg.token_dim);
    ex.label = 1;
    const Example* batch[] = {&ex};
    const auto lg = loss_and_grad(p, batch);
    const auto lay = p.layout();
    for (std::size_t i = 0; i < cfg.dim; ++i) CHECK(std::abs(lg.grad[lay.layers[0].bk + i]) < 1e-15);
    CHECK(grad_check(cfg, {.t = 5, .batch = 1, .max_coordinates = 400, .step = 1e-4, .seed = 9}) <= 1e-4);
}

TEST_CASE("grad_check: corrupted backward is caught") {
    const GradientFn corrupted = [](const ModelParams& p, std::span<const Example* const> batch) {
        auto lg = loss_and_grad(p, batch);
        const auto lay = p.layout();
        // drop the layer-norm offset gradient of the first layer
        for (std::size_t i = 0; i < p.config.dim; ++i) lg.grad[lay.layers[0].ln1_b + i] = 0.0;
        return lg;
    };
    CHECK(grad_check(tiny(), {}, corrupted) > 1e-4);
}

TEST_CASE("zero-loss regression point has zero gradient") {
    auto cfg = tiny(6, 2);
    cfg.task = TaskKind::regression;
    const auto p = init_params(cfg, 5);
    Rng rng(6);
    Example ex;
    ex.tokens = random_tokens(rng, 4, 6);
    ex.target = predict(ex.tokens, p);
    const Example* batch[] = {&ex};
    const auto lg = loss_and_grad(p, batch);
    CHECK(lg.loss == 0.0);
    for (double g : lg.grad) CHECK(std::abs(g) <= 1e-10);
}

namespace {
Dataset toy_dataset(std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.class_names = {"Still", "Moving"};
    auto make = [&](int label) {
        Example ex;
        ex.label = label;
        ex.tokens = Mat(6, 4);
        for (Eigen::Index t = 0; t < 6; ++t)
            for (Eigen::Index j = 0; j < 4; ++j)
                ex.tokens(t, j) = (label ? std::cos(1.3 * double(t) + double(j)) : 0.5) + 0.1 * rng.normal();
        return ex;
    };
    for (std::size_t i = 0; i < per_class; ++i)
        for (int c = 0; c < 2; ++c) d.train.push_back(make(c));
    for (int c = 0; c < 2; ++c) d.val.push_back(make(c));
    return d;
}
}  // namespace

TEST_CASE("train: separable toy task reaches full train accuracy; runs are reproducible") {
    const auto data = toy_dataset(8, 1);
    auto cfg = tiny(4, 2);
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 4;
    tc.lr_max = 3e-3;
    tc.seed = 992;
    const auto a = train(data, cfg, tc);
    const auto b = train(data, cfg, tc);
    REQUIRE(a.log.size() == 50);
    for (std::size_t e = 0; e < 50; ++e) {
        CHECK(a.log[e].train_loss == b.log[e].train_loss);
        CHECK(a.log[e].val_metric == b.log[e].val_metric);
    }
    CHECK(a.params.values == b.params.values);
    CHECK(validation_metric(a.params, data.train) == 1.0);
    CHECK(a.log[a.best_epoch].val_metric == 1.0);
    // ties keep the earliest epoch
    for (std::size_t e = 0; e < a.best_epoch; ++e) CHECK(a.log[e].val_metric < a.log[a.best_epoch].val_metric);

    std::ostringstream la, lb;
    write_train_log(a.log, la);
    write_train_log(b.log, lb);
    CHECK(la.str() == lb.str());
    CHECK(la.str().rfind("epoch\tlr\ttrain_loss\tval_metric\n", 0) == 0);
}

TEST_CASE("train: errors") {
    auto data = toy_dataset(2, 2);
    const auto cfg = tiny(4, 2);
    TrainConfig tc;
    tc.epochs = 1;
    Dataset empty = data;
    empty.train.clear();
    CHECK_THROWS_AS(train(empty, cfg, tc), EmptySplit);
    empty = data;
    empty.val.clear();
    CHECK_THROWS_AS(train(empty, cfg, tc), EmptySplit);
    data.train[0].tokens(0, 0) = std::nan("");
    CHECK_THROWS_AS(train(data, cfg, tc), NonFiniteLoss);
    tc.lr_min = 1.0;
    CHECK_THROWS_AS(train(toy_dataset(2, 2), cfg, tc), InvalidArgument);
}

TEST_CASE("checkpoint round-trip") {
    const auto cfg = tiny(6, 3);
    const auto p = init_params(cfg, 11);
    const std::vector<std::string> names{"Walk", "Sit", "Fall"};
    std::ostringstream os;
    write_checkpoint(p, names, os);
    std::istringstream is(os.str());
    const auto ck = read_checkpoint(is);
    CHECK(ck.class_names == names);
    CHECK(ck.params.config.depth == 1);
    CHECK(ck.params.config.token_dim == 6);
    REQUIRE(ck.params.values.size() == p.values.size());
    for (std::size_t i = 0; i < p.values.size(); ++i) CHECK(ck.params.values[i] == double(float(p.values[i])));
    std::ostringstream again;
    write_checkpoint(ck.params, ck.class_names, again);
    CHECK(again.str() == os.str());

    auto bad = os.str();
    bad[0] = 'X';
    std::istringstream bm(bad);
    CHECK_THROWS_AS(read_checkpoint(bm), BadMagic);
    std::istringstream tr(os.str().substr(0, os.str().size() - 3));
    CHECK_THROWS_AS(read_checkpoint(tr), TruncatedFile);
}
