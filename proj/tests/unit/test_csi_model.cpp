#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "sdp/csi_model.hpp"
#include "sdp/error.hpp"

using namespace sdp;
using testutil::profile;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double x) { return std::remainder(x, kTwoPi); }
}  // namespace

TEST_CASE("synth_channel: static unit path is all ones") {
    const auto prof = profile(16);
    const PathParams p;
    for (double t : {0.0, 0.37, 12.0}) {
        const auto h = synth_channel(std::span(&p, 1), prof, t);
        for (const auto& v : h) {
            CHECK(v.real() == 1.0);
            CHECK(v.imag() == 0.0);
        }
    }
}

TEST_CASE("synth_channel: 1 us delay at +250 kHz gives -j") {
    DeviceProfile prof;
    prof.subcarrier_offsets = {-250e3, 0.0, 250e3};
    PathParams p;
    p.delay = 1e-6;
    const auto h = synth_channel(std::span(&p, 1), prof, 0.0);
    CHECK(std::abs(h[2] - cplx(0.0, -1.0)) < 1e-12);
    CHECK(std::abs(std::arg(h[2]) + std::numbers::pi / 2) < 1e-12);
    CHECK(std::abs(h[0] - cplx(0.0, 1.0)) < 1e-12);
}

TEST_CASE("synth_channel: two half paths equal one unit path") {
    const auto prof = profile(30);
    PathParams one;
    one.delay = 35e-9;
    one.doppler = 7.0;
    PathParams half = one;
    half.amplitude = 0.5;
    const std::vector<PathParams> two{half, half};
    for (double t : {0.0, 0.25, 1.3}) {
        const auto a = synth_channel(std::span(&one, 1), prof, t);
        const auto b = synth_channel(two, prof, t);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
    }
}

TEST_CASE("synth_channel: linear over concatenated path lists") {
    const auto prof = profile(56, 312.5e3);
    Rng rng(5);
    std::vector<PathParams> a(3), b(2);
    for (auto* set : {&a, &b}) {
        for (auto& p : *set) {
            p.amplitude = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            p.delay = rng.uniform(0, 300e-9);
            p.doppler = rng.uniform(-20, 20);
            p.delay_rate = rng.uniform(0, 1e-8);
            p.doppler_rate = rng.uniform(-1, 1);
        }
    }
    std::vector<PathParams> all = a;
    all.insert(all.end(), b.begin(), b.end());
    const double t = 0.83;
    const auto ha = synth_channel(a, prof, t);
    const auto hb = synth_channel(b, prof, t);
    const auto hall = synth_channel(all, prof, t);
    for (std::size_t k = 0; k < hall.size(); ++k) CHECK(std::abs(hall[k] - (ha[k] + hb[k])) <= 1e-12);
}

TEST_CASE("synth_channel: activity interval gates a path") {
    const auto prof = profile(4);
    PathParams p;
    p.active_from = 1.0;
    p.active_until = 2.0;
    CHECK(std::abs(synth_channel(std::span(&p, 1), prof, 0.5)[0]) == 0.0);
    CHECK(std::abs(synth_channel(std::span(&p, 1), prof, 1.5)[0]) == doctest::Approx(1.0));
    CHECK(std::abs(synth_channel(std::span(&p, 1), prof, 2.0)[0]) == 0.0);
}

TEST_CASE("apply_impairments: identity when impairments vanish") {
    const auto prof = profile(30);
    PathParams p;
    p.delay = 80e-9;
    const auto h = synth_channel(std::span(&p, 1), prof, 0.0);
    Rng rng(1);
    const auto out = apply_impairments(h, ImpairmentSet{}, prof, 0.42, rng);
    for (std::size_t k = 0; k < h.size(); ++k) CHECK(out[k] == h[k]);
}

TEST_CASE("apply_impairments: 50 ns STO is a pure linear phase") {
    const auto prof = profile(30);
    const std::vector<cplx> ones(prof.k_raw(), cplx{1.0, 0.0});
    ImpairmentSet imp;
    imp.sto = 50e-9;
    Rng rng(1);
    const auto out = apply_impairments(ones, imp, prof, 3.21, rng);
    const double slope = -kTwoPi * 5e-8;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double expected = slope * prof.subcarrier_offsets[k];
        CHECK(std::abs(wrap(std::arg(out[k]) - expected)) <= 1e-12);
        CHECK(std::abs(out[k]) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("apply_impairments: 100 Hz CFO over 10 ms is one full cycle") {
    const auto prof = profile(30);
    const std::vector<cplx> ones(prof.k_raw(), cplx{1.0, 0.0});
    ImpairmentSet imp;
    imp.cfo = 100.0;
    Rng rng(1);
    const auto out = apply_impairments(ones, imp, prof, 0.01, rng);
    for (const auto& v : out) CHECK(std::abs(v - cplx{1.0, 0.0}) <= 1e-12);
}

TEST_CASE("apply_impairments: phase exactness over a grid of impairments") {
    const auto prof = profile(56, 312.5e3);
    PathParams p;
    p.delay = 30e-9;
    p.doppler = 3.0;
    for (double sto : {10e-9, 50e-9, 200e-9})
        for (double cfo : {0.0, 25.0, 100.0})
            for (double beta : {0.0, 0.3, 1.0}) {
                const double t = 0.37;
                const auto h = synth_channel(std::span(&p, 1), prof, t);
                Rng rng(9);
                const auto out = apply_impairments(h, {sto, 0.0, cfo, beta, 0.0}, prof, t, rng);
                for (std::size_t k = 0; k < h.size(); ++k) {
                    const double expected = -kTwoPi * (prof.subcarrier_offsets[k] * sto + cfo * t) - beta;
                    CHECK(std::abs(wrap(std::arg(out[k] / h[k]) - expected)) <= 1e-12);
                }
            }
}

TEST_CASE("apply_impairments: noise has the configured power") {
    const auto prof = profile(64);
    const std::vector<cplx> zeros(prof.k_raw());
    ImpairmentSet imp;
    imp.noise_std = 0.5;
    Rng rng(77);
    double power = 0.0, mean_re = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        for (const auto& v : apply_impairments(zeros, imp, prof, 0.0, rng)) {
            power += std::norm(v);
            mean_re += v.real();
        }
    }
    const double n = reps * 64.0;
    CHECK(power / n == doctest::Approx(0.25).epsilon(0.03));
    CHECK(std::abs(mean_re / n) < 0.01);
}

TEST_CASE("generate_stream: frame count is floor(duration * rate)") {
    const auto prof = profile(8);
    const PathParams p;
    CHECK(generate_stream(std::span(&p, 1), prof, {}, 5.0, 1).frames.size() == 500);
    CHECK(generate_stream(std::span(&p, 1), prof, {}, 0.64, 1).frames.size() == 64);
    CHECK(generate_stream(std::span(&p, 1), prof, {}, 0.005, 1).frames.size() == 0);
    CHECK(generate_stream(std::span(&p, 1), prof, {}, 1.239, 1).frames.size() == 123);
    CHECK(frame_count(0.29, 100.0) == 29);  // 0.29 * 100 = 28.999999999999996
    CHECK(frame_count(25.0, 100.0) == 2500);
}

TEST_CASE("generate_stream: timestamps, shape and determinism") {
    Scene scene;
    scene.profile = profile(20, 312.5e3, 2, 3);
    PathParams p;
    p.doppler = 5;
    scene.paths = {p};
    scene.impairments = {40e-9, 20e-9, 10.0, 0.2, 0.05};
    scene.duration = 0.5;
    scene.seed = 992;
    const auto a = generate_stream(scene);
    const auto b = generate_stream(scene);
    REQUIRE(a.frames.size() == 50);
    for (std::size_t n = 0; n < a.frames.size(); ++n) {
        CHECK(a.frames[n].timestamp == static_cast<double>(n) / 100.0);
        CHECK(a.frames[n].values.size() == 6 * 20);
        CHECK(a.frames[n].values == b.frames[n].values);
        if (n) CHECK(a.frames[n].timestamp > a.frames[n - 1].timestamp);
    }
    scene.seed = 993;
    const auto c = generate_stream(scene);
    CHECK(c.frames[0].values != a.frames[0].values);
}

TEST_CASE("generate_stream: values are representable as f32") {
    Scene scene;
    scene.profile = profile(10);
    scene.paths = {PathParams{}};
    scene.impairments.noise_std = 0.1;
    scene.duration = 0.1;
    const auto s = generate_stream(scene);
    for (const auto& f : s.frames)
        for (const auto& v : f.values) {
            CHECK(static_cast<double>(static_cast<float>(v.real())) == v.real());
            CHECK(static_cast<double>(static_cast<float>(v.imag())) == v.imag());
        }
}

TEST_CASE("generate_stream: per-pair paths and impairments") {
    Scene scene;
    scene.profile = profile(8, 312.5e3, 1, 2);
    PathParams moving;
    moving.doppler = 10.0;
    scene.pair_paths = {{PathParams{}}, {moving}};
    scene.duration = 0.1;
    ImpairmentSet a, b;
    b.pll_phase = 1.0;
    scene.pair_impairments = {a, b};
    const auto s = generate_stream(scene);
    const auto ref = s.pair_values(3, 0);
    const auto tgt = s.pair_values(3, 1);
    CHECK(std::abs(ref[0] - cplx{1.0, 0.0}) < 1e-7);
    const double expected = wrap(kTwoPi * 10.0 * 0.03 - 1.0);
    CHECK(std::abs(wrap(std::arg(tgt[0]) - expected)) < 1e-6);

    scene.pair_paths = {{PathParams{}}};
    CHECK_THROWS_AS(generate_stream(scene), InvalidArgument);
}

TEST_CASE("generate_stream: rejects invalid profiles") {
    Scene scene;
    scene.paths = {PathParams{}};
    scene.profile = profile(1);
    CHECK_THROWS_AS(generate_stream(scene), InvalidArgument);
    scene.profile = profile(4);
    scene.profile.subcarrier_offsets[2] = scene.profile.subcarrier_offsets[1];
    CHECK_THROWS_AS(generate_stream(scene), InvalidArgument);
    scene.profile = profile(4);
    scene.profile.sample_rate = 0;
    CHECK_THROWS_AS(generate_stream(scene), InvalidArgument);
    scene.profile = profile(4);
    scene.duration = 0;
    CHECK_THROWS_AS(generate_stream(scene), InvalidArgument);
}

TEST_CASE("derive_seed is deterministic and index-sensitive") {
    CHECK(derive_seed(992, 1) == derive_seed(992, 1));
    CHECK(derive_seed(992, 1) != derive_seed(992, 2));
    CHECK(derive_seed(992, 1) != derive_seed(993, 1));
}
