#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "sdp/benchkit.hpp"
#include "sdp/config.hpp"
#include "sdp/error.hpp"
#include "sdp/task.hpp"

using namespace sdp;

namespace {
KeyValueFile kv_of(const std::string& text) {
    std::istringstream is(text);
    return KeyValueFile::parse(is);
}

TaskSpec small_task() {
    TaskSpec t;
    t.profile = testutil::profile(30, 312.5e3, 1, 2);
    t.classes = {{"Still", 0.0, 0.0, 0.0}, {"Walk", 10.0, 30e-9, 1.0}, {"Run", 20.0, 60e-9, 1.0}};
    t.subjects = 3;
    t.trials = 10;
    t.duration = 1.28;
    t.sto_lo = 10e-9;
    t.sto_hi = 150e-9;
    t.cfo_lo = -30;
    t.cfo_hi = 30;
    t.pll_hi = 3;
    t.noise_std = 0.01;
    t.seed = 992;
    return t;
}
}  // namespace

TEST_CASE("scene file parsing") {
    const auto kv = kv_of(R"(# static reflector and one walker
carrier_hz = 2.412e9
subcarrier_count = 56
subcarrier_spacing_hz = 312.5e3
n_tx = 1
n_rx = 2
sample_rate_hz = 100
path = amp=1 phase=0 delay=20e-9 doppler=0
path = amp=0.5 phase=1.2 delay=60e-9 doppler=10 from=1 until=inf
sto_s = 50e-9
cfo_hz = 25
pll_rad = 0.3
noise_std = 0.01
duration_s = 5
seed = 992
)");
    const auto s = parse_scene(kv);
    CHECK(s.profile.carrier_hz == 2.412e9);
    CHECK(s.profile.k_raw() == 56);
    CHECK(s.profile.n_rx == 2);
    REQUIRE(s.paths.size() == 2);
    CHECK(std::abs(s.paths[1].amplitude - std::polar(0.5, 1.2)) < 1e-15);
    CHECK(s.paths[1].active_from == 1.0);
    CHECK(std::isinf(s.paths[1].active_until));
    CHECK(s.impairments.cfo == 25.0);
    CHECK(s.duration == 5.0);
    CHECK(s.seed == 992);
    CHECK(generate_stream(s).frames.size() == 500);
}

TEST_CASE("scene file: explicit subcarriers and per-pair paths") {
    const auto kv = kv_of("subcarriers = -1e6, 0, 1e6\nn_rx = 2\npath = amp=1 pair=0\npath = doppler=10 pair=1\n"
                          "duration_s = 1\n");
    const auto s = parse_scene(kv);
    CHECK(s.profile.subcarrier_offsets == std::vector<double>{-1e6, 0, 1e6});
    REQUIRE(s.pair_paths.size() == 2);
    CHECK(s.pair_paths[1][0].doppler == 10.0);
}

TEST_CASE("config parse errors") {
    CHECK_THROWS_AS(kv_of("no equals sign here\n"), ParseError);
    CHECK_THROWS_AS(parse_number("12abc", "x"), ParseError);
    CHECK_THROWS_AS(parse_path("amp=1 wobble=3"), ParseError);
    CHECK_THROWS_AS(parse_scene(kv_of("subcarrier_count = 8\n")), ParseError);
    CHECK(parse_number(" 2.5e-3 ", "x") == 2.5e-3);
}

TEST_CASE("task file parsing") {
    const auto t = parse_task(kv_of(R"(subcarrier_count = 30
n_rx = 2
class = name=Still doppler=0 delay=0 scale=0
class = name=Walk doppler=10 delay=30e-9
subjects = 3
trials = 4
duration_s = 0.64
sto_s = 10e-9, 150e-9
cfo_hz = -30, 30
seed = 7
environment = lab
)"));
    REQUIRE(t.classes.size() == 2);
    CHECK(t.classes[0].amplitude_scale == 0.0);
    CHECK(t.classes[1].doppler_hz == 10.0);
    CHECK(t.sto_hi == 150e-9);
    CHECK(t.cfo_lo == -30.0);
    CHECK(t.trials == 4);
    CHECK(t.environment == "lab");
}

TEST_CASE("make_synthetic_task: counts, ordering, determinism") {
    const auto spec = small_task();
    const auto a = make_synthetic_task(spec);
    REQUIRE(a.streams.size() == 90);
    REQUIRE(a.manifest.entries.size() == 90);
    CHECK(a.manifest.class_count() == 3);
    CHECK(a.manifest.subjects() == std::set<std::int32_t>{0, 1, 2});
    std::size_t i = 0;
    for (int s = 0; s < 3; ++s)
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < 10; ++t, ++i) {
                const auto& e = a.manifest.entries[i];
                CHECK(e.subject == s);
                CHECK(e.label_id == c);
                CHECK(e.label_name == spec.classes[c].name);
                CHECK(a.streams[i].frames.size() == 128);
            }
    const auto b = make_synthetic_task(spec);
    CHECK(b.manifest.entries == a.manifest.entries);
    for (std::size_t j = 0; j < 90; ++j) CHECK(b.streams[j].frames.back().values == a.streams[j].frames.back().values);
}

TEST_CASE("make_synthetic_task: classes separate by Doppler") {
    auto spec = small_task();
    spec.noise_std = 0;
    spec.cfo_lo = spec.cfo_hi = 0;
    spec.doppler_jitter = 0;
    spec.trials = 1;
    spec.subjects = 2;
    const auto task = make_synthetic_task(spec);
    DfsOptions opts;
    opts.sanitize.mode = SanitizeMode::none;
    auto motion_peak = [&](const Spectrogram& s) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < s.magnitude[0].size(); ++i) {
            // skip the window's leakage skirt around zero Doppler
            if (i + 6 >= s.zero_bin() && i <= s.zero_bin() + 6) continue;
            if (s.magnitude[0][i] > s.magnitude[0][best]) best = i;
        }
        return best;
    };
    const auto still = dfs_spectrogram(task.streams[0], opts);
    CHECK(still.zero_doppler_fraction(0) >= 0.9);
    CHECK(motion_peak(dfs_spectrogram(task.streams[1], opts)) == 77);  // 10 Hz
    CHECK(motion_peak(dfs_spectrogram(task.streams[2], opts)) == 90);  // 20 Hz
}

TEST_CASE("make_synthetic_task: rejects degenerate specs") {
    auto spec = small_task();
    spec.classes[2] = spec.classes[1];
    spec.classes[2].name = "Jog";
    CHECK_THROWS_AS(make_synthetic_task(spec), IdenticalClassSignatures);
    spec = small_task();
    spec.subjects = 1;
    CHECK_THROWS_AS(make_synthetic_task(spec), InvalidArgument);
    spec = small_task();
    spec.classes.resize(1);
    CHECK_THROWS_AS(make_synthetic_task(spec), InvalidArgument);
}
