#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sdp/cli.hpp"
#include "sdp/trace_io.hpp"

using namespace sdp;
using testutil::slurp;
using testutil::TempDir;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

const char* kScene = R"(carrier_hz = 5.32e9
subcarrier_count = 30
n_rx = 2
sample_rate_hz = 100
path = amp=1 delay=20e-9
path = amp=0.5 delay=50e-9 doppler=10
sto_s = 50e-9
sto_jitter_s = 10e-9
cfo_hz = 25
pll_rad = 0.3
noise_std = 0.01
duration_s = 2.5
)";

const char* kTask = R"(subcarrier_count = 30
n_rx = 2
class = name=Still doppler=0 delay=0 scale=0
class = name=Fall doppler=15 delay=40e-9
subjects = 3
trials = 4
duration_s = 0.32
sto_s = 10e-9, 100e-9
cfo_hz = -20, 20
pll_rad = 0, 3
noise_std = 0.01
)";

}  // namespace

TEST_CASE("cli: gen is reproducible and prints a fingerprint") {
    TempDir d;
    write_text(d / "scene.cfg", kScene);
    const auto cfg = (d / "scene.cfg").string();
    const auto a = run({"gen", "--config", cfg, "--out", (d / "a.sdpr").string(), "--seed", "992"});
    const auto b = run({"gen", "--config", cfg, "--out", (d / "b.sdpr").string(), "--seed", "992"});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(a.out.rfind("fingerprint: ", 0) == 0);
    CHECK(slurp(d / "a.sdpr") == slurp(d / "b.sdpr"));
    CHECK(read_raw_trace(d / "a.sdpr").frames.size() == 250);
    run({"gen", "--config", cfg, "--out", (d / "c.sdpr").string(), "--seed", "993"});
    CHECK(slurp(d / "a.sdpr") != slurp(d / "c.sdpr"));
}

TEST_CASE("cli: seed falls back to SDP_SEED, otherwise usage error") {
    TempDir d;
    write_text(d / "scene.cfg", kScene);
    const auto cfg = (d / "scene.cfg").string();
    ::unsetenv("SDP_SEED");
    const auto missing = run({"gen", "--config", cfg, "--out", (d / "x.sdpr").string()});
    CHECK(missing.code == cli::kExitUsage);
    CHECK(missing.err.rfind("error: UsageError:", 0) == 0);
    ::setenv("SDP_SEED", "992", 1);
    const auto env = run({"gen", "--config", cfg, "--out", (d / "env.sdpr").string()});
    ::unsetenv("SDP_SEED");
    REQUIRE(env.code == 0);
    run({"gen", "--config", cfg, "--out", (d / "flag.sdpr").string(), "--seed", "992"});
    CHECK(slurp(d / "env.sdpr") == slurp(d / "flag.sdpr"));
}

TEST_CASE("cli: canon writes one tensor per window") {
    TempDir d;
    write_text(d / "scene.cfg", kScene);
    REQUIRE(run({"gen", "--config", (d / "scene.cfg").string(), "--out", (d / "t.sdpr").string(), "--seed", "1"})
                .code == 0);
    const auto r = run({"canon", "--in", (d / "t.sdpr").string(), "--k", "30", "--window-t", "100", "--out",
                        (d / "out").string()});
    REQUIRE(r.code == 0);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(d / "out")) {
        ++files;
        const auto t = read_tensor(e.path());
        CHECK(t.a == 2);
        CHECK(t.k == 30);
        CHECK(t.t == 100);
    }
    CHECK(files == 2);  // floor((250 - 100) / 100) + 1
}

TEST_CASE("cli: sanitize and spectrogram subcommands") {
    TempDir d;
    write_text(d / "scene.cfg", kScene);
    run({"gen", "--config", (d / "scene.cfg").string(), "--out", (d / "t.sdpr").string(), "--seed", "1"});
    CHECK(run({"sanitize", "--in", (d / "t.sdpr").string(), "--out", (d / "s.sdpr").string(), "--sanitize-mode",
               "slope_intercept"})
              .code == 0);
    CHECK(read_raw_trace(d / "s.sdpr").frames.size() == 250);
    CHECK(run({"spectrogram", "--in", (d / "t.sdpr").string(), "--out", (d / "spec.tsv").string()}).code == 0);
    const auto spec = slurp(d / "spec.tsv");
    CHECK(spec.rfind("time\\doppler_hz\t-50", 0) == 0);
}

TEST_CASE("cli: errors map to exit codes and single-line messages") {
    TempDir d;
    const auto unknown = run({"flops", "--bogus"});
    CHECK(unknown.code == cli::kExitUsage);
    CHECK(unknown.err.find('\n') == unknown.err.size() - 1);
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);

    write_text(d / "junk.sdpr", "JUNKJUNKJUNK");
    const auto bad = run({"sanitize", "--in", (d / "junk.sdpr").string(), "--out", (d / "o.sdpr").string()});
    CHECK(bad.code == cli::kExitPipelineError);
    CHECK(bad.err == "error: BadMagic: expected magic 'SDPR' at offset 0\n");

    const auto mode = run({"flops", "--depth", "0"});
    CHECK(mode.code == cli::kExitPipelineError);
    CHECK(mode.err.rfind("error: InvalidArgument:", 0) == 0);
}

TEST_CASE("cli: every subcommand documents every flag in --help") {
    const auto flags = cli::describe_flags();
    CHECK(flags.size() == 10);
    for (const auto& [name, list] : flags) {
        const auto help = run({name, "--help"});
        CHECK(help.code == 0);
        CHECK(!list.empty());
        for (const auto& f : list) {
            INFO(name << " " << f);
            CHECK(help.out.find(f) != std::string::npos);
        }
    }
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli: flops matches the analytic estimator") {
    const auto r = run({"flops", "--t", "1", "--depth", "1", "--dim", "4", "--heads", "1", "--ffn-dim", "4",
                        "--token-dim", "4", "--outputs", "2"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("flops: ") != std::string::npos);
    const auto def = run({"flops"});
    CHECK(def.out.find("flops: 398624256\n") != std::string::npos);
}

TEST_CASE("cli: task pipeline gen -> canon -> split -> train -> eval -> stream -> report") {
    TempDir d;
    write_text(d / "task.cfg", kTask);
    const auto raw = (d / "raw").string();
    REQUIRE(run({"gen", "--task", (d / "task.cfg").string(), "--out-dir", raw, "--seed", "5"}).code == 0);
    CHECK(read_manifest(d / "raw/manifest.tsv").entries.size() == 24);

    const auto tens = (d / "tens").string();
    REQUIRE(run({"canon", "--manifest", raw + "/manifest.tsv", "--window-t", "32", "--out", tens}).code == 0);
    REQUIRE(run({"split", "--manifest", tens + "/manifest.tsv", "--holdout", "2", "--val-fraction", "0.25", "--seed",
                 "992", "--out", tens + "/split.tsv"})
                .code == 0);
    const auto split = read_manifest(std::filesystem::path(tens) / "split.tsv");
    for (const auto& e : split.entries) CHECK((e.subject == 2) == (e.split == Split::test));

    const std::vector<std::string> model{"--depth", "1", "--dim", "8", "--heads", "2", "--ffn-dim", "16",
                                         "--epochs", "3", "--batch-size", "4"};
    auto train_args = std::vector<std::string>{"train", "--manifest", tens + "/split.tsv", "--out",
                                               (d / "m.sdpm").string(), "--log", (d / "log.tsv").string(),
                                               "--seed", "992"};
    train_args.insert(train_args.end(), model.begin(), model.end());
    REQUIRE(run(train_args).code == 0);
    const auto ck1 = slurp(d / "m.sdpm");
    const auto log1 = slurp(d / "log.tsv");
    REQUIRE(run(train_args).code == 0);
    CHECK(slurp(d / "m.sdpm") == ck1);
    CHECK(slurp(d / "log.tsv") == log1);

    auto eval_args = std::vector<std::string>{"eval", "--manifest", tens + "/split.tsv", "--seeds",
                                              "992,863,702,443,542", "--out", (d / "rep").string()};
    eval_args.insert(eval_args.end(), model.begin(), model.end());
    REQUIRE(run(eval_args).code == 0);
    const auto metrics = slurp(d / "rep/metrics.tsv");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 6);
    CHECK(std::filesystem::exists(d / "rep/confusion_542.tsv"));

    const auto st = run({"stream", "--in", raw + "/s0_c1_t0.sdpr", "--checkpoint", (d / "m.sdpm").string(),
                         "--event-class", "Fall", "--window-t", "32", "--hop", "8", "--out", (d / "trace.tsv").string()});
    REQUIRE(st.code == 0);
    CHECK(st.out.find("triggered: ") != std::string::npos);
    const auto missing = run({"stream", "--in", raw + "/s0_c1_t0.sdpr", "--checkpoint", (d / "m.sdpm").string(),
                              "--event-class", "Jump", "--window-t", "32"});
    CHECK(missing.code == cli::kExitPipelineError);
    CHECK(missing.err.rfind("error: EventClassMissing:", 0) == 0);

    const auto rep = run({"report", "--runs", (d / "rep").string() + "," + (d / "rep").string(), "--names", "a,b",
                          "--out", (d / "ranks").string()});
    REQUIRE(rep.code == 0);
    CHECK(slurp(d / "ranks/ranks.tsv").find("a\t1\t1\t1\t1\t1\t0") != std::string::npos);
}
