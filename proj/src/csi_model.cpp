// SPDX-License-Identifier: Apache-2.0
#include "sdp/csi_model.hpp"

#include <cmath>
#include <numbers>

#include "sdp/error.hpp"

namespace sdp {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

cplx round_to_f32(cplx v) {
    return {static_cast<double>(static_cast<float>(v.real())), static_cast<double>(static_cast<float>(v.imag()))};
}
}  // namespace

void DeviceProfile::validate() const {
    if (subcarrier_offsets.size() < 2) throw InvalidArgument("device profile needs at least 2 subcarriers");
    for (std::size_t i = 1; i < subcarrier_offsets.size(); ++i) {
        if (!(subcarrier_offsets[i] > subcarrier_offsets[i - 1]))
            throw InvalidArgument("subcarrier offsets must be strictly increasing (index " + std::to_string(i) + ")");
    }
    if (n_tx < 1 || n_rx < 1) throw InvalidArgument("n_tx and n_rx must be >= 1");
    if (n_tx > 255 || n_rx > 255) throw InvalidArgument("n_tx and n_rx must fit in a byte");
    if (subcarrier_offsets.size() > 65535) throw InvalidArgument("too many subcarriers");
    if (!(sample_rate > 0.0)) throw InvalidArgument("sample_rate must be positive");
}

std::vector<double> DeviceProfile::uniform_offsets(std::size_t count, double spacing) {
    std::vector<double> out(count);
    const double centre = 0.5 * static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) out[i] = (static_cast<double>(i) - centre) * spacing;
    return out;
}

std::vector<cplx> synth_channel(std::span<const PathParams> paths, const DeviceProfile& profile, double t) {
    std::vector<cplx> h(profile.k_raw(), cplx{0.0, 0.0});
    for (const auto& p : paths) {
        if (t < p.active_from || t >= p.active_until) continue;
        const cplx alpha = p.amplitude + p.amplitude_rate * t;
        const double tau = p.delay + p.delay_rate * t;
        const double nu = p.doppler + p.doppler_rate * t;
        const cplx motion = std::polar(1.0, kTwoPi * nu * t);
        for (std::size_t k = 0; k < h.size(); ++k) {
            h[k] += alpha * std::polar(1.0, -kTwoPi * profile.subcarrier_offsets[k] * tau) * motion;
        }
    }
    return h;
}

std::vector<cplx> apply_impairments(std::span<const cplx> h_phys, const ImpairmentSet& imp,
                                    const DeviceProfile& profile, double t, Rng& rng) {
    if (h_phys.size() != profile.k_raw()) throw ShapeMismatch("channel length does not match profile");
    std::vector<cplx> out(h_phys.size());
    const double common = imp.cfo * t + imp.pll_phase / kTwoPi;
    const double per_axis = imp.noise_std / std::numbers::sqrt2;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double cycles = profile.subcarrier_offsets[k] * imp.sto + common;
        out[k] = h_phys[k] * std::polar(1.0, -kTwoPi * cycles);
        if (imp.noise_std > 0.0) {
            const double re = rng.normal() * per_axis;
            const double im = rng.normal() * per_axis;
            out[k] += cplx{re, im};
        }
    }
    return out;
}

std::size_t frame_count(double duration, double sample_rate) {
    const double n = duration * sample_rate;
    const double nearest = std::round(n);
    if (std::abs(n - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::floor(n));
}

RawCsiStream generate_stream(const Scene& scene) {
    const auto& profile = scene.profile;
    profile.validate();
    if (!(scene.duration > 0.0)) throw InvalidArgument("duration must be positive");
    const std::size_t pairs = profile.pairs();
    if (!scene.pair_paths.empty() && scene.pair_paths.size() != pairs)
        throw InvalidArgument("pair_paths must have one entry per antenna pair");
    if (!scene.pair_impairments.empty() && scene.pair_impairments.size() != pairs)
        throw InvalidArgument("pair_impairments must have one entry per antenna pair");
    if (scene.pair_paths.empty() && scene.paths.empty()) throw InvalidArgument("scene has no paths");
    for (const auto& set : scene.pair_paths)
        if (set.empty()) throw InvalidArgument("scene has an antenna pair without paths");

    RawCsiStream stream;
    stream.profile = profile;
    stream.provenance = "synthetic seed=" + std::to_string(scene.seed);
    const std::size_t n_frames = frame_count(scene.duration, profile.sample_rate);
    stream.frames.resize(n_frames);

    Rng rng(scene.seed);
    const std::size_t k_raw = profile.k_raw();
    for (std::size_t n = 0; n < n_frames; ++n) {
        const double t = static_cast<double>(n) / profile.sample_rate;
        auto& frame = stream.frames[n];
        frame.timestamp = t;
        frame.values.resize(pairs * k_raw);

        // One STO draw per frame shared by all pairs; overrides draw their own.
        ImpairmentSet shared = scene.impairments;
        shared.sto += shared.sto_jitter * rng.uniform(-1.0, 1.0);

        std::vector<cplx> shared_phys;
        if (scene.pair_paths.empty()) shared_phys = synth_channel(scene.paths, profile, t);

        for (std::size_t p = 0; p < pairs; ++p) {
            ImpairmentSet imp = shared;
            if (!scene.pair_impairments.empty()) {
                imp = scene.pair_impairments[p];
                imp.sto += imp.sto_jitter * rng.uniform(-1.0, 1.0);
            }
            const auto phys = scene.pair_paths.empty() ? shared_phys : synth_channel(scene.pair_paths[p], profile, t);
            const auto measured = apply_impairments(phys, imp, profile, t, rng);
            for (std::size_t k = 0; k < k_raw; ++k) frame.values[p * k_raw + k] = round_to_f32(measured[k]);
        }
    }
    return stream;
}

RawCsiStream generate_stream(std::span<const PathParams> paths, const DeviceProfile& profile,
                             const ImpairmentSet& impairments, double duration, std::uint64_t seed) {
    Scene scene;
    scene.profile = profile;
    scene.paths.assign(paths.begin(), paths.end());
    scene.impairments = impairments;
    scene.duration = duration;
    scene.seed = seed;
    return generate_stream(scene);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finaliser over the combined value
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace sdp
