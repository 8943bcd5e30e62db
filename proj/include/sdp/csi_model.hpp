// SPDX-License-Identifier: Apache-2.0
//
// Forward model of measured CSI: a sum of time-varying multipath
// components rotated by hardware phase distortions plus complex noise.
#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sdp/rng.hpp"

namespace sdp {

using cplx = std::complex<double>;

struct DeviceProfile {
    double carrier_hz = 5.32e9;
    std::vector<double> subcarrier_offsets;  // Hz relative to carrier, strictly increasing
    int n_tx = 1;
    int n_rx = 1;
    double sample_rate = 100.0;  // frames per second

    std::size_t k_raw() const { return subcarrier_offsets.size(); }
    std::size_t pairs() const { return static_cast<std::size_t>(n_tx) * static_cast<std::size_t>(n_rx); }
    std::size_t frame_size() const { return pairs() * k_raw(); }

    /// Throws InvalidArgument when an invariant is violated.
    void validate() const;

    /// `count` offsets spaced `spacing` apart, centred on the carrier.
    static std::vector<double> uniform_offsets(std::size_t count, double spacing);
};

/// One propagation path. Each parameter is affine in time: p(t) = p + rate*t.
/// A path contributes only while active_from <= t < active_until.
struct PathParams {
    cplx amplitude{1.0, 0.0};
    double delay = 0.0;    // s
    double doppler = 0.0;  // Hz
    cplx amplitude_rate{0.0, 0.0};
    double delay_rate = 0.0;
    double doppler_rate = 0.0;
    double active_from = 0.0;
    double active_until = std::numeric_limits<double>::infinity();
};

struct ImpairmentSet {
    double sto = 0.0;         // s, sampling-time offset plus packet-detection delay
    double sto_jitter = 0.0;  // s, half-width of the uniform per-frame draw around `sto`
    double cfo = 0.0;         // Hz
    double pll_phase = 0.0;   // rad
    double noise_std = 0.0;   // E|n|^2 = noise_std^2
};

struct RawCsiFrame {
    double timestamp = 0.0;
    std::vector<cplx> values;  // [rx][tx][subcarrier]
};

struct RawCsiStream {
    DeviceProfile profile;
    std::vector<RawCsiFrame> frames;
    std::string provenance;

    /// Pair index is rx-major: rx * n_tx + tx.
    std::span<const cplx> pair_values(std::size_t frame, std::size_t pair) const {
        const auto k = profile.k_raw();
        return std::span<const cplx>(frames[frame].values).subspan(pair * k, k);
    }
};

/// A complete generation request for one stream.
struct Scene {
    DeviceProfile profile;
    std::vector<PathParams> paths;
    /// Optional per antenna pair path sets; when non-empty must hold one
    /// entry per pair and replaces `paths`.
    std::vector<std::vector<PathParams>> pair_paths;
    ImpairmentSet impairments;
    /// Optional per antenna pair impairment overrides (empty = shared).
    std::vector<ImpairmentSet> pair_impairments;
    double duration = 1.0;
    std::uint64_t seed = 0;
};

/// Noiseless, impairment-free response at every subcarrier of `profile`.
std::vector<cplx> synth_channel(std::span<const PathParams> paths, const DeviceProfile& profile, double t);

/// Rotates each subcarrier by -2*pi*(f_k*sto + cfo*t + pll_phase) and adds
/// circularly-symmetric Gaussian noise. `imp.sto` is used as this frame's
/// offset; `imp.sto_jitter` is ignored here.
std::vector<cplx> apply_impairments(std::span<const cplx> h_phys, const ImpairmentSet& imp,
                                    const DeviceProfile& profile, double t, Rng& rng);

/// floor(duration * sample_rate), tolerant to representation error in the product.
std::size_t frame_count(double duration, double sample_rate);

/// Samples the scene at `profile.sample_rate`. Stored values are rounded to
/// f32 precision, matching what the SDPR container can hold.
RawCsiStream generate_stream(const Scene& scene);

RawCsiStream generate_stream(std::span<const PathParams> paths, const DeviceProfile& profile,
                             const ImpairmentSet& impairments, double duration, std::uint64_t seed);

/// Mixes a base seed with an index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace sdp
