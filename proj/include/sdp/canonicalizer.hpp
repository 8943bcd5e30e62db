// SPDX-License-Identifier: Apache-2.0
//
// Projection onto the canonical frequency grid and
// assembly of fixed-length windows into A x K x T tensors.
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdp/csi_model.hpp"
#include "sdp/sanitizer.hpp"

namespace sdp {

using cplxf = std::complex<float>;

/// K points uniformly spanning the normalised band [-1, +1].
struct CanonicalGridSpec {
    std::size_t k = 30;

    std::vector<double> positions() const;
    void validate() const;
};

enum class PadPolicy { drop_tail };

struct WindowSpec {
    std::size_t t = 500;
    std::size_t hop = 500;
    PadPolicy pad_policy = PadPolicy::drop_tail;

    void validate() const;
};

struct FrameWindow {
    std::size_t first_frame = 0;
    std::size_t length = 0;
    double start_time = 0.0;
};

/// The canonical sample. Values are f32, laid out [a][k][t].
struct CanonicalTensor {
    std::size_t a = 0, k = 0, t = 0;
    std::vector<cplxf> values;
    std::int32_t label = -1;  // -1 = unlabeled
    std::int32_t subject = -1;
    double window_start = 0.0;
    std::string source;

    CanonicalTensor() = default;
    CanonicalTensor(std::size_t a_, std::size_t k_, std::size_t t_)
        : a(a_), k(k_), t(t_), values(a_ * k_ * t_) {}

    cplxf& at(std::size_t ai, std::size_t ki, std::size_t ti) { return values[(ai * k + ki) * t + ti]; }
    const cplxf& at(std::size_t ai, std::size_t ki, std::size_t ti) const { return values[(ai * k + ki) * t + ti]; }

    bool operator==(const CanonicalTensor&) const = default;
};

/// Piecewise-linear interpolation of real and imaginary parts from the raw
/// grid (affinely normalised to [-1, +1]) onto the canonical positions.
std::vector<cplx> project_frequency(std::span<const cplx> h_raw, std::span<const double> raw_offsets,
                                    const CanonicalGridSpec& grid);

/// Canonical positions expressed in Hz for a given raw band.
std::vector<double> canonical_frequencies(std::span<const double> raw_offsets, const CanonicalGridSpec& grid);

std::vector<FrameWindow> window_stream(const RawCsiStream& stream, const WindowSpec& spec);

struct CanonicalizeOptions {
    SanitizeConfig sanitize;
    CanonicalGridSpec grid;
    WindowSpec window;
    std::int32_t label = -1;
    std::int32_t subject = -1;
};

/// sanitize -> project -> window -> assemble. Antenna pairs are flattened
/// rx-major then tx.
std::vector<CanonicalTensor> canonicalize(const RawCsiStream& stream, const CanonicalizeOptions& opts);

}  // namespace sdp
