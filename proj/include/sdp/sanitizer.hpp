// SPDX-License-Identifier: Apache-2.0
//
// Removal of the linear phase distortion (STO/PDD) and the
// frame-common phase (CFO/PLL) from each raw frame.
#pragma once

#include <span>
#include <vector>

#include "sdp/csi_model.hpp"

namespace sdp {

struct PhaseFit {
    double slope = 0.0;      // rad/Hz
    double intercept = 0.0;  // rad at zero offset
    double residual_rms = 0.0;
};

enum class SanitizeMode {
    slope_intercept,
    conjugate_reference,
    none,  // passthrough, used for ablations and raw spectrograms
};

struct SanitizeConfig {
    SanitizeMode mode = SanitizeMode::slope_intercept;
    std::size_t reference_antenna = 0;  // pair index, conjugate_reference only
    double magnitude_floor = 1e-12;
};

SanitizeMode parse_sanitize_mode(const std::string& name);
std::string to_string(SanitizeMode mode);

std::vector<double> unwrap_phase(std::span<const double> phases);

PhaseFit fit_linear_phase(std::span<const cplx> values, std::span<const double> offsets,
                          double magnitude_floor = 1e-12);

RawCsiFrame sanitize_frame(const RawCsiFrame& frame, const DeviceProfile& profile, const SanitizeConfig& cfg);

RawCsiStream sanitize_stream(const RawCsiStream& stream, const SanitizeConfig& cfg);

}  // namespace sdp
