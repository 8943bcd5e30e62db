// SPDX-License-Identifier: Apache-2.0
#include "sdp/sanitizer.hpp"

#include <cmath>
#include <numbers>

#include "sdp/error.hpp"

namespace sdp {

namespace {
constexpr double kPi = std::numbers::pi;
}

SanitizeMode parse_sanitize_mode(const std::string& name) {
    if (name == "slope_intercept") return SanitizeMode::slope_intercept;
    if (name == "conjugate_reference") return SanitizeMode::conjugate_reference;
    if (name == "none") return SanitizeMode::none;
    throw InvalidArgument("unknown sanitize mode '" + name + "'");
}

std::string to_string(SanitizeMode mode) {
    switch (mode) {
        case SanitizeMode::slope_intercept: return "slope_intercept";
        case SanitizeMode::conjugate_reference: return "conjugate_reference";
        case SanitizeMode::none: return "none";
    }
    return "unknown";
}

std::vector<double> unwrap_phase(std::span<const double> phases) {
    std::vector<double> out(phases.begin(), phases.end());
    double correction = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        double step = phases[i] - phases[i - 1];
        // bring the step into (-pi, pi]
        const double wrapped = step - 2.0 * kPi * std::ceil((step - kPi) / (2.0 * kPi));
        correction += wrapped - step;
        out[i] = phases[i] + correction;
    }
    return out;
}

PhaseFit fit_linear_phase(std::span<const cplx> values, std::span<const double> offsets, double magnitude_floor) {
    if (values.size() != offsets.size()) throw ShapeMismatch("values and offsets differ in length");
    const std::size_t n = values.size();
    if (n < 2) throw InvalidArgument("linear phase fit needs at least 2 subcarriers");

    std::vector<double> wrapped(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(values[k]) < magnitude_floor)
            throw ZeroMagnitudeSubcarrier("subcarrier " + std::to_string(k) + " is below the magnitude floor");
        wrapped[k] = std::arg(values[k]);
    }
    const auto phase = unwrap_phase(wrapped);

    // Centre the regressor so the normal equations stay well conditioned at MHz scale.
    double mean_f = 0.0, mean_p = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mean_f += offsets[k];
        mean_p += phase[k];
    }
    mean_f /= static_cast<double>(n);
    mean_p /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double df = offsets[k] - mean_f;
        sxx += df * df;
        sxy += df * (phase[k] - mean_p);
    }
    PhaseFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = mean_p - fit.slope * mean_f;
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = phase[k] - (fit.intercept + fit.slope * offsets[k]);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
    return fit;
}

RawCsiFrame sanitize_frame(const RawCsiFrame& frame, const DeviceProfile& profile, const SanitizeConfig& cfg) {
    const std::size_t k_raw = profile.k_raw();
    const std::size_t pairs = profile.pairs();
    if (frame.values.size() != pairs * k_raw) throw ShapeMismatch("frame does not match device profile");

    RawCsiFrame out;
    out.timestamp = frame.timestamp;
    out.values.resize(frame.values.size());
    const std::span<const cplx> all(frame.values);

    switch (cfg.mode) {
        case SanitizeMode::none:
            out.values = frame.values;
            break;
        case SanitizeMode::slope_intercept:
            for (std::size_t p = 0; p < pairs; ++p) {
                const auto pair = all.subspan(p * k_raw, k_raw);
                const auto fit = fit_linear_phase(pair, profile.subcarrier_offsets, cfg.magnitude_floor);
                for (std::size_t k = 0; k < k_raw; ++k) {
                    const double phase = fit.slope * profile.subcarrier_offsets[k] + fit.intercept;
                    out.values[p * k_raw + k] = pair[k] * std::polar(1.0, -phase);
                }
            }
            break;
        case SanitizeMode::conjugate_reference: {
            if (cfg.reference_antenna >= pairs)
                throw InvalidArgument("reference antenna " + std::to_string(cfg.reference_antenna) +
                                      " out of range for " + std::to_string(pairs) + " pairs");
            const auto ref = all.subspan(cfg.reference_antenna * k_raw, k_raw);
            for (std::size_t k = 0; k < k_raw; ++k) {
                if (std::abs(ref[k]) < cfg.magnitude_floor)
                    throw ZeroMagnitudeSubcarrier("reference subcarrier " + std::to_string(k) +
                                                  " is below the magnitude floor");
            }
            for (std::size_t p = 0; p < pairs; ++p) {
                for (std::size_t k = 0; k < k_raw; ++k) {
                    out.values[p * k_raw + k] =
                        p == cfg.reference_antenna ? cplx{std::norm(ref[k]), 0.0} : all[p * k_raw + k] * std::conj(ref[k]);
                }
            }
            break;
        }
    }
    return out;
}

RawCsiStream sanitize_stream(const RawCsiStream& stream, const SanitizeConfig& cfg) {
    RawCsiStream out;
    out.profile = stream.profile;
    out.provenance = stream.provenance;
    out.frames.reserve(stream.frames.size());
    for (const auto& frame : stream.frames) out.frames.push_back(sanitize_frame(frame, stream.profile, cfg));
    return out;
}

}  // namespace sdp
