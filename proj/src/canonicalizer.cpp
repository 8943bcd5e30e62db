// SPDX-License-Identifier: Apache-2.0
#include "sdp/canonicalizer.hpp"

#include <algorithm>
#include <sstream>

#include "sdp/error.hpp"

namespace sdp {

std::vector<double> CanonicalGridSpec::positions() const {
    validate();
    std::vector<double> pos(k);
    const double denom = static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i) {
        // symmetric construction keeps pos[i] == -pos[k-1-i] exactly
        pos[i] = (2.0 * static_cast<double>(i) - denom) / denom;
    }
    return pos;
}

void CanonicalGridSpec::validate() const {
    if (k < 2) throw InvalidArgument("canonical grid needs k >= 2");
    if (k > 65535) throw InvalidArgument("canonical grid k must fit in u16");
}

void WindowSpec::validate() const {
    if (t < 1) throw InvalidArgument("window length must be >= 1");
    if (hop < 1 || hop > t) throw InvalidArgument("window hop must satisfy 1 <= hop <= t");
}

namespace {

struct NormalisedBand {
    double lo, hi;
    double to_unit(double f) const { return -1.0 + 2.0 * (f - lo) / (hi - lo); }
};

NormalisedBand band_of(std::span<const double> raw_offsets) {
    if (raw_offsets.size() < 2) throw InvalidArgument("projection needs at least 2 raw subcarriers");
    const double lo = raw_offsets.front();
    const double hi = raw_offsets.back();
    if (hi == lo) throw DegenerateBand("occupied band has zero width");
    for (std::size_t i = 1; i < raw_offsets.size(); ++i)
        if (!(raw_offsets[i] > raw_offsets[i - 1])) throw InvalidArgument("raw offsets must be strictly increasing");
    return {lo, hi};
}

}  // namespace

std::vector<double> canonical_frequencies(std::span<const double> raw_offsets, const CanonicalGridSpec& grid) {
    const auto band = band_of(raw_offsets);
    auto pos = grid.positions();
    for (auto& p : pos) p = band.lo + (p + 1.0) * 0.5 * (band.hi - band.lo);
    return pos;
}

std::vector<cplx> project_frequency(std::span<const cplx> h_raw, std::span<const double> raw_offsets,
                                    const CanonicalGridSpec& grid) {
    if (h_raw.size() != raw_offsets.size()) throw ShapeMismatch("raw values and offsets differ in length");
    const auto band = band_of(raw_offsets);
    const auto targets = grid.positions();

    std::vector<double> x(raw_offsets.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = band.to_unit(raw_offsets[i]);
    x.front() = -1.0;
    x.back() = 1.0;

    std::vector<cplx> out(targets.size());
    std::size_t seg = 0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double u = targets[j];
        while (seg + 2 < x.size() && x[seg + 1] < u) ++seg;
        const double x0 = x[seg], x1 = x[seg + 1];
        if (u == x0) {
            out[j] = h_raw[seg];
        } else if (u == x1) {
            out[j] = h_raw[seg + 1];
        } else {
            const double w = (u - x0) / (x1 - x0);
            out[j] = {h_raw[seg].real() + w * (h_raw[seg + 1].real() - h_raw[seg].real()),
                      h_raw[seg].imag() + w * (h_raw[seg + 1].imag() - h_raw[seg].imag())};
        }
    }
    return out;
}

std::vector<FrameWindow> window_stream(const RawCsiStream& stream, const WindowSpec& spec) {
    spec.validate();
    std::vector<FrameWindow> windows;
    const std::size_t n = stream.frames.size();
    if (n < spec.t) return windows;
    const std::size_t count = (n - spec.t) / spec.hop + 1;
    windows.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t first = w * spec.hop;
        windows.push_back({first, spec.t, stream.frames[first].timestamp});
    }
    return windows;
}

std::vector<CanonicalTensor> canonicalize(const RawCsiStream& stream, const CanonicalizeOptions& opts) {
    const auto& profile = stream.profile;
    profile.validate();
    opts.grid.validate();
    const auto windows = window_stream(stream, opts.window);
    if (windows.empty()) return {};

    const std::size_t pairs = profile.pairs();
    const std::size_t k_raw = profile.k_raw();
    const std::size_t k = opts.grid.k;

    // Only frames covered by some window are processed.
    const std::size_t used = windows.back().first_frame + windows.back().length;
    std::vector<std::vector<cplx>> projected(used);
    for (std::size_t n = 0; n < used; ++n) {
        const auto clean = sanitize_frame(stream.frames[n], profile, opts.sanitize);
        auto& row = projected[n];
        row.resize(pairs * k);
        const std::span<const cplx> values(clean.values);
        for (std::size_t p = 0; p < pairs; ++p) {
            const auto canon = project_frequency(values.subspan(p * k_raw, k_raw), profile.subcarrier_offsets, opts.grid);
            std::copy(canon.begin(), canon.end(), row.begin() + static_cast<std::ptrdiff_t>(p * k));
        }
    }

    std::ostringstream src;
    src << (stream.provenance.empty() ? std::string("stream") : stream.provenance)
        << ";sanitize=" << to_string(opts.sanitize.mode) << ";grid=normalized;k=" << k << ";interp=linear";
    const std::string source = src.str();

    std::vector<CanonicalTensor> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        CanonicalTensor tensor(pairs, k, w.length);
        tensor.label = opts.label;
        tensor.subject = opts.subject;
        tensor.window_start = w.start_time;
        tensor.source = source;
        for (std::size_t ti = 0; ti < w.length; ++ti) {
            const auto& row = projected[w.first_frame + ti];
            for (std::size_t a = 0; a < pairs; ++a)
                for (std::size_t ki = 0; ki < k; ++ki) {
                    const cplx v = row[a * k + ki];
                    tensor.at(a, ki, ti) = cplxf(static_cast<float>(v.real()), static_cast<float>(v.imag()));
                }
        }
        out.push_back(std::move(tensor));
    }
    return out;
}

}  // namespace sdp
