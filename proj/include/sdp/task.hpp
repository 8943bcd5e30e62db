// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale labelled task generator: each class is a motion path family,
// each subject an amplitude and STO regime.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdp/csi_model.hpp"
#include "sdp/trace_io.hpp"

namespace sdp {

struct ClassSignature {
    std::string name;
    double doppler_hz = 0.0;
    double delay_s = 0.0;
    double amplitude_scale = 1.0;  // 0 = background only

    bool operator==(const ClassSignature& o) const {
        return doppler_hz == o.doppler_hz && delay_s == o.delay_s && amplitude_scale == o.amplitude_scale;
    }
};

struct TaskSpec {
    DeviceProfile profile;
    std::vector<ClassSignature> classes;
    int subjects = 3;
    int trials = 10;
    double duration = 0.64;

    /// Paths present in every stream (static reflectors, slow motion).
    std::vector<PathParams> background;
    double static_amplitude = 1.0;
    double static_delay = 20e-9;

    /// Subject s gets motion amplitude lo + (hi - lo) * (s + 0.5) / subjects.
    double motion_amplitude_lo = 0.4;
    double motion_amplitude_hi = 0.8;
    double doppler_jitter = 0.05;  // relative, per trial

    /// Subject s draws its STO centre from slice s of [sto_lo, sto_hi].
    double sto_lo = 0.0, sto_hi = 0.0;
    double sto_jitter = 0.0;
    double cfo_lo = 0.0, cfo_hi = 0.0;
    double pll_lo = 0.0, pll_hi = 0.0;
    double noise_std = 0.0;

    std::uint64_t seed = 0;
    std::string environment = "synthetic";
};

struct SyntheticTask {
    std::vector<RawCsiStream> streams;
    DatasetManifest manifest;  // entry i describes streams[i]
};

/// Streams are ordered subject-major, then class, then trial.
/// Throws IdenticalClassSignatures when two classes cannot be told apart.
SyntheticTask make_synthetic_task(const TaskSpec& spec);

/// The scene used for one stream of the task.
Scene task_scene(const TaskSpec& spec, int class_id, int subject, int trial);

}  // namespace sdp
