// SPDX-License-Identifier: Apache-2.0
#include "sdp/task.hpp"

#include <numbers>

#include "sdp/error.hpp"

namespace sdp {

namespace {
void validate(const TaskSpec& spec) {
    spec.profile.validate();
    if (spec.classes.size() < 2) throw InvalidArgument("task needs at least 2 classes");
    if (spec.subjects < 2) throw InvalidArgument("task needs at least 2 subjects");
    if (spec.trials < 1) throw InvalidArgument("task needs at least 1 trial");
    if (!(spec.duration > 0.0)) throw InvalidArgument("task duration must be positive");
    for (std::size_t i = 0; i < spec.classes.size(); ++i)
        for (std::size_t j = i + 1; j < spec.classes.size(); ++j)
            if (spec.classes[i] == spec.classes[j])
                throw IdenticalClassSignatures("classes '" + spec.classes[i].name + "' and '" + spec.classes[j].name +
                                               "' have identical signatures");
}
}  // namespace

Scene task_scene(const TaskSpec& spec, int class_id, int subject, int trial) {
    const auto n_classes = static_cast<int>(spec.classes.size());
    const auto index = static_cast<std::uint64_t>((subject * n_classes + class_id) * spec.trials + trial);
    const std::uint64_t stream_seed = derive_seed(spec.seed, index);
    Rng rng(derive_seed(stream_seed, 0xC0FFEE));

    const auto& sig = spec.classes[static_cast<std::size_t>(class_id)];
    const double s_frac = (subject + 0.5) / spec.subjects;

    Scene scene;
    scene.profile = spec.profile;
    scene.duration = spec.duration;
    scene.seed = stream_seed;

    PathParams los;
    los.amplitude = std::polar(spec.static_amplitude, rng.uniform(0.0, 2.0 * std::numbers::pi));
    los.delay = spec.static_delay;
    scene.paths.push_back(los);
    for (const auto& p : spec.background) scene.paths.push_back(p);

    const double motion_amp =
        sig.amplitude_scale * (spec.motion_amplitude_lo + (spec.motion_amplitude_hi - spec.motion_amplitude_lo) * s_frac);
    const double motion_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double jitter = 1.0 + spec.doppler_jitter * rng.uniform(-1.0, 1.0);
    if (motion_amp != 0.0) {
        PathParams moving;
        moving.amplitude = std::polar(motion_amp, motion_phase);
        moving.delay = sig.delay_s;
        moving.doppler = sig.doppler_hz * jitter;
        scene.paths.push_back(moving);
    }

    const double slice = (spec.sto_hi - spec.sto_lo) / spec.subjects;
    const double sto_lo = spec.sto_lo + slice * subject;
    scene.impairments.sto = rng.uniform(sto_lo, sto_lo + slice);
    scene.impairments.sto_jitter = spec.sto_jitter;
    scene.impairments.cfo = rng.uniform(spec.cfo_lo, spec.cfo_hi);
    scene.impairments.pll_phase = rng.uniform(spec.pll_lo, spec.pll_hi);
    scene.impairments.noise_std = spec.noise_std;
    return scene;
}

SyntheticTask make_synthetic_task(const TaskSpec& spec) {
    validate(spec);
    SyntheticTask task;
    const auto n_classes = static_cast<int>(spec.classes.size());
    for (int s = 0; s < spec.subjects; ++s) {
        for (int c = 0; c < n_classes; ++c) {
            for (int tr = 0; tr < spec.trials; ++tr) {
                auto stream = generate_stream(task_scene(spec, c, s, tr));
                const std::string name = "s" + std::to_string(s) + "_c" + std::to_string(c) + "_t" + std::to_string(tr);
                stream.provenance = name;
                task.streams.push_back(std::move(stream));
                ManifestEntry e;
                e.path = name + ".sdpr";
                e.label_id = c;
                e.label_name = spec.classes[static_cast<std::size_t>(c)].name;
                e.subject = s;
                e.environment = spec.environment;
                task.manifest.entries.push_back(std::move(e));
            }
        }
    }
    return task;
}

}  // namespace sdp
