// SPDX-License-Identifier: Apache-2.0
//
// Glue between canonical tensors, manifests and the probe.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdp/canonicalizer.hpp"
#include "sdp/task.hpp"
#include "sdp/train.hpp"
#include "sdp/trace_io.hpp"

namespace sdp {

Example make_example(const CanonicalTensor& tensor, TaskKind task = TaskKind::classification);

/// Tensors and their split, index-aligned.
struct SplitTensors {
    std::vector<CanonicalTensor> tensors;
    std::vector<Split> splits;
    std::vector<std::string> class_names;
};

struct PreparedData {
    Dataset data;               // train + val
    std::vector<Example> test;
};

PreparedData prepare(const SplitTensors& set, TaskKind task = TaskKind::classification);

/// Canonicalizes every stream of a task; each tensor inherits its stream's
/// label, subject and split from `manifest` (index-aligned with `streams`).
SplitTensors canonicalize_task(const std::vector<RawCsiStream>& streams, const DatasetManifest& manifest,
                               const CanonicalizeOptions& opts);

/// Model config matching a tensor shape.
ModelConfig model_for(const CanonicalTensor& sample, std::size_t outputs, const ModelConfig& base);

std::string describe(const ModelConfig& m);
std::string describe(const TrainConfig& t);
std::string describe(const CanonicalizeOptions& c);

}  // namespace sdp
