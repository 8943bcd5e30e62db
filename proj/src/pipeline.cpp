// SPDX-License-Identifier: Apache-2.0
#include "sdp/pipeline.hpp"

#include <sstream>

#include "sdp/error.hpp"

namespace sdp {

Example make_example(const CanonicalTensor& tensor, TaskKind task) {
    Example ex;
    ex.tokens = tokenize(tensor);
    ex.label = tensor.label;
    if (task == TaskKind::regression) {
        ex.target = Vec::Constant(1, static_cast<double>(tensor.label));
    }
    return ex;
}

PreparedData prepare(const SplitTensors& set, TaskKind task) {
    if (set.tensors.size() != set.splits.size()) throw ShapeMismatch("tensors and splits differ in length");
    PreparedData out;
    out.data.class_names = set.class_names;
    for (std::size_t i = 0; i < set.tensors.size(); ++i) {
        switch (set.splits[i]) {
            case Split::train: out.data.train.push_back(make_example(set.tensors[i], task)); break;
            case Split::val: out.data.val.push_back(make_example(set.tensors[i], task)); break;
            case Split::test: out.test.push_back(make_example(set.tensors[i], task)); break;
            case Split::unassigned: break;
        }
    }
    return out;
}

SplitTensors canonicalize_task(const std::vector<RawCsiStream>& streams, const DatasetManifest& manifest,
                               const CanonicalizeOptions& opts) {
    if (streams.size() != manifest.entries.size()) throw ShapeMismatch("streams and manifest differ in length");
    SplitTensors out;
    out.class_names = manifest.class_names();
    for (std::size_t i = 0; i < streams.size(); ++i) {
        const auto& e = manifest.entries[i];
        CanonicalizeOptions o = opts;
        o.label = e.label_id;
        o.subject = e.subject;
        for (auto& t : canonicalize(streams[i], o)) {
            out.tensors.push_back(std::move(t));
            out.splits.push_back(e.split);
        }
    }
    return out;
}

ModelConfig model_for(const CanonicalTensor& sample, std::size_t outputs, const ModelConfig& base) {
    ModelConfig m = base;
    m.token_dim = 2 * sample.a * sample.k;
    m.max_t = sample.t;
    m.outputs = outputs;
    return m;
}

std::string describe(const ModelConfig& m) {
    std::ostringstream os;
    os << "model: depth=" << m.depth << " dim=" << m.dim << " heads=" << m.heads << " ffn_dim=" << m.ffn_dim
       << " token_dim=" << m.token_dim << " max_t=" << m.max_t << " outputs=" << m.outputs
       << " task=" << (m.task == TaskKind::classification ? "classification" : "regression")
       << " tokens=real_imag_stacked\n";
    return os.str();
}

std::string describe(const TrainConfig& t) {
    std::ostringstream os;
    os.precision(17);
    os << "train: epochs=" << t.epochs << " batch=" << t.batch_size << " lr_max=" << t.lr_max << " lr_min=" << t.lr_min
       << " weight_decay=" << t.weight_decay << " optimizer=adamw schedule=cosine_per_epoch augmentation=none\n";
    return os.str();
}

std::string describe(const CanonicalizeOptions& c) {
    std::ostringstream os;
    os << "canon: sanitize=" << to_string(c.sanitize.mode) << " ref=" << c.sanitize.reference_antenna
       << " k=" << c.grid.k << " window_t=" << c.window.t << " hop=" << c.window.hop
       << " grid=normalized interp=linear\n";
    return os.str();
}

}  // namespace sdp
