// SPDX-License-Identifier: Apache-2.0
//
// Binary containers (SDPR raw traces, SDPC canonical tensors), the
// tab-separated dataset manifest, and cross-user split construction.
//
// SDPR v1 (little-endian):
//   "SDPR" u16 version f64 carrier_hz f64 sample_rate_hz u8 n_tx u8 n_rx
//   u16 k_raw, k_raw x f64 offsets, u32 frame_count, then per frame
//   f64 timestamp + n_rx*n_tx*k_raw x (f32 re, f32 im) in [rx][tx][k] order.
//
// SDPC v1 (little-endian):
//   "SDPC" u16 version u16 a u16 k u32 t i32 label i32 subject
//   f64 window_start u16 provenance_len + bytes, then a*k*t x (f32 re, f32 im)
//   in [a][k][t] order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "sdp/canonicalizer.hpp"
#include "sdp/csi_model.hpp"

namespace sdp {

inline constexpr std::uint16_t kRawTraceVersion = 1;
inline constexpr std::uint16_t kTensorVersion = 1;

void write_raw_trace(const RawCsiStream& stream, std::ostream& sink);
RawCsiStream read_raw_trace(std::istream& source);
void write_raw_trace(const RawCsiStream& stream, const std::filesystem::path& path);
RawCsiStream read_raw_trace(const std::filesystem::path& path);

void write_tensor(const CanonicalTensor& tensor, std::ostream& sink);
CanonicalTensor read_tensor(std::istream& source);
void write_tensor(const CanonicalTensor& tensor, const std::filesystem::path& path);
CanonicalTensor read_tensor(const std::filesystem::path& path);

enum class Split { train, val, test, unassigned };
enum class TaskKind { classification, regression };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
    std::string path;
    std::int32_t label_id = 0;
    std::string label_name;
    std::int32_t subject = 0;
    std::string environment;
    Split split = Split::unassigned;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    TaskKind task_kind = TaskKind::classification;

    /// Throws on duplicate paths or non-dense label ids.
    void validate() const;
    std::set<std::int32_t> subjects() const;
    std::size_t class_count() const;
    /// Class names indexed by label id.
    std::vector<std::string> class_names() const;
    std::vector<ManifestEntry> select(Split s) const;
};

void write_manifest(const DatasetManifest& manifest, std::ostream& sink);
DatasetManifest read_manifest(std::istream& source);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SplitAssignment {
    std::set<std::int32_t> holdout_subjects;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Holdout subjects go to test; the rest are shuffled (seeded) and the first
/// round(val_fraction * n) become validation.
DatasetManifest cross_user_split(const DatasetManifest& manifest, const SplitAssignment& assignment);

}  // namespace sdp
