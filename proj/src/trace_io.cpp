// SPDX-License-Identifier: Apache-2.0
#include "sdp/trace_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "sdp/error.hpp"
#include "sdp/rng.hpp"

namespace sdp {

namespace {

static_assert(std::endian::native == std::endian::little, "byte-swapping writer not implemented");

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& os) : os_(os) {}

    template <typename T>
    void put(T value) {
        char buf[sizeof(T)];
        std::memcpy(buf, &value, sizeof(T));
        os_.write(buf, sizeof(T));
    }
    void put_bytes(const std::string& s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
    void put_complex(const cplx& v) {
        put(static_cast<float>(v.real()));
        put(static_cast<float>(v.imag()));
    }
    void check() {
        if (!os_) throw IoError("write failed");
    }

private:
    std::ostream& os_;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& is) : is_(is) {}

    template <typename T>
    T get(const char* what) {
        char buf[sizeof(T)];
        read_exact(buf, sizeof(T), what);
        T value;
        std::memcpy(&value, buf, sizeof(T));
        return value;
    }
    std::string get_bytes(std::size_t n, const char* what) {
        std::string s(n, '\0');
        read_exact(s.data(), n, what);
        return s;
    }
    std::uint64_t offset() const { return offset_; }

    void expect_magic(const char (&magic)[5]) {
        char buf[4];
        is_.read(buf, 4);
        if (is_.gcount() != 4 || std::memcmp(buf, magic, 4) != 0)
            throw BadMagic(std::string("expected magic '") + magic + "' at offset 0");
        offset_ = 4;
    }

private:
    void read_exact(char* dst, std::size_t n, const char* what) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw TruncatedFile(std::string("truncated while reading ") + what + " at offset " + std::to_string(offset_));
        offset_ += n;
    }

    std::istream& is_;
    std::uint64_t offset_ = 0;
};

void check_version(std::uint16_t got, std::uint16_t want) {
    if (got != want)
        throw UnsupportedVersion("version " + std::to_string(got) + " at offset 4 (supported: " + std::to_string(want) + ")");
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return is;
}

}  // namespace

void write_raw_trace(const RawCsiStream& stream, std::ostream& sink) {
    const auto& p = stream.profile;
    p.validate();
    if (stream.frames.size() > UINT32_MAX) throw InvalidArgument("too many frames for SDPR");
    ByteWriter w(sink);
    w.put_bytes("SDPR");
    w.put<std::uint16_t>(kRawTraceVersion);
    w.put<double>(p.carrier_hz);
    w.put<double>(p.sample_rate);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.n_tx));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.n_rx));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.k_raw()));
    for (double f : p.subcarrier_offsets) w.put<double>(f);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.frames.size()));
    const std::size_t frame_size = p.frame_size();
    for (std::size_t i = 0; i < stream.frames.size(); ++i) {
        const auto& f = stream.frames[i];
        if (f.values.size() != frame_size)
            throw ShapeMismatch("frame " + std::to_string(i) + " has " + std::to_string(f.values.size()) +
                                " values, profile expects " + std::to_string(frame_size));
        w.put<double>(f.timestamp);
        for (const auto& v : f.values) w.put_complex(v);
    }
    w.check();
}

RawCsiStream read_raw_trace(std::istream& source) {
    ByteReader r(source);
    r.expect_magic("SDPR");
    check_version(r.get<std::uint16_t>("version"), kRawTraceVersion);
    RawCsiStream s;
    auto& p = s.profile;
    p.carrier_hz = r.get<double>("carrier_hz");
    p.sample_rate = r.get<double>("sample_rate_hz");
    p.n_tx = r.get<std::uint8_t>("n_tx");
    p.n_rx = r.get<std::uint8_t>("n_rx");
    const auto k_raw = r.get<std::uint16_t>("k_raw");
    p.subcarrier_offsets.resize(k_raw);
    for (auto& f : p.subcarrier_offsets) f = r.get<double>("subcarrier offsets");
    const auto header_end = r.offset();
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw ShapeMismatch(std::string("invalid device header before offset ") + std::to_string(header_end) + ": " + e.what());
    }
    const auto n_frames = r.get<std::uint32_t>("frame_count");
    const std::size_t frame_size = p.frame_size();
    s.frames.resize(n_frames);
    for (std::uint32_t i = 0; i < n_frames; ++i) {
        auto& f = s.frames[i];
        try {
            f.timestamp = r.get<double>("frame timestamp");
            f.values.resize(frame_size);
            for (auto& v : f.values) {
                const float re = r.get<float>("frame values");
                const float im = r.get<float>("frame values");
                v = {re, im};
            }
        } catch (const TruncatedFile& e) {
            throw TruncatedFile("frame " + std::to_string(i) + ": " + e.what());
        }
    }
    source.peek();
    if (!source.eof())
        throw ShapeMismatch("trailing bytes after frame " + std::to_string(n_frames) + " at offset " + std::to_string(r.offset()));
    s.provenance = "sdpr";
    return s;
}

void write_raw_trace(const RawCsiStream& stream, const std::filesystem::path& path) {
    auto os = open_out(path);
    write_raw_trace(stream, os);
}

RawCsiStream read_raw_trace(const std::filesystem::path& path) {
    auto is = open_in(path);
    auto s = read_raw_trace(is);
    s.provenance = path.filename().string();
    return s;
}

void write_tensor(const CanonicalTensor& tensor, std::ostream& sink) {
    if (tensor.values.size() != tensor.a * tensor.k * tensor.t)
        throw ShapeMismatch("tensor payload does not match its a*k*t shape");
    if (tensor.a > UINT16_MAX || tensor.k > UINT16_MAX || tensor.t > UINT32_MAX)
        throw InvalidArgument("tensor shape exceeds SDPC header limits");
    if (tensor.source.size() > UINT16_MAX) throw InvalidArgument("provenance string too long");
    ByteWriter w(sink);
    w.put_bytes("SDPC");
    w.put<std::uint16_t>(kTensorVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(tensor.a));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(tensor.k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.t));
    w.put<std::int32_t>(tensor.label);
    w.put<std::int32_t>(tensor.subject);
    w.put<double>(tensor.window_start);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(tensor.source.size()));
    w.put_bytes(tensor.source);
    for (const auto& v : tensor.values) {
        w.put<float>(v.real());
        w.put<float>(v.imag());
    }
    w.check();
}

CanonicalTensor read_tensor(std::istream& source) {
    ByteReader r(source);
    r.expect_magic("SDPC");
    check_version(r.get<std::uint16_t>("version"), kTensorVersion);
    CanonicalTensor t;
    t.a = r.get<std::uint16_t>("a");
    t.k = r.get<std::uint16_t>("k");
    t.t = r.get<std::uint32_t>("t");
    t.label = r.get<std::int32_t>("label_id");
    t.subject = r.get<std::int32_t>("subject_id");
    t.window_start = r.get<double>("window_start");
    const auto len = r.get<std::uint16_t>("provenance length");
    t.source = r.get_bytes(len, "provenance");
    const std::uint64_t payload_at = r.offset();
    const std::uint64_t count = static_cast<std::uint64_t>(t.a) * t.k * t.t;
    if (count == 0) throw ShapeMismatch("zero-sized tensor shape in header ending at offset " + std::to_string(payload_at));

    // Compare the declared shape with what is actually present.
    const auto here = source.tellg();
    if (here != std::istream::pos_type(-1)) {
        source.seekg(0, std::ios::end);
        const auto end = source.tellg();
        source.seekg(here);
        const auto available = static_cast<std::uint64_t>(end - here);
        // a torn value means the file was cut short; whole values disagreeing with the header are a shape error
        if (available < count * 8 && available % 8 != 0)
            throw TruncatedFile("payload ends inside value " + std::to_string(available / 8) + " at offset " +
                                std::to_string(payload_at + available));
        if (available != count * 8)
            throw ShapeMismatch("header declares " + std::to_string(count) + " values (" + std::to_string(count * 8) +
                                " bytes) but payload at offset " + std::to_string(payload_at) + " holds " +
                                std::to_string(available) + " bytes");
    }
    t.values.resize(count);
    for (auto& v : t.values) {
        const float re = r.get<float>("tensor values");
        const float im = r.get<float>("tensor values");
        v = {re, im};
    }
    return t;
}

void write_tensor(const CanonicalTensor& tensor, const std::filesystem::path& path) {
    auto os = open_out(path);
    write_tensor(tensor, os);
}

CanonicalTensor read_tensor(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_tensor(is);
}

// ---------------------------------------------------------------- manifest

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "unassigned";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw ParseError("unknown split '" + s + "'");
}

void DatasetManifest::validate() const {
    std::set<std::string> paths;
    std::set<std::int32_t> labels;
    for (const auto& e : entries) {
        if (!paths.insert(e.path).second) throw InvalidArgument("duplicate manifest path '" + e.path + "'");
        labels.insert(e.label_id);
    }
    if (task_kind == TaskKind::classification && !labels.empty()) {
        if (*labels.begin() != 0 || *labels.rbegin() != static_cast<std::int32_t>(labels.size()) - 1)
            throw InvalidArgument("classification label ids must be dense from 0");
    }
}

std::set<std::int32_t> DatasetManifest::subjects() const {
    std::set<std::int32_t> out;
    for (const auto& e : entries) out.insert(e.subject);
    return out;
}

std::size_t DatasetManifest::class_count() const {
    std::int32_t top = -1;
    for (const auto& e : entries) top = std::max(top, e.label_id);
    return static_cast<std::size_t>(top + 1);
}

std::vector<std::string> DatasetManifest::class_names() const {
    std::vector<std::string> names(class_count());
    for (const auto& e : entries)
        if (names[static_cast<std::size_t>(e.label_id)].empty()) names[static_cast<std::size_t>(e.label_id)] = e.label_name;
    return names;
}

std::vector<ManifestEntry> DatasetManifest::select(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(e);
    return out;
}

namespace {
constexpr const char* kManifestHeader = "path\tlabel_id\tlabel_name\tsubject\tenv\tsplit";

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

std::int32_t parse_i32(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<std::int32_t>(v);
    } catch (const std::exception&) {
        throw ParseError("manifest line " + std::to_string(line) + ": expected integer, got '" + s + "'");
    }
}
}  // namespace

void write_manifest(const DatasetManifest& manifest, std::ostream& sink) {
    sink << kManifestHeader << '\n';
    for (const auto& e : manifest.entries) {
        sink << e.path << '\t' << e.label_id << '\t' << e.label_name << '\t' << e.subject << '\t' << e.environment
             << '\t' << to_string(e.split) << '\n';
    }
    if (!sink) throw IoError("manifest write failed");
}

DatasetManifest read_manifest(std::istream& source) {
    DatasetManifest m;
    std::string line;
    if (!std::getline(source, line) || line != kManifestHeader) throw ParseError("manifest header missing or malformed");
    std::size_t lineno = 1;
    while (std::getline(source, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 6)
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected 6 columns, got " +
                             std::to_string(cols.size()));
        ManifestEntry e;
        e.path = cols[0];
        e.label_id = parse_i32(cols[1], lineno);
        e.label_name = cols[2];
        e.subject = parse_i32(cols[3], lineno);
        e.environment = cols[4];
        e.split = parse_split(cols[5]);
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_manifest(manifest, os);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_manifest(is);
}

DatasetManifest cross_user_split(const DatasetManifest& manifest, const SplitAssignment& assignment) {
    const auto all = manifest.subjects();
    if (assignment.holdout_subjects.empty()) throw InvalidArgument("holdout subject set is empty");
    for (auto s : assignment.holdout_subjects)
        if (!all.contains(s)) throw InvalidArgument("holdout subject " + std::to_string(s) + " not in manifest");
    if (assignment.holdout_subjects.size() >= all.size()) throw EmptyTrain("holdout covers every subject");
    if (!(assignment.val_fraction >= 0.0 && assignment.val_fraction < 1.0))
        throw InvalidArgument("val_fraction must be in [0, 1)");

    DatasetManifest out = manifest;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        auto& e = out.entries[i];
        if (assignment.holdout_subjects.contains(e.subject)) {
            e.split = Split::test;
        } else {
            e.split = Split::train;
            pool.push_back(i);
        }
    }
    Rng rng(assignment.seed);
    rng.shuffle(std::span<std::size_t>(pool));
    const auto n_val = static_cast<std::size_t>(std::llround(assignment.val_fraction * static_cast<double>(pool.size())));
    for (std::size_t j = 0; j < n_val && j < pool.size(); ++j) out.entries[pool[j]].split = Split::val;
    return out;
}

}  // namespace sdp
