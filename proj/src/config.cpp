// SPDX-License-Identifier: Apache-2.0
#include "sdp/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sdp/error.hpp"

namespace sdp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::pair<double, double> range(const KeyValueFile& kv, const std::string& key, double fallback) {
    if (!kv.has(key)) return {fallback, fallback};
    const auto v = kv.numbers(key);
    if (v.size() == 1) return {v[0], v[0]};
    if (v.size() == 2) return {v[0], v[1]};
    throw ParseError("'" + key + "' expects one value or 'lo, hi'");
}

}  // namespace

double parse_number(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ParseError(context + ": cannot parse number '" + t + "'");
    }
}

KeyValueFile KeyValueFile::parse(std::istream& is) {
    KeyValueFile kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty key");
        kv.values_[key].push_back(trim(line.substr(eq + 1)));
        kv.lines_.emplace(key, lineno);
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return parse(is);
}

const std::string& KeyValueFile::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ParseError("missing key '" + key + "'");
    if (it->second.size() != 1) throw ParseError("key '" + key + "' given more than once");
    return it->second.front();
}

std::optional<std::string> KeyValueFile::find(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get(key);
}

std::vector<std::string> KeyValueFile::all(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
}

double KeyValueFile::number(const std::string& key) const { return parse_number(get(key), key); }

double KeyValueFile::number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::vector<double> KeyValueFile::numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get(key))) out.push_back(parse_number(item, key));
    return out;
}

std::vector<std::string> KeyValueFile::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

PathParams parse_path(const std::string& text, std::optional<std::size_t>* pair) {
    PathParams p;
    double amp = 1.0, phase = 0.0;
    std::istringstream is(text);
    std::string field;
    while (is >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ParseError("path field '" + field + "' is not name=value");
        const std::string name = field.substr(0, eq);
        const double v = parse_number(field.substr(eq + 1), "path." + name);
        if (name == "amp") amp = v;
        else if (name == "phase") phase = v;
        else if (name == "delay") p.delay = v;
        else if (name == "doppler") p.doppler = v;
        else if (name == "delay_rate") p.delay_rate = v;
        else if (name == "doppler_rate") p.doppler_rate = v;
        else if (name == "from") p.active_from = v;
        else if (name == "until") p.active_until = v;
        else if (name == "pair" && pair) *pair = static_cast<std::size_t>(v);
        else throw ParseError("unknown path field '" + name + "'");
    }
    if (p.delay < 0.0) throw ParseError("path delay must be >= 0");
    p.amplitude = std::polar(amp, phase);
    return p;
}

DeviceProfile parse_profile(const KeyValueFile& kv) {
    DeviceProfile d;
    d.carrier_hz = kv.number_or("carrier_hz", d.carrier_hz);
    if (kv.has("subcarriers")) {
        d.subcarrier_offsets = kv.numbers("subcarriers");
    } else if (kv.has("subcarrier_count")) {
        d.subcarrier_offsets = DeviceProfile::uniform_offsets(static_cast<std::size_t>(kv.number("subcarrier_count")),
                                                              kv.number_or("subcarrier_spacing_hz", 312.5e3));
    } else {
        throw ParseError("profile needs 'subcarriers' or 'subcarrier_count'");
    }
    d.n_tx = static_cast<int>(kv.number_or("n_tx", 1));
    d.n_rx = static_cast<int>(kv.number_or("n_rx", 1));
    d.sample_rate = kv.number_or("sample_rate_hz", d.sample_rate);
    d.validate();
    return d;
}

Scene parse_scene(const KeyValueFile& kv) {
    Scene s;
    s.profile = parse_profile(kv);
    std::vector<std::pair<std::optional<std::size_t>, PathParams>> paths;
    bool any_pair = false;
    for (const auto& line : kv.all("path")) {
        std::optional<std::size_t> pair;
        auto p = parse_path(line, &pair);
        any_pair = any_pair || pair.has_value();
        paths.emplace_back(pair, p);
    }
    if (paths.empty()) throw ParseError("scene needs at least one 'path'");
    if (any_pair) {
        s.pair_paths.resize(s.profile.pairs());
        for (const auto& [pair, p] : paths) {
            if (pair && *pair >= s.profile.pairs()) throw ParseError("path pair index out of range");
            for (std::size_t i = 0; i < s.pair_paths.size(); ++i)
                if (!pair || *pair == i) s.pair_paths[i].push_back(p);
        }
    } else {
        for (const auto& [pair, p] : paths) s.paths.push_back(p);
    }
    s.impairments.sto = kv.number_or("sto_s", 0.0);
    s.impairments.sto_jitter = kv.number_or("sto_jitter_s", 0.0);
    s.impairments.cfo = kv.number_or("cfo_hz", 0.0);
    s.impairments.pll_phase = kv.number_or("pll_rad", 0.0);
    s.impairments.noise_std = kv.number_or("noise_std", 0.0);
    if (s.impairments.noise_std < 0.0) throw ParseError("noise_std must be >= 0");
    s.duration = kv.number("duration_s");
    if (kv.has("seed")) s.seed = static_cast<std::uint64_t>(kv.number("seed"));
    return s;
}

TaskSpec parse_task(const KeyValueFile& kv) {
    TaskSpec t;
    t.profile = parse_profile(kv);
    for (const auto& line : kv.all("class")) {
        ClassSignature c;
        std::istringstream is(line);
        std::string field;
        while (is >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw ParseError("class field '" + field + "' is not name=value");
            const std::string name = field.substr(0, eq);
            const std::string value = field.substr(eq + 1);
            if (name == "name") c.name = value;
            else if (name == "doppler") c.doppler_hz = parse_number(value, "class.doppler");
            else if (name == "delay") c.delay_s = parse_number(value, "class.delay");
            else if (name == "scale") c.amplitude_scale = parse_number(value, "class.scale");
            else throw ParseError("unknown class field '" + name + "'");
        }
        if (c.name.empty()) c.name = "class" + std::to_string(t.classes.size());
        t.classes.push_back(c);
    }
    for (const auto& line : kv.all("path")) t.background.push_back(parse_path(line));
    t.subjects = static_cast<int>(kv.number_or("subjects", t.subjects));
    t.trials = static_cast<int>(kv.number_or("trials", t.trials));
    t.duration = kv.number_or("duration_s", t.duration);
    t.static_amplitude = kv.number_or("static_amplitude", t.static_amplitude);
    t.static_delay = kv.number_or("static_delay_s", t.static_delay);
    std::tie(t.motion_amplitude_lo, t.motion_amplitude_hi) = range(kv, "motion_amplitude", t.motion_amplitude_lo);
    if (!kv.has("motion_amplitude")) {
        t.motion_amplitude_lo = 0.4;
        t.motion_amplitude_hi = 0.8;
    }
    t.doppler_jitter = kv.number_or("doppler_jitter", t.doppler_jitter);
    std::tie(t.sto_lo, t.sto_hi) = range(kv, "sto_s", 0.0);
    t.sto_jitter = kv.number_or("sto_jitter_s", 0.0);
    std::tie(t.cfo_lo, t.cfo_hi) = range(kv, "cfo_hz", 0.0);
    std::tie(t.pll_lo, t.pll_hi) = range(kv, "pll_rad", 0.0);
    t.noise_std = kv.number_or("noise_std", 0.0);
    if (kv.has("seed")) t.seed = static_cast<std::uint64_t>(kv.number("seed"));
    if (auto env = kv.find("environment")) t.environment = *env;
    return t;
}

}  // namespace sdp
