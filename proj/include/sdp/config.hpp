// SPDX-License-Identifier: Apache-2.0
//
// Key-value scene and task description files.
//
//   # comment
//   carrier_hz = 5.32e9
//   subcarriers = -8.75e6, -8.4375e6, ...     (or subcarrier_count + subcarrier_spacing_hz)
//   n_tx = 1
//   n_rx = 3
//   sample_rate_hz = 100
//   path = amp=1 phase=0 delay=20e-9 doppler=0 [delay_rate= doppler_rate= from= until= pair=]
//   sto_s = 50e-9          (task files: sto_s = lo, hi)
//   sto_jitter_s = 0
//   cfo_hz = 25            (task files: lo, hi)
//   pll_rad = 0.3          (task files: lo, hi)
//   noise_std = 0.01
//   duration_s = 5
//   seed = 992
//
// Task files additionally take `class = name=Walk doppler=10 delay=40e-9 [scale=1]`
// lines plus subjects, trials, motion_amplitude = lo, hi, doppler_jitter,
// static_amplitude, static_delay_s and environment. `path` lines become
// background paths shared by every stream.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdp/csi_model.hpp"
#include "sdp/task.hpp"

namespace sdp {

class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& is);
    static KeyValueFile load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.contains(key); }
    const std::string& get(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;
    std::vector<std::string> all(const std::string& key) const;

    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<std::string> keys() const;

private:
    std::map<std::string, std::vector<std::string>> values_;
    std::map<std::string, std::size_t> lines_;
};

double parse_number(const std::string& text, const std::string& context);

/// `amp=1 phase=0 delay=... doppler=...`; returns the optional pair index.
PathParams parse_path(const std::string& text, std::optional<std::size_t>* pair = nullptr);

DeviceProfile parse_profile(const KeyValueFile& kv);
Scene parse_scene(const KeyValueFile& kv);
TaskSpec parse_task(const KeyValueFile& kv);

}  // namespace sdp
