#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sdp/csi_model.hpp"

namespace testutil {

/// Scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("sdp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline sdp::DeviceProfile profile(std::size_t k = 30, double spacing = 312.5e3, int n_tx = 1, int n_rx = 1,
                                  double rate = 100.0) {
    sdp::DeviceProfile p;
    p.subcarrier_offsets = sdp::DeviceProfile::uniform_offsets(k, spacing);
    p.n_tx = n_tx;
    p.n_rx = n_rx;
    p.sample_rate = rate;
    return p;
}

}  // namespace testutil
