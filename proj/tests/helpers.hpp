#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "radiodun/grid.hpp"

namespace radiodun::testing {

/// Unique per-instance scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path = base / ("radiodun_test_" + std::to_string(::getpid()) + "_" +
                       std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline GridMap random_map(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    GridMap m(h, w);
    for (size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
    return m;
}

}  // namespace radiodun::testing
