#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "radiodun/grid.hpp"
#include "radiodun/image_io.hpp"

namespace radiodun {

/// One scene: obstacle occupancy channels plus the transmitter.
/// Cell coordinates are 1-based: x in [1, h] indexes rows, y in [1, w] indexes columns.
/// The transmitter-unknown protocol substitutes (0, 0) with tx_known = false.
struct SceneGrid {
    int h = 0;
    int w = 0;
    std::vector<GridMap> obstacle_maps;  // m binary channels, values in {0, 1}
    int tx_x = 0;
    int tx_y = 0;
    bool tx_known = true;
    double tx_strength = 1.0;

    int num_obstacle_channels() const { return static_cast<int>(obstacle_maps.size()); }

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

struct RadioMap {
    GridMap values;
    bool normalized = false;

    void validate() const;
};

/// Inverted, min-max normalized log-distance map. Value 1 at the cell closest to the
/// transmitter, 0 at the farthest. tx may lie outside the grid, e.g. (0, 0) in the
/// transmitter-unknown protocol. Rejects degenerate 1x1 grids.
GridMap distance_map(int tx_x, int tx_y, int height, int width);

/// Cells of every obstacle channel crossed by the discrete segment from the transmitter
/// to (rx_x, rx_y), transmitter cell excluded, receiver cell included. Channels with an
/// obstacle on the same cell each count once.
int obstruction_count(const SceneGrid& scene, int rx_x, int rx_y);

/// Log-distance decay with per-cell Gaussian shadowing, before normalization:
///   X = I - (10 * alpha * log10(d) + eta + X_delta),
/// d clamped to >= 1 cell, X_delta ~ N(0, (sigma_delta * obstruction_count)^2) drawn
/// row-major from the seeded stream. Deterministic per seed.
GridMap synth_radio_map_raw(const SceneGrid& scene, double alpha, double eta, double sigma_delta,
                            uint64_t seed);

/// synth_radio_map_raw followed by min-max normalization, and optional additive
/// observation-free map noise is intentionally absent here; noise belongs to sampling.
RadioMap synth_radio_map(const SceneGrid& scene, double alpha, double eta, double sigma_delta,
                         uint64_t seed);

/// (v - min) / (max - min). A constant map normalizes to all zeros. Rejects NaN/Inf input.
RadioMap normalize_map(const GridMap& values);

/// Generation parameters echoed into the JSON sidecar next to each written scene.
struct SceneMeta {
    double alpha = 0.0;
    double eta = 0.0;
    double sigma_delta = 0.0;
    uint64_t seed = 0;
};

/// Writes <stem>_obstacle<i>.png (0/255), <stem>_map.png (linear [0,1] -> [0,255]) and
/// <stem>.json with tx_pos, tx_strength and the generator parameters.
void write_scene(const std::string& dir, const std::string& stem, const SceneGrid& scene,
                 const RadioMap& map, const SceneMeta& meta);

/// Reads the files written by write_scene.
std::pair<SceneGrid, RadioMap> read_scene(const std::string& dir, const std::string& stem);

/// [0,1] map to 8-bit gray, round-to-nearest.
GrayImage quantize_map(const GridMap& map);

/// Inverse of quantize_map up to quantization error.
GridMap dequantize_map(const GrayImage& img);

}  // namespace radiodun
