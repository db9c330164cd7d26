#include "radiodun/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "radiodun/image_io.hpp"

namespace radiodun {

using nlohmann::json;

void SceneGrid::validate() const {
    if (h < 1 || w < 1) throw std::invalid_argument("SceneGrid: empty grid");
    if (obstacle_maps.empty()) throw std::invalid_argument("SceneGrid: needs at least one obstacle channel");
    for (const GridMap& m : obstacle_maps) {
        if (m.h != h || m.w != w) throw std::invalid_argument("SceneGrid: obstacle map shape mismatch");
        for (double x : m.v)
            if (x != 0.0 && x != 1.0) throw std::invalid_argument("SceneGrid: obstacle cells must be 0 or 1");
    }
    if (tx_known && (tx_x < 1 || tx_x > h || tx_y < 1 || tx_y > w))
        throw std::invalid_argument("SceneGrid: transmitter outside grid");
}

void RadioMap::validate() const {
    if (!values.all_finite()) throw std::invalid_argument("RadioMap: non-finite values");
    if (normalized && (values.min() < 0.0 || values.max() > 1.0))
        throw std::invalid_argument("RadioMap: normalized map outside [0,1]");
}

GridMap distance_map(int tx_x, int tx_y, int height, int width) {
    if (height < 1 || width < 1 || static_cast<long>(height) * width < 2)
        throw std::invalid_argument("distance_map: grid too small to normalize");
    GridMap raw(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double dx = static_cast<double>(tx_x - (r + 1));
            const double dy = static_cast<double>(tx_y - (c + 1));
            raw.at(r, c) = std::log10(1.0 + std::sqrt(dx * dx + dy * dy));
        }
    }
    const double lo = raw.min(), hi = raw.max();
    GridMap out(height, width);
    if (hi > lo) {
        for (size_t i = 0; i < raw.size(); ++i) out[i] = 1.0 - (raw[i] - lo) / (hi - lo);
    } else {
        for (size_t i = 0; i < raw.size(); ++i) out[i] = 1.0;  // tx equidistant: everything closest
    }
    return out;
}

int obstruction_count(const SceneGrid& scene, int rx_x, int rx_y) {
    // Bresenham on 1-based cell centers from (tx_x, tx_y) to (rx_x, rx_y).
    int x0 = scene.tx_x, y0 = scene.tx_y;
    const int x1 = rx_x, y1 = rx_y;
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int count = 0;
    bool first = true;
    for (;;) {
        if (!first && x0 >= 1 && x0 <= scene.h && y0 >= 1 && y0 <= scene.w) {
            for (const GridMap& m : scene.obstacle_maps)
                if (m.at(x0 - 1, y0 - 1) != 0.0) ++count;
        }
        first = false;
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
    return count;
}

GridMap synth_radio_map_raw(const SceneGrid& scene, double alpha, double eta, double sigma_delta,
                            uint64_t seed) {
    scene.validate();
    if (!scene.tx_known) throw std::invalid_argument("synth_radio_map: transmitter position required");
    if (alpha < 0.0) throw std::invalid_argument("synth_radio_map: alpha must be >= 0");
    if (sigma_delta < 0.0) throw std::invalid_argument("synth_radio_map: sigma_delta must be >= 0");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    GridMap out(scene.h, scene.w);
    for (int r = 0; r < scene.h; ++r) {
        for (int c = 0; c < scene.w; ++c) {
            const double dx = static_cast<double>(scene.tx_x - (r + 1));
            const double dy = static_cast<double>(scene.tx_y - (c + 1));
            const double d = std::max(1.0, std::sqrt(dx * dx + dy * dy));
            const double z = gauss(rng);  // one draw per cell keeps the stream aligned
            const double shadow_std = sigma_delta * static_cast<double>(obstruction_count(scene, r + 1, c + 1));
            const double x_delta = shadow_std > 0.0 ? shadow_std * z : 0.0;
            out.at(r, c) = scene.tx_strength - (10.0 * alpha * std::log10(d) + eta + x_delta);
        }
    }
    return out;
}

RadioMap synth_radio_map(const SceneGrid& scene, double alpha, double eta, double sigma_delta,
                         uint64_t seed) {
    return normalize_map(synth_radio_map_raw(scene, alpha, eta, sigma_delta, seed));
}

RadioMap normalize_map(const GridMap& values) {
    if (!values.all_finite()) throw std::invalid_argument("normalize_map: non-finite input");
    const double lo = values.min(), hi = values.max();
    RadioMap out;
    out.values = GridMap(values.h, values.w);
    out.normalized = true;
    if (hi > lo) {
        for (size_t i = 0; i < values.size(); ++i) out.values[i] = (values[i] - lo) / (hi - lo);
    }
    // constant input stays all zeros
    return out;
}

GrayImage quantize_map(const GridMap& map) {
    GrayImage img;
    img.h = map.h;
    img.w = map.w;
    img.pixels.resize(map.size());
    for (size_t i = 0; i < map.size(); ++i) {
        const double x = std::clamp(map[i], 0.0, 1.0);
        img.pixels[i] = static_cast<uint8_t>(std::lround(x * 255.0));
    }
    return img;
}

GridMap dequantize_map(const GrayImage& img) {
    GridMap map(img.h, img.w);
    for (size_t i = 0; i < map.size(); ++i) map[i] = static_cast<double>(img.pixels[i]) / 255.0;
    return map;
}

void write_scene(const std::string& dir, const std::string& stem, const SceneGrid& scene,
                 const RadioMap& map, const SceneMeta& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string base = (fs::path(dir) / stem).string();

    for (size_t i = 0; i < scene.obstacle_maps.size(); ++i) {
        const GridMap& m = scene.obstacle_maps[i];
        GrayImage img;
        img.h = m.h;
        img.w = m.w;
        img.pixels.resize(m.size());
        for (size_t j = 0; j < m.size(); ++j) img.pixels[j] = m[j] != 0.0 ? 255 : 0;
        write_gray(base + "_obstacle" + std::to_string(i) + ".png", img);
    }
    write_gray(base + "_map.png", quantize_map(map.values));

    json j;
    j["height"] = scene.h;
    j["width"] = scene.w;
    j["tx_pos"] = {scene.tx_x, scene.tx_y};
    j["tx_known"] = scene.tx_known;
    j["tx_strength"] = scene.tx_strength;
    j["num_obstacle_channels"] = scene.num_obstacle_channels();
    j["alpha"] = meta.alpha;
    j["eta"] = meta.eta;
    j["sigma_delta"] = meta.sigma_delta;
    j["seed"] = meta.seed;
    std::ofstream out(base + ".json");
    if (!out) throw std::runtime_error("cannot write " + base + ".json");
    out << j.dump(2) << "\n";
}

std::pair<SceneGrid, RadioMap> read_scene(const std::string& dir, const std::string& stem) {
    namespace fs = std::filesystem;
    const std::string base = (fs::path(dir) / stem).string();
    std::ifstream in(base + ".json");
    if (!in) throw std::runtime_error("cannot open " + base + ".json");
    json j;
    in >> j;

    SceneGrid scene;
    scene.h = j.at("height").get<int>();
    scene.w = j.at("width").get<int>();
    scene.tx_x = j.at("tx_pos")[0].get<int>();
    scene.tx_y = j.at("tx_pos")[1].get<int>();
    scene.tx_known = j.at("tx_known").get<bool>();
    scene.tx_strength = j.at("tx_strength").get<double>();
    const int m = j.at("num_obstacle_channels").get<int>();
    for (int i = 0; i < m; ++i) {
        const GrayImage img = read_gray(base + "_obstacle" + std::to_string(i) + ".png");
        GridMap g(img.h, img.w);
        for (size_t p = 0; p < g.size(); ++p) g[p] = img.pixels[p] > 0 ? 1.0 : 0.0;
        scene.obstacle_maps.push_back(std::move(g));
    }
    RadioMap map;
    map.values = dequantize_map(read_gray(base + "_map.png"));
    map.normalized = true;
    return {std::move(scene), std::move(map)};
}

}  // namespace radiodun
