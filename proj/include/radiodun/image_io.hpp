#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace radiodun {

/// 8-bit grayscale raster used for on-disk scene and map exchange.
struct GrayImage {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> pixels;  // row-major

    uint8_t at(int r, int c) const { return pixels[static_cast<size_t>(r) * w + c]; }
};

/// Reads PNG or PGM depending on file extension. Throws std::runtime_error on I/O or
/// format problems.
GrayImage read_gray(const std::string& path);

/// Writes PNG or PGM depending on file extension. Output bytes are deterministic for
/// identical input.
void write_gray(const std::string& path, const GrayImage& img);

/// RGB variant, used only for rendered comparison panels.
struct RgbImage {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> pixels;  // row-major, 3 bytes per pixel
};

void write_rgb_png(const std::string& path, const RgbImage& img);

}  // namespace radiodun
