#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pixcorr {

// Binary portable graymap (P5), 8-bit, used for label maps and heatmaps.
struct Graymap {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels; // row-major
};

// Binary portable pixmap (P6), 8-bit RGB, used for scene images.
struct Pixmap {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels; // row-major, interleaved RGB
};

void write_pgm(const std::string& path, const Graymap& g);
Graymap read_pgm(const std::string& path);

void write_ppm(const std::string& path, const Pixmap& p);
Pixmap read_ppm(const std::string& path);

} // namespace pixcorr
