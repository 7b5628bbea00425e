#include "pixcorr/pixmap.hpp"

#include "pixcorr/errors.hpp"

#include <fstream>

namespace pixcorr {

namespace {

void write_netpbm(const std::string& path, const char* magic, std::size_t w, std::size_t h,
                  const std::vector<std::uint8_t>& pixels, std::size_t samples_per_pixel) {
    if (pixels.size() != w * h * samples_per_pixel)
        throw FormatError("pixmap buffer size does not match dimensions for " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << magic << "\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw FormatError("write failed: " + path);
}

void skip_whitespace_and_comments(std::istream& in) {
    int c = in.peek();
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        c = in.peek();
    }
}

std::size_t read_pnm_int(std::istream& in, const std::string& path) {
    skip_whitespace_and_comments(in);
    std::size_t v = 0;
    if (!(in >> v)) throw FormatError("bad netpbm header in " + path);
    return v;
}

std::vector<std::uint8_t> read_netpbm(const std::string& path, const char* magic,
                                      std::size_t samples_per_pixel, std::size_t& w,
                                      std::size_t& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != magic[0] || m1 != magic[1])
        throw FormatError("bad magic in " + path + ", expected " + magic);
    w = read_pnm_int(in, path);
    h = read_pnm_int(in, path);
    std::size_t maxval = read_pnm_int(in, path);
    if (maxval != 255) throw FormatError("unsupported maxval in " + path);
    in.get(); // single whitespace after maxval
    std::vector<std::uint8_t> pixels(w * h * samples_per_pixel);
    if (!in.read(reinterpret_cast<char*>(pixels.data()),
                 static_cast<std::streamsize>(pixels.size())))
        throw FormatError("truncated pixel data in " + path);
    return pixels;
}

} // namespace

void write_pgm(const std::string& path, const Graymap& g) {
    write_netpbm(path, "P5", g.width, g.height, g.pixels, 1);
}

Graymap read_pgm(const std::string& path) {
    Graymap g;
    g.pixels = read_netpbm(path, "P5", 1, g.width, g.height);
    return g;
}

void write_ppm(const std::string& path, const Pixmap& p) {
    write_netpbm(path, "P6", p.width, p.height, p.pixels, 3);
}

Pixmap read_ppm(const std::string& path) {
    Pixmap p;
    p.pixels = read_netpbm(path, "P6", 3, p.width, p.height);
    return p;
}

} // namespace pixcorr
