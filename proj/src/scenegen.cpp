#include "pixcorr/scenegen.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/pixmap.hpp"
#include "pixcorr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace pixcorr {

const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

// Palettes keep each class in the same hue family across domains (sky stays
// blue, vehicles stay reddish) so the shift is appearance-level, as between
// synthetic and real driving scenes, not a class relabeling.
DomainSpec default_source_spec(std::uint64_t seed) {
    DomainSpec s;
    s.domain = Domain::Source;
    s.palette = {{{0.35, 0.55, 0.92},    // sky: bright blue
                  {0.25, 0.25, 0.28},    // road: dark asphalt
                  {0.55, 0.38, 0.25},    // building: warm brick
                  {0.70, 0.15, 0.15},    // vehicle: red
                  {0.55, 0.55, 0.50}}};  // pole: mid gray
    s.noise_std = 0.06;
    s.texture_freq = 2.0;
    s.texture_amp = 0.05;
    s.seed = seed;
    return s;
}

DomainSpec default_target_spec(std::uint64_t seed) {
    DomainSpec s;
    s.domain = Domain::Target;
    s.palette = {{{0.55, 0.62, 0.80},    // sky: pale overcast blue
                  {0.36, 0.37, 0.46},    // road: lighter, wet, cool
                  {0.48, 0.42, 0.40},    // building: washed-out brick
                  {0.55, 0.28, 0.38},    // vehicle: dull red
                  {0.50, 0.52, 0.56}}};  // pole: cool gray
    s.noise_std = 0.14;
    s.texture_freq = 5.0;
    s.texture_amp = 0.08;
    s.seed = seed;
    return s;
}

namespace {

SceneSample generate_one(const DomainSpec& spec, std::size_t id, std::size_t H, std::size_t W,
                         std::size_t ch) {
    Rng rng(derive_seed(spec.seed, "scene-sample", id));

    // Band layout: sky on top, road at the bottom, buildings between.
    std::size_t sky_rows = static_cast<std::size_t>(std::lround(H * rng.uniform(0.20, 0.40)));
    std::size_t road_rows = static_cast<std::size_t>(std::lround(H * rng.uniform(0.25, 0.45)));
    sky_rows = std::clamp<std::size_t>(sky_rows, 1, H - 2);
    road_rows = std::clamp<std::size_t>(road_rows, 1, H - sky_rows - 1);
    std::size_t road_start = H - road_rows;

    std::vector<std::uint8_t> label(H * W, kBuilding);
    for (std::size_t y = 0; y < sky_rows; ++y)
        for (std::size_t x = 0; x < W; ++x) label[y * W + x] = kSky;
    for (std::size_t y = road_start; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) label[y * W + x] = kRoad;

    // Vehicles: rectangles fully inside the road band, large enough to
    // survive the downsampling the network applies.
    std::size_t n_vehicles =
        spec.min_vehicles + rng.next_below(spec.max_vehicles - spec.min_vehicles + 1);
    for (std::size_t v = 0; v < n_vehicles; ++v) {
        std::size_t vw = 3 + rng.next_below(5);
        std::size_t vh = 2 + rng.next_below(3);
        vw = std::min(vw, W);
        vh = std::min(vh, road_rows);
        std::size_t x0 = rng.next_below(W - vw + 1);
        std::size_t y0 = road_start + rng.next_below(road_rows - vh + 1);
        for (std::size_t y = y0; y < y0 + vh; ++y)
            for (std::size_t x = x0; x < x0 + vw; ++x) label[y * W + x] = kVehicle;
    }

    // Poles: thin vertical strips inside the building band (the rare class).
    std::size_t n_poles = spec.min_poles + rng.next_below(spec.max_poles - spec.min_poles + 1);
    for (std::size_t p = 0; p < n_poles; ++p) {
        std::size_t pw = rng.next_double() < 0.3 ? 2 : 1;
        std::size_t x0 = rng.next_below(W >= pw ? W - pw + 1 : 1);
        for (std::size_t y = sky_rows; y < road_start; ++y)
            for (std::size_t x = x0; x < x0 + pw; ++x) label[y * W + x] = kPole;
    }

    // Appearance: per-sample jittered palette + sinusoidal texture ripple +
    // per-channel noise, quantized to the 8-bit grid so disk round-trips are
    // lossless. The jitter keeps single colors from identifying classes.
    double theta = rng.uniform(0.0, 3.14159265358979323846);
    double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double cth = std::cos(theta), sth = std::sin(theta);

    std::array<std::array<double, 3>, kSceneClasses> palette = spec.palette;
    for (auto& color : palette)
        for (double& v : color) v += rng.uniform(-spec.palette_jitter, spec.palette_jitter);

    std::vector<double> image(ch * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            std::uint8_t cls = label[y * W + x];
            double ripple =
                spec.texture_amp *
                std::sin(2.0 * 3.14159265358979323846 * spec.texture_freq *
                             (cth * static_cast<double>(x) + sth * static_cast<double>(y)) /
                             static_cast<double>(W) +
                         phase);
            for (std::size_t c = 0; c < ch; ++c) {
                double base = palette[cls][c % 3];
                double v = base + ripple + spec.noise_std * rng.normal();
                int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                image[(c * H + y) * W + x] = static_cast<double>(q) / 255.0;
            }
        }

    SceneSample s;
    s.image = Tensor::from_data({ch, H, W}, std::move(image));
    s.label = std::move(label);
    s.domain = spec.domain;
    s.id = id;
    return s;
}

std::string index_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", i);
    return buf;
}

} // namespace

Dataset generate(const DomainSpec& spec, std::size_t n, std::size_t height, std::size_t width,
                 std::size_t classes) {
    if (n == 0) throw ConfigError("scene generation needs n >= 1");
    if (height < 8 || width < 8)
        throw ConfigError("scene dimensions too small: " + std::to_string(height) + "x" +
                          std::to_string(width) + " (need >= 8x8)");
    if (classes != kSceneClasses)
        throw ConfigError("scene grammar is fixed to " + std::to_string(kSceneClasses) +
                          " classes, got " + std::to_string(classes));

    Dataset ds;
    ds.height = height;
    ds.width = width;
    ds.channels = 3;
    ds.classes = classes;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        ds.samples.push_back(generate_one(spec, i, height, width, ds.channels));
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");

    for (const SceneSample& s : ds.samples) {
        Pixmap img;
        img.width = ds.width;
        img.height = ds.height;
        img.pixels.resize(ds.width * ds.height * 3);
        for (std::size_t y = 0; y < ds.height; ++y)
            for (std::size_t x = 0; x < ds.width; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    double v = s.image.at((c * ds.height + y) * ds.width + x);
                    img.pixels[(y * ds.width + x) * 3 + c] =
                        static_cast<std::uint8_t>(std::lround(v * 255.0));
                }
        write_ppm((fs::path(dir) / "images" / (index_name(s.id) + ".ppm")).string(), img);

        Graymap lab;
        lab.width = ds.width;
        lab.height = ds.height;
        lab.pixels = s.label;
        write_pgm((fs::path(dir) / "labels" / (index_name(s.id) + ".pgm")).string(), lab);
    }

    std::ofstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw FormatError("cannot write manifest in " + dir);
    man << "format=pixcorr-dataset v1\n";
    man << "count=" << ds.samples.size() << "\n";
    man << "height=" << ds.height << "\n";
    man << "width=" << ds.width << "\n";
    man << "channels=" << ds.channels << "\n";
    man << "classes=" << ds.classes << "\n";
    man << "domain=" << (ds.samples.empty() ? "source" : domain_name(ds.samples[0].domain))
        << "\n";
}

Dataset load_dataset(const std::string& dir, bool with_labels) {
    std::ifstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw FormatError("dataset manifest not found in " + dir);
    Dataset ds;
    std::size_t count = 0;
    Domain domain = Domain::Source;
    std::string line;
    while (std::getline(man, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "count") count = std::stoull(value);
        else if (key == "height") ds.height = std::stoull(value);
        else if (key == "width") ds.width = std::stoull(value);
        else if (key == "channels") ds.channels = std::stoull(value);
        else if (key == "classes") ds.classes = std::stoull(value);
        else if (key == "domain") domain = value == "target" ? Domain::Target : Domain::Source;
    }
    if (count == 0 || ds.height == 0 || ds.width == 0)
        throw FormatError("dataset manifest incomplete in " + dir);

    ds.has_labels = with_labels;
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Pixmap img = read_ppm((fs::path(dir) / "images" / (index_name(i) + ".ppm")).string());
        if (img.width != ds.width || img.height != ds.height)
            throw FormatError("image size mismatch in " + dir + " at index " + std::to_string(i));
        std::vector<double> data(ds.channels * ds.height * ds.width);
        for (std::size_t y = 0; y < ds.height; ++y)
            for (std::size_t x = 0; x < ds.width; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    data[(c * ds.height + y) * ds.width + x] =
                        static_cast<double>(img.pixels[(y * ds.width + x) * 3 + c]) / 255.0;

        SceneSample s;
        s.image = Tensor::from_data({ds.channels, ds.height, ds.width}, std::move(data));
        s.domain = domain;
        s.id = i;
        if (with_labels) {
            Graymap lab = read_pgm((fs::path(dir) / "labels" / (index_name(i) + ".pgm")).string());
            if (lab.width != ds.width || lab.height != ds.height)
                throw FormatError("label size mismatch in " + dir + " at index " +
                                  std::to_string(i));
            s.label = std::move(lab.pixels);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace pixcorr
