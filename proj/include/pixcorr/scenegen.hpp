#pragma once

#include "pixcorr/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pixcorr {

enum class Domain { Source, Target };

const char* domain_name(Domain d);

// Class ids used by the scene grammar.
enum SceneClass : std::uint8_t {
    kSky = 0,
    kRoad = 1,
    kBuilding = 2,
    kVehicle = 3,
    kPole = 4,
};
inline constexpr std::size_t kSceneClasses = 5;

struct SceneSample {
    Tensor image;                     // [ch,H,W], values on the 1/255 grid in [0,1]
    std::vector<std::uint8_t> label;  // H*W class ids, row-major; empty if not loaded
    Domain domain = Domain::Source;
    std::size_t id = 0;
};

// Appearance parameters of one domain. Geometry rules are shared between
// domains by construction; only palette/noise/texture (and the rng stream)
// differ, which is the invariant the method exploits.
struct DomainSpec {
    Domain domain = Domain::Source;
    std::array<std::array<double, 3>, kSceneClasses> palette{};
    double palette_jitter = 0.06; // per-sample uniform shift of each class color
    double noise_std = 0.04;
    double texture_freq = 2.0;
    double texture_amp = 0.05;
    std::size_t min_vehicles = 1, max_vehicles = 3;
    std::size_t min_poles = 0, max_poles = 2;
    std::uint64_t seed = 1;
};

DomainSpec default_source_spec(std::uint64_t seed);
DomainSpec default_target_spec(std::uint64_t seed);

struct Dataset {
    std::vector<SceneSample> samples;
    std::size_t height = 0, width = 0, channels = 0, classes = kSceneClasses;
    bool has_labels = true;
};

// n structured samples. Per-sample rng is derived from (spec.seed, id), so
// any subrange regenerates identically.
Dataset generate(const DomainSpec& spec, std::size_t n, std::size_t height, std::size_t width,
                 std::size_t classes = kSceneClasses);

// Directory layout: images/NNNN.ppm (P6), labels/NNNN.pgm (P5), manifest.txt.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir, bool with_labels = true);

} // namespace pixcorr
