#pragma once

#include "pixcorr/scenegen.hpp"
#include "pixcorr/segnet.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pixcorr {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr double kTauCap = 0.9;

// Per-class confidence thresholds. Classes the network never predicted carry
// +infinity so no pixel can pass.
struct ClassThresholds {
    std::vector<double> tau;
};

struct PseudoLabelMap {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> labels; // class id or kIgnoreLabel
};

// Median rule over per-class confidence lists: min(median, 0.9), where an
// even-length median takes the lower of the two middle values so the
// threshold stays attainable. Empty lists get +infinity.
ClassThresholds thresholds_from_confidences(std::vector<std::vector<double>> lists);

// Runs the network over the whole target training set; for each class,
// collects the max-softmax confidence of every pixel argmax-classified as
// that class, then applies the median rule above.
ClassThresholds compute_thresholds(const SegNet& net, const Dataset& target_train);

// Label decision on precomputed probabilities p [C,H,W]: argmax where the
// confidence strictly exceeds the class threshold, kIgnoreLabel elsewhere.
// Argmax ties break to the lowest class index.
PseudoLabelMap pseudo_from_probs(const Tensor& p, const ClassThresholds& tau);

PseudoLabelMap generate_pseudo_labels(const SegNet& net, const Tensor& image,
                                      const ClassThresholds& tau);

struct PseudoStats {
    double coverage = 0.0;                 // non-ignore fraction
    std::vector<std::size_t> per_class;    // counts per class id
};
PseudoStats pseudo_label_stats(const PseudoLabelMap& map, std::size_t classes);

// One pseudo-label store per (network, target training set): NNNN.pgm maps
// plus a thresholds.txt sidecar.
struct PseudoStore {
    ClassThresholds thresholds;
    std::vector<PseudoLabelMap> maps; // aligned with target-train sample ids
};

PseudoStore build_pseudo_store(const SegNet& net, const Dataset& target_train);
void save_pseudo_store(const std::string& dir, const PseudoStore& store);
PseudoStore load_pseudo_store(const std::string& dir);

} // namespace pixcorr
