#include "pixcorr/pseudo.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/pixmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace fs = std::filesystem;

namespace pixcorr {

namespace {

std::string index_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", i);
    return buf;
}

} // namespace

ClassThresholds thresholds_from_confidences(std::vector<std::vector<double>> lists) {
    ClassThresholds out;
    out.tau.resize(lists.size());
    for (std::size_t c = 0; c < lists.size(); ++c) {
        auto& list = lists[c];
        if (list.empty()) {
            out.tau[c] = std::numeric_limits<double>::infinity();
            continue;
        }
        std::sort(list.begin(), list.end());
        double median = list[(list.size() - 1) / 2];
        out.tau[c] = std::min(median, kTauCap);
    }
    return out;
}

ClassThresholds compute_thresholds(const SegNet& net, const Dataset& target_train) {
    if (target_train.samples.empty())
        throw ConfigError("threshold computation needs a non-empty target training set");
    std::size_t C = net.config().classes;
    std::vector<std::vector<double>> confidences(C);

    for (const SceneSample& s : target_train.samples) {
        Tensor p = net.predict(s.image).p;
        std::size_t hw = p.shape()[1] * p.shape()[2];
        for (std::size_t i = 0; i < hw; ++i) {
            std::size_t best = 0;
            double best_v = p.at(i);
            for (std::size_t c = 1; c < C; ++c) {
                double v = p.at(c * hw + i);
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            confidences[best].push_back(best_v);
        }
    }
    return thresholds_from_confidences(std::move(confidences));
}

PseudoLabelMap pseudo_from_probs(const Tensor& p, const ClassThresholds& tau) {
    if (p.rank() != 3)
        throw DimensionError("pseudo_from_probs expects [C,H,W], got " + shape_str(p.shape()));
    std::size_t C = p.shape()[0], H = p.shape()[1], W = p.shape()[2];
    if (tau.tau.size() != C)
        throw DimensionError("threshold vector has " + std::to_string(tau.tau.size()) +
                             " entries for " + std::to_string(C) + " classes");

    PseudoLabelMap map;
    map.height = H;
    map.width = W;
    map.labels.assign(H * W, kIgnoreLabel);
    std::size_t hw = H * W;
    for (std::size_t i = 0; i < hw; ++i) {
        std::size_t best = 0;
        double best_v = p.at(i);
        for (std::size_t c = 1; c < C; ++c) {
            double v = p.at(c * hw + i);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (best_v > tau.tau[best]) map.labels[i] = static_cast<std::uint8_t>(best);
    }
    return map;
}

PseudoLabelMap generate_pseudo_labels(const SegNet& net, const Tensor& image,
                                      const ClassThresholds& tau) {
    return pseudo_from_probs(net.predict(image).p, tau);
}

PseudoStats pseudo_label_stats(const PseudoLabelMap& map, std::size_t classes) {
    PseudoStats st;
    st.per_class.assign(classes, 0);
    std::size_t labeled = 0;
    for (std::uint8_t v : map.labels) {
        if (v == kIgnoreLabel) continue;
        ++labeled;
        if (v < classes) ++st.per_class[v];
    }
    st.coverage = map.labels.empty()
                      ? 0.0
                      : static_cast<double>(labeled) / static_cast<double>(map.labels.size());
    return st;
}

PseudoStore build_pseudo_store(const SegNet& net, const Dataset& target_train) {
    PseudoStore store;
    store.thresholds = compute_thresholds(net, target_train);
    store.maps.reserve(target_train.samples.size());
    for (const SceneSample& s : target_train.samples)
        store.maps.push_back(generate_pseudo_labels(net, s.image, store.thresholds));
    return store;
}

void save_pseudo_store(const std::string& dir, const PseudoStore& store) {
    fs::create_directories(dir);
    std::ofstream tf(fs::path(dir) / "thresholds.txt");
    if (!tf) throw FormatError("cannot write thresholds in " + dir);
    for (std::size_t c = 0; c < store.thresholds.tau.size(); ++c) {
        double t = store.thresholds.tau[c];
        if (std::isinf(t)) tf << c << " inf\n";
        else {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", t);
            tf << c << " " << buf << "\n";
        }
    }
    for (std::size_t i = 0; i < store.maps.size(); ++i) {
        Graymap g;
        g.width = store.maps[i].width;
        g.height = store.maps[i].height;
        g.pixels = store.maps[i].labels;
        write_pgm((fs::path(dir) / (index_name(i) + ".pgm")).string(), g);
    }
}

PseudoStore load_pseudo_store(const std::string& dir) {
    std::ifstream tf(fs::path(dir) / "thresholds.txt");
    if (!tf) throw FormatError("pseudo-label store has no thresholds.txt in " + dir);
    PseudoStore store;
    std::size_t idx;
    std::string value;
    while (tf >> idx >> value) {
        if (store.thresholds.tau.size() <= idx) store.thresholds.tau.resize(idx + 1);
        store.thresholds.tau[idx] =
            value == "inf" ? std::numeric_limits<double>::infinity() : std::stod(value);
    }
    for (std::size_t i = 0;; ++i) {
        fs::path p = fs::path(dir) / (index_name(i) + ".pgm");
        if (!fs::exists(p)) break;
        Graymap g = read_pgm(p.string());
        PseudoLabelMap map;
        map.height = g.height;
        map.width = g.width;
        map.labels = std::move(g.pixels);
        store.maps.push_back(std::move(map));
    }
    if (store.maps.empty()) throw FormatError("pseudo-label store is empty in " + dir);
    return store;
}

} // namespace pixcorr
