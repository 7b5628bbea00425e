#include "pixcorr/metrics.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/pixmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace pixcorr {

void IoUAccumulator::add(const std::vector<std::uint8_t>& pred,
                         const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size())
        throw DimensionError("iou: prediction has " + std::to_string(pred.size()) +
                             " pixels, ground truth " + std::to_string(gt.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gt[i] >= classes || pred[i] >= classes)
            throw DimensionError("iou: label out of range for " + std::to_string(classes) +
                                 " classes");
        ++confusion[gt[i] * classes + pred[i]];
    }
}

IoUReport IoUAccumulator::report() const {
    IoUReport r;
    r.confusion = confusion;
    r.iou.assign(classes, 0.0);
    r.present.assign(classes, false);
    double acc = 0.0;
    std::size_t n_present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t tp = confusion[c * classes + c];
        std::size_t fn = 0, fp = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            if (k != c) {
                fn += confusion[c * classes + k];
                fp += confusion[k * classes + c];
            }
        }
        std::size_t denom = tp + fp + fn;
        if (denom == 0) continue; // absent from both pred and gt
        r.present[c] = true;
        r.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
        acc += r.iou[c];
        ++n_present;
    }
    r.miou = n_present ? acc / static_cast<double>(n_present) : 0.0;
    return r;
}

IoUReport iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
              std::size_t classes) {
    IoUAccumulator acc(classes);
    acc.add(pred, gt);
    return acc.report();
}

ImageEntropy entropy_analysis(const Tensor& p, const std::vector<std::uint8_t>& gt) {
    if (p.rank() != 3)
        throw DimensionError("entropy_analysis expects [C,H,W], got " + shape_str(p.shape()));
    std::size_t C = p.shape()[0], hw = p.shape()[1] * p.shape()[2];
    if (gt.size() != hw)
        throw DimensionError("entropy_analysis: ground truth size " + std::to_string(gt.size()) +
                             " does not match " + shape_str(p.shape()));

    ImageEntropy out;
    double sum_c = 0.0, sum_i = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        double ent = 0.0;
        std::size_t best = 0;
        double best_v = p.at(i);
        for (std::size_t c = 0; c < C; ++c) {
            double v = p.at(c * hw + i);
            if (v > 0.0) ent -= v * std::log(v);
            if (c > 0 && v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (best == gt[i]) {
            sum_c += ent;
            ++out.n_correct;
        } else {
            sum_i += ent;
            ++out.n_incorrect;
        }
    }
    if (out.n_correct) out.correct = sum_c / static_cast<double>(out.n_correct);
    if (out.n_incorrect) out.incorrect = sum_i / static_cast<double>(out.n_incorrect);
    return out;
}

Tensor pixel_similarity_map(const Tensor& rows) {
    if (rows.rank() != 2)
        throw DimensionError("pixel_similarity_map expects [n,C], got " + shape_str(rows.shape()));
    std::size_t n = rows.shape()[0], C = rows.shape()[1];
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += rows.at(i * C + c) * rows.at(i * C + c);
        norms[i] = std::sqrt(s);
    }
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double d = norms[i] * norms[j];
            if (d == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += rows.at(i * C + c) * rows.at(j * C + c);
            double cos = dot / d;
            out[i * n + j] = cos > 0.0 ? cos : 0.0;
        }
    return Tensor::from_data({n, n}, std::move(out));
}

Tensor one_hot_rows_nearest(const std::vector<std::uint8_t>& gt, std::size_t H, std::size_t W,
                            std::size_t h, std::size_t w, std::size_t classes) {
    if (gt.size() != H * W)
        throw DimensionError("ground truth size does not match " + std::to_string(H) + "x" +
                             std::to_string(W));
    std::vector<double> rows(h * w * classes, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            // nearest sample on the align-corners grid
            double fy = h > 1 ? static_cast<double>(y) * (H - 1) / static_cast<double>(h - 1) : 0;
            double fx = w > 1 ? static_cast<double>(x) * (W - 1) / static_cast<double>(w - 1) : 0;
            std::size_t sy = static_cast<std::size_t>(std::lround(fy));
            std::size_t sx = static_cast<std::size_t>(std::lround(fx));
            std::uint8_t cls = gt[sy * W + sx];
            if (cls >= classes)
                throw DimensionError("ground-truth label out of range: " + std::to_string(cls));
            rows[(y * w + x) * classes + cls] = 1.0;
        }
    return Tensor::from_data({h * w, classes}, std::move(rows));
}

std::optional<AttentionVis> attention_visualization(const Tensor& z_rows, std::size_t h,
                                                    std::size_t w, std::size_t out_h,
                                                    std::size_t out_w, std::size_t cls) {
    if (z_rows.rank() != 2 || z_rows.shape()[0] != h * w)
        throw DimensionError("attention_visualization expects [h*w,C] rows matching the grid");
    std::size_t n = h * w, C = z_rows.shape()[1];
    if (cls >= C) throw ConfigError("class " + std::to_string(cls) + " out of range");

    // Most confident pixel of the class under a per-row softmax.
    std::size_t anchor = 0;
    double best_conf = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double mx = z_rows.at(i * C);
        for (std::size_t c = 1; c < C; ++c)
            if (z_rows.at(i * C + c) > mx) {
                mx = z_rows.at(i * C + c);
                best = c;
            }
        if (best != cls) continue;
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) denom += std::exp(z_rows.at(i * C + c) - mx);
        double conf = 1.0 / denom; // softmax value of the argmax class
        if (conf > best_conf) {
            best_conf = conf;
            anchor = i;
        }
    }
    if (best_conf < 0.0) return std::nullopt; // class not predicted

    Tensor sim = pixel_similarity_map(z_rows);
    AttentionVis vis;
    vis.height = out_h;
    vis.width = out_w;
    vis.anchor_row = anchor;
    vis.heat.resize(out_h * out_w);
    // nearest-neighbor upsample of the anchor's similarity row
    for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            std::size_t sy =
                out_h > 1 ? static_cast<std::size_t>(std::lround(
                                static_cast<double>(oy) * (h - 1) / static_cast<double>(out_h - 1)))
                          : 0;
            std::size_t sx =
                out_w > 1 ? static_cast<std::size_t>(std::lround(
                                static_cast<double>(ox) * (w - 1) / static_cast<double>(out_w - 1)))
                          : 0;
            vis.heat[oy * out_w + ox] = sim.at(anchor * n + sy * w + sx);
        }
    std::size_t ay = anchor / w, ax = anchor % w;
    vis.anchor_y = h > 1 ? ay * (out_h - 1) / (h - 1) : 0;
    vis.anchor_x = w > 1 ? ax * (out_w - 1) / (w - 1) : 0;
    return vis;
}

EvalResult evaluate(const SegNet& net, const Dataset& eval_set) {
    if (!eval_set.has_labels || eval_set.samples.empty())
        throw ConfigError("evaluation needs a labeled, non-empty dataset");
    std::size_t C = net.config().classes;
    IoUAccumulator acc(C);
    EvalResult res;
    double sum_c = 0.0, sum_i = 0.0;
    for (const SceneSample& s : eval_set.samples) {
        Tensor p = net.predict(s.image).p;
        acc.add(argmax_map(p), s.label);
        ImageEntropy e = entropy_analysis(p, s.label);
        double nan = std::numeric_limits<double>::quiet_NaN();
        res.entropy.per_image_correct.push_back(e.n_correct ? e.correct : nan);
        res.entropy.per_image_incorrect.push_back(e.n_incorrect ? e.incorrect : nan);
        if (e.n_correct) {
            sum_c += e.correct;
            ++res.entropy.images_with_correct;
        }
        if (e.n_incorrect) {
            sum_i += e.incorrect;
            ++res.entropy.images_with_incorrect;
        }
    }
    res.iou = acc.report();
    if (res.entropy.images_with_correct)
        res.entropy.mean_correct = sum_c / static_cast<double>(res.entropy.images_with_correct);
    if (res.entropy.images_with_incorrect)
        res.entropy.mean_incorrect =
            sum_i / static_cast<double>(res.entropy.images_with_incorrect);
    return res;
}

void write_heatmap(const std::string& path_pgm, const std::vector<double>& values,
                   std::size_t height, std::size_t width) {
    if (values.size() != height * width)
        throw DimensionError("heatmap buffer does not match dimensions");
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    Graymap g;
    g.width = width;
    g.height = height;
    g.pixels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        g.pixels[i] = static_cast<std::uint8_t>(std::lround((values[i] - lo) * scale));
    write_pgm(path_pgm, g);

    std::ofstream side(path_pgm + ".txt");
    if (!side) throw FormatError("cannot write heatmap sidecar for " + path_pgm);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "min=%.17g\nmax=%.17g\n", lo, hi);
    side << buf;
}

} // namespace pixcorr
