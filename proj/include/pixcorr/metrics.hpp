#pragma once

#include "pixcorr/scenegen.hpp"
#include "pixcorr/segnet.hpp"
#include "pixcorr/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pixcorr {

struct IoUReport {
    std::vector<double> iou;          // per class; meaningless where !present
    std::vector<bool> present;        // class appears in gt or prediction
    double miou = 0.0;                // mean over present classes
    std::vector<std::size_t> confusion; // C x C pixel counts, row = gt, col = pred
};

IoUReport iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
              std::size_t classes);

// Accumulating form used for whole-dataset mIoU.
struct IoUAccumulator {
    std::size_t classes = 0;
    std::vector<std::size_t> confusion;
    explicit IoUAccumulator(std::size_t c) : classes(c), confusion(c * c, 0) {}
    void add(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt);
    IoUReport report() const;
};

struct EntropyStats {
    double mean_correct = 0.0;   // mean over images of per-image group means
    double mean_incorrect = 0.0;
    std::size_t images_with_correct = 0;
    std::size_t images_with_incorrect = 0;
    std::vector<double> per_image_correct;   // NaN when group empty for image
    std::vector<double> per_image_incorrect;
};

// Shannon entropy (natural log) of p [C,H,W], split by argmax(p)==gt.
// Returns the two per-image group means; counts say which groups exist.
struct ImageEntropy {
    double correct = 0.0, incorrect = 0.0;
    std::size_t n_correct = 0, n_incorrect = 0;
};
ImageEntropy entropy_analysis(const Tensor& p, const std::vector<std::uint8_t>& gt);

// ReLU'd cosine self-similarity of [n,C] rows, no row normalization.
// Exact-zero denominators yield similarity 0, so one-hot input produces an
// exact 0/1 class-indicator matrix.
Tensor pixel_similarity_map(const Tensor& rows);

// Ground-truth labels resized to the logit grid by nearest neighbor, one-hot
// encoded as [h*w, C] rows for pixel_similarity_map.
Tensor one_hot_rows_nearest(const std::vector<std::uint8_t>& gt, std::size_t H, std::size_t W,
                            std::size_t h, std::size_t w, std::size_t classes);

struct AttentionVis {
    std::vector<double> heat; // H*W, nearest-upsampled ReLU'd cosine row
    std::size_t height = 0, width = 0;
    std::size_t anchor_row = 0;        // pixel index at logit resolution
    std::size_t anchor_y = 0, anchor_x = 0; // anchor scaled to H x W
};

// Similarity row of the most confident pixel of a class against all pixels.
// Empty when no pixel is argmax-classified as the class.
std::optional<AttentionVis> attention_visualization(const Tensor& z_rows, std::size_t h,
                                                    std::size_t w, std::size_t out_h,
                                                    std::size_t out_w, std::size_t cls);

// Whole-dataset evaluation: mIoU plus the per-image entropy aggregate.
struct EvalResult {
    IoUReport iou;
    EntropyStats entropy;
};
EvalResult evaluate(const SegNet& net, const Dataset& eval_set);

// 8-bit heatmap with linear min-max scaling; the exact extrema go to a
// sidecar text file next to the image.
void write_heatmap(const std::string& path_pgm, const std::vector<double>& values,
                   std::size_t height, std::size_t width);

} // namespace pixcorr
