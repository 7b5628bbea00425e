#pragma once

#include "pixcorr/serialize.hpp"
#include "pixcorr/tensor.hpp"

#include <cstdint>
#include <vector>

namespace pixcorr {

struct NetConfig {
    std::size_t in_channels = 3;
    std::vector<std::size_t> widths = {16, 32, 32}; // feature extractor channel widths
    std::size_t downsample = 4;                     // power of 2, product of layer strides
    std::size_t classes = 5;
    std::uint64_t init_seed = 1;
};

// Tiny segmentation network: 3x3 conv+relu stack (the first log2(d) layers
// stride 2) followed by a 1x1 classification head. Output logits z live at
// 1/d of the input resolution; p = softmax(upsample(z)).
class SegNet {
public:
    SegNet() = default;

    static SegNet init(const NetConfig& cfg);

    // Logits [classes, H/d, W/d]. H and W must be divisible by d.
    Tensor forward_logits(const Tensor& image) const;

    struct Prediction {
        Tensor p; // [classes, H, W], per-pixel distributions
        Tensor z; // [classes, H/d, W/d]
    };
    Prediction predict(const Tensor& image) const;

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    const NetConfig& config() const { return cfg_; }

    Checkpoint to_checkpoint() const;
    static SegNet from_checkpoint(const Checkpoint& ckpt);

private:
    NetConfig cfg_;
    std::vector<Tensor> params_;        // w0,b0,w1,b1,...,w_head,b_head
    std::vector<std::size_t> strides_;  // per feature layer
};

// Per-pixel argmax of [C,H,W] probabilities or logits; ties break to the
// lowest class index.
std::vector<std::uint8_t> argmax_map(const Tensor& p);

} // namespace pixcorr
