#include "pixcorr/segnet.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/rng.hpp"

#include <cmath>
#include <sstream>

namespace pixcorr {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_size(std::size_t v) {
    std::size_t l = 0;
    while ((1ULL << l) < v) ++l;
    return l;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

std::string join_widths(const std::vector<std::size_t>& widths) {
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(widths[i]);
    }
    return out;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
    return out;
}

} // namespace

SegNet SegNet::init(const NetConfig& cfg) {
    if (!is_power_of_two(cfg.downsample))
        throw ConfigError("downsample factor must be a power of 2, got " +
                          std::to_string(cfg.downsample));
    if (cfg.classes < 2)
        throw ConfigError("need at least 2 classes, got " + std::to_string(cfg.classes));
    if (cfg.widths.empty()) throw ConfigError("net needs at least one feature layer");
    std::size_t n_strided = log2_size(cfg.downsample);
    if (n_strided > cfg.widths.size())
        throw ConfigError("downsample " + std::to_string(cfg.downsample) + " needs " +
                          std::to_string(n_strided) + " layers but only " +
                          std::to_string(cfg.widths.size()) + " are configured");

    SegNet net;
    net.cfg_ = cfg;
    Rng rng(derive_seed(cfg.init_seed, "segnet-init"));

    std::size_t in_ch = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        std::size_t out_ch = cfg.widths[i];
        net.strides_.push_back(i < n_strided ? 2 : 1);
        net.params_.push_back(kaiming_uniform({out_ch, in_ch, 3, 3}, in_ch * 9, rng));
        net.params_.push_back(Tensor::zeros({out_ch}, true));
        in_ch = out_ch;
    }
    net.params_.push_back(kaiming_uniform({cfg.classes, in_ch, 1, 1}, in_ch, rng));
    net.params_.push_back(Tensor::zeros({cfg.classes}, true));
    return net;
}

Tensor SegNet::forward_logits(const Tensor& image) const {
    if (image.rank() != 3 || image.shape()[0] != cfg_.in_channels)
        throw DimensionError("segnet expects [" + std::to_string(cfg_.in_channels) +
                             ",H,W] input, got " + shape_str(image.shape()));
    std::size_t H = image.shape()[1], W = image.shape()[2];
    if (H % cfg_.downsample != 0 || W % cfg_.downsample != 0)
        throw DimensionError("input " + shape_str(image.shape()) + " not divisible by downsample " +
                             std::to_string(cfg_.downsample));

    Tensor h = image;
    for (std::size_t i = 0; i < strides_.size(); ++i) {
        h = conv2d(h, params_[2 * i], strides_[i], 1);
        h = bias_add(h, params_[2 * i + 1]);
        h = relu(h);
    }
    h = conv2d(h, params_[params_.size() - 2], 1, 0);
    h = bias_add(h, params_.back());
    return h;
}

SegNet::Prediction SegNet::predict(const Tensor& image) const {
    Tensor z = forward_logits(image);
    Tensor up = bilinear_upsample(z, image.shape()[1], image.shape()[2]);
    return {softmax(up, 0), z};
}

Checkpoint SegNet::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.set("kind", "segnet");
    ckpt.set_int("in_channels", static_cast<long long>(cfg_.in_channels));
    ckpt.set("widths", join_widths(cfg_.widths));
    ckpt.set_int("downsample", static_cast<long long>(cfg_.downsample));
    ckpt.set_int("classes", static_cast<long long>(cfg_.classes));
    ckpt.set_int("init_seed", static_cast<long long>(cfg_.init_seed));
    ckpt.tensors = params_;
    return ckpt;
}

SegNet SegNet::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.get("kind") != "segnet")
        throw FormatError("checkpoint kind is not segnet: " + ckpt.get("kind"));
    NetConfig cfg;
    cfg.in_channels = static_cast<std::size_t>(ckpt.get_int("in_channels"));
    cfg.widths = parse_widths(ckpt.get("widths"));
    cfg.downsample = static_cast<std::size_t>(ckpt.get_int("downsample"));
    cfg.classes = static_cast<std::size_t>(ckpt.get_int("classes"));
    cfg.init_seed = static_cast<std::uint64_t>(ckpt.get_int("init_seed"));

    SegNet net = SegNet::init(cfg);
    if (ckpt.tensors.size() != net.params_.size())
        throw FormatError("segnet checkpoint has " + std::to_string(ckpt.tensors.size()) +
                          " tensors, expected " + std::to_string(net.params_.size()));
    for (std::size_t i = 0; i < net.params_.size(); ++i) {
        if (ckpt.tensors[i].shape() != net.params_[i].shape())
            throw FormatError("segnet checkpoint tensor " + std::to_string(i) +
                              " has shape " + shape_str(ckpt.tensors[i].shape()) + ", expected " +
                              shape_str(net.params_[i].shape()));
        net.params_[i].data() = ckpt.tensors[i].data();
    }
    return net;
}

std::vector<std::uint8_t> argmax_map(const Tensor& p) {
    if (p.rank() != 3) throw DimensionError("argmax_map expects [C,H,W], got " + shape_str(p.shape()));
    std::size_t C = p.shape()[0], hw = p.shape()[1] * p.shape()[2];
    std::vector<std::uint8_t> out(hw);
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
        out[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

} // namespace pixcorr
