#include "pixcorr/losses.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/ops.hpp"

namespace pixcorr {

const char* att_form_name(AttForm f) { return f == AttForm::ZVsZpp ? "z-zpp" : "z-zp"; }
const char* att_domains_name(AttDomains d) { return d == AttDomains::Both ? "both" : "target"; }
const char* att_metric_name(AttMetric m) {
    switch (m) {
        case AttMetric::L1: return "l1";
        case AttMetric::KL: return "kl";
        default: return "cosine";
    }
}

AttForm parse_att_form(const std::string& s) {
    if (s == "z-zpp") return AttForm::ZVsZpp;
    if (s == "z-zp") return AttForm::ZVsZp;
    throw ConfigError("unknown att_form: " + s + " (expected z-zpp or z-zp)");
}

AttDomains parse_att_domains(const std::string& s) {
    if (s == "both") return AttDomains::Both;
    if (s == "target") return AttDomains::TargetOnly;
    throw ConfigError("unknown att_domains: " + s + " (expected both or target)");
}

AttMetric parse_att_metric(const std::string& s) {
    if (s == "l1") return AttMetric::L1;
    if (s == "kl") return AttMetric::KL;
    if (s == "cosine") return AttMetric::Cosine;
    throw ConfigError("unknown att_metric: " + s + " (expected l1, kl or cosine)");
}

namespace {

// One-hot [C,H,W] constant from dense labels; rows for ignored pixels stay
// zero. Returns the number of contributing pixels.
Tensor one_hot_mask(const std::vector<std::uint8_t>& labels, std::size_t C, std::size_t H,
                    std::size_t W, std::uint8_t ignore, std::size_t& count) {
    if (labels.size() != H * W)
        throw DimensionError("label map has " + std::to_string(labels.size()) +
                             " entries for " + std::to_string(H) + "x" + std::to_string(W) +
                             " probabilities");
    std::vector<double> mask(C * H * W, 0.0);
    count = 0;
    std::size_t hw = H * W;
    for (std::size_t i = 0; i < hw; ++i) {
        std::uint8_t v = labels[i];
        if (v == ignore) continue;
        if (v >= C)
            throw DimensionError("label value " + std::to_string(v) + " out of range for " +
                                 std::to_string(C) + " classes");
        mask[v * hw + i] = 1.0;
        ++count;
    }
    return Tensor::from_data({C, H, W}, std::move(mask));
}

Tensor masked_ce(const Tensor& p, const Tensor& mask, std::size_t count) {
    if (count == 0) return Tensor::scalar(0.0);
    return mul_scalar(sum(mul(mask, log_guarded(p))), -1.0 / static_cast<double>(count));
}

} // namespace

Tensor ce_source(const Tensor& p, const std::vector<std::uint8_t>& labels) {
    if (p.rank() != 3)
        throw DimensionError("ce_source expects [C,H,W], got " + shape_str(p.shape()));
    std::size_t count = 0;
    Tensor mask = one_hot_mask(labels, p.shape()[0], p.shape()[1], p.shape()[2], 255, count);
    if (count != labels.size())
        throw DimensionError("source labels must be dense; found ignored pixels");
    return masked_ce(p, mask, count);
}

Tensor ce_target(const Tensor& p, const PseudoLabelMap& pseudo) {
    if (p.rank() != 3)
        throw DimensionError("ce_target expects [C,H,W], got " + shape_str(p.shape()));
    std::size_t count = 0;
    Tensor mask =
        one_hot_mask(pseudo.labels, p.shape()[0], p.shape()[1], p.shape()[2], kIgnoreLabel, count);
    return masked_ce(p, mask, count);
}

Tensor att_loss(const Tensor& z_rows, const SamOutput& sam_out, const LossConfig& cfg) {
    Tensor ref = detach(cfg.att_form == AttForm::ZVsZpp ? sam_out.skip : sam_out.attended);
    if (ref.shape() != z_rows.shape())
        throw DimensionError("att_loss shape mismatch " + shape_str(z_rows.shape()) + " vs " +
                             shape_str(ref.shape()));

    switch (cfg.att_metric) {
        case AttMetric::L1:
            return abs_mean(sub(z_rows, ref));
        case AttMetric::KL: {
            // D_KL(softmax(ref_i) || softmax(z_i)), mean over logit rows.
            std::size_t n_rows = z_rows.shape()[0];
            Tensor p_ref = softmax(ref, 1); // constant: ref is detached
            Tensor q = softmax(z_rows, 1);
            Tensor kl = sum(mul(p_ref, sub(log_guarded(p_ref), log_guarded(q))));
            return mul_scalar(kl, 1.0 / static_cast<double>(n_rows));
        }
        default: {
            // mean over rows of (1 - cos(z_i, ref_i))
            std::size_t n_rows = z_rows.shape()[0];
            Tensor num = row_sum(mul(z_rows, ref));
            Tensor denom = add_scalar(mul(row_l2_norm(z_rows), row_l2_norm(ref)), kNormEps);
            Tensor cos = div(num, denom);
            return mul_scalar(sum(add_scalar(mul_scalar(cos, -1.0), 1.0)),
                              1.0 / static_cast<double>(n_rows));
        }
    }
}

TotalLoss total_loss(const SceneSample& src, const SceneSample& tgt,
                     const PseudoLabelMap& tgt_pseudo, const SegNet& net, const SamModule& sam,
                     const LossConfig& cfg) {
    if (!sam.frozen) throw ConfigError("total_loss requires a frozen SAM");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be nonnegative");

    TotalLoss out;

    SegNet::Prediction pred_s = net.predict(src.image);
    SegNet::Prediction pred_t = net.predict(tgt.image);

    Tensor seg_s = ce_source(pred_s.p, src.label);
    Tensor seg_t = ce_target(pred_t.p, tgt_pseudo);
    out.seg_source = seg_s.value();
    out.seg_target = seg_t.value();

    Tensor zt_rows = pixel_rows(pred_t.z);
    Tensor att_t = att_loss(zt_rows, attend(sam, zt_rows), cfg);
    out.att_target = att_t.value();

    Tensor att_sum = att_t;
    if (cfg.att_domains == AttDomains::Both) {
        Tensor zs_rows = pixel_rows(pred_s.z);
        Tensor att_s = att_loss(zs_rows, attend(sam, zs_rows), cfg);
        out.att_source = att_s.value();
        att_sum = add(att_sum, att_s);
    }

    out.total = add(add(seg_s, seg_t), mul_scalar(att_sum, cfg.lambda));
    return out;
}

} // namespace pixcorr
