#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "pixcorr/errors.hpp"
#include "pixcorr/losses.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/trainer.hpp"

#include <cmath>

using namespace pixcorr;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

// random per-pixel distributions as [C,H,W]
Tensor random_probs(std::size_t C, std::size_t H, std::size_t W, Rng& rng) {
    std::vector<double> data(C * H * W);
    std::size_t hw = H * W;
    for (std::size_t i = 0; i < hw; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double v = rng.uniform(0.05, 1.0);
            data[c * hw + i] = v;
            s += v;
        }
        for (std::size_t c = 0; c < C; ++c) data[c * hw + i] /= s;
    }
    return Tensor::from_data({C, H, W}, std::move(data));
}

SceneSample make_sample(std::size_t ch, std::size_t H, std::size_t W, std::size_t C, Rng& rng,
                        Domain d) {
    SceneSample s;
    s.image = random_tensor({ch, H, W}, rng, 0, 1);
    s.label.resize(H * W);
    for (auto& v : s.label) v = static_cast<std::uint8_t>(rng.next_below(C));
    s.domain = d;
    return s;
}

SamOutput identity_sam_output(const Tensor& z) {
    SamOutput out;
    out.attended = z;
    out.skip = add(z, z);
    return out;
}

} // namespace

TEST_CASE("source cross entropy on exact and uniform predictions") {
    // p puts all mass on the true class -> loss 0
    std::vector<std::uint8_t> labels = {0, 1, 1, 0};
    std::vector<double> exact(2 * 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) exact[labels[i] * 4 + i] = 1.0;
    Tensor p_exact = Tensor::from_data({2, 2, 2}, exact);
    CHECK(ce_source(p_exact, labels).value() == doctest::Approx(0.0).epsilon(1e-12));

    Tensor p_uniform = Tensor::full({2, 2, 2}, 0.5);
    CHECK(ce_source(p_uniform, labels).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("source cross entropy matches the double-loop oracle") {
    Rng rng(61);
    Tensor p = random_probs(4, 3, 5, rng);
    std::vector<std::uint8_t> labels(15);
    for (auto& v : labels) v = static_cast<std::uint8_t>(rng.next_below(4));

    double oracle = 0.0;
    for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            if (labels[i] == c) oracle -= std::log(p.at(c * 15 + i));
    oracle /= 15.0;
    CHECK(std::fabs(ce_source(p, labels).value() - oracle) < 1e-12);
}

TEST_CASE("shape mismatch between predictions and labels is reported") {
    Tensor p = Tensor::full({2, 2, 2}, 0.5);
    std::vector<std::uint8_t> labels = {0, 1};
    CHECK_THROWS_AS(ce_source(p, labels), DimensionError);
}

TEST_CASE("target cross entropy skips ignored pixels") {
    PseudoLabelMap all_ignore{2, 2, {255, 255, 255, 255}};
    Tensor p = Tensor::full({3, 2, 2}, 1.0 / 3);
    CHECK(ce_target(p, all_ignore).value() == 0.0);

    PseudoLabelMap one{2, 2, {255, 2, 255, 255}};
    std::vector<double> data(3 * 4, 0.0);
    data[2 * 4 + 1] = 1.0; // the labeled pixel predicts its class with certainty
    data[0 * 4 + 0] = data[0 * 4 + 2] = data[0 * 4 + 3] = 1.0;
    Tensor p1 = Tensor::from_data({3, 2, 2}, data);
    CHECK(ce_target(p1, one).value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("target cross entropy matches the masked oracle") {
    Rng rng(62);
    Tensor p = random_probs(3, 4, 4, rng);
    PseudoLabelMap map;
    map.height = map.width = 4;
    for (std::size_t i = 0; i < 16; ++i) {
        std::uint64_t r = rng.next_below(4);
        map.labels.push_back(r == 3 ? kIgnoreLabel : static_cast<std::uint8_t>(r));
    }

    double oracle = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        if (map.labels[i] == kIgnoreLabel) continue;
        oracle -= std::log(p.at(map.labels[i] * 16 + i));
        ++count;
    }
    oracle /= static_cast<double>(count);
    CHECK(std::fabs(ce_target(p, map).value() - oracle) < 1e-12);
}

TEST_CASE("attention loss is zero when logits equal the reference") {
    Rng rng(63);
    Tensor z = random_tensor({4, 3}, rng, -1, 1);
    SamOutput out;
    out.attended = z;
    out.skip = z;
    for (AttMetric m : {AttMetric::L1, AttMetric::KL, AttMetric::Cosine}) {
        LossConfig cfg;
        cfg.att_metric = m;
        cfg.att_form = AttForm::ZVsZp;
        CHECK(att_loss(z, out, cfg).value() == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("L1 attention loss of zeros against ones is one") {
    Tensor z = Tensor::zeros({2, 3});
    SamOutput out;
    out.attended = Tensor::full({2, 3}, 1.0);
    out.skip = Tensor::full({2, 3}, 1.0);
    LossConfig cfg;
    cfg.att_form = AttForm::ZVsZpp;
    cfg.att_metric = AttMetric::L1;
    CHECK(att_loss(z, out, cfg).value() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity attention separates the two loss forms") {
    Rng rng(64);
    Tensor z = random_tensor({5, 3}, rng, -1, 1);
    SamOutput out = identity_sam_output(z); // z' = z, z'' = 2z

    LossConfig eq9;
    eq9.att_form = AttForm::ZVsZp;
    CHECK(att_loss(z, out, eq9).value() == doctest::Approx(0.0).epsilon(1e-12));

    LossConfig eq8;
    eq8.att_form = AttForm::ZVsZpp;
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) mean_abs += std::fabs(z.at(i));
    mean_abs /= static_cast<double>(z.size());
    CHECK(att_loss(z, out, eq8).value() == doctest::Approx(mean_abs).epsilon(1e-12));
}

TEST_CASE("KL attention loss is zero only for matching distributions") {
    Rng rng(65);
    Tensor z = random_tensor({4, 3}, rng, -1, 1);
    LossConfig cfg;
    cfg.att_metric = AttMetric::KL;
    cfg.att_form = AttForm::ZVsZp;

    // per-row constant shift leaves softmax unchanged
    Tensor shifted = add_scalar(z, 1.7);
    SamOutput match;
    match.attended = shifted;
    match.skip = shifted;
    CHECK(att_loss(z, match, cfg).value() == doctest::Approx(0.0).epsilon(1e-9));

    SamOutput differ;
    differ.attended = random_tensor({4, 3}, rng, -1, 1);
    differ.skip = differ.attended;
    CHECK(att_loss(z, differ, cfg).value() > 1e-6);
}

TEST_CASE("attention loss gradient flows only through z") {
    Rng rng(66);
    SamModule sam = SamModule::init(3, 42);
    sam.freeze();
    Tensor z = random_tensor({6, 3}, rng, -1, 1, true);

    // The loss treats the module output as a constant (it is detached), so
    // the finite-difference oracle must hold the reference at the base point
    // while z is perturbed.
    SamOutput ref = attend(sam, z);
    for (AttMetric m : {AttMetric::L1, AttMetric::KL, AttMetric::Cosine}) {
        LossConfig cfg;
        cfg.att_metric = m;
        auto res = gradcheck([&] { return att_loss(z, ref, cfg); }, {z});
        CHECK(res.max_err < 1e-3);
    }
}

TEST_CASE("total loss with lambda zero is exactly the segmentation sum") {
    Rng rng(67);
    SceneSample src = make_sample(2, 8, 8, 3, rng, Domain::Source);
    SceneSample tgt = make_sample(2, 8, 8, 3, rng, Domain::Target);
    PseudoLabelMap pseudo;
    pseudo.height = pseudo.width = 8;
    for (std::size_t i = 0; i < 64; ++i)
        pseudo.labels.push_back(i % 3 == 0 ? kIgnoreLabel
                                           : static_cast<std::uint8_t>(rng.next_below(3)));

    NetConfig ncfg;
    ncfg.in_channels = 2;
    ncfg.widths = {4};
    ncfg.downsample = 2;
    ncfg.classes = 3;
    ncfg.init_seed = 5;
    SegNet net = SegNet::init(ncfg);
    SamModule sam = SamModule::init(3, 6);
    sam.freeze();

    LossConfig cfg;
    cfg.lambda = 0.0;
    TotalLoss tl = total_loss(src, tgt, pseudo, net, sam, cfg);
    CHECK(tl.total.value() == tl.seg_source + tl.seg_target);

    // doubling lambda doubles the attention contribution
    cfg.lambda = 0.1;
    TotalLoss t1 = total_loss(src, tgt, pseudo, net, sam, cfg);
    cfg.lambda = 0.2;
    TotalLoss t2 = total_loss(src, tgt, pseudo, net, sam, cfg);
    double att1 = t1.total.value() - (t1.seg_source + t1.seg_target);
    double att2 = t2.total.value() - (t2.seg_source + t2.seg_target);
    CHECK(att2 == doctest::Approx(2.0 * att1).epsilon(1e-9));
    CHECK(att1 == doctest::Approx(0.1 * (t1.att_source + t1.att_target)).epsilon(1e-9));
}

TEST_CASE("target-only objective ignores the source attention term") {
    Rng rng(68);
    SceneSample src_a = make_sample(2, 8, 8, 3, rng, Domain::Source);
    SceneSample src_b = make_sample(2, 8, 8, 3, rng, Domain::Source);
    SceneSample tgt = make_sample(2, 8, 8, 3, rng, Domain::Target);
    PseudoLabelMap pseudo;
    pseudo.height = pseudo.width = 8;
    for (std::size_t i = 0; i < 64; ++i)
        pseudo.labels.push_back(static_cast<std::uint8_t>(rng.next_below(3)));

    NetConfig ncfg;
    ncfg.in_channels = 2;
    ncfg.widths = {4};
    ncfg.downsample = 2;
    ncfg.classes = 3;
    ncfg.init_seed = 7;
    SegNet net = SegNet::init(ncfg);
    SamModule sam = SamModule::init(3, 8);
    sam.freeze();

    LossConfig cfg;
    cfg.att_domains = AttDomains::TargetOnly;
    cfg.att_form = AttForm::ZVsZp;
    TotalLoss a = total_loss(src_a, tgt, pseudo, net, sam, cfg);
    TotalLoss b = total_loss(src_b, tgt, pseudo, net, sam, cfg);
    CHECK(a.att_source == 0.0);
    CHECK(b.att_source == 0.0);
    CHECK(a.att_target == b.att_target);
    // the attention contribution to the total is identical across source images
    CHECK(a.total.value() - a.seg_source - a.seg_target ==
          doctest::Approx(b.total.value() - b.seg_source - b.seg_target).epsilon(1e-12));
}

TEST_CASE("total loss gradient vs finite differences") {
    Rng rng(69);
    SceneSample src = make_sample(2, 8, 8, 3, rng, Domain::Source);
    SceneSample tgt = make_sample(2, 8, 8, 3, rng, Domain::Target);
    PseudoLabelMap pseudo;
    pseudo.height = pseudo.width = 8;
    for (std::size_t i = 0; i < 64; ++i)
        pseudo.labels.push_back(static_cast<std::uint8_t>(rng.next_below(3)));

    NetConfig ncfg;
    ncfg.in_channels = 2;
    ncfg.widths = {4};
    ncfg.downsample = 2;
    ncfg.classes = 3;
    ncfg.init_seed = 9;
    SegNet net = SegNet::init(ncfg);
    SamModule sam = SamModule::init(3, 10);
    sam.freeze();

    LossConfig cfg;
    cfg.att_form = AttForm::ZVsZpp;
    cfg.att_domains = AttDomains::Both;
    cfg.att_metric = AttMetric::L1;
    cfg.lambda = 0.1;

    // References are detached inside the loss, so the oracle evaluates the
    // objective with the module outputs frozen at the base point.
    SamOutput ref_s = attend(sam, pixel_rows(net.forward_logits(src.image)));
    SamOutput ref_t = attend(sam, pixel_rows(net.forward_logits(tgt.image)));
    auto frozen_ref_total = [&] {
        auto pred_s = net.predict(src.image);
        auto pred_t = net.predict(tgt.image);
        Tensor seg = add(ce_source(pred_s.p, src.label), ce_target(pred_t.p, pseudo));
        Tensor att = add(att_loss(pixel_rows(pred_s.z), ref_s, cfg),
                         att_loss(pixel_rows(pred_t.z), ref_t, cfg));
        return add(seg, mul_scalar(att, cfg.lambda));
    };

    // at the base point the frozen-reference objective equals total_loss
    TotalLoss tl = total_loss(src, tgt, pseudo, net, sam, cfg);
    CHECK(frozen_ref_total().value() == doctest::Approx(tl.total.value()).epsilon(1e-12));

    Tensor head_w = net.parameters()[2];
    auto res = gradcheck(frozen_ref_total, {head_w});
    CHECK(res.max_err < 1e-3);

    // and the analytic gradients of the two formulations agree exactly
    head_w.zero_grad();
    backward(tl.total);
    std::vector<double> g_total = head_w.grad();
    head_w.zero_grad();
    backward(frozen_ref_total());
    for (std::size_t i = 0; i < g_total.size(); ++i)
        CHECK(head_w.grad()[i] == doctest::Approx(g_total[i]).epsilon(1e-12));
}

TEST_CASE("total loss rejects an unfrozen SAM and negative lambda") {
    Rng rng(70);
    SceneSample src = make_sample(2, 8, 8, 3, rng, Domain::Source);
    SceneSample tgt = make_sample(2, 8, 8, 3, rng, Domain::Target);
    PseudoLabelMap pseudo;
    pseudo.height = pseudo.width = 8;
    pseudo.labels.assign(64, 0);

    NetConfig ncfg;
    ncfg.in_channels = 2;
    ncfg.widths = {4};
    ncfg.downsample = 2;
    ncfg.classes = 3;
    SegNet net = SegNet::init(ncfg);
    SamModule sam = SamModule::init(3, 11);

    LossConfig cfg;
    CHECK_THROWS_AS(total_loss(src, tgt, pseudo, net, sam, cfg), ConfigError);
    sam.freeze();
    cfg.lambda = -0.5;
    CHECK_THROWS_AS(total_loss(src, tgt, pseudo, net, sam, cfg), ConfigError);
}

TEST_CASE("loss values are nonnegative on random inputs") {
    Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor p = random_probs(3, 4, 4, rng);
        std::vector<std::uint8_t> labels(16);
        for (auto& v : labels) v = static_cast<std::uint8_t>(rng.next_below(3));
        CHECK(ce_source(p, labels).value() >= 0.0);

        Tensor z = random_tensor({4, 3}, rng, -1, 1);
        SamModule sam = SamModule::init(3, 100 + trial);
        SamOutput out = attend(sam, z);
        for (AttMetric m : {AttMetric::L1, AttMetric::KL, AttMetric::Cosine}) {
            LossConfig cfg;
            cfg.att_metric = m;
            CHECK(att_loss(z, out, cfg).value() >= -1e-12);
        }
    }
}

TEST_CASE("loss configuration names parse and round trip") {
    CHECK(parse_att_form("z-zpp") == AttForm::ZVsZpp);
    CHECK(parse_att_form("z-zp") == AttForm::ZVsZp);
    CHECK(parse_att_domains("both") == AttDomains::Both);
    CHECK(parse_att_domains("target") == AttDomains::TargetOnly);
    CHECK(parse_att_metric("l1") == AttMetric::L1);
    CHECK(parse_att_metric("kl") == AttMetric::KL);
    CHECK(parse_att_metric("cosine") == AttMetric::Cosine);
    CHECK_THROWS_AS(parse_att_form("nope"), ConfigError);
    CHECK_THROWS_AS(parse_att_domains("nope"), ConfigError);
    CHECK_THROWS_AS(parse_att_metric("nope"), ConfigError);
    CHECK(std::string(att_form_name(AttForm::ZVsZpp)) == "z-zpp");
    CHECK(std::string(att_domains_name(AttDomains::TargetOnly)) == "target");
    CHECK(std::string(att_metric_name(AttMetric::Cosine)) == "cosine");
}
