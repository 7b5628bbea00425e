#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "pixcorr/losses.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/sam.hpp"
#include "pixcorr/trainer.hpp"

#include <cmath>

using namespace pixcorr;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

// brute-force oracle with the same epsilon convention
std::vector<double> cosine_oracle(const Tensor& rows) {
    std::size_t n = rows.shape()[0], C = rows.shape()[1];
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                dot += rows.at(i * C + c) * rows.at(j * C + c);
                ni += rows.at(i * C + c) * rows.at(i * C + c);
                nj += rows.at(j * C + c) * rows.at(j * C + c);
            }
            out[i * n + j] = dot / (std::sqrt(ni) * std::sqrt(nj) + kNormEps);
        }
    return out;
}

std::vector<double> normalize_oracle(const Tensor& m) {
    std::size_t n = m.shape()[0], k = m.shape()[1];
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::max(m.at(i * k + j), 0.0);
        for (std::size_t j = 0; j < k; ++j)
            out[i * k + j] = std::max(m.at(i * k + j), 0.0) / (s + kNormEps);
    }
    return out;
}

} // namespace

TEST_CASE("cosine map on orthogonal and colinear rows") {
    Tensor ortho = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor m = cosine_map(ortho);
    CHECK(m.at(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.at(1) == 0.0);
    CHECK(m.at(2) == 0.0);
    CHECK(m.at(3) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor colinear = Tensor::from_data({2, 2}, {1, 1, 2, 2});
    Tensor mc = cosine_map(colinear);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mc.at(i) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cosine map matches the brute-force oracle") {
    Rng rng(21);
    Tensor rows = random_tensor({4, 3}, rng, -1, 1);
    Tensor m = cosine_map(rows);
    auto oracle = cosine_oracle(rows);
    for (std::size_t i = 0; i < oracle.size(); ++i)
        CHECK(std::fabs(m.at(i) - oracle[i]) < 1e-12);
}

TEST_CASE("cosine map is symmetric, bounded and scale invariant") {
    Rng rng(22);
    Tensor rows = random_tensor({6, 4}, rng, -2, 2);
    Tensor m = cosine_map(rows);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(std::fabs(m.at(i * 6 + j) - m.at(j * 6 + i)) < 1e-12);
            CHECK(m.at(i * 6 + j) >= -1.0 - 1e-9);
            CHECK(m.at(i * 6 + j) <= 1.0 + 1e-9);
        }
    for (std::size_t i = 0; i < 6; ++i) CHECK(m.at(i * 6 + i) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor scaled = mul_scalar(rows, 3.7);
    Tensor ms = cosine_map(scaled);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::fabs(ms.at(i) - m.at(i)) < 1e-9);
}

TEST_CASE("normalize map eliminates negatives and normalizes rows") {
    Tensor a = Tensor::from_data({2, 2}, {1, -1, -1, 1});
    Tensor n = normalize_map(a);
    CHECK(n.at(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n.at(1) == 0.0);
    CHECK(n.at(2) == 0.0);
    CHECK(n.at(3) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor b = Tensor::from_data({2, 2}, {0.5, 0.5, 2, 2});
    Tensor nb = normalize_map(b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(nb.at(i) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("normalize map matches the brute-force oracle on mixed signs") {
    Rng rng(23);
    Tensor m = random_tensor({5, 5}, rng, -1, 1);
    Tensor n = normalize_map(m);
    auto oracle = normalize_oracle(m);
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::fabs(n.at(i) - oracle[i]) < 1e-12);
}

TEST_CASE("attention rows are stochastic and outputs stay in the convex hull") {
    Rng rng(24);
    SamModule sam = SamModule::init(3, 77);
    Tensor z = random_tensor({6, 3}, rng, -1, 1);
    SamOutput out = attend(sam, z);

    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(out.map.at(i * 6 + j) >= 0.0);
            s += out.map.at(i * 6 + j);
        }
        CHECK(std::fabs(s - 1.0) < 1e-9);
    }

    for (std::size_t c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t j = 0; j < 6; ++j) {
            lo = std::min(lo, z.at(j * 3 + c));
            hi = std::max(hi, z.at(j * 3 + c));
        }
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(out.attended.at(i * 3 + c) >= lo - 1e-9);
            CHECK(out.attended.at(i * 3 + c) <= hi + 1e-9);
        }
    }
}

TEST_CASE("identity attention doubles the logits through the skip") {
    // orthogonal logit rows with no conv: M' is the identity
    Tensor z = Tensor::from_data({3, 3}, {2, 0, 0, 0, -3, 0, 0, 0, 5});
    SamModule sam = SamModule::init(3, 0, /*use_conv=*/false);
    SamOutput out = attend(sam, z);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(out.attended.at(i) == doctest::Approx(z.at(i)).epsilon(1e-9));
        CHECK(out.skip.at(i) == doctest::Approx(2.0 * z.at(i)).epsilon(1e-9));
    }
}

TEST_CASE("identical logits average to themselves") {
    std::vector<double> data;
    for (int i = 0; i < 5; ++i) {
        data.push_back(0.4);
        data.push_back(-1.2);
        data.push_back(2.5);
    }
    Tensor z = Tensor::from_data({5, 3}, data);
    SamModule sam = SamModule::init(3, 0, false);
    SamOutput out = attend(sam, z);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(out.attended.at(i * 3 + 0) == doctest::Approx(0.4).epsilon(1e-9));
        CHECK(out.attended.at(i * 3 + 1) == doctest::Approx(-1.2).epsilon(1e-9));
        CHECK(out.attended.at(i * 3 + 2) == doctest::Approx(2.5).epsilon(1e-9));
    }
}

TEST_CASE("attend matches the weighted-sum oracle with an identity conv") {
    Rng rng(25);
    SamModule sam = SamModule::init(3, 0);
    std::fill(sam.weight.data().begin(), sam.weight.data().end(), 0.0);
    for (std::size_t c = 0; c < 3; ++c) sam.weight.at(c * 3 + c) = 1.0;

    Tensor z = random_tensor({6, 3}, rng, -1, 1);
    SamOutput out = attend(sam, z);

    Tensor m = Tensor::from_data({6, 6}, cosine_oracle(z));
    auto mp = normalize_oracle(m);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < 6; ++j) acc += mp[i * 6 + j] * z.at(j * 3 + c);
            CHECK(std::fabs(out.attended.at(i * 3 + c) - acc) < 1e-12);
        }
}

TEST_CASE("all-zero logit rows pass through the skip unchanged") {
    Tensor z = Tensor::from_data({3, 2}, {1, 2, 0, 0, -1, 1});
    SamModule sam = SamModule::init(2, 0, false);
    SamOutput out = attend(sam, z);
    // row 1 is the zero vector: zero similarity to everything, zero M' row
    for (std::size_t j = 0; j < 3; ++j) CHECK(out.map.at(1 * 3 + j) == 0.0);
    CHECK(out.attended.at(2) == 0.0);
    CHECK(out.attended.at(3) == 0.0);
    CHECK(out.skip.at(2) == z.at(2));
    CHECK(out.skip.at(3) == z.at(3));
}

TEST_CASE("no-conv and no-skip ablations change the wiring as configured") {
    Rng rng(26);
    Tensor z = random_tensor({4, 3}, rng, -1, 1);

    SamModule no_conv = SamModule::init(3, 5, false, true);
    CHECK(no_conv.parameters().empty());
    SamOutput a = attend(no_conv, z);
    // with no transform the map is the normalized cosine of z itself
    Tensor expected = normalize_map(cosine_map(z));
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a.map.at(i) == expected.at(i));

    SamModule no_skip = SamModule::init(3, 5, true, false);
    SamOutput b = attend(no_skip, z);
    CHECK(b.skip.same_node(b.attended));
}

TEST_CASE("frozen SAM parameters receive no gradient and do not move") {
    Rng rng(27);
    SamModule sam = SamModule::init(3, 9);
    sam.freeze();
    std::vector<double> w_before = sam.weight.data();

    Tensor z = random_tensor({5, 3}, rng, -1, 1, true);
    SamOutput out = attend(sam, z);
    LossConfig cfg;
    Tensor loss = att_loss(z, out, cfg);
    z.zero_grad();
    sam.weight.zero_grad();
    sam.bias.zero_grad();
    backward(loss);

    for (double g : sam.weight.grad()) CHECK(g == 0.0);
    for (double g : sam.bias.grad()) CHECK(g == 0.0);
    CHECK(sam.weight.data() == w_before);
    bool z_has_grad = false;
    for (double g : z.grad())
        if (g != 0.0) z_has_grad = true;
    CHECK(z_has_grad);
}

TEST_CASE("unfrozen SAM trains through the joint source loss") {
    Rng rng(28);
    SamModule sam = SamModule::init(3, 10);
    Tensor z = random_tensor({4, 3}, rng, -1, 1);
    std::vector<std::uint8_t> labels = {0, 1, 2, 1};

    auto phase_a_loss = [&] {
        SamOutput out = attend(sam, z);
        Tensor grid = pixel_grid(out.skip, 2, 2);
        return ce_source(softmax(grid, 0), labels);
    };

    std::vector<double> w_before = sam.weight.data();
    SgdOptimizer opt(sam.parameters(), 0.9, 0.0);
    opt.zero_grad();
    backward(phase_a_loss());
    opt.step(0.1);
    CHECK(sam.weight.data() != w_before);

    // gradient of the joint source loss w.r.t. the conv weight and bias
    auto res = gradcheck(phase_a_loss, {sam.weight, sam.bias});
    CHECK(res.max_err < 1e-3);
}

TEST_CASE("sam checkpoint round trip keeps flags and weights") {
    SamModule sam = SamModule::init(4, 13, true, false);
    std::string path = "sam_roundtrip_test.ckpt";
    save_checkpoint(path, sam.to_checkpoint());
    SamModule back = SamModule::from_checkpoint(load_checkpoint(path));
    CHECK(back.use_conv == true);
    CHECK(back.use_skip == false);
    CHECK(back.classes == 4);
    CHECK(back.weight.data() == sam.weight.data());
    CHECK(back.bias.data() == sam.bias.data());
    std::remove(path.c_str());

    SamModule noconv = SamModule::init(4, 13, false, true);
    save_checkpoint(path, noconv.to_checkpoint());
    SamModule back2 = SamModule::from_checkpoint(load_checkpoint(path));
    CHECK_FALSE(back2.use_conv);
    CHECK(back2.parameters().empty());
    std::remove(path.c_str());
}
