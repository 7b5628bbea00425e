#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "pixcorr/errors.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/serialize.hpp"
#include "pixcorr/tensor.hpp"

#include <cmath>
#include <sstream>

using namespace pixcorr;
using testsupport::gradcheck;
using testsupport::random_tensor;

TEST_CASE("matmul identity and orthogonal pick") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.at(i) == m.at(i));

    Tensor a = Tensor::from_data({1, 2}, {1, 0});
    Tensor b = Tensor::from_data({2, 1}, {0, 5});
    CHECK(matmul(a, b).value() == 0.0);
}

TEST_CASE("matmul shape mismatch reports both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(42);
    Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4, 2}, rng, -1, 1, true);
    auto res = gradcheck([&] { return sum(matmul(a, b)); }, {a, b});
    CHECK(res.max_err < 1e-4);
    CHECK(res.checked == 20);
}

TEST_CASE("conv2d 1x1 identity kernel preserves input") {
    Rng rng(7);
    Tensor x = random_tensor({3, 4, 4}, rng);
    // identity map over channels: w[oc][ic] = (oc == ic)
    std::vector<double> wdata(9, 0.0);
    for (int c = 0; c < 3; ++c) wdata[c * 3 + c] = 1.0;
    Tensor w = Tensor::from_data({3, 3, 1, 1}, wdata);
    Tensor out = conv2d(x, w, 1, 0);
    REQUIRE(out.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("conv2d zero weights give zero output") {
    Rng rng(8);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor w = Tensor::zeros({4, 2, 3, 3});
    Tensor out = conv2d(x, w, 1, 1);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("conv2d rejects non-positive output size") {
    Tensor x = Tensor::zeros({1, 2, 2});
    Tensor w = Tensor::zeros({1, 1, 5, 5});
    CHECK_THROWS_AS(conv2d(x, w, 1, 0), DimensionError);
}

TEST_CASE("conv2d gradient vs finite differences") {
    Rng rng(43);
    Tensor x = random_tensor({2, 3, 3}, rng, -1, 1, true);
    Tensor w = random_tensor({2, 2, 3, 3}, rng, -1, 1, true);
    auto res = gradcheck([&] { return sum(conv2d(x, w, 1, 1)); }, {x, w});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("conv2d strided gradient vs finite differences") {
    Rng rng(44);
    Tensor x = random_tensor({2, 4, 4}, rng, -1, 1, true);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
    auto res = gradcheck([&] { return sum(conv2d(x, w, 2, 1)); }, {x, w});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("bilinear upsample identity at same size") {
    Rng rng(9);
    Tensor x = random_tensor({2, 3, 5}, rng);
    Tensor out = bilinear_upsample(x, 3, 5);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.at(i) == x.at(i));
}

TEST_CASE("bilinear upsample preserves constants") {
    Tensor x = Tensor::full({1, 2, 3}, 0.7);
    Tensor out = bilinear_upsample(x, 7, 9);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(0.7));
}

TEST_CASE("bilinear upsample 2x2 to 4x4 matches closed form") {
    // corners (1,2,3,5): value(sy,sx) = 1 + sx + 2*sy + sx*sy on [0,1]^2
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 5});
    Tensor out = bilinear_upsample(x, 4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double sy = i / 3.0, sx = j / 3.0;
            double expect = 1.0 + sx + 2.0 * sy + sx * sy;
            CHECK(out.at(i * 4 + j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("bilinear upsample rejects shrinking") {
    Tensor x = Tensor::zeros({1, 4, 4});
    CHECK_THROWS_AS(bilinear_upsample(x, 2, 4), DimensionError);
}

TEST_CASE("bilinear upsample gradient vs finite differences") {
    Rng rng(45);
    Tensor x = random_tensor({2, 2, 3}, rng, -1, 1, true);
    Tensor w = random_tensor({2, 5, 7}, rng); // fixed weights make the gradient non-constant
    auto res = gradcheck([&] { return sum(mul(bilinear_upsample(x, 5, 7), w)); }, {x});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("softmax symmetry and saturation") {
    Tensor z = softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
    for (int i = 0; i < 3; ++i) CHECK(z.at(i) == doctest::Approx(1.0 / 3));

    Tensor s = softmax(Tensor::from_data({3}, {1000, 0, 0}), 0);
    CHECK(std::fabs(s.at(0) - 1.0) < 1e-12);
    CHECK(std::fabs(s.at(1)) < 1e-12);
    CHECK(std::fabs(s.at(2)) < 1e-12);
}

TEST_CASE("softmax rows sum to one and are nonnegative across axes") {
    Rng rng(10);
    Tensor x = random_tensor({3, 4, 5}, rng, -30, 30);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        Tensor y = softmax(x, axis);
        std::size_t n_axis = x.shape()[axis];
        std::size_t inner = 1, outer = 1;
        for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.shape()[i];
        for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                double s = 0.0;
                for (std::size_t k = 0; k < n_axis; ++k) {
                    double v = y.at((o * n_axis + k) * inner + in);
                    CHECK(v >= 0.0);
                    s += v;
                }
                CHECK(std::fabs(s - 1.0) < 1e-9);
            }
    }
}

TEST_CASE("softmax gradient vs finite differences") {
    Rng rng(46);
    Tensor x = random_tensor({5}, rng, -2, 2, true);
    Tensor w = random_tensor({5}, rng, -1, 1); // fixed weights, no grad
    auto res = gradcheck([&] { return sum(mul(softmax(x, 0), w)); }, {x});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("relu forward and elementwise examples") {
    Tensor out = relu(Tensor::from_data({2}, {-1, 2}));
    CHECK(out.at(0) == 0.0);
    CHECK(out.at(1) == 2.0);

    Tensor n = row_l1_normalize(Tensor::from_data({1, 2}, {2, 2}));
    CHECK(n.at(0) == doctest::Approx(0.5));
    CHECK(n.at(1) == doctest::Approx(0.5));
}

TEST_CASE("row_l2_norm values and gradient") {
    Tensor a = Tensor::from_data({2, 2}, {3, 4, 0, 0}, true);
    Tensor n = row_l2_norm(a);
    CHECK(n.at(0) == doctest::Approx(5.0));
    CHECK(n.at(1) == 0.0);

    Rng rng(47);
    Tensor b = random_tensor({3, 4}, rng, 0.3, 1.5, true);
    auto res = gradcheck([&] { return sum(row_l2_norm(b)); }, {b});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("row_l1_normalize gradient vs finite differences") {
    Rng rng(48);
    // keep entries away from the |x| kink at 0
    Tensor a = random_tensor({3, 5}, rng, 0.2, 1.0, true);
    Tensor w = random_tensor({3, 5}, rng);
    auto res = gradcheck([&] { return sum(mul(row_l1_normalize(a), w)); }, {a});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("abs_mean gradient at non-kink points") {
    Rng rng(49);
    Tensor a = random_tensor({7}, rng, 0.2, 1.0, true);
    for (std::size_t i = 0; i < a.size(); i += 2) a.at(i) = -a.at(i);
    auto res = gradcheck([&] { return abs_mean(a); }, {a});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("elementwise and reduction gradients") {
    Rng rng(50);
    Tensor a = random_tensor({4, 3}, rng, 0.5, 2.0, true);
    Tensor b = random_tensor({4, 3}, rng, 0.5, 2.0, true);
    auto res = gradcheck(
        [&] {
            Tensor t = div(mul(add(a, b), sub(a, b)), add_scalar(mul(a, b), 3.0));
            return mean(add(mul_scalar(t, 1.7), log_guarded(add_scalar(mul(a, a), 0.5))));
        },
        {a, b});
    CHECK(res.max_err < 1e-4);
}

TEST_CASE("row_sum outer transpose pixel reshape gradients") {
    Rng rng(51);
    Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
    Tensor u = random_tensor({3}, rng, -1, 1, true);
    Tensor v = random_tensor({4}, rng, -1, 1, true);
    auto res = gradcheck(
        [&] {
            Tensor o = outer(u, v);
            Tensor t = mul(transpose(transpose(a)), o);
            return sum(mul(row_sum(t), u));
        },
        {a, u, v});
    CHECK(res.max_err < 1e-4);

    Tensor img = random_tensor({2, 3, 4}, rng, -1, 1, true);
    Tensor wimg = random_tensor({2, 3, 4}, rng);
    auto res2 = gradcheck(
        [&] {
            Tensor rows = pixel_rows(img);
            Tensor back = pixel_grid(rows, 3, 4);
            return sum(mul(back, wimg));
        },
        {img});
    CHECK(res2.max_err < 1e-4);
}

TEST_CASE("pixel_rows layout is row-major over (h,w)") {
    // x[c][y][x]: value encodes (c, y*w + x)
    Tensor x = Tensor::from_data({2, 2, 2}, {0, 1, 2, 3, 10, 11, 12, 13});
    Tensor rows = pixel_rows(x);
    REQUIRE(rows.shape() == Shape{4, 2});
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(rows.at(p * 2 + 0) == static_cast<double>(p));
        CHECK(rows.at(p * 2 + 1) == static_cast<double>(10 + p));
    }
}

TEST_CASE("detach keeps values and stops gradient") {
    Rng rng(52);
    Tensor w = random_tensor({4}, rng, -1, 1, true);
    Tensor d = detach(w);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(d.at(i) == w.at(i));
    CHECK_FALSE(d.requires_grad());

    // loss = sum(detach(w) * w) must have gradient w, not 2w
    w.zero_grad();
    backward(sum(mul(detach(w), w)));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(w.at(i)));
}

TEST_CASE("parameters reachable only through detach get exactly zero gradient") {
    Rng rng(53);
    Tensor w = random_tensor({5}, rng, -1, 1, true);
    Tensor v = random_tensor({5}, rng, -1, 1, true);
    w.zero_grad();
    v.zero_grad();
    backward(sum(mul(detach(mul(w, w)), v)));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad()[i] == 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.grad()[i] != 0.0);
}

TEST_CASE("two backward passes over one recorded graph match exactly") {
    Rng rng(54);
    Tensor a = random_tensor({3, 3}, rng, 0.2, 1.0, true);
    Tensor b = random_tensor({3, 3}, rng, 0.2, 1.0, true);
    Tensor loss = mean(mul(softmax(matmul(a, b), 1), add(a, b)));

    Graph g = Graph::record(loss);
    g.run_backward();
    std::vector<double> ga = a.grad(), gb = b.grad();

    for (const auto& n : g.order()) {
        n->ensure_grad();
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    g.run_backward();
    for (std::size_t i = 0; i < ga.size(); ++i) {
        CHECK(a.grad()[i] == ga[i]);
        CHECK(b.grad()[i] == gb[i]);
    }
}

TEST_CASE("backward populates grads of every reachable requires_grad tensor") {
    Tensor a = Tensor::from_data({2}, {1, 2}, true);
    Tensor b = Tensor::from_data({2}, {3, 4}, true);
    backward(sum(add(a, b)));
    CHECK(a.has_grad());
    CHECK(b.has_grad());
    CHECK(a.grad()[0] == 1.0);
    CHECK(b.grad()[1] == 1.0);
}

TEST_CASE("gradients accumulate when one tensor is used twice") {
    Tensor a = Tensor::from_data({2}, {2, 3}, true);
    a.zero_grad();
    backward(sum(mul(a, a))); // d/da sum(a^2) = 2a
    CHECK(a.grad()[0] == doctest::Approx(4.0));
    CHECK(a.grad()[1] == doctest::Approx(6.0));
}

TEST_CASE("tensor serialization round trip") {
    Rng rng(55);
    Tensor t = random_tensor({3, 2, 4}, rng, -5, 5);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor back = read_tensor(ss);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.at(i) == t.at(i));
}

TEST_CASE("tensor deserialization rejects bad magic and truncation") {
    std::stringstream ss("JUNKxxxx");
    CHECK_THROWS_AS(read_tensor(ss), FormatError);

    Rng rng(56);
    Tensor t = random_tensor({4, 4}, rng);
    std::stringstream full;
    write_tensor(full, t);
    std::string bytes = full.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_tensor(cut), FormatError);
}

TEST_CASE("checkpoint container round trip") {
    Checkpoint ckpt;
    ckpt.set("kind", "demo");
    ckpt.set_int("steps", 42);
    ckpt.set_double("lr", 0.00025);
    Rng rng(57);
    ckpt.tensors.push_back(random_tensor({2, 3}, rng));
    ckpt.tensors.push_back(random_tensor({5}, rng));

    std::string path = "ckpt_roundtrip_test.bin";
    save_checkpoint(path, ckpt);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.get("kind") == "demo");
    CHECK(back.get_int("steps") == 42);
    CHECK(back.get_double("lr") == 0.00025);
    REQUIRE(back.tensors.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < ckpt.tensors[i].size(); ++j)
            CHECK(back.tensors[i].at(j) == ckpt.tensors[i].at(j));
    std::remove(path.c_str());
}
