#include "pixcorr/ops.hpp"

#include "pixcorr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pixcorr {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* opname) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(opname) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void check_rank2(const Tensor& a, const char* opname) {
    if (a.rank() != 2)
        throw DimensionError(std::string(opname) + ": expected rank-2 tensor, got " +
                             shape_str(a.shape()));
}

double* grad_of(const std::shared_ptr<TensorNode>& n) {
    n->ensure_grad();
    return n->grad.data();
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return make_op_output(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        if (a.requires_grad()) {
            double* ga = grad_of(a.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return make_op_output(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        if (a.requires_grad()) {
            double* ga = grad_of(a.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return make_op_output(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        if (a.requires_grad()) {
            double* ga = grad_of(a.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * b.at(i);
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * a.at(i);
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) / b.at(i);
    return make_op_output(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        if (a.requires_grad()) {
            double* ga = grad_of(a.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] / b.at(i);
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                double bi = b.at(i);
                gb[i] -= self.grad[i] * a.at(i) / (bi * bi);
            }
        }
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + s;
    return make_op_output(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * s;
    return make_op_output(a.shape(), std::move(out), {a}, [a, s](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * s;
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
    return make_op_output(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (a.at(i) > 0.0) ga[i] += self.grad[i];
    });
}

Tensor log_guarded(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a.at(i), kLogEps));
    return make_op_output(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (a.at(i) > kLogEps) ga[i] += self.grad[i] / a.at(i);
    });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
    return make_op_output({1}, {acc}, {a}, [a](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
    double inv_n = 1.0 / static_cast<double>(a.size());
    return make_op_output({1}, {acc * inv_n}, {a}, [a, inv_n](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += self.grad[0] * inv_n;
    });
}

Tensor abs_mean(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a.at(i));
    double inv_n = 1.0 / static_cast<double>(a.size());
    return make_op_output({1}, {acc * inv_n}, {a}, [a, inv_n](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += self.grad[0] * inv_n * sign0(a.at(i));
    });
}

Tensor row_sum(const Tensor& a) {
    check_rank2(a, "row_sum");
    std::size_t n = a.shape()[0], m = a.shape()[1];
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += a.at(i * m + j);
    return make_op_output({n}, std::move(out), {a}, [a, n, m](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += self.grad[i];
    });
}

Tensor row_l2_norm(const Tensor& a) {
    check_rank2(a, "row_l2_norm");
    std::size_t n = a.shape()[0], m = a.shape()[1];
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += a.at(i * m + j) * a.at(i * m + j);
        out[i] = std::sqrt(s);
    }
    auto norms = out;
    return make_op_output({n}, std::move(out), {a}, [a, n, m, norms](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < n; ++i) {
            if (norms[i] <= 0.0) continue; // all-zero row: subgradient 0
            double scale = self.grad[i] / norms[i];
            for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += scale * a.at(i * m + j);
        }
    });
}

Tensor row_l1_normalize(const Tensor& a) {
    check_rank2(a, "row_l1_normalize");
    std::size_t n = a.shape()[0], m = a.shape()[1];
    std::vector<double> denom(n);
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::fabs(a.at(i * m + j));
        denom[i] = s + kNormEps;
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.at(i * m + j) / denom[i];
    }
    return make_op_output(a.shape(), std::move(out), {a}, [a, n, m, denom](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * a.at(i * m + j);
            double d = denom[i];
            for (std::size_t j = 0; j < m; ++j)
                ga[i * m + j] +=
                    self.grad[i * m + j] / d - sign0(a.at(i * m + j)) * dot / (d * d);
        }
    });
}

// ---- shape -----------------------------------------------------------------

Tensor transpose(const Tensor& a) {
    check_rank2(a, "transpose");
    std::size_t n = a.shape()[0], m = a.shape()[1];
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.at(i * m + j);
    return make_op_output({m, n}, std::move(out), {a}, [a, n, m](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += self.grad[j * n + i];
    });
}

Tensor pixel_rows(const Tensor& a) {
    if (a.rank() != 3)
        throw DimensionError("pixel_rows: expected [C,h,w], got " + shape_str(a.shape()));
    std::size_t c = a.shape()[0], hw = a.shape()[1] * a.shape()[2];
    std::vector<double> out(c * hw);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) out[p * c + ch] = a.at(ch * hw + p);
    return make_op_output({hw, c}, std::move(out), {a}, [a, c, hw](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) ga[ch * hw + p] += self.grad[p * c + ch];
    });
}

Tensor pixel_grid(const Tensor& a, std::size_t h, std::size_t w) {
    check_rank2(a, "pixel_grid");
    std::size_t hw = a.shape()[0], c = a.shape()[1];
    if (hw != h * w)
        throw DimensionError("pixel_grid: row count " + std::to_string(hw) +
                             " does not equal " + std::to_string(h) + "*" + std::to_string(w));
    std::vector<double> out(c * hw);
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + p] = a.at(p * c + ch);
    return make_op_output({c, h, w}, std::move(out), {a}, [a, c, hw](TensorNode& self) {
        double* ga = grad_of(a.node());
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) ga[p * c + ch] += self.grad[ch * hw + p];
    });
}

Tensor detach(const Tensor& a) {
    return Tensor::from_data(a.shape(), a.data(), false);
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double av = a.at(i * k + l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.at(l * n + j);
        }
    return make_op_output({m, n}, std::move(out), {a, b}, [a, b, m, k, n](TensorNode& self) {
        if (a.requires_grad()) {
            double* ga = grad_of(a.node());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += self.grad[i * n + j] * b.at(l * n + j);
                    ga[i * k + l] += acc;
                }
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += a.at(i * k + l) * self.grad[i * n + j];
                    gb[l * n + j] += acc;
                }
        }
    });
}

Tensor outer(const Tensor& u, const Tensor& v) {
    if (u.rank() != 1 || v.rank() != 1)
        throw DimensionError("outer: expected rank-1 tensors, got " + shape_str(u.shape()) +
                             " and " + shape_str(v.shape()));
    std::size_t n = u.shape()[0], m = v.shape()[0];
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = u.at(i) * v.at(j);
    return make_op_output({n, m}, std::move(out), {u, v}, [u, v, n, m](TensorNode& self) {
        if (u.requires_grad()) {
            double* gu = grad_of(u.node());
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += self.grad[i * m + j] * v.at(j);
                gu[i] += acc;
            }
        }
        if (v.requires_grad()) {
            double* gv = grad_of(v.node());
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += self.grad[i * m + j] * u.at(i);
                gv[j] += acc;
            }
        }
    });
}

// ---- neural-net building blocks --------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
    if (x.rank() != 3 || w.rank() != 4)
        throw DimensionError("conv2d: expected x [c_in,H,W] and w [c_out,c_in,kh,kw], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
    std::size_t ci = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    std::size_t co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != ci)
        throw DimensionError("conv2d: input channels " + std::to_string(ci) +
                             " do not match weight " + shape_str(w.shape()));
    long ho_l = (static_cast<long>(H) + 2 * static_cast<long>(padding) - static_cast<long>(kh)) /
                    static_cast<long>(stride) + 1;
    long wo_l = (static_cast<long>(W) + 2 * static_cast<long>(padding) - static_cast<long>(kw)) /
                    static_cast<long>(stride) + 1;
    if (ho_l < 1 || wo_l < 1)
        throw DimensionError("conv2d: non-positive output size for input " + shape_str(x.shape()) +
                             " kernel " + shape_str(w.shape()));
    std::size_t Ho = static_cast<std::size_t>(ho_l), Wo = static_cast<std::size_t>(wo_l);

    std::vector<double> out(co * Ho * Wo, 0.0);
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    double wv = w.at(((oc * ci + ic) * kh + ky) * kw + kx);
                    if (wv == 0.0) continue;
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            out[(oc * Ho + oy) * Wo + ox] +=
                                wv * x.at((ic * H + static_cast<std::size_t>(iy)) * W +
                                          static_cast<std::size_t>(ix));
                        }
                    }
                }

    return make_op_output(
        {co, Ho, Wo}, std::move(out), {x, w},
        [x, w, stride, padding, ci, H, W, co, kh, kw, Ho, Wo](TensorNode& self) {
            const bool xg = x.requires_grad();
            const bool wg = w.requires_grad();
            double* gx = xg ? grad_of(x.node()) : nullptr;
            double* gw = wg ? grad_of(w.node()) : nullptr;
            for (std::size_t oc = 0; oc < co; ++oc)
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::size_t widx = ((oc * ci + ic) * kh + ky) * kw + kx;
                            double wv = w.at(widx);
                            double wacc = 0.0;
                            for (std::size_t oy = 0; oy < Ho; ++oy) {
                                long iy = static_cast<long>(oy * stride + ky) -
                                          static_cast<long>(padding);
                                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                for (std::size_t ox = 0; ox < Wo; ++ox) {
                                    long ix = static_cast<long>(ox * stride + kx) -
                                              static_cast<long>(padding);
                                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                    double g = self.grad[(oc * Ho + oy) * Wo + ox];
                                    std::size_t xidx =
                                        (ic * H + static_cast<std::size_t>(iy)) * W +
                                        static_cast<std::size_t>(ix);
                                    if (xg) gx[xidx] += g * wv;
                                    if (wg) wacc += g * x.at(xidx);
                                }
                            }
                            if (wg) gw[widx] += wacc;
                        }
        });
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
    if (x.rank() != 3 || b.rank() != 1 || x.shape()[0] != b.shape()[0])
        throw DimensionError("bias_add: expected [C,H,W] + [C], got " + shape_str(x.shape()) +
                             " and " + shape_str(b.shape()));
    std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    std::vector<double> out(x.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) out[ch * hw + p] = x.at(ch * hw + p) + b.at(ch);
    return make_op_output(x.shape(), std::move(out), {x, b}, [x, b, c, hw](TensorNode& self) {
        if (x.requires_grad()) {
            double* gx = grad_of(x.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            double* gb = grad_of(b.node());
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) acc += self.grad[ch * hw + p];
                gb[ch] += acc;
            }
        }
    });
}

Tensor add_row_vector(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || x.shape()[1] != v.shape()[0])
        throw DimensionError("add_row_vector: expected [n,C] + [C], got " + shape_str(x.shape()) +
                             " and " + shape_str(v.shape()));
    std::size_t n = x.shape()[0], c = x.shape()[1];
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.at(i * c + j) + v.at(j);
    return make_op_output(x.shape(), std::move(out), {x, v}, [x, v, n, c](TensorNode& self) {
        if (x.requires_grad()) {
            double* gx = grad_of(x.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
        if (v.requires_grad()) {
            double* gv = grad_of(v.node());
            for (std::size_t j = 0; j < c; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += self.grad[i * c + j];
                gv[j] += acc;
            }
        }
    });
}

Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3)
        throw DimensionError("bilinear_upsample: expected [c,h,w], got " + shape_str(x.shape()));
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (out_h < h || out_w < w)
        throw DimensionError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                             std::to_string(out_w) + " smaller than input " + shape_str(x.shape()));

    // Align-corners sampling grid.
    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto make_taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> taps(out);
        double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
        for (std::size_t i = 0; i < out; ++i) {
            double pos = scale * static_cast<double>(i);
            std::size_t lo = static_cast<std::size_t>(pos);
            if (lo >= in - 1 && in > 1) lo = in - 2;
            if (in == 1) lo = 0;
            std::size_t hi = in == 1 ? 0 : lo + 1;
            taps[i] = {lo, hi, pos - static_cast<double>(lo)};
        }
        return taps;
    };
    auto ytaps = make_taps(h, out_h);
    auto xtaps = make_taps(w, out_w);

    std::vector<double> out(c * out_h * out_w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Tap& ty = ytaps[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& tx = xtaps[ox];
                double v00 = x.at((ch * h + ty.lo) * w + tx.lo);
                double v01 = x.at((ch * h + ty.lo) * w + tx.hi);
                double v10 = x.at((ch * h + ty.hi) * w + tx.lo);
                double v11 = x.at((ch * h + ty.hi) * w + tx.hi);
                out[(ch * out_h + oy) * out_w + ox] =
                    (1.0 - ty.frac) * ((1.0 - tx.frac) * v00 + tx.frac * v01) +
                    ty.frac * ((1.0 - tx.frac) * v10 + tx.frac * v11);
            }
        }

    return make_op_output({c, out_h, out_w}, std::move(out), {x},
                          [x, c, h, w, out_h, out_w, ytaps, xtaps](TensorNode& self) {
                              double* gx = grad_of(x.node());
                              for (std::size_t ch = 0; ch < c; ++ch)
                                  for (std::size_t oy = 0; oy < out_h; ++oy) {
                                      const Tap& ty = ytaps[oy];
                                      for (std::size_t ox = 0; ox < out_w; ++ox) {
                                          const Tap& tx = xtaps[ox];
                                          double g = self.grad[(ch * out_h + oy) * out_w + ox];
                                          gx[(ch * h + ty.lo) * w + tx.lo] +=
                                              g * (1.0 - ty.frac) * (1.0 - tx.frac);
                                          gx[(ch * h + ty.lo) * w + tx.hi] +=
                                              g * (1.0 - ty.frac) * tx.frac;
                                          gx[(ch * h + ty.hi) * w + tx.lo] +=
                                              g * ty.frac * (1.0 - tx.frac);
                                          gx[(ch * h + ty.hi) * w + tx.hi] +=
                                              g * ty.frac * tx.frac;
                                      }
                                  }
                          });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    std::size_t n_axis = x.shape()[axis];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];

    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            double mx = -1e300;
            for (std::size_t k = 0; k < n_axis; ++k)
                mx = std::max(mx, x.at((o * n_axis + k) * inner + in));
            double z = 0.0;
            for (std::size_t k = 0; k < n_axis; ++k) {
                double e = std::exp(x.at((o * n_axis + k) * inner + in) - mx);
                out[(o * n_axis + k) * inner + in] = e;
                z += e;
            }
            for (std::size_t k = 0; k < n_axis; ++k) out[(o * n_axis + k) * inner + in] /= z;
        }

    Tensor result = make_op_output(
        x.shape(), std::move(out), {x}, [x, n_axis, inner, outer](TensorNode& self) {
            double* gx = grad_of(x.node());
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < n_axis; ++k) {
                        std::size_t idx = (o * n_axis + k) * inner + in;
                        dot += self.grad[idx] * self.data[idx];
                    }
                    for (std::size_t k = 0; k < n_axis; ++k) {
                        std::size_t idx = (o * n_axis + k) * inner + in;
                        gx[idx] += self.data[idx] * (self.grad[idx] - dot);
                    }
                }
        });
    return result;
}

} // namespace pixcorr
