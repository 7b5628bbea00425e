#pragma once

#include "pixcorr/tensor.hpp"

#include <cstddef>

namespace pixcorr {

// Epsilon added to L1/L2-norm denominators so all-zero rows stay finite.
inline constexpr double kNormEps = 1e-12;
// Floor inside guarded logs.
inline constexpr double kLogEps = 1e-12;

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// log(max(x, kLogEps)); gradient is zero in the clamped region.
Tensor log_guarded(const Tensor& a);

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);      // -> scalar
Tensor mean(const Tensor& a);     // -> scalar
Tensor abs_mean(const Tensor& a); // mean(|x|) -> scalar; subgradient 0 at x=0
Tensor row_sum(const Tensor& a);     // [n,m] -> [n]
Tensor row_l2_norm(const Tensor& a); // [n,m] -> [n]
// Per-row x / (sum(|x|) + kNormEps); all-zero rows map to all-zero rows.
Tensor row_l1_normalize(const Tensor& a);

// ---- shape -----------------------------------------------------------------
Tensor transpose(const Tensor& a); // [n,m] -> [m,n]
// [C,h,w] -> [h*w, C], pixel index row-major over (h, w).
Tensor pixel_rows(const Tensor& a);
// [h*w, C] -> [C,h,w], inverse of pixel_rows.
Tensor pixel_grid(const Tensor& a, std::size_t h, std::size_t w);
// Same values, detached from the graph: no gradient flows upstream through it.
Tensor detach(const Tensor& a);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b); // [m,k]x[k,n] -> [m,n]
Tensor outer(const Tensor& u, const Tensor& v);  // [n],[m] -> [n,m]

// ---- neural-net building blocks --------------------------------------------
// Cross-correlation conv: x [c_in,H,W], w [c_out,c_in,kh,kw] -> [c_out,H',W'].
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);
Tensor bias_add(const Tensor& x, const Tensor& b);       // [C,H,W] + [C]
Tensor add_row_vector(const Tensor& x, const Tensor& v); // [n,C] + [C]
// Align-corners bilinear interpolation, [c,h,w] -> [c,H,W] with H>=h, W>=w.
Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor softmax(const Tensor& x, std::size_t axis);

} // namespace pixcorr
