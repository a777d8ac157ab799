#pragma once

#include "dksg/tensor.hpp"

namespace dksg {

// Differentiable tensor ops. Each op validates shapes, computes the forward
// value, and records a backward closure when an input participates in the
// active tape. Every op checks its output for NaN/Inf and throws if found.

// x:[N,Cin,H,W] (*) w:[Cout,Cin,kh,kw] -> [N,Cout,H',W'].
// kh==kw in {1,3}, stride in {1,2}. Bias b:[Cout] optional (empty tensor).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

// [N,C,H,W] -> [N,C], mean over the spatial extent (f64 accumulation).
Tensor global_avg_pool(const Tensor& x);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x:[m,k], w:[k,n], b:[n] -> x*w + b
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Row-wise softmax of a 2-d tensor, max-subtracted for stability.
Tensor softmax_rows(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);

// Same shape only.
Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor div(const Tensor& x, const Tensor& y);

// Elementwise product. Shapes must match, except that a single-channel map
// [N,1,H,W] broadcasts against [N,C,H,W] and a column [N,1] against [N,d]
// (either operand side).
Tensor mul(const Tensor& x, const Tensor& y);

// Per-sample channel scaling: x:[N,C,H,W] * s:[N,C].
Tensor mul_channels(const Tensor& x, const Tensor& s);

// [N,C,H,W] -> [N,1,H,W], sum over channels.
Tensor sum_channels(const Tensor& x);

Tensor scale(const Tensor& x, float s);
Tensor add_const(const Tensor& x, float c);

// Adds a learned scalar (shape [1]) to every element.
Tensor add_scalar(const Tensor& x, const Tensor& b);

// [m,n] -> [m,1], per-row sum (f64 accumulation).
Tensor rowsum(const Tensor& x);

// Concatenate 2-d tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& xs);

// Column range [c0,c1) of a 2-d tensor.
Tensor slice_cols(const Tensor& x, int c0, int c1);

// Bilinear upsampling by an integer factor >= 1; corner pixel centers are
// offset by 0.5 (align-corners = false). Constant maps stay constant.
Tensor upsample_bilinear(const Tensor& x, int factor);

// Mean over all elements -> scalar [1] (f64 accumulation).
Tensor mean_all(const Tensor& x);

// Convex blend prev + gate*(cand - prev), all same shape, gate in [0,1].
// The result is clamped into [min(prev,cand), max(prev,cand)] componentwise,
// which costs at most one ulp of correction but makes the convexity bound and
// the cand==prev fixed point hold exactly in float arithmetic.
Tensor gated_blend(const Tensor& prev, const Tensor& cand, const Tensor& gate);

// Mean binary cross-entropy on logits, computed in the stable form
// max(z,0) - z*t + log1p(exp(-|z|)). target is taken as a constant.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

}  // namespace dksg
