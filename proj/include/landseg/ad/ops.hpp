#pragma once

#include <vector>

#include "landseg/ad/graph.hpp"

namespace landseg::ad {

// Elementwise / broadcast
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double s);
Var sigmoid(Graph& g, Var x);
Var gelu(Graph& g, Var x);
Var relu(Graph& g, Var x);

// Broadcast gating over [C,H,W] grids
Var mul_channel_gate(Graph& g, Var x, Var gate /*[C]*/);
Var mul_spatial_gate(Graph& g, Var x, Var gate /*[1,H,W]*/);

// Shape / linear algebra
Var reshape(Graph& g, Var x, std::vector<int> shape);
Var transpose2d(Graph& g, Var x /*[m,n]*/);
Var matmul(Graph& g, Var a /*[m,k]*/, Var b /*[k,n]*/);
Var linear(Graph& g, Var x /*[n,din]*/, Var w /*[din,dout]*/, Var b /*[dout] or invalid*/);
Var slice_cols(Graph& g, Var x /*[n,m]*/, int c0, int c1);
Var concat_cols(Graph& g, const std::vector<Var>& xs);
Var concat_channels(Graph& g, Var a /*[Ca,H,W]*/, Var b /*[Cb,H,W]*/);
Var softmax_rows(Graph& g, Var x /*[n,m]*/);
Var softmax_cols(Graph& g, Var x /*[n,m]*/);
Var layer_norm(Graph& g, Var x /*[n,d]*/, Var gamma /*[d]*/, Var beta /*[d]*/,
               double eps = 1e-6);

// Convolution / resampling
Var conv2d(Graph& g, Var x /*[Cin,H,W]*/, Var w /*[Cout,Cin,kh,kw]*/, Var b /*[Cout] or invalid*/,
           int stride, int pad);
// Transposed convolution restricted to kernel == stride (non-overlapping blocks).
Var conv2d_transpose(Graph& g, Var x /*[Cin,h,w]*/, Var w /*[Cin,Cout,k,k]*/,
                     Var b /*[Cout] or invalid*/, int stride);
Var bilinear_resize(Graph& g, Var x /*[C,H,W]*/, int out_h, int out_w);

// Pooling / reductions
Var global_avg_pool(Graph& g, Var x /*[C,H,W]*/);  // -> [C]
Var global_max_pool(Graph& g, Var x /*[C,H,W]*/);  // -> [C]
Var channel_max(Graph& g, Var x /*[C,H,W]*/);      // -> [1,H,W]
Var channel_mean(Graph& g, Var x /*[C,H,W]*/);     // -> [1,H,W]
Var sum_all(Graph& g, Var x);                      // -> [1]
Var mean_all(Graph& g, Var x);                     // -> [1]

// Fourier-domain high-pass with a fixed centered mask. Linear and
// self-adjoint, so the pullback applies the same transform to the cotangent.
Var fourier_highpass_op(Graph& g, Var x /*[H,W]*/, double mask_ratio);

// Losses over [K,H,W] maps against integer targets; `ignore_value` pixels are
// excluded from every sum. All four reject targets with zero valid pixels.
Var cross_entropy_masked(Graph& g, Var logits, const TensorI& target, int ignore_value);
Var dice_multiclass_masked(Graph& g, Var probs, const TensorI& target, int ignore_value,
                           double eps);
Var bce_logits_masked(Graph& g, Var logits, const TensorI& target, int ignore_value);
Var binary_dice_masked(Graph& g, Var probs /*sigmoid of logits*/, const TensorI& target,
                       int ignore_value, double eps);

}  // namespace landseg::ad
