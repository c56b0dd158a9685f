#pragma once

#include "landseg/ad/ops.hpp"
#include "landseg/nn/param.hpp"

namespace landseg::nn {

struct AttnParams {
    Parameter* wq;
    Parameter* wk;
    Parameter* wv;
    Parameter* wo;
};

// Multi-head scaled dot-product attention; queries [Nq,D], keys/values
// [Nk,D], all projections bias-free.
inline ad::Var multihead_attention(Binder& b, ad::Var queries, ad::Var keys_values,
                                   const AttnParams& p, int heads) {
    ad::Graph& g = b.graph();
    const int d = g.val(queries).dim(1);
    if (d % heads != 0) throw ValidationError("attention: dim not divisible by heads");
    const int dh = d / heads;
    ad::Var q = ad::linear(g, queries, b(*p.wq), ad::Var{});
    ad::Var k = ad::linear(g, keys_values, b(*p.wk), ad::Var{});
    ad::Var v = ad::linear(g, keys_values, b(*p.wv), ad::Var{});
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = ad::slice_cols(g, q, h * dh, (h + 1) * dh);
        ad::Var kh = ad::slice_cols(g, k, h * dh, (h + 1) * dh);
        ad::Var vh = ad::slice_cols(g, v, h * dh, (h + 1) * dh);
        ad::Var scores = ad::scale(g, ad::matmul(g, qh, ad::transpose2d(g, kh)), inv_sqrt);
        ad::Var attn = ad::softmax_rows(g, scores);
        outs.push_back(ad::matmul(g, attn, vh));
    }
    ad::Var merged = ad::concat_cols(g, outs);
    return ad::linear(g, merged, b(*p.wo), ad::Var{});
}

struct LayerNormParams {
    Parameter* gamma;
    Parameter* beta;
};

inline ad::Var layer_norm(Binder& b, ad::Var x, const LayerNormParams& p) {
    return ad::layer_norm(b.graph(), x, b(*p.gamma), b(*p.beta));
}

// Channel-wise layer norm for [C,H,W] grids: normalize each pixel's channel
// vector.
inline ad::Var channel_layer_norm(Binder& b, ad::Var x, const LayerNormParams& p) {
    ad::Graph& g = b.graph();
    const auto& shape = g.val(x).shape;
    const int c = shape[0], h = shape[1], w = shape[2];
    ad::Var tokens = ad::transpose2d(g, ad::reshape(g, x, {c, h * w}));
    ad::Var normed = ad::layer_norm(g, tokens, b(*p.gamma), b(*p.beta));
    return ad::reshape(g, ad::transpose2d(g, normed), {c, h, w});
}

}  // namespace landseg::nn
