#include "landseg/model/decoder.hpp"

#include <cmath>

namespace landseg {

using ad::Var;

SegDecoder::SegDecoder(DecoderConfig cfg, std::string prefix, uint64_t seed)
    : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
    Rng rng(mix_seed(seed, prefix_));
    const int d = cfg_.dim;
    const double s_attn = 1.0 / std::sqrt(static_cast<double>(d));

    params_.add(prefix_ + "align.w", nn::xavier_init({cfg_.text_dim, d}, cfg_.text_dim, d, rng));
    params_.add(prefix_ + "align.b", TensorD({d}));

    for (const char* blk : {"xattn_text", "xattn_image", "xattn_weights"}) {
        const std::string p = prefix_ + blk + ".";
        params_.add(p + "ln_q.gamma", TensorD::full({d}, 1.0));
        params_.add(p + "ln_q.beta", TensorD({d}));
        params_.add(p + "ln_kv.gamma", TensorD::full({d}, 1.0));
        params_.add(p + "ln_kv.beta", TensorD({d}));
        params_.add(p + "wq", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wk", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wv", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wo", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "ln_ffn.gamma", TensorD::full({d}, 1.0));
        params_.add(p + "ln_ffn.beta", TensorD({d}));
        params_.add(p + "ffn.w1", nn::xavier_init({d, cfg_.ffn_hidden}, d, cfg_.ffn_hidden, rng));
        params_.add(p + "ffn.b1", TensorD({cfg_.ffn_hidden}));
        params_.add(p + "ffn.w2", nn::xavier_init({cfg_.ffn_hidden, d}, cfg_.ffn_hidden, d, rng));
        params_.add(p + "ffn.b2", TensorD({d}));
    }

    const int s1 = cfg_.up_strides[0], s2 = cfg_.up_strides[1];
    params_.add(prefix_ + "up1.w",
                nn::xavier_init({d, cfg_.skip1_width, s1, s1}, d, cfg_.skip1_width * s1 * s1, rng));
    params_.add(prefix_ + "up1.b", TensorD({cfg_.skip1_width}));
    params_.add(prefix_ + "skip1.w",
                nn::xavier_init({cfg_.skip1_width, cfg_.skip1_width, 1, 1}, cfg_.skip1_width,
                                cfg_.skip1_width, rng));
    params_.add(prefix_ + "skip1.b", TensorD({cfg_.skip1_width}));
    params_.add(prefix_ + "up2.w",
                nn::xavier_init({cfg_.skip1_width, cfg_.out_feat, s2, s2}, cfg_.skip1_width,
                                cfg_.out_feat * s2 * s2, rng));
    params_.add(prefix_ + "up2.b", TensorD({cfg_.out_feat}));
    params_.add(prefix_ + "skip2.w",
                nn::xavier_init({cfg_.out_feat, cfg_.skip2_width, 1, 1}, cfg_.skip2_width,
                                cfg_.out_feat, rng));
    params_.add(prefix_ + "skip2.b", TensorD({cfg_.out_feat}));

    params_.add(prefix_ + "wgen.w1", nn::xavier_init({d, d}, d, d, rng));
    params_.add(prefix_ + "wgen.b1", TensorD({d}));
    params_.add(prefix_ + "wgen.w2", nn::xavier_init({d, cfg_.out_feat}, d, cfg_.out_feat, rng));
    params_.add(prefix_ + "wgen.b2", TensorD({cfg_.out_feat}));
}

Var SegDecoder::cross_block(nn::Binder& b, Var queries, Var keys_values,
                            const std::string& name) {
    ad::Graph& g = b.graph();
    const std::string p = prefix_ + name + ".";
    nn::AttnParams attn{&params_.at(p + "wq"), &params_.at(p + "wk"), &params_.at(p + "wv"),
                        &params_.at(p + "wo")};
    Var qn = ad::layer_norm(g, queries, b(params_.at(p + "ln_q.gamma")),
                            b(params_.at(p + "ln_q.beta")));
    Var kvn = ad::layer_norm(g, keys_values, b(params_.at(p + "ln_kv.gamma")),
                             b(params_.at(p + "ln_kv.beta")));
    Var x = ad::add(g, queries, nn::multihead_attention(b, qn, kvn, attn, cfg_.heads));
    Var xn = ad::layer_norm(g, x, b(params_.at(p + "ln_ffn.gamma")),
                            b(params_.at(p + "ln_ffn.beta")));
    Var h = ad::gelu(g, ad::linear(g, xn, b(params_.at(p + "ffn.w1")),
                                   b(params_.at(p + "ffn.b1"))));
    return ad::add(g, x, ad::linear(g, h, b(params_.at(p + "ffn.w2")),
                                    b(params_.at(p + "ffn.b2"))));
}

Var SegDecoder::decode(nn::Binder& b, const EncoderFeaturesVars& features,
                       const std::vector<Eigen::VectorXd>& prompts) {
    ad::Graph& g = b.graph();
    if (prompts.empty()) throw ValidationError("decoder: need at least one class prompt");
    const int k = static_cast<int>(prompts.size());
    for (const auto& e : prompts)
        if (static_cast<int>(e.size()) != cfg_.text_dim)
            throw ValidationError("decoder: prompt embedding dimension mismatch");

    const auto& emb_shape = g.val(features.decoder_embedding).shape;
    const int d = emb_shape[0], h3 = emb_shape[1], w3 = emb_shape[2];
    if (d != cfg_.dim) throw ValidationError("decoder: feature dimension mismatch");

    TensorD text_in({k, cfg_.text_dim});
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < cfg_.text_dim; ++j)
            text_in.data[static_cast<Eigen::Index>(i) * cfg_.text_dim + j] = prompts[static_cast<size_t>(i)][j];

    // (1) text alignment to the image width
    Var text = ad::linear(g, b.constant(std::move(text_in)), b(params_.at(prefix_ + "align.w")),
                          b(params_.at(prefix_ + "align.b")));
    Var image = ad::transpose2d(g, ad::reshape(g, features.decoder_embedding, {d, h3 * w3}));

    // (2) text queries image, (3) image queries text
    Var text1 = cross_block(b, text, image, "xattn_text");
    Var image1 = cross_block(b, image, text1, "xattn_image");

    // (4) two-layer transpose-conv upsampling with block-2 / block-1 skips
    Var grid = ad::reshape(g, ad::transpose2d(g, image1), {d, h3, w3});
    const int s1 = cfg_.up_strides[0], s2 = cfg_.up_strides[1];
    Var up1 = ad::conv2d_transpose(g, grid, b(params_.at(prefix_ + "up1.w")),
                                   b(params_.at(prefix_ + "up1.b")), s1);
    {
        const auto& s = g.val(up1).shape;
        Var skip = ad::bilinear_resize(g, features.per_block[1], s[1], s[2]);
        skip = ad::conv2d(g, skip, b(params_.at(prefix_ + "skip1.w")),
                          b(params_.at(prefix_ + "skip1.b")), 1, 0);
        up1 = ad::gelu(g, ad::add(g, up1, skip));
    }
    Var up2 = ad::conv2d_transpose(g, up1, b(params_.at(prefix_ + "up2.w")),
                                   b(params_.at(prefix_ + "up2.b")), s2);
    {
        const auto& s = g.val(up2).shape;
        Var skip = ad::bilinear_resize(g, features.per_block[0], s[1], s[2]);
        skip = ad::conv2d(g, skip, b(params_.at(prefix_ + "skip2.w")),
                          b(params_.at(prefix_ + "skip2.b")), 1, 0);
        up2 = ad::gelu(g, ad::add(g, up2, skip));
    }

    // (5) image-informed text -> class weights (pre-upsampling image tokens)
    Var text2 = cross_block(b, text1, image1, "xattn_weights");
    Var wh = ad::gelu(g, ad::linear(g, text2, b(params_.at(prefix_ + "wgen.w1")),
                                    b(params_.at(prefix_ + "wgen.b1"))));
    Var class_weights = ad::linear(g, wh, b(params_.at(prefix_ + "wgen.w2")),
                                   b(params_.at(prefix_ + "wgen.b2")));  // [K, out_feat]

    // (6) per-pixel inner product
    const auto& us = g.val(up2).shape;
    Var feat_flat = ad::reshape(g, up2, {cfg_.out_feat, us[1] * us[2]});
    Var logits = ad::matmul(g, class_weights, feat_flat);
    return ad::reshape(g, logits, {k, us[1], us[2]});
}

ProbabilityStack predict_probs(const TensorD& logits, std::string taxonomy_id) {
    if (logits.rank() != 3) throw ValidationError("predict_probs: logits must be [K,H,W]");
    const int k = logits.dim(0);
    const Eigen::Index hw = logits.numel() / k;
    TensorD probs(logits.shape);
    for (Eigen::Index p = 0; p < hw; ++p) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) mx = std::max(mx, logits.data[c * hw + p]);
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            const double e = std::exp(logits.data[c * hw + p] - mx);
            probs.data[c * hw + p] = e;
            sum += e;
        }
        for (int c = 0; c < k; ++c) probs.data[c * hw + p] /= sum;
    }
    return ProbabilityStack::from_probs(std::move(probs), std::move(taxonomy_id));
}

}  // namespace landseg
