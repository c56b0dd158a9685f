#include "landseg/model/encoder.hpp"

#include <cmath>

namespace landseg {

using ad::Var;

namespace {

// Shared-MLP gate over a pooled channel vector [C] -> [C].
Var gate_mlp(nn::Binder& b, Var pooled_c, const GateParams& p) {
    ad::Graph& g = b.graph();
    const int c = static_cast<int>(g.val(pooled_c).numel());
    Var row = ad::reshape(g, pooled_c, {1, c});
    Var h = ad::relu(g, ad::linear(g, row, b(*p.mlp_w0), b(*p.mlp_b0)));
    Var out = ad::linear(g, h, b(*p.mlp_w1), b(*p.mlp_b1));
    return ad::reshape(g, out, {c});
}

}  // namespace

Var feature_attention(nn::Binder& b, Var feature, const GateParams& p) {
    ad::Graph& g = b.graph();
    Var avg = ad::global_avg_pool(g, feature);
    Var mx = ad::global_max_pool(g, feature);
    return ad::sigmoid(g, ad::add(g, gate_mlp(b, avg, p), gate_mlp(b, mx, p)));
}

Var position_attention(nn::Binder& b, Var gated_feature, const GateParams& p) {
    ad::Graph& g = b.graph();
    Var stack = ad::concat_channels(g, ad::channel_max(g, gated_feature),
                                    ad::channel_mean(g, gated_feature));
    Var conv = ad::conv2d(g, stack, b(*p.conv_w), b(*p.conv_b), 1, 3);
    return ad::sigmoid(g, conv);
}

Var attention_enhance(nn::Binder& b, Var feature, const GateParams& p) {
    ad::Graph& g = b.graph();
    Var gated = ad::mul_channel_gate(g, feature, feature_attention(b, feature, p));
    return ad::mul_spatial_gate(g, gated, position_attention(b, gated, p));
}

FusionEncoder::FusionEncoder(EncoderConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.backbone.validate();
    Rng rng(mix_seed(seed, "encoder"));
    const auto& bb = cfg_.backbone;
    const bool train_bb = !bb.frozen;

    // Stem patchifies at the first block's stride.
    backbone_params_.add(
        "backbone.stem.w",
        nn::xavier_init({bb.widths[0], bb.in_channels, bb.downsample[0], bb.downsample[0]},
                        bb.in_channels * bb.downsample[0] * bb.downsample[0], bb.widths[0], rng),
        train_bb);
    backbone_params_.add("backbone.stem.b", TensorD({bb.widths[0]}), train_bb);

    for (int blk = 0; blk < 4; ++blk) {
        const int w = bb.widths[static_cast<size_t>(blk)];
        const std::string bp = "backbone.block" + std::to_string(blk) + ".";
        if (blk > 0) {
            const int wprev = bb.widths[static_cast<size_t>(blk - 1)];
            backbone_params_.add(bp + "down.w",
                                 nn::xavier_init({w, wprev, 2, 2}, wprev * 4, w, rng), train_bb);
            backbone_params_.add(bp + "down.b", TensorD({w}), train_bb);
        }
        for (int l = 0; l < bb.layers_per_block; ++l) {
            const std::string lp = bp + "layer" + std::to_string(l) + ".";
            backbone_params_.add(lp + "conv3.w", nn::xavier_init({w, w, 3, 3}, w * 9, w, rng),
                                 train_bb);
            backbone_params_.add(lp + "conv3.b", TensorD({w}), train_bb);
            backbone_params_.add(lp + "conv1.w", nn::xavier_init({w, w, 1, 1}, w, w, rng),
                                 train_bb);
            backbone_params_.add(lp + "conv1.b", TensorD({w}), train_bb);
            backbone_params_.add(lp + "ln.gamma", TensorD::full({w}, 1.0), train_bb);
            backbone_params_.add(lp + "ln.beta", TensorD({w}), train_bb);
        }
    }

    // AFM parameters: per (block, layer) tuning blocks, three per-stream
    // attention gates, layer-wise MLP; block-wise MLP shared inside a block.
    for (int blk = 0; blk < 4; ++blk) {
        const int w = bb.widths[static_cast<size_t>(blk)];
        const int hidden = std::max(w / 2, 4);
        const std::string bp = "afm.block" + std::to_string(blk) + ".";
        afm_params_.add(bp + "mlp_b.w1", nn::xavier_init({w, w, 1, 1}, w, w, rng));
        afm_params_.add(bp + "mlp_b.b1", TensorD({w}));
        afm_params_.add(bp + "mlp_b.w2", nn::xavier_init({w, w, 1, 1}, w, w, rng));
        afm_params_.add(bp + "mlp_b.b2", TensorD({w}));
        for (int l = 0; l < bb.layers_per_block; ++l) {
            const std::string lp = bp + "layer" + std::to_string(l) + ".";
            auto add_tuning = [&](const std::string& name, int in_ch) {
                afm_params_.add(lp + name + ".w1", nn::xavier_init({w, in_ch, 1, 1}, in_ch, w, rng));
                afm_params_.add(lp + name + ".b1", TensorD({w}));
                afm_params_.add(lp + name + ".w2", nn::xavier_init({w, w, 1, 1}, w, w, rng));
                afm_params_.add(lp + name + ".b2", TensorD({w}));
                afm_params_.add(lp + name + ".w3", nn::xavier_init({w, w, 1, 1}, w, w, rng));
                afm_params_.add(lp + name + ".b3", TensorD({w}));
            };
            add_tuning("tune_hf", cfg_.hf_channels);
            add_tuning("tune_spe", cfg_.spectral_dim);
            for (const char* stream : {"main", "hf", "spe"}) {
                const std::string gp = lp + "gate_" + stream + ".";
                afm_params_.add(gp + "mlp.w0", nn::xavier_init({w, hidden}, w, hidden, rng));
                afm_params_.add(gp + "mlp.b0", TensorD({hidden}));
                afm_params_.add(gp + "mlp.w1", nn::xavier_init({hidden, w}, hidden, w, rng));
                afm_params_.add(gp + "mlp.b1", TensorD({w}));
                afm_params_.add(gp + "conv.w", nn::xavier_init({1, 2, 7, 7}, 98, 1, rng));
                afm_params_.add(gp + "conv.b", TensorD({1}));
            }
            afm_params_.add(lp + "mlp_i.w1", nn::xavier_init({w, w, 1, 1}, w, w, rng));
            afm_params_.add(lp + "mlp_i.b1", TensorD({w}));
            afm_params_.add(lp + "mlp_i.w2", nn::xavier_init({w, w, 1, 1}, w, w, rng));
            afm_params_.add(lp + "mlp_i.b2", TensorD({w}));
        }
    }
    // Projection for the upsampled block-4 output feeding the decoder
    // embedding; trainable adapter weight stored with the AFM section.
    afm_params_.add("afm.neck.w",
                    nn::xavier_init({bb.widths[2], bb.widths[3], 1, 1}, bb.widths[3],
                                    bb.widths[2], rng));
    afm_params_.add("afm.neck.b", TensorD({bb.widths[2]}));
}

GateParams FusionEncoder::gate_params(int block, int layer, const std::string& stream) {
    const std::string gp = "afm.block" + std::to_string(block) + ".layer" +
                           std::to_string(layer) + ".gate_" + stream + ".";
    return GateParams{&afm_params_.at(gp + "mlp.w0"), &afm_params_.at(gp + "mlp.b0"),
                      &afm_params_.at(gp + "mlp.w1"), &afm_params_.at(gp + "mlp.b1"),
                      &afm_params_.at(gp + "conv.w"), &afm_params_.at(gp + "conv.b")};
}

Var FusionEncoder::backbone_layer(nn::Binder& b, Var x, int block, int layer) {
    ad::Graph& g = b.graph();
    const std::string lp =
        "backbone.block" + std::to_string(block) + ".layer" + std::to_string(layer) + ".";
    Var h = ad::gelu(g, ad::conv2d(g, x, b(backbone_params_.at(lp + "conv3.w")),
                                   b(backbone_params_.at(lp + "conv3.b")), 1, 1));
    h = ad::conv2d(g, h, b(backbone_params_.at(lp + "conv1.w")),
                   b(backbone_params_.at(lp + "conv1.b")), 1, 0);
    Var res = ad::add(g, x, h);
    nn::LayerNormParams ln{&backbone_params_.at(lp + "ln.gamma"),
                           &backbone_params_.at(lp + "ln.beta")};
    return nn::channel_layer_norm(b, res, ln);
}

Var FusionEncoder::afm_layer(nn::Binder& b, Var main_feature, Var hf_aligned, Var spectral_aligned,
                             int block, int layer) {
    ad::Graph& g = b.graph();
    const auto& ms = g.val(main_feature).shape;
    if (g.val(hf_aligned).shape != ms || g.val(spectral_aligned).shape != ms)
        throw ValidationError("afm_layer: stream width/resolution mismatch after tuning");

    Var e = attention_enhance(b, main_feature, gate_params(block, layer, "main"));
    Var hf = attention_enhance(b, hf_aligned, gate_params(block, layer, "hf"));
    Var spe = attention_enhance(b, spectral_aligned, gate_params(block, layer, "spe"));
    Var sum = ad::add(g, ad::add(g, e, hf), spe);

    const std::string lp =
        "afm.block" + std::to_string(block) + ".layer" + std::to_string(layer) + ".";
    const std::string bp = "afm.block" + std::to_string(block) + ".";
    // MLP_i, then GELU, then MLP_b (1x1 convolutions across channels).
    Var mi = ad::conv2d(g, ad::gelu(g, ad::conv2d(g, sum, b(afm_params_.at(lp + "mlp_i.w1")),
                                                  b(afm_params_.at(lp + "mlp_i.b1")), 1, 0)),
                        b(afm_params_.at(lp + "mlp_i.w2")), b(afm_params_.at(lp + "mlp_i.b2")),
                        1, 0);
    Var gm = ad::gelu(g, mi);
    Var mb = ad::conv2d(g, ad::gelu(g, ad::conv2d(g, gm, b(afm_params_.at(bp + "mlp_b.w1")),
                                                  b(afm_params_.at(bp + "mlp_b.b1")), 1, 0)),
                        b(afm_params_.at(bp + "mlp_b.w2")), b(afm_params_.at(bp + "mlp_b.b2")),
                        1, 0);
    return mb;
}

Var FusionEncoder::run_blocks(nn::Binder& b, const TensorD& rgb, const TensorD* hf,
                              const std::array<Var, 4>* spectral, EncoderFeaturesVars& out) {
    ad::Graph& g = b.graph();
    const auto& bb = cfg_.backbone;
    if (rgb.rank() != 3 || rgb.dim(0) != bb.in_channels)
        throw ValidationError("encoder: main-stream input must be [in_channels,H,W]");
    const int h = rgb.dim(1), w = rgb.dim(2);
    if (h % bb.downsample[3] != 0 || w % bb.downsample[3] != 0)
        throw ValidationError("encoder: input dims must divide by the final stride");

    Var x = ad::gelu(g, ad::conv2d(g, b.constant(rgb), b(backbone_params_.at("backbone.stem.w")),
                                   b(backbone_params_.at("backbone.stem.b")), bb.downsample[0],
                                   0));
    Var hf_const{};
    if (hf) hf_const = b.constant(*hf);

    for (int blk = 0; blk < 4; ++blk) {
        if (blk > 0) {
            const std::string bp = "backbone.block" + std::to_string(blk) + ".";
            x = ad::conv2d(g, x, b(backbone_params_.at(bp + "down.w")),
                           b(backbone_params_.at(bp + "down.b")), 2, 0);
        }
        const int bh = h / bb.downsample[static_cast<size_t>(blk)];
        const int bw = w / bb.downsample[static_cast<size_t>(blk)];
        Var hf_b{}, spe_b{};
        if (hf && spectral) {
            hf_b = ad::bilinear_resize(g, hf_const, bh, bw);
            spe_b = ad::bilinear_resize(g, (*spectral)[static_cast<size_t>(blk)], bh, bw);
        }
        for (int l = 0; l < bb.layers_per_block; ++l) {
            Var e = backbone_layer(b, x, blk, l);
            if (hf && spectral) {
                const std::string lp = "afm.block" + std::to_string(blk) + ".layer" +
                                       std::to_string(l) + ".";
                auto tune = [&](Var in, const std::string& name) {
                    Var t = ad::conv2d(g, in, b(afm_params_.at(lp + name + ".w1")),
                                       b(afm_params_.at(lp + name + ".b1")), 1, 0);
                    t = ad::gelu(g, t);
                    t = ad::conv2d(g, t, b(afm_params_.at(lp + name + ".w2")),
                                   b(afm_params_.at(lp + name + ".b2")), 1, 0);
                    t = ad::gelu(g, t);
                    return ad::conv2d(g, t, b(afm_params_.at(lp + name + ".w3")),
                                      b(afm_params_.at(lp + name + ".b3")), 1, 0);
                };
                Var hf_t = tune(hf_b, "tune_hf");
                Var spe_t = tune(spe_b, "tune_spe");
                x = afm_layer(b, e, hf_t, spe_t, blk, l);
            } else {
                x = e;
            }
        }
        out.per_block[static_cast<size_t>(blk)] = x;
    }

    // Decoder embedding: block-3 output plus the projected, upsampled block-4
    // output (1-based block numbering).
    const int h3 = h / bb.downsample[2], w3 = w / bb.downsample[2];
    Var up4 = ad::bilinear_resize(g, out.per_block[3], h3, w3);
    Var proj = ad::conv2d(g, up4, b(afm_params_.at("afm.neck.w")),
                          b(afm_params_.at("afm.neck.b")), 1, 0);
    out.decoder_embedding = ad::add(g, out.per_block[2], proj);
    return x;
}

EncoderFeaturesVars FusionEncoder::forward(nn::Binder& b, const TensorD& rgb, const TensorD& hf,
                                           const std::array<Var, 4>& spectral) {
    EncoderFeaturesVars out;
    if (cfg_.afm_enabled) {
        run_blocks(b, rgb, &hf, &spectral, out);
    } else {
        run_blocks(b, rgb, nullptr, nullptr, out);
    }
    return out;
}

EncoderFeaturesVars FusionEncoder::backbone_only(nn::Binder& b, const TensorD& rgb) {
    EncoderFeaturesVars out;
    run_blocks(b, rgb, nullptr, nullptr, out);
    return out;
}

}  // namespace landseg
