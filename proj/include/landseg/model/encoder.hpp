#pragma once

#include <array>

#include "landseg/core/types.hpp"
#include "landseg/nn/attention.hpp"
#include "landseg/nn/param.hpp"

namespace landseg {

struct BackboneConfig {
    int layers_per_block = 2;
    std::array<int, 4> widths{32, 64, 128, 256};
    std::array<int, 4> downsample{4, 8, 16, 32};  // cumulative stride per block
    int in_channels = 3;
    bool frozen = true;

    void validate() const {
        for (int i = 0; i < 4; ++i) {
            if (widths[static_cast<size_t>(i)] <= 0 || downsample[static_cast<size_t>(i)] <= 0)
                throw ValidationError("backbone: widths/strides must be positive");
            if (i > 0) {
                if (downsample[static_cast<size_t>(i)] != 2 * downsample[static_cast<size_t>(i - 1)])
                    throw ValidationError("backbone: spatial size must halve at block boundaries");
                if (widths[static_cast<size_t>(i)] != 2 * widths[static_cast<size_t>(i - 1)])
                    throw ValidationError("backbone: widths must double at block boundaries");
            }
        }
        if (layers_per_block < 1) throw ValidationError("backbone: need at least one layer");
    }
};

struct EncoderConfig {
    BackboneConfig backbone;
    int hf_channels = 6;
    int spectral_dim = 64;
    bool afm_enabled = true;
};

struct EncoderFeaturesVars {
    std::array<ad::Var, 4> per_block;
    ad::Var decoder_embedding;  // block-3 output + projected upsampled block-4 output
};

struct EncoderFeatures {
    std::array<TensorD, 4> per_block;
    TensorD decoder_embedding;
};

// Channel + spatial attention gate parameters for one stream at one
// (block, layer) site.
struct GateParams {
    nn::Parameter* mlp_w0;
    nn::Parameter* mlp_b0;
    nn::Parameter* mlp_w1;
    nn::Parameter* mlp_b1;
    nn::Parameter* conv_w;  // [1,2,7,7]
    nn::Parameter* conv_b;  // [1]
};

// sigmoid(MLP(avg pool) + MLP(max pool)); shared MLP, gate per channel.
ad::Var feature_attention(nn::Binder& b, ad::Var feature, const GateParams& p);
// sigmoid(conv7x7([channel max; channel mean])), gate per pixel.
ad::Var position_attention(nn::Binder& b, ad::Var gated_feature, const GateParams& p);
// F ⊗ a_f(F) ⊗ a_p(F ⊗ a_f(F))
ad::Var attention_enhance(nn::Binder& b, ad::Var feature, const GateParams& p);

// The hierarchical backbone with per-layer attention-based fusion of the
// high-frequency and spectral streams.
class FusionEncoder {
public:
    FusionEncoder(EncoderConfig cfg, uint64_t seed);

    const EncoderConfig& config() const { return cfg_; }
    void set_afm_enabled(bool enabled) { cfg_.afm_enabled = enabled; }

    // rgb: [in_channels,H,W] main-stream input; hf: [6,H,W] high-frequency
    // stack; spectral: four [D,h,w] grids from the spectral embedder.
    EncoderFeaturesVars forward(nn::Binder& b, const TensorD& rgb, const TensorD& hf,
                                const std::array<ad::Var, 4>& spectral);

    // Plain backbone pass without any AFM injection (ablation reference).
    EncoderFeaturesVars backbone_only(nn::Binder& b, const TensorD& rgb);

    // Refined feature for one layer: enhances the three aligned streams,
    // sums them and applies the layer-wise + block-wise MLPs.
    ad::Var afm_layer(nn::Binder& b, ad::Var main_feature, ad::Var hf_aligned,
                      ad::Var spectral_aligned, int block, int layer);

    GateParams gate_params(int block, int layer, const std::string& stream);

    nn::ParamSet& backbone_params() { return backbone_params_; }
    nn::ParamSet& afm_params() { return afm_params_; }
    const nn::ParamSet& backbone_params() const { return backbone_params_; }
    const nn::ParamSet& afm_params() const { return afm_params_; }

private:
    EncoderConfig cfg_;
    nn::ParamSet backbone_params_;
    nn::ParamSet afm_params_;

    ad::Var backbone_layer(nn::Binder& b, ad::Var x, int block, int layer);
    ad::Var run_blocks(nn::Binder& b, const TensorD& rgb, const TensorD* hf,
                       const std::array<ad::Var, 4>* spectral, EncoderFeaturesVars& out);
};

}  // namespace landseg
