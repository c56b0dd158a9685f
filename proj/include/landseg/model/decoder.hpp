#pragma once

#include <string>
#include <vector>

#include "landseg/model/encoder.hpp"

namespace landseg {

struct DecoderConfig {
    int dim = 128;       // must equal the encoder's block-3 width
    int heads = 4;
    int ffn_hidden = 256;
    int text_dim = 96;
    int out_feat = 32;
    int skip1_width = 64;            // encoder block-2 width
    int skip2_width = 32;            // encoder block-1 width
    std::array<int, 2> up_strides{4, 4};  // product must equal block-3 stride

    void validate() const {
        if (dim % heads != 0) throw ValidationError("decoder: dim must divide by heads");
        if (up_strides[0] < 1 || up_strides[1] < 1)
            throw ValidationError("decoder: upsample strides must be positive");
    }
};

// Vision-text collaborative decoder. A text-alignment MLP, cross-attention
// exchange (text queries, then image queries), transpose-convolutional
// upsampling with block-1/2 skip fusion, and a final text-query attention
// feeding the per-class weight generator. K is a call-time quantity.
class SegDecoder {
public:
    SegDecoder(DecoderConfig cfg, std::string prefix, uint64_t seed);

    // prompts: K text embeddings; returns [K, out_h, out_w] logits where
    // out dims equal the encoder input dims.
    ad::Var decode(nn::Binder& b, const EncoderFeaturesVars& features,
                   const std::vector<Eigen::VectorXd>& prompts);

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    std::string prefix_;
    nn::ParamSet params_;

    ad::Var cross_block(nn::Binder& b, ad::Var queries, ad::Var keys_values,
                        const std::string& name);
};

// Per-pixel softmax over the class dimension plus per-class max confidences.
ProbabilityStack predict_probs(const TensorD& logits, std::string taxonomy_id);

}  // namespace landseg
